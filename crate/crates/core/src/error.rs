use thiserror::Error;

use crate::model::Transition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordination number must be at least 2, got {0}")]
    Coordination(u32),

    #[error("rate for {transition} is negative ({rate})")]
    NegativeRate { transition: Transition, rate: f64 },

    #[error("rate for {transition} is not finite")]
    NonFiniteRate { transition: Transition },

    #[error("link rates are not symmetric: {0}")]
    Asymmetric(String),

    #[error("model is not autonomous: residual {residual}")]
    NotAutonomous { residual: f64 },

    #[error(
        "derived coefficients violate {constraint} (alpha={alpha}, beta={beta}, gamma={gamma})"
    )]
    Consistency {
        constraint: &'static str,
        alpha: f64,
        beta: f64,
        gamma: f64,
    },

    #[error("invalid rate key {key:?}: {reason}")]
    RateKey { key: String, reason: &'static str },

    #[error("tree with xi={xi}, depth={depth} has {sites} sites, above the cap of {cap}")]
    TreeTooLarge {
        xi: u32,
        depth: u32,
        sites: u128,
        cap: usize,
    },

    #[error("shell size for xi={xi}, a={a} overflows u64")]
    ShellOverflow { xi: u32, a: u32 },

    #[error("site {site} out of range for a tree of {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },

    #[error("angle {0} outside the open interval (0, pi)")]
    AngleOutOfRange(f64),

    #[error("quadrature did not converge at {nodes} nodes (last estimates {previous} and {last})")]
    Quadrature {
        nodes: usize,
        previous: f64,
        last: f64,
    },

    #[error("quadrature left an imaginary part {imag} against a scale of {scale}")]
    ImaginaryResidual { imag: f64, scale: f64 },

    #[error("{0}")]
    Domain(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("integrator did not reach relative tolerance {tol} (estimate {estimate} after {steps} steps)")]
    Integrator {
        tol: f64,
        estimate: f64,
        steps: usize,
    },

    #[error("density leaked to the truncation shell {a_max} ({value:e}); increase a_max")]
    Leakage { a_max: usize, value: f64 },

    #[error("master equation needs at most {cap} sites, tree has {sites}")]
    MasterTooLarge { sites: usize, cap: usize },

    #[error("probability normalization drifted by {0:e}")]
    Normalization(f64),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
