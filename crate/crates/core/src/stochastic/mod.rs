//! Stochastic oracles: the exact master equation on tiny trees and Gillespie
//! trajectories with reproducible ensemble averaging on larger ones.
//!
//! Both operate on the finite tree itself, so leaves have a single link and
//! results compare directly with [`crate::dynamics::evolve_site_ode`].

mod ensemble;
mod gillespie;
mod master;

pub use ensemble::{ensemble_mean, run_seed, EnsembleConfig, EnsembleResult, BATCH_RUNS};
pub use gillespie::{gillespie_run, Event, Links, Simulator, SumTree, Trajectory};
pub use master::{
    autonomy_witness, master_evolve, GeneratorEntry, MasterSystem, WitnessReport, MASTER_SITE_CAP,
    WITNESS_SITE_CAP,
};

use rand::Rng;

use crate::lattice::TruncatedTree;
use crate::model::RateModel;
use crate::{Error, Result};

/// Initial occupations, either a fixed configuration or a product measure.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Empty,
    Full,
    /// Every site occupied independently with probability `p`.
    Bernoulli(f64),
    /// Independent occupation with probability `p[a]` on shell `a`; shells
    /// past the end of the list use the last entry.
    ShellBernoulli(Vec<f64>),
    /// Explicit configuration, site `i` occupied iff `sites[i]`.
    Sites(Vec<bool>),
}

impl InitSpec {
    /// Parses `empty`, `full`, `bernoulli:P` or `bitmask:HEX`.
    ///
    /// In a bitmask the least significant bit is site 0.
    pub fn parse(s: &str, sites: usize) -> Result<InitSpec> {
        let bad = |m: &str| Error::Invalid(format!("initial state {s:?}: {m}"));
        match s.split_once(':') {
            None if s == "empty" => Ok(InitSpec::Empty),
            None if s == "full" => Ok(InitSpec::Full),
            Some(("bernoulli", p)) => {
                let p: f64 = p.parse().map_err(|_| bad("probability is not a number"))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad("probability outside [0, 1]"));
                }
                Ok(InitSpec::Bernoulli(p))
            }
            Some(("bitmask", hex)) => {
                let hex = hex.trim_start_matches("0x");
                if hex.is_empty() || !hex.bytes().all(|c| c.is_ascii_hexdigit()) {
                    return Err(bad("bitmask must be hexadecimal"));
                }
                let mut bits = vec![false; sites];
                for (k, c) in hex.bytes().rev().enumerate() {
                    let nibble = (c as char).to_digit(16).unwrap();
                    for j in 0..4 {
                        if nibble >> j & 1 == 1 {
                            let site = 4 * k + j;
                            if site >= sites {
                                return Err(bad("bitmask sets a site beyond the tree"));
                            }
                            bits[site] = true;
                        }
                    }
                }
                Ok(InitSpec::Sites(bits))
            }
            _ => Err(bad("expected empty, full, bernoulli:P or bitmask:HEX")),
        }
    }

    /// Occupation probability of every site.
    pub fn site_probabilities(&self, tree: &TruncatedTree) -> Result<Vec<f64>> {
        let n = tree.sites();
        let probs = match self {
            InitSpec::Empty => vec![0.0; n],
            InitSpec::Full => vec![1.0; n],
            InitSpec::Bernoulli(p) => vec![*p; n],
            InitSpec::ShellBernoulli(ps) => {
                if ps.is_empty() {
                    return Err(Error::Invalid("per-shell probabilities are empty".into()));
                }
                tree.shells()
                    .iter()
                    .map(|&a| ps[(a as usize).min(ps.len() - 1)])
                    .collect()
            }
            InitSpec::Sites(bits) => {
                if bits.len() != n {
                    return Err(Error::Invalid(format!(
                        "configuration has {} sites, tree has {n}",
                        bits.len()
                    )));
                }
                bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
            }
        };
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid(
                "occupation probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(probs)
    }

    /// Draws a configuration. Sites with probability 0 or 1 consume no
    /// randomness.
    pub fn sample<R: Rng>(&self, tree: &TruncatedTree, rng: &mut R) -> Result<Vec<bool>> {
        Ok(self
            .site_probabilities(tree)?
            .into_iter()
            .map(|p| {
                if p <= 0.0 {
                    false
                } else if p >= 1.0 {
                    true
                } else {
                    rng.random::<f64>() < p
                }
            })
            .collect())
    }
}

fn check_model(model: &RateModel) -> Result<()> {
    let report = model.validate_symmetry()?;
    if !report.is_ok() {
        return Err(Error::Asymmetric(report.to_string()));
    }
    Ok(())
}
