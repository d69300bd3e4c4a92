//! Autonomous single-species reaction-diffusion models on Cayley trees.
//!
//! The crate covers the whole pipeline for models whose mean density obeys a
//! closed linear evolution:
//!
//! * [`model`] validates the twelve two-site rates and derives the closed
//!   coefficients `alpha`, `beta`, `gamma` and the stationary density.
//! * [`lattice`] builds finite, breadth-first indexed Cayley trees.
//! * [`spectral`] evaluates the exact shell Green's function and its
//!   chain, large-time and large-coordination limits.
//! * [`dynamics`] integrates the site and shell equations and convolves
//!   initial profiles with the Green's function.
//! * [`stochastic`] provides the exact master equation on tiny trees and a
//!   Gillespie ensemble on large ones.
//!
//! Data-parallel loops (ensembles, Green's function grids, large site
//! systems) run on rayon when the `parallel` feature is enabled and fall back
//! to plain iterators otherwise. See [`Execution`].

// `!(x >= 0.0)` is the NaN-rejecting guard throughout; index loops mirror
// the matrix notation of the shell equations.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bessel;
pub mod dynamics;
mod error;
pub mod lattice;
pub mod model;
mod ode;
mod par;
pub mod quadrature;
pub mod spectral;
pub mod stochastic;

pub use error::{Error, Result};
pub use par::{install, Execution};

pub use dynamics::{DensityField, FieldKind, StepProfile};
pub use lattice::TruncatedTree;
pub use model::{Coefficients, Pair, RateModel, Stationary, Transition};
pub use spectral::{GreenEvaluator, GreenValue, Mode, SpectralParams};
