//! Exact evolution of the joint occupation distribution.
//!
//! States are bitmasks with bit `i` the occupation of site `i`. The generator
//! is applied matrix-free: each link contributes the twelve two-site rates
//! `H[lk<-nm]` with the lower-indexed site on the left. Link symmetry makes
//! the other orientation give the same rates, so each link is counted once.
//! Time stepping uses uniformization in chunks of at most ten expected
//! jumps, which keeps every term of the Poisson series positive.

use crate::dynamics::{evolve_site_equation, DensityField};
use crate::lattice::TruncatedTree;
use crate::model::{Pair, RateModel};
use crate::par::Execution;
use crate::{Error, Result};

use super::{check_model, InitSpec};

/// Largest tree the master equation accepts.
pub const MASTER_SITE_CAP: usize = 20;
/// Largest tree the autonomy witness accepts.
pub const WITNESS_SITE_CAP: usize = 16;

const CHUNK_JUMPS: f64 = 10.0;
const SERIES_TAIL: f64 = 1e-16;
const NORM_TOL: f64 = 1e-8;

/// One nonzero generator entry `Q[row][col]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorEntry {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct MasterSystem {
    sites: usize,
    edges: Vec<(u32, u32)>,
    /// `moves[p]` lists the targets reachable from pair index `p` with rates.
    moves: [Vec<(Pair, f64)>; 4],
    exit: Vec<f64>,
    uniform_rate: f64,
}

impl MasterSystem {
    pub fn new(model: &RateModel, tree: &TruncatedTree) -> Result<MasterSystem> {
        Self::with_cap(model, tree, MASTER_SITE_CAP)
    }

    fn with_cap(model: &RateModel, tree: &TruncatedTree, cap: usize) -> Result<MasterSystem> {
        check_model(model)?;
        let sites = tree.sites();
        if sites > cap {
            return Err(Error::MasterTooLarge { sites, cap });
        }
        let edges: Vec<(u32, u32)> = tree.edges().map(|(p, c)| (p as u32, c as u32)).collect();
        let moves = Pair::ALL.map(|from| {
            Pair::ALL
                .iter()
                .filter(|&&to| to != from && model.h(from, to) > 0.0)
                .map(|&to| (to, model.h(from, to)))
                .collect::<Vec<_>>()
        });
        let exit_by_pair = Pair::ALL.map(|p| model.exit_rate(p));
        let exit: Vec<f64> = (0..1usize << sites)
            .map(|s| {
                edges
                    .iter()
                    .map(|&(i, j)| exit_by_pair[pair_at(s, i, j).index()])
                    .sum()
            })
            .collect();
        let uniform_rate = exit.iter().copied().fold(0.0, f64::max);
        Ok(MasterSystem {
            sites,
            edges,
            moves,
            exit,
            uniform_rate,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn states(&self) -> usize {
        1 << self.sites
    }

    /// Largest total exit rate over all states.
    pub fn uniform_rate(&self) -> f64 {
        self.uniform_rate
    }

    /// Calls `f(target, rate)` for every transition out of `state`.
    fn for_each_move(&self, state: usize, mut f: impl FnMut(usize, f64)) {
        for &(i, j) in &self.edges {
            let from = pair_at(state, i, j);
            for &(to, rate) in &self.moves[from.index()] {
                f(set_pair(state, i, j, to), rate);
            }
        }
    }

    /// Explicit sparse generator in column order, diagonal included.
    pub fn assemble(&self) -> Vec<GeneratorEntry> {
        let mut out = Vec::new();
        for s in 0..self.states() {
            let col = s as u32;
            out.push(GeneratorEntry {
                row: col,
                col,
                value: -self.exit[s],
            });
            self.for_each_move(s, |target, rate| {
                out.push(GeneratorEntry {
                    row: target as u32,
                    col,
                    value: rate,
                })
            });
        }
        out
    }

    /// Product-measure distribution with the given occupation probabilities.
    pub fn product_distribution(&self, probs: &[f64]) -> Result<Vec<f64>> {
        if probs.len() != self.sites {
            return Err(Error::Invalid(format!(
                "{} probabilities for {} sites",
                probs.len(),
                self.sites
            )));
        }
        let mut dist = vec![1.0];
        for &p in probs {
            let mut next = vec![0.0; dist.len() * 2];
            let (lo, hi) = next.split_at_mut(dist.len());
            for (k, &w) in dist.iter().enumerate() {
                lo[k] = w * (1.0 - p);
                hi[k] = w * p;
            }
            dist = next;
        }
        Ok(dist)
    }

    /// Evolves a probability vector over the joint states.
    pub fn evolve_distribution(&self, p0: &[f64], t: f64) -> Result<Vec<f64>> {
        if p0.len() != self.states() {
            return Err(Error::Invalid(format!(
                "distribution has {} entries, expected {}",
                p0.len(),
                self.states()
            )));
        }
        if !(t >= 0.0) {
            return Err(Error::Invalid(format!("time must be nonnegative, got {t}")));
        }
        if p0.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Invalid("probabilities must be nonnegative".into()));
        }
        let total: f64 = p0.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Normalization(total - 1.0));
        }
        let lambda = self.uniform_rate;
        if lambda == 0.0 || t == 0.0 {
            return Ok(p0.to_vec());
        }
        let chunks = (lambda * t / CHUNK_JUMPS).ceil().max(1.0) as usize;
        let dt = t / chunks as f64;
        let mut p = p0.to_vec();
        let mut term = vec![0.0; p.len()];
        let mut next = vec![0.0; p.len()];
        for _ in 0..chunks {
            let mu = lambda * dt;
            let mut weight = (-mu).exp();
            let mut acc: Vec<f64> = p.iter().map(|&x| x * weight).collect();
            term.copy_from_slice(&p);
            let mut cumulative = weight;
            let mut k = 0u32;
            while 1.0 - cumulative > SERIES_TAIL && k < 10_000 {
                k += 1;
                self.jump(&term, &mut next, lambda);
                std::mem::swap(&mut term, &mut next);
                weight *= mu / k as f64;
                cumulative += weight;
                acc.iter_mut()
                    .zip(&term)
                    .for_each(|(a, &x)| *a += weight * x);
            }
            p = acc;
        }
        let drift = p.iter().sum::<f64>() - 1.0;
        if drift.abs() > NORM_TOL {
            return Err(Error::Normalization(drift));
        }
        Ok(p)
    }

    /// `out = (I + Q / lambda) v`.
    fn jump(&self, v: &[f64], out: &mut [f64], lambda: f64) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (s, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            out[s] += w * (1.0 - self.exit[s] / lambda);
            let scaled = w / lambda;
            self.for_each_move(s, |target, rate| out[target] += scaled * rate);
        }
    }

    /// `<n_i>` for every site.
    pub fn site_means(&self, p: &[f64]) -> Vec<f64> {
        let mut means = vec![0.0; self.sites];
        for (s, &w) in p.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (i, m) in means.iter_mut().enumerate() {
                if s >> i & 1 == 1 {
                    *m += w;
                }
            }
        }
        means
    }
}

fn pair_at(state: usize, i: u32, j: u32) -> Pair {
    Pair::new((state >> i & 1) as u8, (state >> j & 1) as u8)
}

fn set_pair(state: usize, i: u32, j: u32, p: Pair) -> usize {
    let cleared = state & !(1 << i) & !(1 << j);
    cleared | (p.left() as usize) << i | (p.right() as usize) << j
}

/// Per-site mean occupations at time `t` from a product initial measure.
pub fn master_evolve(
    sys: &MasterSystem,
    tree: &TruncatedTree,
    init: &InitSpec,
    t: f64,
) -> Result<Vec<f64>> {
    let p0 = sys.product_distribution(&init.site_probabilities(tree)?)?;
    Ok(sys.site_means(&sys.evolve_distribution(&p0, t)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessReport {
    pub max_gap: f64,
    /// Site and time at which the largest gap occurred.
    pub site: usize,
    pub time: f64,
}

/// Largest difference between the exact mean occupations and the closed site
/// equation, starting from independent occupation with probability one half
/// and sampled at `t/4, t/2, 3t/4, t`.
///
/// The closed equation uses the linear coefficients of the model whether or
/// not it is autonomous, so for non-autonomous rates the gap measures what
/// dropping the two-point term costs.
pub fn autonomy_witness(model: &RateModel, tree: &TruncatedTree, t: f64) -> Result<WitnessReport> {
    let sys = MasterSystem::with_cap(model, tree, WITNESS_SITE_CAP)?;
    let coeffs = model.closure_coefficients();
    let n = tree.sites();
    let mut dist = sys.product_distribution(&vec![0.5; n])?;
    let mut field = DensityField::per_site(vec![0.5; n]);
    let mut report = WitnessReport {
        max_gap: 0.0,
        site: 0,
        time: 0.0,
    };
    let dt = t / 4.0;
    for k in 1..=4 {
        dist = sys.evolve_distribution(&dist, dt)?;
        field = evolve_site_equation(&coeffs, tree, &field, dt, Execution::Sequential)?;
        for (i, (m, r)) in sys.site_means(&dist).iter().zip(&field.values).enumerate() {
            let gap = (m - r).abs();
            if gap > report.max_gap {
                report = WitnessReport {
                    max_gap: gap,
                    site: i,
                    time: dt * k as f64,
                };
            }
        }
    }
    Ok(report)
}
