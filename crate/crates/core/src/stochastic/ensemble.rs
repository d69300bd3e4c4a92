//! Reproducible ensemble averages.
//!
//! Run `k` of an ensemble draws from `ChaCha8Rng::seed_from_u64(run_seed(master_seed, k))`,
//! where [`run_seed`] is the splitmix64 finalizer applied to
//! `master_seed + (k + 1) * 0x9E3779B97F4A7C15` (wrapping). Runs are grouped
//! into batches of [`BATCH_RUNS`]; each batch returns integer occupation
//! counts, so summing batches is exact and the means are bit-identical for
//! any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lattice::TruncatedTree;
use crate::model::RateModel;
use crate::par::{map_range, Execution};
use crate::{Error, Result};

use super::gillespie::{check_times, run_with_rng};
use super::{check_model, InitSpec, Links};

pub const BATCH_RUNS: u64 = 64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of run `index` in an ensemble with the given master seed.
pub fn run_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub runs: u64,
    pub master_seed: u64,
    pub t_samples: Vec<f64>,
    pub tree: TruncatedTree,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// `mean[k][i]`: fraction of runs with site `i` occupied at `times[k]`.
    pub mean: Vec<Vec<f64>>,
    /// Standard error of each mean, `sqrt(m (1 - m) / (runs - 1))`; zero for
    /// a single run.
    pub stderr: Vec<Vec<f64>>,
    pub runs: u64,
    pub events: u64,
}

struct Batch {
    counts: Vec<u64>,
    events: u64,
}

/// Mean occupation and its standard error per site and sample time.
pub fn ensemble_mean(
    model: &RateModel,
    config: &EnsembleConfig,
    init: &InitSpec,
    exec: Execution,
) -> Result<EnsembleResult> {
    if config.runs == 0 {
        return Err(Error::Invalid("an ensemble needs at least one run".into()));
    }
    check_model(model)?;
    check_times(&config.t_samples)?;
    init.site_probabilities(&config.tree)?;
    let tree = &config.tree;
    let links = Links::from_tree(tree);
    let n = tree.sites();
    let nt = config.t_samples.len();
    let batches = config.runs.div_ceil(BATCH_RUNS);
    let results = map_range(exec, batches as usize, |b| -> Result<Batch> {
        let first = b as u64 * BATCH_RUNS;
        let last = (first + BATCH_RUNS).min(config.runs);
        let mut counts = vec![0u64; nt * n];
        let mut events = 0;
        for run in first..last {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(config.master_seed, run));
            let traj = run_with_rng(model, tree, &links, init, &mut rng, &config.t_samples)?;
            events += traj.events;
            for (k, sample) in traj.samples.iter().enumerate() {
                for (i, &occ) in sample.iter().enumerate() {
                    counts[k * n + i] += occ as u64;
                }
            }
        }
        Ok(Batch { counts, events })
    });
    let mut counts = vec![0u64; nt * n];
    let mut events = 0;
    for batch in results {
        let batch = batch?;
        events += batch.events;
        counts
            .iter_mut()
            .zip(&batch.counts)
            .for_each(|(c, b)| *c += b);
    }
    let runs = config.runs as f64;
    let mean: Vec<Vec<f64>> = counts
        .chunks(n)
        .map(|c| c.iter().map(|&x| x as f64 / runs).collect())
        .collect();
    let stderr = mean
        .iter()
        .map(|row| {
            row.iter()
                .map(|&m| {
                    if config.runs > 1 {
                        (m * (1.0 - m) / (runs - 1.0)).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(EnsembleResult {
        times: config.t_samples.clone(),
        mean,
        stderr,
        runs: config.runs,
        events,
    })
}
