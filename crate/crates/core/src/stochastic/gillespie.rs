//! Event-driven simulation of the link process.
//!
//! Each link carries its total exit rate in a [`SumTree`]; an event picks a
//! link in proportion to its rate, then a target pair in proportion to the
//! individual rates. Only links that touch one of the two flipped sites are
//! recomputed afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::TruncatedTree;
use crate::model::{Pair, RateModel};
use crate::Result;

use super::{check_model, InitSpec};

/// Binary tree of partial sums over nonnegative weights.
#[derive(Clone, Debug)]
pub struct SumTree {
    len: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> SumTree {
        let leaves = weights.len().next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + weights.len()].copy_from_slice(weights);
        for k in (1..leaves).rev() {
            nodes[k] = nodes[2 * k] + nodes[2 * k + 1];
        }
        SumTree {
            len: weights.len(),
            leaves,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    /// Sets weight `i`; ancestors are recomputed from their children so no
    /// rounding error accumulates across updates.
    pub fn set(&mut self, i: usize, w: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = w;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Index `i` with `prefix(i) <= u < prefix(i + 1)`, never landing on a
    /// zero weight. `u` must lie in `[0, total)`.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] == 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

/// The links of a graph with, for every site, the links that touch it.
#[derive(Clone, Debug)]
pub struct Links {
    sites: usize,
    edges: Vec<(u32, u32)>,
    offsets: Vec<u32>,
    incident: Vec<u32>,
}

impl Links {
    pub fn from_tree(tree: &TruncatedTree) -> Links {
        let edges = tree.edges().map(|(p, c)| (p as u32, c as u32)).collect();
        Links::from_edges(tree.sites(), edges)
    }

    /// Links from an explicit edge list; site `edges[e].0` is the left site.
    pub fn from_edges(sites: usize, edges: Vec<(u32, u32)>) -> Links {
        let mut counts = vec![0u32; sites + 1];
        for &(i, j) in &edges {
            assert!((i as usize) < sites && (j as usize) < sites && i != j);
            counts[i as usize + 1] += 1;
            counts[j as usize + 1] += 1;
        }
        for k in 1..=sites {
            counts[k] += counts[k - 1];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut incident = vec![0u32; 2 * edges.len()];
        for (e, &(i, j)) in edges.iter().enumerate() {
            for s in [i, j] {
                incident[fill[s as usize] as usize] = e as u32;
                fill[s as usize] += 1;
            }
        }
        Links {
            sites,
            edges,
            offsets,
            incident,
        }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    fn incident(&self, site: u32) -> &[u32] {
        let s = site as usize;
        &self.incident[self.offsets[s] as usize..self.offsets[s + 1] as usize]
    }
}

/// One transition of a link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub link: usize,
    pub from: Pair,
    pub to: Pair,
}

/// Occupations recorded at the sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `samples[k][i]` is the occupation of site `i` at `times[k]`.
    pub samples: Vec<Vec<bool>>,
    pub events: u64,
}

/// A running simulation.
#[derive(Clone, Debug)]
pub struct Simulator<'a> {
    links: &'a Links,
    exit: [f64; 4],
    moves: [Vec<(Pair, f64)>; 4],
    state: Vec<bool>,
    rates: SumTree,
    time: f64,
    events: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &RateModel, links: &'a Links, state: Vec<bool>) -> Result<Simulator<'a>> {
        check_model(model)?;
        if state.len() != links.sites() {
            return Err(crate::Error::Invalid(format!(
                "configuration has {} sites, graph has {}",
                state.len(),
                links.sites()
            )));
        }
        let exit = Pair::ALL.map(|p| model.exit_rate(p));
        let moves = Pair::ALL.map(|from| {
            Pair::ALL
                .iter()
                .filter(|&&to| to != from && model.h(from, to) > 0.0)
                .map(|&to| (to, model.h(from, to)))
                .collect::<Vec<_>>()
        });
        let pair =
            |&(i, j): &(u32, u32)| Pair::new(state[i as usize] as u8, state[j as usize] as u8);
        let weights: Vec<f64> = links.edges.iter().map(|e| exit[pair(e).index()]).collect();
        Ok(Simulator {
            links,
            exit,
            moves,
            rates: SumTree::new(&weights),
            state,
            time: 0.0,
            events: 0,
        })
    }

    pub fn state(&self) -> &[bool] {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Total event rate in the current state.
    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    fn pair(&self, link: usize) -> Pair {
        let (i, j) = self.links.edges[link];
        Pair::new(self.state[i as usize] as u8, self.state[j as usize] as u8)
    }

    /// Advances to time `until`, recording the configuration at each sample
    /// time on the way. Samples must be sorted and not earlier than the
    /// current time.
    pub fn run_until<R: Rng, F: FnMut(&Event)>(
        &mut self,
        rng: &mut R,
        samples: &[f64],
        until: f64,
        mut on_event: F,
    ) -> Vec<Vec<bool>> {
        let mut out = Vec::with_capacity(samples.len());
        let mut pending = samples.iter().copied().peekable();
        loop {
            let total = self.rates.total();
            let next = if total > 0.0 {
                // 1 - u lies in (0, 1], so the waiting time is finite
                self.time - (1.0 - rng.random::<f64>()).ln() / total
            } else {
                f64::INFINITY
            };
            while let Some(&ts) = pending.peek() {
                if ts < next {
                    out.push(self.state.clone());
                    pending.next();
                } else {
                    break;
                }
            }
            if next > until {
                self.time = until;
                break;
            }
            self.time = next;
            let link = self.rates.find(rng.random::<f64>() * total);
            let from = self.pair(link);
            let moves = &self.moves[from.index()];
            let mut u = rng.random::<f64>() * self.exit[from.index()];
            let mut to = moves[moves.len() - 1].0;
            for &(p, r) in moves {
                if u < r {
                    to = p;
                    break;
                }
                u -= r;
            }
            let (i, j) = self.links.edges[link];
            self.state[i as usize] = to.left() == 1;
            self.state[j as usize] = to.right() == 1;
            for site in [i, j] {
                for &e in self.links.incident(site) {
                    let e = e as usize;
                    let w = self.exit[self.pair(e).index()];
                    self.rates.set(e, w);
                }
            }
            self.events += 1;
            on_event(&Event {
                time: next,
                link,
                from,
                to,
            });
        }
        out
    }
}

/// One trajectory from a seeded generator. The initial configuration is drawn
/// from the same generator.
pub fn gillespie_run(
    model: &RateModel,
    tree: &TruncatedTree,
    init: &InitSpec,
    seed: u64,
    t_samples: &[f64],
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_with_rng(
        model,
        tree,
        &Links::from_tree(tree),
        init,
        &mut rng,
        t_samples,
    )
}

pub(crate) fn run_with_rng<R: Rng>(
    model: &RateModel,
    tree: &TruncatedTree,
    links: &Links,
    init: &InitSpec,
    rng: &mut R,
    t_samples: &[f64],
) -> Result<Trajectory> {
    check_times(t_samples)?;
    let state = init.sample(tree, rng)?;
    let mut sim = Simulator::new(model, links, state)?;
    let end = t_samples.last().copied().unwrap_or(0.0);
    let samples = sim.run_until(rng, t_samples, end, |_| {});
    Ok(Trajectory {
        times: t_samples.to_vec(),
        samples,
        events: sim.events(),
    })
}

pub(crate) fn check_times(t: &[f64]) -> Result<()> {
    if t.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(crate::Error::Invalid(
            "sample times must be finite and nonnegative".into(),
        ));
    }
    if t.windows(2).any(|w| w[0] > w[1]) {
        return Err(crate::Error::Invalid("sample times must be sorted".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_tree;
    use crate::model::Transition;
    use proptest::prelude::*;

    #[test]
    fn sum_tree_search() {
        let mut t = SumTree::new(&[1.0, 0.0, 2.0, 3.0, 0.5]);
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.99), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(3.5), 3);
        assert_eq!(t.find(6.4), 4);
        t.set(2, 0.0);
        assert_eq!(t.total(), 4.5);
        assert_eq!(t.find(1.0), 3);
        t.set(4, 0.0);
        // u at the very top never lands on a zero leaf
        assert_eq!(t.find(3.999_999_999), 3);
    }

    #[test]
    fn frozen_model_never_moves() {
        let tree = build_tree(3, 3).unwrap();
        let run = gillespie_run(
            &RateModel::zero(3).unwrap(),
            &tree,
            &InitSpec::Bernoulli(0.5),
            7,
            &[0.0, 1.0, 100.0],
        )
        .unwrap();
        assert_eq!(run.events, 0);
        assert!(run.samples.iter().all(|s| *s == run.samples[0]));
    }

    #[test]
    fn diffusion_conserves_particles() {
        let tree = build_tree(3, 4).unwrap();
        let links = Links::from_tree(&tree);
        let model = RateModel::pure_diffusion(3, 1.0).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let state = InitSpec::Bernoulli(0.3).sample(&tree, &mut rng).unwrap();
            let n0 = state.iter().filter(|&&b| b).count();
            let mut sim = Simulator::new(&model, &links, state).unwrap();
            let mut checked = 0;
            let samples = sim.run_until(&mut rng, &[0.5, 1.0, 5.0], 5.0, |e| {
                assert_eq!(e.from.left() + e.from.right(), e.to.left() + e.to.right());
                checked += 1;
            });
            assert!(checked > 0);
            for s in samples {
                assert_eq!(s.iter().filter(|&&b| b).count(), n0);
            }
        }
    }

    #[test]
    fn annihilation_creation_flips_pairs() {
        let tree = build_tree(4, 3).unwrap();
        let links = Links::from_tree(&tree);
        let model = RateModel::annihilation_creation(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sim = Simulator::new(&model, &links, vec![false; tree.sites()]).unwrap();
        let mut before = sim.state().to_vec();
        let mut n = 0;
        sim.run_until(&mut rng, &[], 2.0, |e| {
            let (i, j) = links.edges()[e.link];
            assert!(
                (e.from == Pair::FULL && e.to == Pair::EMPTY)
                    || (e.from == Pair::EMPTY && e.to == Pair::FULL)
            );
            assert_eq!(
                Pair::new(before[i as usize] as u8, before[j as usize] as u8),
                e.from
            );
            before[i as usize] = e.to.left() == 1;
            before[j as usize] = e.to.right() == 1;
            n += 1;
        });
        assert!(n > 0);
        assert_eq!(before, sim.state());
    }

    #[test]
    fn seeded_runs_repeat() {
        let tree = build_tree(3, 3).unwrap();
        let model = RateModel::annihilation_creation(3, 1.0).unwrap();
        let t = [0.2, 0.9, 1.0];
        let a = gillespie_run(&model, &tree, &InitSpec::Bernoulli(0.4), 11, &t).unwrap();
        let b = gillespie_run(&model, &tree, &InitSpec::Bernoulli(0.4), 11, &t).unwrap();
        let c = gillespie_run(&model, &tree, &InitSpec::Bernoulli(0.4), 12, &t).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.samples.len(), 3);
    }

    #[test]
    fn unsorted_times_are_rejected() {
        let tree = build_tree(3, 1).unwrap();
        let model = RateModel::pure_diffusion(3, 1.0).unwrap();
        assert!(gillespie_run(&model, &tree, &InitSpec::Empty, 0, &[1.0, 0.5]).is_err());
    }

    /// On a single link every pair state is left at its exit rate, so the
    /// count of each transition over a long run, divided by the time spent
    /// in its source state, estimates that rate.
    #[test]
    fn single_link_frequencies_match_rates() {
        let mut model = RateModel::zero(3).unwrap();
        let mut k = 0.0;
        for t in Transition::all() {
            if t <= t.mirror() {
                k += 1.0;
                let r = 0.25 * k;
                model.set(t, r);
                model.set(t.mirror(), r);
            }
        }
        let links = Links::from_edges(2, vec![(0, 1)]);
        let mut sim = Simulator::new(&model, &links, vec![false, false]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [[0u64; 4]; 4];
        let mut dwell = [0.0f64; 4];
        let mut last = 0.0;
        sim.run_until(&mut rng, &[], 20_000.0, |e| {
            counts[e.from.index()][e.to.index()] += 1;
            dwell[e.from.index()] += e.time - last;
            last = e.time;
        });
        for from in Pair::ALL {
            let exit = model.exit_rate(from);
            let leaving: u64 = counts[from.index()].iter().sum();
            assert!(leaving > 5000);
            // conditional on leaving, targets are multinomial with p = h / exit
            for to in Pair::ALL {
                if to == from {
                    continue;
                }
                let p = model.h(from, to) / exit;
                let n = leaving as f64;
                let sigma = (n * p * (1.0 - p)).sqrt();
                let got = counts[from.index()][to.index()] as f64;
                assert!(
                    (got - n * p).abs() <= 3.0 * sigma,
                    "{from}->{to}: {got} vs {}",
                    n * p
                );
            }
            // dwell times are exponential with mean 1 / exit
            let mean = dwell[from.index()] / leaving as f64;
            let sigma = 1.0 / exit / (leaving as f64).sqrt();
            assert!((mean - 1.0 / exit).abs() <= 3.0 * sigma);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sum_tree_matches_prefix_scan(w in prop::collection::vec(0.0f64..5.0, 1..40), frac in 0.0f64..1.0) {
            let t = SumTree::new(&w);
            let total: f64 = w.iter().sum();
            prop_assume!(total > 0.0);
            let u = frac * t.total();
            let i = t.find(u);
            prop_assert!(w[i] > 0.0);
            let before: f64 = w[..i].iter().sum();
            prop_assert!(before <= u * (1.0 + 1e-12) + 1e-12);
            prop_assert!(u <= before + w[i] + 1e-12);
        }
    }
}
