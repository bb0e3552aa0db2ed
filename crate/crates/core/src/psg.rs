//! Ground-set reduction with a pruned submodularity graph.
//!
//! The graph has an edge `x → y` with weight `I(y|x) − I(x | G∖{x})`. A slot's
//! divergence from a probe set `U` is the smallest weight over edges from `U`.
//! Each round samples probes, keeps them, and drops the `1 − 1/√ℓ` fraction of
//! the remaining slots with the smallest divergence.
//!
//! Only probe-incident weights are ever read, so the full `n × n` matrix is
//! never stored. [`DenseGraph`] materializes it for small ground sets.

use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::ExposureModel;
use crate::error::{Error, Result};
use crate::exec;
use crate::influence::{self, ResidualState};
use crate::selection::{self, SelectionResult};

/// Largest ground set [`DenseGraph::build`] accepts.
pub const DENSE_GRAPH_LIMIT: usize = 200;

const SCORE_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsgParams {
    /// Probe-count multiplier: each round samples `⌈h·log₂ n⌉` probes.
    pub h: f64,
    /// Shrink rate: each round removes `⌊(1 − 1/√ℓ)·|remaining|⌋` slots.
    pub ell: f64,
    pub seed: u64,
}

impl Default for PsgParams {
    fn default() -> Self {
        Self { h: 8.0, ell: 8.0, seed: 0 }
    }
}

impl PsgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::arg(format!("h must be positive, got {}", self.h)));
        }
        if !(self.ell.is_finite() && self.ell > 1.0) {
            return Err(Error::arg(format!("ell must exceed 1, got {}", self.ell)));
        }
        Ok(())
    }

    pub fn removal_fraction(&self) -> f64 {
        1.0 - 1.0 / self.ell.sqrt()
    }

    /// Loop threshold `h·log₂ n`.
    pub fn threshold(&self, n: usize) -> f64 {
        if n <= 1 {
            0.0
        } else {
            self.h * (n as f64).log2()
        }
    }

    /// Upper bound on rounds, `⌈log_√ℓ n⌉`.
    pub fn round_bound(&self, n: usize) -> usize {
        if n <= 1 {
            0
        } else {
            ((n as f64).ln() / self.ell.sqrt().ln()).ceil() as usize
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsgReduction {
    /// Survivors plus every sampled probe, ascending.
    pub reduced: Vec<usize>,
    pub rounds: usize,
    pub removed_per_round: Vec<usize>,
    /// Probe set of each round.
    pub probes: Vec<Vec<usize>>,
    /// Slots dropped up front because they reach no user.
    pub zero_influence_removed: usize,
    /// Ground-set size after the zero-influence filter.
    pub n: usize,
}

/// Divergence of `d` from `probes`: `min_u [I(d|u) − I(u | G∖{u})]`, where
/// `G` is the set committed in `ground_state`.
///
/// This is the literal definition, one pair at a time. [`prune`] scores a
/// whole round at once with an equivalent inverted-index pass.
pub fn divergence(model: &ExposureModel, ground_state: &ResidualState<'_>, d: usize, probes: &[usize]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::arg("divergence needs at least one probe"));
    }
    if probes.contains(&d) {
        return Err(Error::arg(format!("slot {d} is one of the probes")));
    }
    let mut best = f64::INFINITY;
    for &u in probes {
        let w = influence::pair_conditional(model, d, u)? - ground_state.deletion_marginal(u)?;
        best = best.min(w);
    }
    Ok(best)
}

/// Probe exposures grouped by user, for scoring many slots against one
/// probe set.
struct ProbeIndex {
    /// `I(u | G∖{u})` per probe.
    deletion: Vec<f64>,
    max_deletion: f64,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl ProbeIndex {
    fn new(model: &ExposureModel, state: &ResidualState<'_>, probes: &[usize]) -> Result<Self> {
        let deletion = probes.iter().map(|&u| state.deletion_marginal(u)).collect::<Result<Vec<_>>>()?;
        let max_deletion = deletion.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0usize; model.n_users() + 1];
        for &u in probes {
            for e in model.exposures(u) {
                counts[e.user as usize + 1] += 1;
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut entries = vec![(0u32, 0.0); *offsets.last().unwrap_or(&0)];
        for (k, &u) in probes.iter().enumerate() {
            for e in model.exposures(u) {
                let slot = &mut fill[e.user as usize];
                entries[*slot] = (k as u32, e.p);
                *slot += 1;
            }
        }
        Ok(Self { deletion, max_deletion, offsets, entries })
    }

    /// `min_k [I(d) − Σ_j p(d,j)·p(u_k,j) − deletion_k]` for every slot in
    /// `slots`.
    ///
    /// Probes sharing no user with `d` all score `I(d) − deletion_k`, so they
    /// are covered by `I(d) − max deletion`; only the shared ones are summed.
    fn scores(&self, model: &ExposureModel, slots: &[usize]) -> Vec<f64> {
        let mut shared = vec![0.0; self.deletion.len()];
        let mut touched: Vec<u32> = Vec::new();
        let mut out = Vec::with_capacity(slots.len());
        for &d in slots {
            let mut single = 0.0;
            for e in model.exposures(d) {
                single += e.p;
                let u = e.user as usize;
                for &(k, q) in &self.entries[self.offsets[u]..self.offsets[u + 1]] {
                    let s = &mut shared[k as usize];
                    if *s == 0.0 {
                        touched.push(k);
                    }
                    *s += e.p * q;
                }
            }
            let mut best = single - self.max_deletion;
            for k in touched.drain(..) {
                let k = k as usize;
                best = best.min(single - shared[k] - self.deletion[k]);
                shared[k] = 0.0;
            }
            out.push(best);
        }
        out
    }

    #[cfg(test)]
    fn score(&self, model: &ExposureModel, d: usize) -> f64 {
        self.scores(model, &[d])[0]
    }
}

/// Runs the pruning loop on `ground` and returns the reduced ground set.
///
/// Conditioning set for `I(u | G∖{u})` is the remaining set at the start of
/// the round, probes included.
pub fn prune(model: &ExposureModel, ground: &[usize], params: &PsgParams) -> Result<PsgReduction> {
    params.validate()?;
    let ground = model.normalize(ground)?;
    if ground.is_empty() {
        return Err(Error::arg("ground set is empty"));
    }
    let mut remaining: Vec<usize> = ground.iter().copied().filter(|&b| !model.exposures(b).is_empty()).collect();
    let zero_influence_removed = ground.len() - remaining.len();
    let n = remaining.len();
    let threshold = params.threshold(n);
    let probe_count = (threshold.ceil() as usize).max(1);
    let fraction = params.removal_fraction();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut kept = Vec::new();
    let mut probes_log = Vec::new();
    let mut removed_per_round = Vec::new();

    while n > 1 && remaining.len() as f64 > threshold {
        let state = ResidualState::over(model, &remaining)?;
        let take = probe_count.min(remaining.len());
        let mut picked: Vec<usize> = index::sample(&mut rng, remaining.len(), take).into_vec();
        picked.sort_unstable();
        let probes: Vec<usize> = picked.iter().map(|&i| remaining[i]).collect();
        let mut is_probe = vec![false; remaining.len()];
        for &i in &picked {
            is_probe[i] = true;
        }
        let rest: Vec<usize> = remaining.iter().zip(&is_probe).filter(|(_, &p)| !p).map(|(&b, _)| b).collect();

        let removed = if rest.is_empty() {
            remaining.clear();
            0
        } else {
            let index = ProbeIndex::new(model, &state, &probes)?;
            let scores = exec::map_chunks(&rest, SCORE_CHUNK, |c| index.scores(model, c));
            let count = ((fraction * rest.len() as f64).floor() as usize).clamp(1, rest.len());
            // `rest` is ascending, so position order is slot order.
            let mut order: Vec<(f64, usize)> = scores.into_iter().zip(0..).collect();
            if count < rest.len() {
                order.select_nth_unstable_by(count, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
            let mut drop = vec![false; rest.len()];
            for &(_, i) in &order[..count] {
                drop[i] = true;
            }
            remaining = rest.iter().zip(&drop).filter(|(_, &x)| !x).map(|(&b, _)| b).collect();
            count
        };
        kept.extend_from_slice(&probes);
        probes_log.push(probes);
        removed_per_round.push(removed);
    }

    let mut reduced = remaining;
    reduced.extend(kept);
    reduced.sort_unstable();
    Ok(PsgReduction {
        reduced,
        rounds: removed_per_round.len(),
        removed_per_round,
        probes: probes_log,
        zero_influence_removed,
        n,
    })
}

/// Prunes, then samples `k` slots uniformly from the reduced set.
pub fn psg_random_k(
    model: &ExposureModel,
    ground: &[usize],
    params: &PsgParams,
    k: usize,
    seed: u64,
) -> Result<(PsgReduction, SelectionResult)> {
    let start = Instant::now();
    let red = prune(model, ground, params)?;
    let mut sel = if red.reduced.is_empty() {
        SelectionResult::empty(k)
    } else {
        selection::random_k(model, &red.reduced, k, seed)?
    };
    sel.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((red, sel))
}

/// Fully materialized edge weights over a small ground set.
#[derive(Clone, Debug)]
pub struct DenseGraph {
    pub slots: Vec<usize>,
    weights: Vec<f64>,
}

impl DenseGraph {
    /// Builds all `n(n−1)` weights conditioned on the whole of `ground`.
    pub fn build(model: &ExposureModel, ground: &[usize]) -> Result<Self> {
        let slots = model.normalize(ground)?;
        if slots.len() > DENSE_GRAPH_LIMIT {
            return Err(Error::arg(format!("dense graph limited to {DENSE_GRAPH_LIMIT} slots, got {}", slots.len())));
        }
        let state = ResidualState::over(model, &slots)?;
        let n = slots.len();
        let mut weights = vec![f64::NAN; n * n];
        for (x, &bx) in slots.iter().enumerate() {
            let del = state.deletion_marginal(bx)?;
            for (y, &by) in slots.iter().enumerate() {
                if x != y {
                    weights[x * n + y] = influence::pair_conditional(model, by, bx)? - del;
                }
            }
        }
        Ok(Self { slots, weights })
    }

    /// Weight of edge `from → to` (slot indices); `None` for self-loops or
    /// slots outside the graph.
    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        let x = self.slots.binary_search(&from).ok()?;
        let y = self.slots.binary_search(&to).ok()?;
        (x != y).then(|| self.weights[x * self.slots.len() + y])
    }
}
