//! Top-k slot selectors.
//!
//! Every selector breaks ties toward the smaller slot index and reports the
//! influence of its choice through [`crate::influence::evaluate`].

use std::time::Instant;

use itertools::Itertools;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ExposureModel, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::exec;
use crate::influence::{self, ResidualState};

/// Largest number of subsets [`brute_force_opt`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub chosen: Vec<usize>,
    pub influence: f64,
    /// Marginal gain of each pick, in pick order. Empty for selectors that
    /// do not build the set incrementally.
    pub per_step_gains: Vec<f64>,
    pub elapsed_ms: f64,
    /// Fewer than `k` slots were picked: the ground set ran out or, for
    /// greedy, no remaining slot adds influence.
    pub short: bool,
}

impl SelectionResult {
    fn finish(model: &ExposureModel, chosen: Vec<usize>, gains: Vec<f64>, k: usize, start: Instant) -> Result<Self> {
        let influence = influence::evaluate(model, &chosen)?;
        Ok(Self {
            short: chosen.len() < k,
            chosen,
            influence,
            per_step_gains: gains,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Result for a selector that had nothing to choose from.
    pub fn empty(k: usize) -> Self {
        Self { chosen: Vec::new(), influence: 0.0, per_step_gains: Vec::new(), elapsed_ms: 0.0, short: k > 0 }
    }
}

fn prepare(model: &ExposureModel, ground: &[usize], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let ground = model.normalize(ground)?;
    if ground.is_empty() {
        return Err(Error::arg("ground set is empty"));
    }
    Ok(ground)
}

/// Index of the largest value, ties to the earliest position.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Incremental greedy: `k` rounds, each adding the slot with the largest
/// marginal gain. Gains in a round are evaluated concurrently and reduced in
/// index order. Stops early, flagged short, once the best gain is zero.
pub fn greedy(model: &ExposureModel, ground: &[usize], k: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    let mut candidates = prepare(model, ground, k)?;
    let mut state = ResidualState::new(model);
    let mut gains = Vec::with_capacity(k.min(candidates.len()));
    while gains.len() < k && !candidates.is_empty() {
        let scores = exec::map(&candidates, |&b| state.gain_unchecked(b));
        let pos = argmax(&scores).expect("candidates are non-empty");
        if scores[pos] <= 0.0 {
            break;
        }
        let b = candidates.remove(pos);
        gains.push(state.commit(b)?);
    }
    let chosen = state.selected().to_vec();
    SelectionResult::finish(model, chosen, gains, k, start)
}

/// Uniform sample of `k` slots without replacement (ChaCha8 seeded from `seed`).
pub fn random_k(model: &ExposureModel, ground: &[usize], k: usize, seed: u64) -> Result<SelectionResult> {
    let start = Instant::now();
    let ground = prepare(model, ground, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = k.min(ground.len());
    let chosen: Vec<usize> = index::sample(&mut rng, ground.len(), take).into_iter().map(|i| ground[i]).collect();
    SelectionResult::finish(model, chosen, Vec::new(), k, start)
}

/// Picks the `k` slots with the largest `scores`, ties to smaller slot index.
fn top_by_score<T: PartialOrd + Copy>(ground: &[usize], scores: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ground.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(ground[a].cmp(&ground[b]))
    });
    order.into_iter().take(k).map(|i| ground[i]).collect()
}

/// The `k` slots with the largest individual influence.
pub fn top_k(model: &ExposureModel, ground: &[usize], k: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    let ground = prepare(model, ground, k)?;
    let scores = exec::map(&ground, |&b| influence::singleton_influence(model, b));
    let chosen = top_by_score(&ground, &scores, k);
    SelectionResult::finish(model, chosen, Vec::new(), k, start)
}

/// Number of trajectory records each slot of `ground` covers (radius and
/// window test, probabilities ignored). Requires a model built from tables.
pub fn coverage_counts(model: &ExposureModel, trajectories: &[TrajectoryRecord], ground: &[usize]) -> Result<Vec<u64>> {
    let layout = model
        .layout()
        .ok_or_else(|| Error::arg("coverage needs a model built from billboard and trajectory tables"))?;
    let ground = model.normalize(ground)?;
    // Records near each billboard, computed once.
    let near: Vec<Vec<usize>> = exec::map_range(layout.billboards.len(), |bi| {
        let b = &layout.billboards[bi];
        trajectories
            .iter()
            .enumerate()
            .filter(|(_, t)| crate::corpus::haversine_m(b.lat, b.lon, t.lat, t.lon) <= layout.lambda_m)
            .map(|(i, _)| i)
            .collect()
    });
    Ok(exec::map(&ground, |&s| {
        let slot = &layout.slots[s];
        near[slot.billboard]
            .iter()
            .filter(|&&r| {
                let t = &trajectories[r];
                slot.window_start <= t.t_end && t.t_start <= slot.window_end
            })
            .count() as u64
    }))
}

/// The `k` slots covering the most trajectory records.
pub fn max_coverage(
    model: &ExposureModel,
    trajectories: &[TrajectoryRecord],
    ground: &[usize],
    k: usize,
) -> Result<SelectionResult> {
    let start = Instant::now();
    let ground = prepare(model, ground, k)?;
    let counts = coverage_counts(model, trajectories, &ground)?;
    let chosen = top_by_score(&ground, &counts, k);
    SelectionResult::finish(model, chosen, Vec::new(), k, start)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact maximizer over all `k`-subsets of `ground`, lexicographically
/// smallest among ties. Refuses more than [`BRUTE_FORCE_LIMIT`] subsets.
pub fn brute_force_opt(model: &ExposureModel, ground: &[usize], k: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    let ground = prepare(model, ground, k)?;
    let take = k.min(ground.len());
    let count = binomial(ground.len(), take);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::arg(format!(
            "{count} subsets exceed the brute-force limit of {BRUTE_FORCE_LIMIT}; verify on a sampled ground set instead"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for combo in ground.iter().copied().combinations(take) {
        let v = influence::evaluate(model, &combo)?;
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, combo));
        }
    }
    let (_, chosen) = best.expect("at least one subset");
    SelectionResult::finish(model, chosen, Vec::new(), k, start)
}
