//! Overlap-driven clustering of slots and cluster pruning.
//!
//! Two clusters overlap when they reach the same users:
//! `σ(A|B) = I(A) + I(B) − I(A∪B)`. With `c_j(A) = 1 − Π_{b∈A}(1 − p(b,j))`
//! this equals `Σ_j c_j(A)·c_j(B)`, which is what the merge loop evaluates.
//! The overlap ratio of a pair is `σ(A|B) / I(A)`, taken over whole clusters.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use crate::corpus::ExposureModel;
use crate::error::{Error, Result};
use crate::influence;

/// Default cap on merge sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 50;

/// Relative slack under which an influence counts as equal to the pruning
/// threshold (and is kept).
const PRUNE_TIE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub id: usize,
    /// Slot indices, ascending.
    pub members: Vec<usize>,
    /// Cached `I(members)`.
    pub influence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub clusters: Vec<Cluster>,
    pub theta: f64,
    pub sweeps: usize,
    /// Whether the last sweep made no merge (as opposed to hitting the cap).
    pub converged: bool,
}

impl Partition {
    /// Checks that clusters are non-empty, pairwise disjoint and cover `ground`.
    pub fn validate(&self, ground: &[usize]) -> Result<()> {
        let mut seen = Vec::with_capacity(ground.len());
        for c in &self.clusters {
            if c.members.is_empty() {
                return Err(Error::invariant(format!("cluster {} is empty", c.id)));
            }
            seen.extend_from_slice(&c.members);
        }
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invariant(format!("slot {} appears in two clusters", w[0])));
        }
        let mut ground = ground.to_vec();
        ground.sort_unstable();
        ground.dedup();
        if seen != ground {
            return Err(Error::invariant("clusters do not cover the ground set"));
        }
        Ok(())
    }
}

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    let a: HashSet<_> = a.iter().collect();
    !b.iter().any(|x| a.contains(x))
}

/// `σ(A|B) = I(A) + I(B) − I(A∪B)` for disjoint `A`, `B`.
pub fn influence_overlap(model: &ExposureModel, a: &[usize], b: &[usize]) -> Result<f64> {
    if !disjoint(a, b) {
        return Err(Error::arg("overlap is defined for disjoint slot sets"));
    }
    let union: Vec<usize> = a.iter().chain(b).copied().collect();
    Ok(influence::evaluate(model, a)? + influence::evaluate(model, b)? - influence::evaluate(model, &union)?)
}

/// `σ(A|B) / I(A)` over whole clusters, clamped to `[0, 1]`; 0 when `I(A) = 0`.
pub fn overlap_ratio(model: &ExposureModel, a: &Cluster, b: &Cluster) -> Result<f64> {
    let ia = influence::evaluate(model, &a.members)?;
    if ia <= 0.0 {
        return Ok(0.0);
    }
    Ok((influence_overlap(model, &a.members, &b.members)? / ia).clamp(0.0, 1.0))
}

/// Working cluster: members plus sparse coverage `(user, c_j)`.
struct Work {
    members: Vec<usize>,
    coverage: Vec<(u32, f64)>,
    influence: f64,
}

impl Work {
    fn singleton(model: &ExposureModel, b: usize) -> Self {
        let coverage: Vec<(u32, f64)> = model.exposures(b).iter().map(|e| (e.user, e.p)).collect();
        let influence = coverage.iter().map(|c| c.1).sum();
        Self { members: vec![b], coverage, influence }
    }

    fn overlap(&self, other: &Work) -> f64 {
        let (a, b) = (&self.coverage, &other.coverage);
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    fn absorb(&mut self, other: Work) {
        let (a, b) = (std::mem::take(&mut self.coverage), other.coverage);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                let (x, y) = (a[i].1, b[j].1);
                out.push((a[i].0, x + y - x * y));
                i += 1;
                j += 1;
            }
        }
        self.influence = out.iter().map(|c| c.1).sum();
        self.coverage = out;
        self.members.extend(other.members);
    }
}

/// Approximate θ-partition by repeated pairwise merging.
///
/// Starts from singletons and sweeps cluster pairs in id order, merging a
/// pair when `σ > 0` and `σ / min(I(A), I(B)) ≥ theta` (the larger of the two
/// directed ratios). A merged cluster keeps the smaller id and keeps being
/// tested against later clusters in the same sweep. Stops after a sweep with
/// no merge or after `max_sweeps` sweeps.
///
/// Pairs that share no user have zero overlap and are never tested, so the
/// sweep only visits clusters reachable through a common user.
pub fn theta_partition(model: &ExposureModel, ground: &[usize], theta: f64, max_sweeps: usize) -> Result<Partition> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::arg(format!("theta must lie in [0, 1], got {theta}")));
    }
    if max_sweeps == 0 {
        return Err(Error::arg("max_sweeps must be at least 1"));
    }
    let ground = model.normalize(ground)?;
    let mut clusters: Vec<Option<Work>> = ground.iter().map(|&b| Some(Work::singleton(model, b))).collect();
    let mut by_user: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); model.n_users()];
    for (id, c) in clusters.iter().enumerate() {
        for &(u, _) in &c.as_ref().expect("fresh").coverage {
            by_user[u as usize].insert(id);
        }
    }

    let neighbours_after = |by_user: &[BTreeSet<usize>], w: &Work, after: usize, into: &mut BTreeSet<usize>| {
        for &(u, _) in &w.coverage {
            into.extend(by_user[u as usize].range(after + 1..));
        }
    };

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut merged_any = false;
        for i in 0..clusters.len() {
            let Some(mut ci) = clusters[i].take() else { continue };
            let mut pending = BTreeSet::new();
            neighbours_after(&by_user, &ci, i, &mut pending);
            while let Some(j) = pending.pop_first() {
                let Some(cj) = clusters[j].as_ref() else { continue };
                let sigma = ci.overlap(cj);
                let floor = ci.influence.min(cj.influence);
                let ratio = if floor > 0.0 { sigma / floor } else { 0.0 };
                if sigma > 0.0 && ratio >= theta {
                    let cj = clusters[j].take().expect("checked above");
                    for &(u, _) in &cj.coverage {
                        let set = &mut by_user[u as usize];
                        set.remove(&j);
                        set.insert(i);
                    }
                    neighbours_after(&by_user, &cj, j, &mut pending);
                    ci.absorb(cj);
                    merged_any = true;
                }
            }
            clusters[i] = Some(ci);
        }
        let sizes: usize = clusters.iter().flatten().map(|c| c.members.len()).sum();
        if sizes != ground.len() {
            return Err(Error::invariant(format!("sweep {sweeps} lost slots: {sizes} of {}", ground.len())));
        }
        if !merged_any {
            converged = true;
            break;
        }
    }

    // Influence from scratch rather than the merged coverage, so rounding in
    // the merge loop does not leak into the reported values.
    let mut residual = vec![1.0; model.n_users()];
    let mut out = Vec::new();
    for w in clusters.into_iter().flatten() {
        let mut members = w.members;
        members.sort_unstable();
        for &b in &members {
            for e in model.exposures(b) {
                residual[e.user as usize] *= 1.0 - e.p;
            }
        }
        let mut influence = 0.0;
        for &(u, _) in &w.coverage {
            influence += 1.0 - residual[u as usize];
            residual[u as usize] = 1.0;
        }
        out.push(Cluster { id: out.len(), members, influence });
    }
    let partition = Partition { clusters: out, theta, sweeps, converged };
    partition.validate(&ground)?;
    Ok(partition)
}

/// Drops every cluster whose influence is below the mean cluster influence γ.
///
/// Returns the kept clusters and γ. Influences within a relative `1e-12` of
/// γ count as equal and are kept.
pub fn prune_clusters(clusters: &[Cluster]) -> Result<(Vec<Cluster>, f64)> {
    if clusters.is_empty() {
        return Err(Error::arg("cannot prune an empty partition"));
    }
    let gamma = clusters.iter().map(|c| c.influence).sum::<f64>() / clusters.len() as f64;
    let cut = gamma - PRUNE_TIE_EPS * gamma.abs().max(1.0);
    let kept: Vec<Cluster> = clusters.iter().filter(|c| c.influence >= cut).cloned().collect();
    Ok((kept, gamma))
}

/// Union of the kept clusters' members, ascending.
pub fn merge_members(kept: &[Cluster]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = kept.iter().flat_map(|c| c.members.iter().copied()).collect();
    let total = out.len();
    out.sort_unstable();
    out.dedup();
    if out.len() != total {
        return Err(Error::invariant("kept clusters share slots"));
    }
    Ok(out)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io { path: "<partition dump>".into(), source: e.into() }
}

/// Writes `cluster_id,slot_index`, one row per member.
pub fn write_assignments<W: Write>(w: W, clusters: &[Cluster]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["cluster_id", "slot_index"]).map_err(csv_io)?;
    for c in clusters {
        for m in &c.members {
            wtr.write_record([c.id.to_string(), m.to_string()]).map_err(csv_io)?;
        }
    }
    wtr.flush().map_err(|e| csv_io(e.into()))
}

/// Writes `cluster_id,size,influence`, one row per cluster.
pub fn write_summary<W: Write>(w: W, clusters: &[Cluster]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["cluster_id", "size", "influence"]).map_err(csv_io)?;
    for c in clusters {
        wtr.write_record([c.id.to_string(), c.members.len().to_string(), c.influence.to_string()]).map_err(csv_io)?;
    }
    wtr.flush().map_err(|e| csv_io(e.into()))
}
