//! End-to-end selection pipelines, experiment rows and sweeps.

mod sweep;
mod synthetic;

pub use sweep::{sweep, Vary};
pub use synthetic::{generate_synthetic, GeoBox, SyntheticConfig, SyntheticData};

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use crate::corpus::{self, Billboard, ExposureModel, Slot, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::influence::{self, ResidualState};
use crate::partition::{self, Cluster, Partition, DEFAULT_MAX_SWEEPS};
use crate::psg::{self, PsgParams, PsgReduction};
use crate::selection::{self, SelectionResult};

/// Header of every experiment CSV.
pub const ROW_HEADER: &str = "algorithm,k,theta,lambda_m,seed,reps,influence,influence_min,influence_max,runtime_ms,ground_before,ground_after,clusters_before,clusters_after";

/// Above this many `users × chosen` lookups rows are re-checked against the
/// residual-state total instead of the per-user reference evaluation.
const NAIVE_CHECK_LIMIT: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Greedy,
    PsgGreedy,
    PartGreedy,
    PartPsgGreedy,
    Random,
    TopK,
    MaxCoverage,
    PsgRandom,
    BruteForce,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Greedy,
        Algorithm::PsgGreedy,
        Algorithm::PartGreedy,
        Algorithm::PartPsgGreedy,
        Algorithm::Random,
        Algorithm::TopK,
        Algorithm::MaxCoverage,
        Algorithm::PsgRandom,
        Algorithm::BruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::PsgGreedy => "psg_greedy",
            Algorithm::PartGreedy => "part_greedy",
            Algorithm::PartPsgGreedy => "part_psg_greedy",
            Algorithm::Random => "random",
            Algorithm::TopK => "top_k",
            Algorithm::MaxCoverage => "max_coverage",
            Algorithm::PsgRandom => "psg_random",
            Algorithm::BruteForce => "brute_force",
        }
    }

    /// Whether the seed influences the result.
    pub fn is_randomized(self) -> bool {
        matches!(self, Algorithm::PsgGreedy | Algorithm::PartPsgGreedy | Algorithm::Random | Algorithm::PsgRandom)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| Error::arg(format!("unknown algorithm `{s}`")))
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub theta: f64,
    pub lambda_m: f64,
    pub delta_minutes: i64,
    /// Slot horizon; derived from the trajectories when `None`.
    pub horizon: Option<(i64, i64)>,
    pub h: f64,
    pub ell: f64,
    pub seed: u64,
    pub max_sweeps: usize,
    pub reps: usize,
    pub billboards: PathBuf,
    pub trajectories: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Greedy,
            k: 10,
            theta: 0.2,
            lambda_m: 100.0,
            delta_minutes: 5,
            horizon: None,
            h: 8.0,
            ell: 8.0,
            seed: 0,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            reps: 1,
            billboards: PathBuf::new(),
            trajectories: PathBuf::new(),
            out: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn psg_params(&self, seed: u64) -> PsgParams {
        PsgParams { h: self.h, ell: self.ell, seed }
    }

    /// `key=value` pairs for every field, in a fixed order.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let horizon = match self.horizon {
            Some((a, b)) => format!("{a}..{b}"),
            None => "auto".into(),
        };
        vec![
            ("algorithm", self.algorithm.to_string()),
            ("k", self.k.to_string()),
            ("theta", self.theta.to_string()),
            ("lambda_m", self.lambda_m.to_string()),
            ("delta_minutes", self.delta_minutes.to_string()),
            ("horizon", horizon),
            ("h", self.h.to_string()),
            ("ell", self.ell.to_string()),
            ("seed", self.seed.to_string()),
            ("max_sweeps", self.max_sweeps.to_string()),
            ("reps", self.reps.to_string()),
            ("billboards", self.billboards.display().to_string()),
            ("trajectories", self.trajectories.display().to_string()),
            ("out", self.out.display().to_string()),
        ]
    }
}

/// Parsed tables plus the exposure model built from them.
#[derive(Clone, Debug)]
pub struct Instance {
    pub billboards: Vec<Billboard>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub slots: Vec<Slot>,
    pub horizon: (i64, i64),
    pub model: ExposureModel,
}

impl Instance {
    pub fn build(
        billboards: Vec<Billboard>,
        trajectories: Vec<TrajectoryRecord>,
        horizon: Option<(i64, i64)>,
        delta: i64,
        lambda_m: f64,
    ) -> Result<Self> {
        let horizon = match horizon {
            Some(h) => h,
            None => corpus::horizon_for(&trajectories, delta)?,
        };
        let slots = corpus::enumerate_slots(&billboards, horizon.0, horizon.1, delta)?;
        let model = corpus::build_exposure_model(&billboards, &trajectories, &slots, lambda_m)?;
        Ok(Self { billboards, trajectories, slots, horizon, model })
    }

    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let billboards = corpus::parse_billboards(&cfg.billboards)?;
        let trajectories = corpus::parse_trajectories(&cfg.trajectories)?;
        Self::build(billboards, trajectories, cfg.horizon, cfg.delta_minutes, cfg.lambda_m)
    }

    /// Same tables and slots, exposure rebuilt for another radius.
    pub fn with_lambda(&self, lambda_m: f64) -> Result<Self> {
        let model = corpus::build_exposure_model(&self.billboards, &self.trajectories, &self.slots, lambda_m)?;
        Ok(Self { model, ..self.clone() })
    }

    pub fn lambda_m(&self) -> f64 {
        self.model.layout().map(|l| l.lambda_m).unwrap_or(f64::NAN)
    }
}

/// Cluster-level result of the partition stage.
#[derive(Clone, Debug)]
pub struct ClusterStage {
    pub partition: Partition,
    pub kept: Vec<Cluster>,
    pub gamma: f64,
    pub merged: Vec<usize>,
}

/// Result of one pipeline run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub algorithm: Algorithm,
    pub selection: SelectionResult,
    /// Wall-clock of the selection phase (pruning and clustering included,
    /// parsing and model construction excluded).
    pub runtime_ms: f64,
    pub ground_before: usize,
    pub ground_after: usize,
    pub clusters: Option<ClusterStage>,
    pub reduction: Option<PsgReduction>,
}

impl Outcome {
    pub fn clusters_before(&self) -> usize {
        self.clusters.as_ref().map_or(0, |c| c.partition.clusters.len())
    }

    pub fn clusters_after(&self) -> usize {
        self.clusters.as_ref().map_or(0, |c| c.kept.len())
    }
}

fn greedy_or_empty(model: &ExposureModel, ground: &[usize], k: usize) -> Result<SelectionResult> {
    if ground.is_empty() {
        Ok(SelectionResult::empty(k))
    } else {
        selection::greedy(model, ground, k)
    }
}

fn cluster_stage(model: &ExposureModel, ground: &[usize], cfg: &RunConfig) -> Result<ClusterStage> {
    let partition = partition::theta_partition(model, ground, cfg.theta, cfg.max_sweeps)?;
    let (kept, gamma) = partition::prune_clusters(&partition.clusters)?;
    let merged = partition::merge_members(&kept)?;
    Ok(ClusterStage { partition, kept, gamma, merged })
}

/// Runs `cfg.algorithm` on `inst` with the given seed.
pub fn run_algorithm(inst: &Instance, cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    if cfg.k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let model = &inst.model;
    let all = model.all_slots();
    if all.is_empty() {
        return Err(Error::arg("instance has no slots"));
    }
    let k = cfg.k;
    let start = Instant::now();
    let mut clusters = None;
    let mut reduction = None;
    let mut ground_after = all.len();
    let selection = match cfg.algorithm {
        Algorithm::Greedy => selection::greedy(model, &all, k)?,
        Algorithm::PsgGreedy => {
            let red = psg::prune(model, &all, &cfg.psg_params(seed))?;
            ground_after = red.reduced.len();
            let sel = greedy_or_empty(model, &red.reduced, k)?;
            reduction = Some(red);
            sel
        }
        Algorithm::PartGreedy => {
            let stage = cluster_stage(model, &all, cfg)?;
            ground_after = stage.merged.len();
            let sel = greedy_or_empty(model, &stage.merged, k)?;
            clusters = Some(stage);
            sel
        }
        Algorithm::PartPsgGreedy => {
            let stage = cluster_stage(model, &all, cfg)?;
            let sel = if stage.merged.is_empty() {
                ground_after = 0;
                SelectionResult::empty(k)
            } else {
                let red = psg::prune(model, &stage.merged, &cfg.psg_params(seed))?;
                ground_after = red.reduced.len();
                let sel = greedy_or_empty(model, &red.reduced, k)?;
                reduction = Some(red);
                sel
            };
            clusters = Some(stage);
            sel
        }
        Algorithm::Random => selection::random_k(model, &all, k, seed)?,
        Algorithm::TopK => selection::top_k(model, &all, k)?,
        Algorithm::MaxCoverage => selection::max_coverage(model, &inst.trajectories, &all, k)?,
        Algorithm::PsgRandom => {
            let (red, sel) = psg::psg_random_k(model, &all, &cfg.psg_params(seed), k, seed)?;
            ground_after = red.reduced.len();
            reduction = Some(red);
            sel
        }
        Algorithm::BruteForce => selection::brute_force_opt(model, &all, k)?,
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    verify_influence(model, &selection)?;
    Ok(Outcome {
        algorithm: cfg.algorithm,
        selection,
        runtime_ms,
        ground_before: all.len(),
        ground_after,
        clusters,
        reduction,
    })
}

/// Re-evaluates the chosen set independently of the selector.
fn verify_influence(model: &ExposureModel, sel: &SelectionResult) -> Result<()> {
    let check = if model.n_users().saturating_mul(sel.chosen.len()) <= NAIVE_CHECK_LIMIT {
        influence::naive_influence(model, &sel.chosen)?
    } else {
        ResidualState::over(model, &sel.chosen)?.total_influence()
    };
    if (check - sel.influence).abs() > 1e-9 {
        return Err(Error::invariant(format!(
            "reported influence {} differs from re-evaluation {check}",
            sel.influence
        )));
    }
    Ok(())
}

pub fn run_psg_greedy(inst: &Instance, cfg: &RunConfig) -> Result<Outcome> {
    run_algorithm(inst, &RunConfig { algorithm: Algorithm::PsgGreedy, ..cfg.clone() }, cfg.seed)
}

pub fn run_part_greedy(inst: &Instance, cfg: &RunConfig) -> Result<Outcome> {
    run_algorithm(inst, &RunConfig { algorithm: Algorithm::PartGreedy, ..cfg.clone() }, cfg.seed)
}

pub fn run_part_psg_greedy(inst: &Instance, cfg: &RunConfig) -> Result<Outcome> {
    run_algorithm(inst, &RunConfig { algorithm: Algorithm::PartPsgGreedy, ..cfg.clone() }, cfg.seed)
}

/// One line of an experiment CSV: a configuration averaged over `reps` runs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub theta: f64,
    pub lambda_m: f64,
    pub seed: u64,
    pub reps: usize,
    pub influence: f64,
    pub influence_min: f64,
    pub influence_max: f64,
    pub runtime_ms: u64,
    pub ground_before: usize,
    pub ground_after: usize,
    pub clusters_before: usize,
    pub clusters_after: usize,
    /// Some run selected fewer than `k` slots.
    pub short: bool,
    /// Set when the cell failed; numeric fields are then meaningless.
    pub error: Option<String>,
}

impl ExperimentRow {
    fn failed(cfg: &RunConfig, lambda_m: f64, msg: String) -> Self {
        Self {
            algorithm: cfg.algorithm,
            k: cfg.k,
            theta: cfg.theta,
            lambda_m,
            seed: cfg.seed,
            reps: 0,
            influence: f64::NAN,
            influence_min: f64::NAN,
            influence_max: f64::NAN,
            runtime_ms: 0,
            ground_before: 0,
            ground_after: 0,
            clusters_before: 0,
            clusters_after: 0,
            short: false,
            error: Some(msg),
        }
    }

    pub fn to_csv_line(&self, with_runtime: bool) -> String {
        let (inf, lo, hi) = match &self.error {
            Some(_) => ("error".to_string(), "error".to_string(), "error".to_string()),
            None => (self.influence.to_string(), self.influence_min.to_string(), self.influence_max.to_string()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.k,
            self.theta,
            self.lambda_m,
            self.seed,
            self.reps,
            inf,
            lo,
            hi,
            if with_runtime { self.runtime_ms } else { 0 },
            self.ground_before,
            self.ground_after,
            self.clusters_before,
            self.clusters_after,
        )
    }
}

/// Seed used for repetition `rep`: the base seed for deterministic
/// algorithms, `seed + rep` for randomized ones.
pub fn rep_seed(algorithm: Algorithm, seed: u64, rep: usize) -> u64 {
    if algorithm.is_randomized() {
        seed.wrapping_add(rep as u64)
    } else {
        seed
    }
}

/// Runs `cfg` `cfg.reps` times and folds the outcomes into one row.
///
/// Deterministic algorithms must reproduce bit-identical influence on every
/// repetition.
pub fn experiment(inst: &Instance, cfg: &RunConfig) -> Result<(ExperimentRow, Vec<Outcome>)> {
    let reps = cfg.reps.max(1);
    let mut outcomes = Vec::with_capacity(reps);
    for rep in 0..reps {
        outcomes.push(run_algorithm(inst, cfg, rep_seed(cfg.algorithm, cfg.seed, rep))?);
    }
    let infl: Vec<f64> = outcomes.iter().map(|o| o.selection.influence).collect();
    if !cfg.algorithm.is_randomized() && infl.iter().any(|v| v.to_bits() != infl[0].to_bits()) {
        return Err(Error::invariant(format!("{} is not reproducible across repetitions", cfg.algorithm)));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let runtimes: Vec<f64> = outcomes.iter().map(|o| o.runtime_ms).collect();
    let first = &outcomes[0];
    let row = ExperimentRow {
        algorithm: cfg.algorithm,
        k: cfg.k,
        theta: cfg.theta,
        lambda_m: inst.lambda_m(),
        seed: cfg.seed,
        reps,
        influence: mean(&infl),
        influence_min: infl.iter().copied().fold(f64::INFINITY, f64::min),
        influence_max: infl.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        runtime_ms: mean(&runtimes).round() as u64,
        ground_before: first.ground_before,
        ground_after: first.ground_after,
        clusters_before: first.clusters_before(),
        clusters_after: first.clusters_after(),
        short: outcomes.iter().any(|o| o.selection.short),
        error: None,
    };
    Ok((row, outcomes))
}

/// Writes `# key=value` comment lines, the header, then one line per row.
///
/// With `with_runtime == false` the runtime column is written as 0 so the
/// output depends only on the inputs.
pub fn write_rows<W: Write>(
    mut w: W,
    echo: &[(&str, String)],
    rows: &[ExperimentRow],
    with_runtime: bool,
) -> Result<()> {
    let io = |e| Error::Io { path: "<rows>".into(), source: e };
    for (key, value) in echo {
        writeln!(w, "# {key}={value}").map_err(io)?;
    }
    writeln!(w, "{ROW_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(w, "{}", r.to_csv_line(with_runtime)).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_instance() -> Instance {
        let data = generate_synthetic(&SyntheticConfig {
            n_billboards: 3,
            n_users: 40,
            horizon: 120,
            delta: 10,
            ..SyntheticConfig::default()
        })
        .unwrap();
        Instance::build(data.billboards, data.trajectories, Some((0, 120)), 10, 100.0).unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("greedy2".parse::<Algorithm>().is_err());
    }

    #[test]
    fn every_algorithm_runs() {
        let inst = tiny_instance();
        for a in Algorithm::ALL {
            let k = if a == Algorithm::BruteForce { 2 } else { 5 };
            let cfg = RunConfig { algorithm: a, k, reps: 2, ..RunConfig::default() };
            let (row, outs) = experiment(&inst, &cfg).unwrap();
            assert_eq!(row.reps, 2);
            assert_eq!(row.ground_before, 36);
            assert!(row.ground_after <= row.ground_before);
            assert!(row.influence_min <= row.influence && row.influence <= row.influence_max);
            for o in outs {
                let check = influence::naive_influence(&inst.model, &o.selection.chosen).unwrap();
                assert!((check - o.selection.influence).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_line_layout() {
        let inst = tiny_instance();
        let cfg = RunConfig { algorithm: Algorithm::TopK, k: 3, ..RunConfig::default() };
        let (row, _) = experiment(&inst, &cfg).unwrap();
        let line = row.to_csv_line(false);
        assert_eq!(line.split(',').count(), ROW_HEADER.split(',').count());
        assert!(line.starts_with("top_k,3,0.2,100,0,1,"));
        let mut buf = Vec::new();
        write_rows(&mut buf, &[("k", "3".into())], &[row], false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some(ROW_HEADER));
        assert!(text.starts_with("# k=3\n"));
    }

    #[test]
    fn failed_row_marks_error() {
        let cfg = RunConfig::default();
        let line = ExperimentRow::failed(&cfg, 50.0, "boom".into()).to_csv_line(true);
        assert!(line.contains(",error,error,error,"));
    }
}
