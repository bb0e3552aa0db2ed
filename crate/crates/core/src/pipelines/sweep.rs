use std::fmt;
use std::str::FromStr;

use super::{experiment, Algorithm, ExperimentRow, Instance, RunConfig};
use crate::error::{Error, Result};

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vary {
    K,
    Theta,
    Lambda,
}

impl FromStr for Vary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(Vary::K),
            "theta" => Ok(Vary::Theta),
            "lambda" => Ok(Vary::Lambda),
            _ => Err(Error::arg(format!("cannot sweep over `{s}` (expected k, theta or lambda)"))),
        }
    }
}

impl fmt::Display for Vary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Vary::K => "k",
            Vary::Theta => "theta",
            Vary::Lambda => "lambda",
        })
    }
}

fn cell_config(base: &RunConfig, algorithm: Algorithm, vary: Vary, value: f64) -> Result<RunConfig> {
    let mut cfg = RunConfig { algorithm, ..base.clone() };
    match vary {
        Vary::K => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::arg(format!("k must be a positive integer, got {value}")));
            }
            cfg.k = value as usize;
        }
        Vary::Theta => cfg.theta = value,
        Vary::Lambda => cfg.lambda_m = value,
    }
    Ok(cfg)
}

/// One row per `(algorithm, value)`, algorithms outermost, each averaged over
/// `base.reps` repetitions. A failing cell yields an error row and the sweep
/// carries on.
pub fn sweep(
    inst: &Instance,
    base: &RunConfig,
    algorithms: &[Algorithm],
    vary: Vary,
    values: &[f64],
) -> Result<Vec<ExperimentRow>> {
    if values.is_empty() {
        return Err(Error::arg("sweep needs at least one value"));
    }
    if algorithms.is_empty() {
        return Err(Error::arg("sweep needs at least one algorithm"));
    }
    // Instances per value; only a radius sweep changes the exposure model.
    let instances: Vec<Result<Instance>> = values
        .iter()
        .map(|&v| match vary {
            Vary::Lambda => inst.with_lambda(v),
            _ => Ok(inst.clone()),
        })
        .collect();

    let mut rows = Vec::with_capacity(algorithms.len() * values.len());
    for &algorithm in algorithms {
        for (&value, cell_inst) in values.iter().zip(&instances) {
            let lambda = if vary == Vary::Lambda { value } else { inst.lambda_m() };
            let result = cell_inst.as_ref().map_err(|e| Error::arg(e.to_string())).and_then(|ci| {
                let cfg = cell_config(base, algorithm, vary, value)?;
                experiment(ci, &cfg).map(|(row, _)| row)
            });
            match result {
                Ok(row) => rows.push(row),
                Err(e) if e.is_invariant() => return Err(e),
                Err(e) => {
                    let cfg = cell_config(base, algorithm, vary, value)
                        .unwrap_or_else(|_| RunConfig { algorithm, ..base.clone() });
                    rows.push(ExperimentRow::failed(&cfg, lambda, e.to_string()));
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipelines::{generate_synthetic, SyntheticConfig};

    fn instance() -> Instance {
        let data = generate_synthetic(&SyntheticConfig {
            n_billboards: 4,
            n_users: 60,
            horizon: 240,
            delta: 20,
            ..SyntheticConfig::default()
        })
        .unwrap();
        Instance::build(data.billboards, data.trajectories, Some((0, 240)), 20, 100.0).unwrap()
    }

    #[test]
    fn k_sweep_monotone_for_greedy() {
        let inst = instance();
        let base = RunConfig { reps: 3, ..RunConfig::default() };
        let rows = sweep(&inst, &base, &[Algorithm::Greedy], Vary::K, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.windows(2).all(|w| w[0].influence <= w[1].influence));
        assert!(rows.iter().all(|r| r.influence_min == r.influence_max && r.reps == 3));
    }

    #[test]
    fn bad_cells_do_not_stop_the_sweep() {
        let inst = instance();
        let rows = sweep(&inst, &RunConfig::default(), &[Algorithm::TopK], Vary::K, &[0.0, 2.5, 3.0]).unwrap();
        assert!(rows[0].error.is_some());
        assert!(rows[1].error.is_some());
        assert!(rows[2].error.is_none());
        assert!(sweep(&inst, &RunConfig::default(), &[Algorithm::TopK], Vary::K, &[]).is_err());
    }

    #[test]
    fn theta_sweep_reports_clusters() {
        let inst = instance();
        let rows =
            sweep(&inst, &RunConfig::default(), &[Algorithm::PartGreedy], Vary::Theta, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(rows.iter().all(|r| r.clusters_before >= r.clusters_after && r.clusters_after >= 1));
        assert_eq!(rows.iter().map(|r| r.theta).collect::<Vec<_>>(), vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!("lambda".parse::<Vary>().unwrap(), Vary::Lambda);
        assert!("x".parse::<Vary>().is_err());
    }
}
