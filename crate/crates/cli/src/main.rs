use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slotmax_core::partition::{self, Cluster};
use slotmax_core::pipelines::{
    experiment, generate_synthetic, sweep, write_rows, Algorithm, GeoBox, Instance, RunConfig, SyntheticConfig, Vary,
};
use slotmax_core::{corpus, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "slotmax", version, about = "Pick the k most influential billboard slots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm and write a single result row.
    Run(RunArgs),
    /// Run several algorithms over a list of k, theta or lambda values.
    Sweep(SweepArgs),
    /// Write a synthetic billboard and trajectory pair.
    Gen(GenArgs),
    /// Exhaustive optimum next to greedy, for small instances.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    billboards: PathBuf,
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    theta: f64,
    /// Exposure radius in meters.
    #[arg(long = "lambda-m", default_value_t = 100.0)]
    lambda_m: f64,
    /// Slot length in minutes.
    #[arg(long = "delta-min", default_value_t = 5)]
    delta_min: i64,
    /// Slot horizon start; derived from the trajectories unless both ends are given.
    #[arg(long, requires = "t_end")]
    t_start: Option<i64>,
    #[arg(long, requires = "t_start")]
    t_end: Option<i64>,
    #[arg(long, default_value_t = 8.0)]
    h: f64,
    #[arg(long, default_value_t = 8.0)]
    ell: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = partition::DEFAULT_MAX_SWEEPS)]
    max_sweeps: usize,
    /// Write measured runtimes; without it runtime_ms is 0 and the output
    /// depends only on the inputs.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    algorithm: Algorithm,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// For partition algorithms, also write `<prefix>.clusters.csv` and
    /// `<prefix>.summary.csv`.
    #[arg(long)]
    dump_partition: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    vary: Vary,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "greedy,psg_greedy,part_greedy,part_psg_greedy,random,top_k,max_coverage"
    )]
    algorithms: Vec<Algorithm>,
    /// k for sweeps that do not vary it.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    n_billboards: usize,
    #[arg(long, default_value_t = 500)]
    n_users: usize,
    #[arg(long, default_value_t = 5)]
    records_per_user: usize,
    #[arg(long, default_value_t = 1440)]
    horizon: i64,
    #[arg(long = "delta-min", default_value_t = 5)]
    delta_min: i64,
    /// lat_min,lat_max,lon_min,lon_max
    #[arg(long, value_delimiter = ',', num_args = 4)]
    geo_box: Option<Vec<f64>>,
    /// min,max
    #[arg(long, value_delimiter = ',', num_args = 2)]
    panel_size_range: Option<Vec<f64>>,
    #[arg(long)]
    hotspot_share: Option<f64>,
    #[arg(long)]
    hotspot_radius_m: Option<f64>,
    /// min,max minutes
    #[arg(long, value_delimiter = ',', num_args = 2)]
    dwell_range: Option<Vec<i64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    billboards_out: PathBuf,
    #[arg(long)]
    trajectories_out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn config(&self, algorithm: Algorithm, k: usize, reps: usize) -> RunConfig {
        RunConfig {
            algorithm,
            k,
            theta: self.theta,
            lambda_m: self.lambda_m,
            delta_minutes: self.delta_min,
            horizon: self.t_start.zip(self.t_end),
            h: self.h,
            ell: self.ell,
            seed: self.seed,
            max_sweeps: self.max_sweeps,
            reps,
            billboards: self.billboards.clone(),
            trajectories: self.trajectories.clone(),
            out: self.out.clone(),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn warn_short(rows: &[slotmax_core::ExperimentRow]) {
    for r in rows.iter().filter(|r| r.short) {
        eprintln!(
            "warning: {} picked fewer than k={} slots (ground set too small or no slot left with positive gain)",
            r.algorithm, r.k
        );
    }
    for r in rows {
        if let Some(e) = &r.error {
            eprintln!("warning: {} failed: {e}", r.algorithm);
        }
    }
}

fn dump_clusters(prefix: &Path, clusters: &[Cluster]) -> Result<()> {
    let with = |ext: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    partition::write_assignments(create(&with(".clusters.csv"))?, clusters)?;
    partition::write_summary(create(&with(".summary.csv"))?, clusters)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.common.config(args.algorithm, args.k, args.reps);
    let inst = Instance::load(&cfg)?;
    let (row, outcomes) = experiment(&inst, &cfg)?;
    if let Some(prefix) = &args.dump_partition {
        match outcomes.first().and_then(|o| o.clusters.as_ref()) {
            Some(stage) => dump_clusters(prefix, &stage.partition.clusters)?,
            None => eprintln!("warning: {} builds no partition, nothing dumped", cfg.algorithm),
        }
    }
    let rows = [row];
    warn_short(&rows);
    write_rows(create(&cfg.out)?, &cfg.echo(), &rows, args.common.timing)
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let base = args.common.config(args.algorithms[0], args.k, args.reps);
    let inst = Instance::load(&base)?;
    let rows = sweep(&inst, &base, &args.algorithms, args.vary, &args.values)?;
    warn_short(&rows);
    let mut echo = base.echo();
    echo.retain(|(key, _)| *key != "algorithm");
    let names: Vec<&str> = args.algorithms.iter().map(|a| a.name()).collect();
    let values: Vec<String> = args.values.iter().map(f64::to_string).collect();
    echo.push(("algorithms", names.join(" ")));
    echo.push(("vary", args.vary.to_string()));
    echo.push(("values", values.join(" ")));
    write_rows(create(&base.out)?, &echo, &rows, args.common.timing)
}

fn run_gen(args: GenArgs) -> Result<()> {
    let mut cfg = SyntheticConfig {
        n_billboards: args.n_billboards,
        n_users: args.n_users,
        records_per_user: args.records_per_user,
        horizon: args.horizon,
        delta: args.delta_min,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    if let Some(g) = args.geo_box {
        cfg.geo_box = GeoBox { lat_min: g[0], lat_max: g[1], lon_min: g[2], lon_max: g[3] };
    }
    if let Some(p) = args.panel_size_range {
        cfg.panel_size_range = (p[0], p[1]);
    }
    if let Some(d) = args.dwell_range {
        cfg.dwell_range = (d[0], d[1]);
    }
    if let Some(s) = args.hotspot_share {
        cfg.hotspot_share = s;
    }
    if let Some(r) = args.hotspot_radius_m {
        cfg.hotspot_radius_m = r;
    }
    let data = generate_synthetic(&cfg)?;
    let flush = |mut w: BufWriter<File>, path: &Path| {
        w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
    };
    let mut w = create(&args.billboards_out)?;
    corpus::write_billboards(&mut w, &data.billboards)?;
    flush(w, &args.billboards_out)?;
    let mut w = create(&args.trajectories_out)?;
    corpus::write_trajectories(&mut w, &data.trajectories)?;
    flush(w, &args.trajectories_out)
}

fn run_oracle(args: OracleArgs) -> Result<()> {
    let base = args.common.config(Algorithm::BruteForce, args.k, 1);
    let inst = Instance::load(&base)?;
    let mut rows = Vec::new();
    for algorithm in [Algorithm::BruteForce, Algorithm::Greedy] {
        let (row, _) = experiment(&inst, &RunConfig { algorithm, ..base.clone() })?;
        rows.push(row);
    }
    if rows[0].influence > 0.0 {
        eprintln!("greedy / optimum = {:.6}", rows[1].influence / rows[0].influence);
    }
    warn_short(&rows);
    let mut echo = base.echo();
    echo.retain(|(key, _)| *key != "algorithm");
    write_rows(create(&base.out)?, &echo, &rows, args.common.timing)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Gen(a) => run_gen(a),
        Command::Oracle(a) => run_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invariant() { 2 } else { 1 })
        }
    }
}
