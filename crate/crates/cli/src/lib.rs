//! Command-line driver: configuration, experiment orchestration and output.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use mzr_core::verify::run_battery;
use mzr_core::{exact_linear_stats, mc_stats, run_adaptive, McConfig, ProblemSpec, RefinementConfig, Trajectory};

pub mod config;

pub use config::{parse_config, ConfigError, Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(#[from] mzr_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(mzr_core::Error::InvalidConfig(_)) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mzr", version, about = "Adaptive multi-element polynomial chaos with t-model refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to MZR_THREADS, then to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the mode named in the config (adaptive by default).
    Run(Common),
    /// Monte Carlo reference statistics.
    Mc(Common),
    /// Run the identity and tensor check battery.
    Verify(Common),
    /// Sweep the configured (p_r, p_f, tol1) grid against a reference.
    Table(Common),
}

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    config: &'a RunConfig,
    wall_time_s: f64,
    files: Vec<String>,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load(common: &Common, forced: Option<Mode>) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let doc = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            parse_config(&doc)?
        }
        None if forced == Some(Mode::Verify) => RunConfig::defaults("ko1d")?,
        None => {
            return Err(ConfigError { key: None, line: None, message: "--config is required for this command".into() }.into())
        }
    };
    if let Some(mode) = forced {
        cfg.mode = mode;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn configure_threads(requested: Option<usize>) {
    let n = requested.or_else(|| std::env::var("MZR_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n.filter(|&n| n > 0) {
        // a second initialization in the same process is harmless to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Executes `cfg` and writes its outputs plus `manifest.json` into
/// `cfg.out_dir`.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    let mut out = Outcome::default();
    let mut failed = 0;
    let mut total = 0;
    let emit = |name: &str, contents: &str, out: &mut Outcome| -> Result<(), CliError> {
        let path = dir.join(name);
        write(&path, contents)?;
        out.files.push(path);
        Ok(())
    };
    match cfg.mode {
        Mode::Adaptive | Mode::Global => {
            let traj = run_adaptive(&cfg.spec(), &cfg.refinement())?;
            emit("trajectory.csv", &traj.to_csv(), &mut out)?;
            emit("mesh.json", &traj.mesh.to_json()?, &mut out)?;
            out.lines.push(format!(
                "{} {}: {} elements at t = {}",
                cfg.problem,
                if cfg.mode == Mode::Global { "global" } else { "adaptive" },
                traj.final_elements(),
                traj.times.last().copied().unwrap_or(0.0)
            ));
            if let ProblemSpec::LinearDecay { u0 } = cfg.spec() {
                out.lines.push(format!(
                    "max relative error: mean {:.3e}, variance {:.3e}",
                    traj.max_relative_mean_error(0, |t| exact_linear_stats(u0, t).0),
                    traj.max_relative_variance_error(0, |t| exact_linear_stats(u0, t).1)
                ));
            }
        }
        Mode::Mc => {
            let mc = McConfig::uniform(cfg.mc_samples, cfg.seed, cfg.dt, cfg.t_end, cfg.sample_every);
            let stats = mc_stats(&cfg.spec(), &mc)?;
            emit("mc.csv", &stats.to_csv(), &mut out)?;
            out.lines.push(format!("{} samples of {}", stats.samples, cfg.problem));
        }
        Mode::Verify => {
            let reports = run_battery(cfg.verify_trials, cfg.seed)?;
            total = reports.len();
            failed = reports.iter().filter(|r| !r.passed).count();
            out.lines.extend(reports.iter().map(|r| r.to_string()));
            emit("verify.json", &serde_json::to_string_pretty(&reports).map_err(mzr_core::Error::from)?, &mut out)?;
        }
        Mode::Table => {
            let table = run_table(cfg)?;
            out.lines.extend(table.lines().map(str::to_string));
            emit("table.csv", &table, &mut out)?;
        }
    }
    let manifest = Manifest {
        tool: "mzr",
        version: env!("CARGO_PKG_VERSION"),
        mode: cfg.mode,
        config: cfg,
        wall_time_s: start.elapsed().as_secs_f64(),
        files: out.files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(mzr_core::Error::from)?;
    emit("manifest.json", &text, &mut out)?;
    if failed > 0 {
        for l in &out.lines {
            println!("{l}");
        }
        return Err(CliError::ChecksFailed { failed, total });
    }
    Ok(out)
}

fn ko_errors(traj: &Trajectory, reference: &Trajectory) -> Vec<f64> {
    (0..traj.n_variables())
        .map(|m| {
            traj.times
                .iter()
                .enumerate()
                .filter_map(|(s, &t)| {
                    let r = reference.variance_at(m, t);
                    (r != 0.0).then(|| ((traj.variance[m][s] - r) / r).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Sweeps the `(p_r, p_f) × tol1` grid and returns a CSV table of final
/// element counts and maximum relative errors. The linear problem is compared
/// with its closed form, the K-O problems with an adaptive reference run.
pub fn run_table(cfg: &RunConfig) -> Result<String, CliError> {
    let spec = cfg.spec();
    let base = cfg.refinement();
    let with = |p_r, p_f, tol1| RefinementConfig { resolved_order: p_r, full_order: p_f, tol1, refine: true, ..base.clone() };
    let mut csv = String::new();
    match spec {
        ProblemSpec::LinearDecay { u0 } => {
            csv.push_str("kind,p_r,p_f,tol1,n_elements,err_mean,err_var\n");
            let mut row = |kind: &str, traj: &Trajectory, p_r: usize, p_f: usize, tol: f64| {
                csv.push_str(&format!(
                    "{kind},{p_r},{p_f},{tol:e},{},{:.3e},{:.3e}\n",
                    traj.final_elements(),
                    traj.max_relative_mean_error(0, |t| exact_linear_stats(u0, t).0),
                    traj.max_relative_variance_error(0, |t| exact_linear_stats(u0, t).1)
                ));
            };
            for &[p_r, p_f] in &cfg.table_orders {
                for &tol in &cfg.table_tol1 {
                    row("adaptive", &run_adaptive(&spec, &with(p_r, p_f, tol))?, p_r, p_f, tol);
                }
            }
            let mut orders: Vec<usize> = cfg.table_orders.iter().map(|o| o[1]).collect();
            orders.sort_unstable();
            orders.dedup();
            for p in orders {
                let global = RefinementConfig { sample_every: base.sample_every, ..RefinementConfig::global(p, base.dt, base.t_end) };
                row("global", &run_adaptive(&spec, &global)?, p, p, f64::INFINITY);
            }
        }
        ProblemSpec::KraichnanOrszag(_) => {
            let n = spec.n_states();
            csv.push_str("kind,p_r,p_f,tol1,n_elements");
            for m in 1..=n {
                csv.push_str(&format!(",err_var_{m}"));
            }
            csv.push('\n');
            let reference = run_adaptive(&spec, &with(cfg.reference_p_r, cfg.reference_p_f, cfg.reference_tol1))?;
            csv.push_str(&format!(
                "reference,{},{},{:e},{}{}\n",
                cfg.reference_p_r,
                cfg.reference_p_f,
                cfg.reference_tol1,
                reference.final_elements(),
                ",0".repeat(n)
            ));
            for &[p_r, p_f] in &cfg.table_orders {
                for &tol in &cfg.table_tol1 {
                    let traj = run_adaptive(&spec, &with(p_r, p_f, tol))?;
                    csv.push_str(&format!("adaptive,{p_r},{p_f},{tol:e},{}", traj.final_elements()));
                    for e in ko_errors(&traj, &reference) {
                        csv.push_str(&format!(",{e:.3e}"));
                    }
                    csv.push('\n');
                }
            }
        }
    }
    Ok(csv)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (common, forced) = match &cli.command {
        Command::Run(c) => (c, None),
        Command::Mc(c) => (c, Some(Mode::Mc)),
        Command::Verify(c) => (c, Some(Mode::Verify)),
        Command::Table(c) => (c, Some(Mode::Table)),
    };
    configure_threads(common.threads);
    let result = load(common, forced).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            for l in &outcome.lines {
                println!("{l}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("mzr: {e}");
            e.exit_code()
        }
    }
}
