//! Command-line front end: `run`, `path` and `chain-stats`.
//!
//! Exit codes: 0 on success, 2 on usage or config errors, 1 on runtime
//! failures. Every error is reported as one line starting with `error:`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::chain::simulate_chain;
use crate::coupling::CoupledSample;
use crate::error::{Error, Result};
use crate::experiment::{parse_generator, parse_schemes, run_experiment, ErrorNorm, ExperimentConfig};
use crate::models::{make_builtin, BuiltinModel};
use crate::rng::PathStream;

pub const SEED_ENV: &str = "SDEWMS_SEED";

#[derive(Debug, Parser)]
#[command(name = "sdewms", version, about = "Regime-switching SDE schemes and strong-error benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a strong-error experiment and write the error table as CSV.
    Run(RunArgs),
    /// Dump one coupled path for several schemes at one level.
    Path(PathArgs),
    /// Empirical switching-count probabilities against the `(q t)^k` bound.
    ChainStats(ChainStatsArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat key = value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ex1, mean-reverting or gbm.
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated scheme names.
    #[arg(long)]
    pub schemes: Option<String>,
    /// Inclusive level range `A..B`.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub ref_level: Option<u32>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Use 1 for stable timings.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Measure the maximum error over shared grid points instead of the terminal error.
    #[arg(long)]
    pub max_error: bool,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[arg(long, default_value = "ex1")]
    pub model: String,
    #[arg(long, default_value = "rand-milstein,milstein,euler,modified,reduced")]
    pub schemes: String,
    #[arg(long, default_value_t = 8)]
    pub level: u32,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub path_index: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChainStatsArgs {
    /// Generator rows separated by ';', entries by ','.
    #[arg(long, default_value = "-0.5,0.5;0.5,-0.5", allow_hyphen_values = true)]
    pub q: String,
    #[arg(long, default_value_t = 0)]
    pub i0: usize,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

/// Parses a level range written `A..B` (inclusive).
pub fn parse_levels(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::Config(format!("malformed level range '{s}' (expected A..B)")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<u32>()
            .map_err(|_| Error::Config(format!("malformed level range '{s}' (expected A..B)")))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if a > b {
        return Err(Error::Config(format!("empty level range '{s}'")));
    }
    Ok((a, b))
}

fn run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::new(make_builtin(BuiltinModel::Ex1)),
    };
    if let Some(m) = &args.model {
        cfg.model = make_builtin(m.parse()?);
    }
    if let Some(s) = &args.schemes {
        cfg.schemes = parse_schemes(s)?;
    }
    if let Some(l) = &args.levels {
        (cfg.level_min, cfg.level_max) = parse_levels(l)?;
    }
    if let Some(r) = args.ref_level {
        cfg.level_ref = r;
    }
    if let Some(p) = args.paths {
        cfg.n_paths = p;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_path = Some(o.clone());
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if args.max_error {
        cfg.norm = ErrorNorm::MaxOverGrid;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = run_config(args)?;
    let table = run_experiment(&cfg)?;
    match &cfg.output_path {
        Some(path) => {
            for (scheme, order) in table.orders() {
                match order {
                    Some(o) => writeln!(out, "{scheme}: order {o:.3}")?,
                    None => writeln!(out, "{scheme}: order n/a")?,
                }
            }
            writeln!(out, "wrote {}", path.display())?;
        }
        None => out.write_all(table.to_csv().as_bytes())?,
    }
    Ok(())
}

fn cmd_path(args: &PathArgs, out: &mut dyn Write) -> Result<()> {
    let model = make_builtin(args.model.parse()?);
    let schemes = parse_schemes(&args.schemes)?;
    if args.level == 0 || args.level > 24 {
        return Err(Error::Config(format!("level must be in 1..=24, got {}", args.level)));
    }
    let mut stream = PathStream::new(args.seed, args.path_index);
    let sample = CoupledSample::generate(&model, args.level, args.level, &mut stream)?;
    let trajectories = schemes
        .iter()
        .map(|&k| sample.integrate(k, &model, args.level))
        .collect::<Result<Vec<_>>>()?;
    let grid = sample.grid(args.level).expect("level generated above");

    let mut csv = String::from("t");
    for k in &schemes {
        let _ = write!(csv, ",{k}");
    }
    csv.push_str(",regime\n");
    for (j, &t) in grid.points().iter().enumerate() {
        let _ = write!(csv, "{t}");
        for tr in &trajectories {
            let _ = write!(csv, ",{}", tr.value(j)[0]);
        }
        let _ = writeln!(csv, ",{}", sample.chain.state_at(t)?);
    }
    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(())
}

/// `(window, k, empirical P(N_0^window >= k), standard error, bound)`.
pub type ChainStatsRow = (f64, usize, f64, f64, f64);

pub fn chain_stats(args: &ChainStatsArgs) -> Result<Vec<ChainStatsRow>> {
    let q = parse_generator(&args.q).map_err(|e| Error::Config(e.to_string()))?;
    if !(args.horizon > 0.0) {
        return Err(Error::Config("horizon must be positive".into()));
    }
    if args.i0 >= q.n_states() {
        return Err(Error::Config(format!("i0 must be below {}", q.n_states())));
    }
    if args.samples < 2 {
        return Err(Error::Config("need at least 2 samples".into()));
    }
    let windows: Vec<f64> = [0.25, 0.5, 1.0]
        .into_iter()
        .map(|w| w * args.horizon.min(1.0))
        .collect();
    let ks = [1usize, 2, 3];
    let mut hits = vec![0usize; windows.len() * ks.len()];
    for i in 0..args.samples {
        let mut stream = PathStream::new(args.seed, i as u64);
        let path = simulate_chain(&q, args.i0, args.horizon, &mut stream)?;
        for (wi, &w) in windows.iter().enumerate() {
            let n = path.count_switches(0.0, w)?;
            for (ki, &k) in ks.iter().enumerate() {
                if n >= k {
                    hits[wi * ks.len() + ki] += 1;
                }
            }
        }
    }
    let rate = q.max_exit_rate();
    let n = args.samples as f64;
    let mut rows = Vec::new();
    for (wi, &w) in windows.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            let p = hits[wi * ks.len() + ki] as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            rows.push((w, k, p, se, (rate * w).powi(k as i32)));
        }
    }
    Ok(rows)
}

fn cmd_chain_stats(args: &ChainStatsArgs, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "window,k,empirical,stderr,bound")?;
    for (w, k, p, se, bound) in chain_stats(args)? {
        writeln!(out, "{w},{k},{p:.6},{se:.6},{bound:.6}")?;
    }
    Ok(())
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid usage");
            let _ = writeln!(err, "error: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Path(a) => cmd_path(a, out),
        Command::ChainStats(a) => cmd_chain_stats(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {msg}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}
