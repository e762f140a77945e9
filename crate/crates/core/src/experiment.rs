//! Strong-error benchmark harness.
//!
//! For every path all requested `(scheme, level)` pairs and the reference
//! solution (randomized Milstein at `level_ref`) run on one
//! [`CoupledSample`], so the measured differences are pure discretization
//! error. Per-path results are reduced in path order, which keeps the
//! reported errors identical for any thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::chain::GeneratorMatrix;
use crate::coupling::CoupledSample;
use crate::error::{Error, Result};
use crate::models::{make_builtin, BuiltinModel, Model, ScalarFamily};
use crate::rng::PathStream;
use crate::schemes::{SchemeKind, Trajectory};

const CHUNK: usize = 1024;
const MAX_LEVEL: u32 = 24;

/// Reference scheme for every experiment.
pub const REFERENCE_SCHEME: SchemeKind = SchemeKind::RandMilstein;

/// How a path's discrepancy to the reference is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    /// `|X_T - X^h_T|`.
    #[default]
    Terminal,
    /// `max_j |X(t_j) - X^h_j|` over the coarse grid.
    MaxOverGrid,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: Model,
    pub schemes: Vec<SchemeKind>,
    pub level_min: u32,
    pub level_max: u32,
    pub level_ref: u32,
    pub n_paths: usize,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub norm: ErrorNorm,
}

impl ExperimentConfig {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            schemes: SchemeKind::HALF_ORDER_SET.to_vec(),
            level_min: 5,
            level_max: 10,
            level_ref: 13,
            n_paths: 10_000,
            seed: 0,
            output_path: None,
            threads: None,
            norm: ErrorNorm::Terminal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level_min < 1 {
            return Err(Error::Config("L_min must be at least 1".into()));
        }
        if self.level_min > self.level_max {
            return Err(Error::Config(format!(
                "L_min ({}) must not exceed L_max ({})",
                self.level_min, self.level_max
            )));
        }
        if self.level_ref <= self.level_max {
            return Err(Error::Config(format!(
                "L_ref ({}) must be greater than L_max ({})",
                self.level_ref, self.level_max
            )));
        }
        if self.level_ref > MAX_LEVEL {
            return Err(Error::Config(format!("L_ref must be at most {MAX_LEVEL}")));
        }
        if self.n_paths < 2 {
            return Err(Error::Config("n_paths must be at least 2".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    /// Parses the flat `key = value` config format. Keys mirror the field
    /// names: `model`, `schemes`, `L_min`, `L_max`, `L_ref`, `n_paths`,
    /// `seed`, `output_path`, `threads`, `max_error`, plus the model
    /// parameters `x0`, `i0`, `T`, `generator` (`a,b;c,d`) and the
    /// regime-wise lists `lambda`, `mu`, `sigma`, `nu`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim().to_string();
            if kv.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);

        let model = model_from_params(get("model").unwrap_or("ex1"), &kv)?;
        let mut cfg = ExperimentConfig::new(model);
        if let Some(v) = get("schemes") {
            cfg.schemes = parse_schemes(v)?;
        }
        if let Some(v) = get("L_min") {
            cfg.level_min = parse_num(v, "L_min")?;
        }
        if let Some(v) = get("L_max") {
            cfg.level_max = parse_num(v, "L_max")?;
        }
        if let Some(v) = get("L_ref") {
            cfg.level_ref = parse_num(v, "L_ref")?;
        }
        if let Some(v) = get("n_paths") {
            cfg.n_paths = parse_num(v, "n_paths")?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = parse_num(v, "seed")?;
        }
        if let Some(v) = get("output_path") {
            cfg.output_path = Some(PathBuf::from(v));
        }
        if let Some(v) = get("threads") {
            cfg.threads = Some(parse_num(v, "threads")?);
        }
        if let Some(v) = get("max_error") {
            cfg.norm = if parse_num::<bool>(v, "max_error")? {
                ErrorNorm::MaxOverGrid
            } else {
                ErrorNorm::Terminal
            };
        }
        const KNOWN: [&str; 18] = [
            "model", "schemes", "L_min", "L_max", "L_ref", "n_paths", "seed", "output_path", "threads",
            "max_error", "x0", "i0", "T", "generator", "lambda", "mu", "sigma", "nu",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key {k}")));
        }
        Ok(cfg)
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list(v: &str, key: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_num(x, key)).collect()
}

/// Comma-separated scheme names.
pub fn parse_schemes(v: &str) -> Result<Vec<SchemeKind>> {
    v.split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<_>>>()
}

/// Generator in `a,b;c,d` row notation.
pub fn parse_generator(v: &str) -> Result<GeneratorMatrix> {
    let rows = v
        .split(';')
        .map(|row| parse_list(row, "generator"))
        .collect::<Result<Vec<_>>>()?;
    GeneratorMatrix::new(rows)
}

/// Builds a built-in family, optionally overriding its parameters.
pub fn model_from_params(name: &str, kv: &BTreeMap<String, String>) -> Result<Model> {
    let which: BuiltinModel = name.parse()?;
    let get = |k: &str| kv.get(k).map(String::as_str);
    let overridden = ["x0", "i0", "T", "generator", "lambda", "mu", "sigma", "nu"]
        .iter()
        .any(|k| kv.contains_key(*k));
    if !overridden {
        return Ok(make_builtin(which));
    }
    let family = match which.family() {
        ScalarFamily::Ex1 => {
            if let Some(k) = ["lambda", "mu", "sigma", "nu"].iter().find(|k| kv.contains_key(**k)) {
                return Err(Error::Config(format!("ex1 has no parameter {k}")));
            }
            ScalarFamily::Ex1
        }
        ScalarFamily::MeanReverting { lambda, mu, sigma } => {
            if kv.contains_key("nu") {
                return Err(Error::Config("mean-reverting has no parameter nu".into()));
            }
            ScalarFamily::MeanReverting {
                lambda: get("lambda").map(|v| parse_list(v, "lambda")).transpose()?.unwrap_or(lambda),
                mu: get("mu").map(|v| parse_list(v, "mu")).transpose()?.unwrap_or(mu),
                sigma: get("sigma").map(|v| parse_list(v, "sigma")).transpose()?.unwrap_or(sigma),
            }
        }
        ScalarFamily::Gbm { mu, nu } => {
            if let Some(k) = ["lambda", "sigma"].iter().find(|k| kv.contains_key(**k)) {
                return Err(Error::Config(format!("gbm has no parameter {k}")));
            }
            ScalarFamily::Gbm {
                mu: get("mu").map(|v| parse_list(v, "mu")).transpose()?.unwrap_or(mu),
                nu: get("nu").map(|v| parse_list(v, "nu")).transpose()?.unwrap_or(nu),
            }
        }
    };
    let generator = match get("generator") {
        Some(v) => parse_generator(v)?,
        None => GeneratorMatrix::symmetric_two_state(0.5)?,
    };
    let x0 = get("x0").map(|v| parse_num(v, "x0")).transpose()?.unwrap_or(1.0);
    let i0 = get("i0").map(|v| parse_num(v, "i0")).transpose()?.unwrap_or(1);
    let horizon = get("T").map(|v| parse_num(v, "T")).transpose()?.unwrap_or(1.0);
    family
        .into_model(x0, i0, horizon, generator)
        .map_err(|e| Error::Config(e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub scheme: SchemeKind,
    pub level: u32,
    pub h: f64,
    pub n_paths: usize,
    pub l2_error: f64,
    pub cpu_seconds: f64,
    /// Delta-method standard error of `l2_error`.
    pub stderr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    rows: Vec<ErrorRow>,
    orders: Vec<(SchemeKind, Option<f64>)>,
}

impl ErrorTable {
    /// Sorts rows by `(scheme, descending level)` and fits one order per scheme.
    pub fn from_rows(mut rows: Vec<ErrorRow>) -> Self {
        rows.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(b.level.cmp(&a.level)));
        let mut orders: Vec<(SchemeKind, Option<f64>)> = Vec::new();
        for row in &rows {
            if orders.last().map(|o| o.0) != Some(row.scheme) {
                let points: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.scheme == row.scheme)
                    .map(|r| (r.h, r.l2_error))
                    .collect();
                orders.push((row.scheme, fit_order(&points).ok()));
            }
        }
        Self { rows, orders }
    }

    pub fn rows(&self) -> &[ErrorRow] {
        &self.rows
    }

    pub fn orders(&self) -> &[(SchemeKind, Option<f64>)] {
        &self.orders
    }

    pub fn order(&self, scheme: SchemeKind) -> Option<f64> {
        self.orders.iter().find(|o| o.0 == scheme).and_then(|o| o.1)
    }

    pub fn row(&self, scheme: SchemeKind, level: u32) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.level == level)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,level,h,n_paths,l2_error,cpu_seconds,stderr\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.scheme,
                r.level,
                decimal(r.h),
                r.n_paths,
                decimal(r.l2_error),
                decimal(r.cpu_seconds),
                decimal(r.stderr)
            );
        }
        for (scheme, order) in &self.orders {
            let _ = writeln!(out, "# order,{},{}", scheme, order.map_or("nan".to_string(), decimal));
        }
        out
    }

    pub fn write_csv_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

/// Fixed-point rendering with ten significant digits.
fn decimal(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}").to_lowercase();
    }
    if v == 0.0 {
        return "0.000000000".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn write_csv(table: &ErrorTable, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    table.write_csv_to(std::io::BufWriter::new(file))
}

/// Least-squares slope of `log2(error)` against `log2(h)`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 levels, got {}", points.len())));
    }
    if let Some(&(h, e)) = points.iter().find(|(h, e)| !(*h > 0.0) || !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::Fit(format!("non-positive value at h = {h}: error {e}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all step sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Squared discrepancies and timings of one path, in entry order.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutcome {
    pub squared_errors: Vec<f64>,
    pub seconds: Vec<f64>,
}

/// The `(scheme, level)` pairs evaluated, scheme-major with deduplicated schemes.
pub fn entries(cfg: &ExperimentConfig) -> Vec<(SchemeKind, u32)> {
    let mut schemes = cfg.schemes.clone();
    let mut seen = Vec::new();
    schemes.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(*s);
        fresh
    });
    schemes
        .into_iter()
        .flat_map(|s| (cfg.level_min..=cfg.level_max).map(move |l| (s, l)))
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn discrepancy(reference: &Trajectory, coarse: &Trajectory, norm: ErrorNorm) -> f64 {
    match norm {
        ErrorNorm::Terminal => squared_distance(reference.terminal(), coarse.terminal()),
        ErrorNorm::MaxOverGrid => {
            let stride = (reference.len() - 1) / (coarse.len() - 1);
            coarse
                .iter()
                .enumerate()
                .map(|(j, x)| squared_distance(reference.value(j * stride), x))
                .fold(0.0, f64::max)
        }
    }
}

/// Evaluates every entry on an already generated sample.
pub fn evaluate_sample(
    cfg: &ExperimentConfig,
    entries: &[(SchemeKind, u32)],
    sample: &CoupledSample,
) -> Result<PathOutcome> {
    let reference = sample.integrate(REFERENCE_SCHEME, &cfg.model, cfg.level_ref)?;
    let mut squared_errors = Vec::with_capacity(entries.len());
    let mut seconds = Vec::with_capacity(entries.len());
    for &(kind, level) in entries {
        let start = Instant::now();
        let tr = sample.integrate(kind, &cfg.model, level)?;
        seconds.push(start.elapsed().as_secs_f64());
        squared_errors.push(discrepancy(&reference, &tr, cfg.norm));
    }
    Ok(PathOutcome {
        squared_errors,
        seconds,
    })
}

/// Generates path `index` from `(seed, index)` and evaluates it.
pub fn evaluate_path(cfg: &ExperimentConfig, entries: &[(SchemeKind, u32)], index: u64) -> Result<PathOutcome> {
    let mut stream = PathStream::new(cfg.seed, index);
    let sample = CoupledSample::generate(&cfg.model, cfg.level_min, cfg.level_ref, &mut stream)?;
    evaluate_sample(cfg, entries, &sample)
}

#[derive(Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
    seconds: f64,
}

/// Runs the experiment and, if `output_path` is set, writes the CSV.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let entries = entries(cfg);
    let mut acc = vec![Accumulator::default(); entries.len()];
    let pool = match cfg.threads {
        Some(1) => None,
        threads => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        ),
    };

    let n = cfg.n_paths as u64;
    let mut start = 0u64;
    while start < n {
        let end = (start + CHUNK as u64).min(n);
        let outcomes: Vec<Result<PathOutcome>> = match &pool {
            None => (start..end).map(|p| evaluate_path(cfg, &entries, p)).collect(),
            Some(pool) => pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|p| evaluate_path(cfg, &entries, p))
                    .collect()
            }),
        };
        for outcome in outcomes {
            let outcome = outcome?;
            for (a, (sq, secs)) in acc.iter_mut().zip(outcome.squared_errors.iter().zip(&outcome.seconds)) {
                a.sum += sq;
                a.sum_sq += sq * sq;
                a.seconds += secs;
            }
        }
        start = end;
    }

    let paths = cfg.n_paths as f64;
    let horizon = cfg.model.horizon();
    let rows = entries
        .iter()
        .zip(&acc)
        .map(|(&(scheme, level), a)| {
            let mean = a.sum / paths;
            let var = ((a.sum_sq / paths - mean * mean) * paths / (paths - 1.0)).max(0.0);
            let l2_error = mean.sqrt();
            let stderr = if l2_error > 0.0 {
                (var / paths).sqrt() / (2.0 * l2_error)
            } else {
                0.0
            };
            ErrorRow {
                scheme,
                level,
                h: horizon / (1u64 << level) as f64,
                n_paths: cfg.n_paths,
                l2_error,
                cpu_seconds: a.seconds,
                stderr,
            }
        })
        .collect();
    let table = ErrorTable::from_rows(rows);
    if let Some(path) = &cfg.output_path {
        write_csv(&table, path)?;
    }
    Ok(table)
}
