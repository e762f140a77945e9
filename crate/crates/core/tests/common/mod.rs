#![allow(dead_code)]

use sdewms::rng::RandomStream;

/// Asymptotic Kolmogorov critical value at the 1% level.
pub const KS_C_001: f64 = 1.628;

/// One-sample Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_passes(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (bool, f64, f64) {
    let d = ks_statistic(sample, cdf);
    let crit = KS_C_001 / (sample.len() as f64).sqrt();
    (d <= crit, d, crit)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares slope of `ys` on `xs`, written out longhand.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Stream whose uniforms are all zero; normals are zero too.
pub struct Zeros;

impl RandomStream for Zeros {
    fn uniform(&mut self) -> f64 {
        0.0
    }
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

/// Every violation of the nesting and exact-additivity contract of a
/// coupled sample over `coarsest..=finest`.
pub fn coupling_violations(sample: &sdewms::coupling::CoupledSample, coarsest: u32, finest: u32) -> Vec<String> {
    let mut bad = Vec::new();
    let noise = &sample.noise;
    for e in sample.chain.events() {
        if noise.index_of(e.time).is_err() {
            bad.push(format!("switch time {} missing from noise", e.time));
        }
    }
    for level in coarsest..=finest {
        let grid = sample.grid(level).expect("level in range");
        for &t in grid.points() {
            if noise.index_of(t).is_err() {
                bad.push(format!("grid point {t} of level {level} missing"));
            }
        }
        if level >= 1 {
            let vars = sample.vars(level).expect("vars for level");
            for (j, (&u, &te)) in vars.u().iter().zip(vars.eval_times()).enumerate() {
                let (a, b) = (grid.points()[j], grid.points()[j + 1]);
                if !(0.0..1.0).contains(&u) || te < a || te >= b {
                    bad.push(format!("level {level} step {j}: u={u}, eval {te} outside [{a},{b})"));
                }
                if noise.index_of(te).is_err() {
                    bad.push(format!("eval time {te} of level {level} missing"));
                }
            }
        }
        if level == finest {
            continue;
        }
        let fine = sample.grid(level + 1).unwrap();
        for (j, w) in grid.points().windows(2).enumerate() {
            let (f0, f1, f2) = (fine.points()[2 * j], fine.points()[2 * j + 1], fine.points()[2 * j + 2]);
            if w[0].to_bits() != f0.to_bits() || w[1].to_bits() != f2.to_bits() {
                bad.push(format!("level {level} point {j} not shared with level {}", level + 1));
                continue;
            }
            for c in 0..noise.dim() {
                let coarse = noise.increment(w[0], w[1], c).unwrap();
                let summed = noise.increment(f0, f1, c).unwrap() + noise.increment(f1, f2, c).unwrap();
                if coarse.to_bits() != summed.to_bits() {
                    bad.push(format!("level {level} step {j} coord {c}: {coarse:e} != {summed:e}"));
                }
            }
        }
        if level >= 1 {
            let coarse = sample.vars(level).unwrap();
            let fine = sample.vars(level + 1).unwrap();
            for (j, &t) in coarse.eval_times().iter().enumerate() {
                let kids = [fine.eval_times()[2 * j], fine.eval_times()[2 * j + 1]];
                if !kids.iter().any(|k| k.to_bits() == t.to_bits()) {
                    bad.push(format!("level {level} eval {j} = {t} not inherited from {kids:?}"));
                }
            }
        }
    }
    bad
}
