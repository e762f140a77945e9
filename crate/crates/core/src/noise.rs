//! Coupled noise: dyadic grids, nested randomization variables and a single
//! Brownian path sampled on every time any scheme at any level will touch.
//!
//! Times are compared by exact `f64` equality throughout. Dyadic grid points
//! `j * T / 2^L` are bit-identical across levels, and coarse evaluation
//! times are copied verbatim from the finest level, so every lookup made by
//! a scheme hits a stored value.

use crate::chain::ChainPath;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Partition `0 = t_0 < ... < t_n = T` of the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGrid {
    level: u32,
    horizon: f64,
    points: Vec<f64>,
}

impl LevelGrid {
    /// Uniform grid with `2^level` steps of length `horizon / 2^level`.
    pub fn dyadic(level: u32, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if level > 40 {
            return Err(Error::InvalidArgument(format!("level {level} is too fine")));
        }
        let n = 1u64 << level;
        let scale = n as f64;
        let points = (0..=n).map(|j| j as f64 * horizon / scale).collect();
        Ok(Self {
            level,
            horizon,
            points,
        })
    }

    /// Arbitrary partition. `level` is only used as a label when matching
    /// randomization variables to the grid.
    pub fn from_points(level: u32, points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "a partition needs at least two points starting at 0".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("partition is not strictly increasing".into()));
        }
        let horizon = *points.last().unwrap();
        Ok(Self {
            level,
            horizon,
            points,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    /// Largest step length.
    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Drift-randomization variables `u_j` of one level and the evaluation
/// times `t_{j-1} + h_j u_j` they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomizationVariables {
    level: u32,
    horizon: f64,
    u: Vec<f64>,
    eval_times: Vec<f64>,
}

impl RandomizationVariables {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn eval_times(&self) -> &[f64] {
        &self.eval_times
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Draws i.i.d. uniforms for every step of the dyadic grid at `level`.
pub fn draw_uniforms_finest<S: RandomStream + ?Sized>(
    level: u32,
    horizon: f64,
    stream: &mut S,
) -> Result<RandomizationVariables> {
    if level == 0 {
        return Err(Error::InvalidArgument("finest level must be at least 1".into()));
    }
    let grid = LevelGrid::dyadic(level, horizon)?;
    let u: Vec<f64> = (0..grid.n_steps()).map(|_| stream.uniform()).collect();
    let eval_times = grid
        .points
        .windows(2)
        .zip(&u)
        .map(|(w, &u)| w[0] + (w[1] - w[0]) * u)
        .collect();
    Ok(RandomizationVariables {
        level,
        horizon,
        u,
        eval_times,
    })
}

/// Builds level `L - 1` variables from level `L`.
///
/// Each coarse step covers two fine steps; one fair coin per coarse step
/// picks which child's evaluation time is inherited. The coarse `u` is then
/// read back from that time, which makes it uniform on `[0, 1)` again.
pub fn coarsen_uniforms<S: RandomStream + ?Sized>(
    fine: &RandomizationVariables,
    stream: &mut S,
) -> Result<RandomizationVariables> {
    if fine.level == 0 {
        return Err(Error::InvalidArgument("level 0 cannot be coarsened".into()));
    }
    let coarse_level = fine.level - 1;
    let grid = LevelGrid::dyadic(coarse_level, fine.horizon)?;
    let n = grid.n_steps();
    let mut u = Vec::with_capacity(n);
    let mut eval_times = Vec::with_capacity(n);
    for (j, w) in grid.points.windows(2).enumerate() {
        let pick = if stream.coin() { 2 * j } else { 2 * j + 1 };
        let t = fine.eval_times[pick];
        eval_times.push(t);
        u.push((t - w[0]) / (w[1] - w[0]));
    }
    Ok(RandomizationVariables {
        level: coarse_level,
        horizon: fine.horizon,
        u,
        eval_times,
    })
}

/// The finest-level variables together with every coarsening down to
/// `coarsest`, ordered finest first.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformFamily {
    levels: Vec<RandomizationVariables>,
}

impl UniformFamily {
    pub fn draw<S: RandomStream + ?Sized>(
        finest: u32,
        coarsest: u32,
        horizon: f64,
        stream: &mut S,
    ) -> Result<Self> {
        if coarsest > finest {
            return Err(Error::InvalidArgument(format!(
                "coarsest level {coarsest} is finer than finest level {finest}"
            )));
        }
        let mut levels = vec![draw_uniforms_finest(finest, horizon, stream)?];
        for _ in coarsest..finest {
            let next = coarsen_uniforms(levels.last().unwrap(), stream)?;
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn finest(&self) -> &RandomizationVariables {
        &self.levels[0]
    }

    pub fn level(&self, level: u32) -> Option<&RandomizationVariables> {
        let top = self.levels[0].level;
        let idx = top.checked_sub(level)? as usize;
        self.levels.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RandomizationVariables> {
        self.levels.iter()
    }
}

/// Sorted, deduplicated union of grid points, switching times and
/// evaluation times. Always contains `0` and the horizon.
pub fn build_time_set(
    grids: &[LevelGrid],
    chain: &ChainPath,
    vars: &[&RandomizationVariables],
) -> Result<Vec<f64>> {
    let horizon = chain.horizon();
    if let Some(g) = grids.iter().find(|g| g.horizon != horizon) {
        return Err(Error::InvalidArgument(format!(
            "grid horizon {} differs from chain horizon {horizon}",
            g.horizon
        )));
    }
    if let Some(v) = vars.iter().find(|v| v.horizon != horizon) {
        return Err(Error::InvalidArgument(format!(
            "randomization horizon {} differs from chain horizon {horizon}",
            v.horizon
        )));
    }
    let capacity = 2
        + grids.iter().map(|g| g.points.len()).sum::<usize>()
        + vars.iter().map(|v| v.len()).sum::<usize>()
        + chain.events().len();
    let mut times = Vec::with_capacity(capacity);
    times.push(0.0);
    times.push(horizon);
    for g in grids {
        times.extend_from_slice(&g.points);
    }
    for v in vars {
        times.extend_from_slice(&v.eval_times);
    }
    times.extend(chain.events().iter().map(|e| e.time));
    times.sort_unstable_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// Brownian values `B(t)` in `dim` coordinates on a fixed sorted time set.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

/// Samples a `dim`-dimensional Brownian motion on `times` by summing
/// independent `N(0, Δt)` increments.
///
/// Stored values are snapped to a power-of-two quantum `2^(E-52)` with
/// `max |B| < 2^E`. Every difference of stored values is then exactly
/// representable, so increments over adjacent intervals add up bit for bit
/// to the increment over their union. The snap moves each value by at most
/// one ulp of the path maximum.
pub fn sample_brownian<S: RandomStream + ?Sized>(
    times: Vec<f64>,
    dim: usize,
    stream: &mut S,
) -> Result<NoisePath> {
    if dim == 0 {
        return Err(Error::InvalidArgument("Brownian dimension must be positive".into()));
    }
    if times.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("time set must start at 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time set is not strictly increasing".into()));
    }
    let mut values = vec![0.0; times.len() * dim];
    for k in 1..times.len() {
        let scale = (times[k] - times[k - 1]).sqrt();
        for l in 0..dim {
            let prev = values[(k - 1) * dim + l];
            values[k * dim + l] = prev + scale * stream.standard_normal();
        }
    }
    let quantum = additive_quantum(&values);
    for v in &mut values {
        *v = (*v / quantum).round() * quantum;
    }
    Ok(NoisePath { times, values, dim })
}

fn additive_quantum(values: &[f64]) -> f64 {
    let max = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut exp = max.log2().floor() as i32;
    while 2f64.powi(exp) <= max {
        exp += 1;
    }
    2f64.powi(exp - 52)
}

impl NoisePath {
    /// Wraps explicitly given values, `values[k * dim + l] = B_l(times[k])`.
    /// Values are stored as given.
    pub fn from_values(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || values.len() != times.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fit {} times in {dim} coordinates",
                values.len(),
                times.len()
            )));
        }
        if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "time set must start at 0 and be strictly increasing".into(),
            ));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument("Brownian values at time 0 must vanish".into()));
        }
        Ok(Self { times, values, dim })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position of `t` in the stored time set.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self.times.partition_point(|&s| s < t);
        if k < self.times.len() && self.times[k] == t {
            Ok(k)
        } else {
            Err(Error::MissingTime(t))
        }
    }

    /// All coordinates of `B` at the `k`-th stored time.
    pub fn values_at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn value(&self, t: f64, coord: usize) -> Result<f64> {
        self.check_coord(coord)?;
        Ok(self.values_at(self.index_of(t)?)[coord])
    }

    /// `B_coord(t) - B_coord(s)` from stored values.
    pub fn increment(&self, s: f64, t: f64, coord: usize) -> Result<f64> {
        self.check_coord(coord)?;
        if s > t {
            return Err(Error::InvalidArgument(format!("increment over ({s}, {t}] is reversed")));
        }
        let a = self.index_of(s)?;
        let b = self.index_of(t)?;
        Ok(self.values_at(b)[coord] - self.values_at(a)[coord])
    }

    /// Writes `B(t) - B(s)` for every coordinate into `out`, given stored indices.
    pub(crate) fn increments_between(&self, from: usize, to: usize, out: &mut [f64]) {
        let a = self.values_at(from);
        let b = self.values_at(to);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = y - x;
        }
    }

    fn check_coord(&self, coord: usize) -> Result<()> {
        if coord >= self.dim {
            return Err(Error::InvalidArgument(format!(
                "coordinate {coord} outside 0..{}",
                self.dim
            )));
        }
        Ok(())
    }
}
