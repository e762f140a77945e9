//! Finite-state continuous-time Markov chain: generator validation, exact
//! path simulation and càdlàg path queries.
//!
//! All interval queries use half-open windows `(s, t]`, so a switch landing
//! exactly on a grid point belongs to the step that ends there.

use crate::error::{Error, Result};
use crate::rng::RandomStream;

const ROW_SUM_TOL: f64 = 1e-12;

/// Generator (rate) matrix of the chain, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    n_states: usize,
    rates: Vec<f64>,
}

impl GeneratorMatrix {
    /// Builds a generator from its rows, checking that off-diagonal rates
    /// are non-negative and every row sums to zero.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidGenerator("empty state space".into()));
        }
        let mut rates = Vec::with_capacity(n * n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGenerator(format!(
                    "row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            rates.extend_from_slice(row);
        }
        Self::from_row_major(n, rates)
    }

    pub fn from_row_major(n_states: usize, rates: Vec<f64>) -> Result<Self> {
        if n_states == 0 || rates.len() != n_states * n_states {
            return Err(Error::InvalidGenerator(format!(
                "expected {n_states}x{n_states} rates, got {}",
                rates.len()
            )));
        }
        for j in 0..n_states {
            let row = &rates[j * n_states..(j + 1) * n_states];
            if row.iter().any(|q| !q.is_finite()) {
                return Err(Error::InvalidGenerator(format!("row {j} has a non-finite rate")));
            }
            for (k, &q) in row.iter().enumerate() {
                if k != j && q < 0.0 {
                    return Err(Error::InvalidGenerator(format!(
                        "negative off-diagonal rate q[{j}][{k}] = {q}"
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOL {
                return Err(Error::InvalidGenerator(format!("row {j} sums to {sum}, not 0")));
            }
        }
        Ok(Self { n_states, rates })
    }

    /// The two-state symmetric generator with switching rate `rate` in both directions.
    pub fn symmetric_two_state(rate: f64) -> Result<Self> {
        Self::new(vec![vec![-rate, rate], vec![rate, -rate]])
    }

    /// Generator of a chain that never leaves its initial state.
    pub fn singleton() -> Self {
        Self {
            n_states: 1,
            rates: vec![0.0],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.n_states + to]
    }

    /// Total rate of leaving `state`, i.e. `-q[state][state]`.
    pub fn exit_rate(&self, state: usize) -> f64 {
        -self.rate(state, state)
    }

    /// Largest exit rate over all states.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n_states)
            .map(|s| self.exit_rate(s))
            .fold(0.0, f64::max)
    }

    /// Picks the state entered when leaving `from`, by walking the
    /// cumulative jump probabilities `q[from][k] / -q[from][from]` over
    /// `k != from` in index order until they reach `u`.
    pub fn jump_target(&self, from: usize, u: f64) -> usize {
        let exit = self.exit_rate(from);
        let mut acc = 0.0;
        let mut last = from;
        for to in (0..self.n_states).filter(|&k| k != from) {
            let q = self.rate(from, to);
            if q <= 0.0 {
                continue;
            }
            acc += q / exit;
            last = to;
            if u <= acc {
                return to;
            }
        }
        // rounding left the cumulative sum a hair below u
        last
    }
}

/// One switching event: at `time` the chain jumps into `state`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Switch {
    pub time: f64,
    pub state: usize,
}

/// A realised chain trajectory on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPath {
    initial_state: usize,
    events: Vec<Switch>,
    horizon: f64,
}

impl ChainPath {
    /// Builds a path from explicit events, validating ordering and that
    /// every event actually changes the state.
    pub fn new(initial_state: usize, events: Vec<Switch>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        let mut prev_time = 0.0;
        let mut prev_state = initial_state;
        for (n, e) in events.iter().enumerate() {
            if !(e.time > prev_time) || e.time > horizon {
                return Err(Error::InvalidArgument(format!(
                    "event {n} at time {} is out of order or outside (0, {horizon}]",
                    e.time
                )));
            }
            if e.state == prev_state {
                return Err(Error::InvalidArgument(format!(
                    "event {n} does not change the state ({})",
                    e.state
                )));
            }
            prev_time = e.time;
            prev_state = e.state;
        }
        Ok(Self {
            initial_state,
            events,
            horizon,
        })
    }

    /// A path with no switches.
    pub fn constant(state: usize, horizon: f64) -> Result<Self> {
        Self::new(state, Vec::new(), horizon)
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn events(&self) -> &[Switch] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Right-continuous state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        let n = self.events.partition_point(|e| e.time <= t);
        Ok(if n == 0 {
            self.initial_state
        } else {
            self.events[n - 1].state
        })
    }

    /// Number of switches in `(s, t]`.
    pub fn count_switches(&self, s: f64, t: f64) -> Result<usize> {
        let (lo, hi) = self.window(s, t)?;
        Ok(hi - lo)
    }

    /// Time of the first switch in `(s, t]`, if any.
    pub fn first_switch_in(&self, s: f64, t: f64) -> Result<Option<f64>> {
        let (lo, hi) = self.window(s, t)?;
        Ok((lo < hi).then(|| self.events[lo].time))
    }

    fn window(&self, s: f64, t: f64) -> Result<(usize, usize)> {
        if !(s < t) {
            return Err(Error::InvalidArgument(format!(
                "empty interval ({s}, {t}]"
            )));
        }
        let lo = self.events.partition_point(|e| e.time <= s);
        let hi = self.events.partition_point(|e| e.time <= t);
        Ok((lo, hi))
    }
}

/// Simulates the chain exactly on `[0, horizon]` starting from `initial`.
///
/// Holding times in state `i` are exponential with rate `-q[i][i]`; the next
/// state is drawn from one uniform via [`GeneratorMatrix::jump_target`].
/// States with zero exit rate are absorbing.
pub fn simulate_chain<S: RandomStream + ?Sized>(
    generator: &GeneratorMatrix,
    initial: usize,
    horizon: f64,
    stream: &mut S,
) -> Result<ChainPath> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if initial >= generator.n_states() {
        return Err(Error::InvalidArgument(format!(
            "initial state {initial} outside 0..{}",
            generator.n_states()
        )));
    }
    let mut events = Vec::new();
    let mut state = initial;
    let mut t = 0.0;
    loop {
        let rate = generator.exit_rate(state);
        if rate <= 0.0 {
            break;
        }
        t += stream.exponential(rate);
        if t > horizon {
            break;
        }
        state = generator.jump_target(state, stream.uniform());
        events.push(Switch { time: t, state });
    }
    Ok(ChainPath {
        initial_state: initial,
        events,
        horizon,
    })
}
