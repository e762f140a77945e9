//! Random streams consumed by the simulators.
//!
//! Every Monte Carlo path owns one [`PathStream`], derived from the
//! experiment seed and the path index, so paths can be generated in any
//! order (or in parallel) and still reproduce bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

/// Source of the primitive random draws used by the chain, uniform and
/// Brownian samplers.
pub trait RandomStream {
    /// Standard uniform on `[0, 1)`.
    fn uniform(&mut self) -> f64;

    fn standard_normal(&mut self) -> f64;

    /// Exponential with the given rate (mean `1 / rate`).
    fn exponential(&mut self, rate: f64) -> f64 {
        -(1.0 - self.uniform()).ln() / rate
    }

    /// Fair coin; `true` selects the first of two children.
    fn coin(&mut self) -> bool {
        self.uniform() < 0.5
    }
}

impl<S: RandomStream + ?Sized> RandomStream for &mut S {
    fn uniform(&mut self) -> f64 {
        (**self).uniform()
    }
    fn standard_normal(&mut self) -> f64 {
        (**self).standard_normal()
    }
    fn exponential(&mut self, rate: f64) -> f64 {
        (**self).exponential(rate)
    }
    fn coin(&mut self) -> bool {
        (**self).coin()
    }
}

/// ChaCha8 stream keyed by `(seed, path_index)`.
///
/// The path index selects the ChaCha stream id, so distinct paths never
/// share keystream regardless of how many draws each one consumes.
#[derive(Clone, Debug)]
pub struct PathStream {
    rng: ChaCha8Rng,
}

impl PathStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self { rng }
    }
}

impl RandomStream for PathStream {
    fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn exponential(&mut self, rate: f64) -> f64 {
        let e: f64 = self.rng.sample(Exp1);
        e / rate
    }

    fn coin(&mut self) -> bool {
        self.rng.gen::<bool>()
    }
}
