//! One Monte Carlo sample shared by every scheme and every level.

use crate::chain::{simulate_chain, ChainPath};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::noise::{build_time_set, sample_brownian, LevelGrid, NoisePath, RandomizationVariables, UniformFamily};
use crate::rng::RandomStream;
use crate::schemes::{integrate, SchemeKind, Trajectory};

/// Chain path, nested randomization variables and Brownian path for levels
/// `coarsest..=finest`.
///
/// Draw order from the stream is fixed: chain, finest uniforms, coarsening
/// coins (finest to coarsest), Brownian increments.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledSample {
    pub chain: ChainPath,
    pub uniforms: UniformFamily,
    pub noise: NoisePath,
    grids: Vec<LevelGrid>,
    coarsest: u32,
}

impl CoupledSample {
    pub fn generate<S: RandomStream + ?Sized>(
        model: &Model,
        coarsest: u32,
        finest: u32,
        stream: &mut S,
    ) -> Result<Self> {
        if coarsest > finest {
            return Err(Error::InvalidArgument(format!(
                "coarsest level {coarsest} exceeds finest level {finest}"
            )));
        }
        let horizon = model.horizon();
        let chain = simulate_chain(model.generator(), model.i0(), horizon, stream)?;
        let uniforms = UniformFamily::draw(finest, coarsest.max(1), horizon, stream)?;
        let grids = (coarsest..=finest)
            .map(|level| LevelGrid::dyadic(level, horizon))
            .collect::<Result<Vec<_>>>()?;
        // coarse grid points and evaluation times are bitwise subsets of the finest ones
        let times = build_time_set(&grids[grids.len() - 1..], &chain, &[uniforms.finest()])?;
        let noise = sample_brownian(times, model.dim_w(), stream)?;
        Ok(Self {
            chain,
            uniforms,
            noise,
            grids,
            coarsest,
        })
    }

    pub fn grid(&self, level: u32) -> Option<&LevelGrid> {
        let idx = level.checked_sub(self.coarsest)? as usize;
        self.grids.get(idx)
    }

    pub fn vars(&self, level: u32) -> Option<&RandomizationVariables> {
        self.uniforms.level(level)
    }

    /// Runs `kind` at `level` on this sample.
    pub fn integrate(&self, kind: SchemeKind, model: &Model, level: u32) -> Result<Trajectory> {
        let grid = self
            .grid(level)
            .ok_or_else(|| Error::InvalidArgument(format!("level {level} not covered by this sample")))?;
        let vars = if kind.is_randomized() { self.vars(level) } else { None };
        integrate(kind, model, grid, &self.chain, &self.noise, vars)
    }
}
