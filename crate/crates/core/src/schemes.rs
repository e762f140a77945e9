//! Step maps and trajectory integrators.
//!
//! Every scheme is a predictor/corrector pair over one step
//! `(t_{j-1}, t_j]`:
//!
//! ```text
//! predictor  X^u = X + b(t, X, r) h u + Σ σ_l(t, X, r) (B_l(t^u) - B_l(t))
//! corrector  X'  = X + b(t^u, X^u, r^u) h + Σ σ_l ΔB_l
//!                    + ½ Σ D_xσ_a σ_b (ΔB_a ΔB_b - 1{a=b} h)
//!                    + 1{N=1} Σ (σ_l(t, X, r_j) - σ_l(t, X, r)) (B_l(t_j) - B_l(s))
//! ```
//!
//! where `s` is the first switching time (randomized Milstein), `t_{j-1}`
//! (modified) or the last term is dropped (reduced). Non-randomized kinds run
//! the same code with `u = 0`. Only the commutative form of the iterated
//! integral is implemented.

use std::fmt;
use std::str::FromStr;

use crate::chain::ChainPath;
use crate::error::{Error, Result};
use crate::models::{forward_difference, Model};
use crate::noise::{LevelGrid, NoisePath, RandomizationVariables};

/// Which switching correction the corrector applies on steps with exactly
/// one switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchCorrection {
    /// Increment `B(t_j) - B(τ_1)` from the first switching time.
    FromFirstSwitch,
    /// Increment over the whole step, `B(t_j) - B(t_{j-1})`.
    FullStep,
    Omitted,
}

/// Where the Milstein term takes `D_x σ` from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianSource {
    Analytic,
    /// Forward difference with the step length as increment; scalar models only.
    ForwardDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemeKind {
    Euler,
    Milstein,
    RandMilstein,
    ModifiedRand,
    ReducedRand,
    ModifiedNonRand,
    ReducedNonRand,
    DerivFreeModifiedNonRand,
    DerivFreeReducedNonRand,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 9] = [
        SchemeKind::Euler,
        SchemeKind::Milstein,
        SchemeKind::RandMilstein,
        SchemeKind::ModifiedRand,
        SchemeKind::ReducedRand,
        SchemeKind::ModifiedNonRand,
        SchemeKind::ReducedNonRand,
        SchemeKind::DerivFreeModifiedNonRand,
        SchemeKind::DerivFreeReducedNonRand,
    ];

    /// Comparison set used when no schemes are requested explicitly.
    pub const HALF_ORDER_SET: [SchemeKind; 5] = [
        SchemeKind::Euler,
        SchemeKind::ReducedNonRand,
        SchemeKind::ModifiedNonRand,
        SchemeKind::ReducedRand,
        SchemeKind::ModifiedRand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Euler => "euler",
            SchemeKind::Milstein => "milstein",
            SchemeKind::RandMilstein => "rand-milstein",
            SchemeKind::ModifiedRand => "modified-rand",
            SchemeKind::ReducedRand => "reduced-rand",
            SchemeKind::ModifiedNonRand => "modified",
            SchemeKind::ReducedNonRand => "reduced",
            SchemeKind::DerivFreeModifiedNonRand => "df-modified",
            SchemeKind::DerivFreeReducedNonRand => "df-reduced",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(
            self,
            SchemeKind::RandMilstein | SchemeKind::ModifiedRand | SchemeKind::ReducedRand
        )
    }

    pub fn is_euler(self) -> bool {
        self == SchemeKind::Euler
    }

    pub fn switch_correction(self) -> SwitchCorrection {
        match self {
            SchemeKind::Euler => SwitchCorrection::Omitted,
            SchemeKind::Milstein | SchemeKind::RandMilstein => SwitchCorrection::FromFirstSwitch,
            SchemeKind::ModifiedRand
            | SchemeKind::ModifiedNonRand
            | SchemeKind::DerivFreeModifiedNonRand => SwitchCorrection::FullStep,
            SchemeKind::ReducedRand
            | SchemeKind::ReducedNonRand
            | SchemeKind::DerivFreeReducedNonRand => SwitchCorrection::Omitted,
        }
    }

    pub fn jacobian_source(self) -> JacobianSource {
        match self {
            SchemeKind::DerivFreeModifiedNonRand | SchemeKind::DerivFreeReducedNonRand => {
                JacobianSource::ForwardDifference
            }
            _ => JacobianSource::Analytic,
        }
    }

    /// The `u ≡ 0` version of a randomized kind; other kinds map to themselves.
    pub fn non_randomized(self) -> SchemeKind {
        match self {
            SchemeKind::RandMilstein => SchemeKind::Milstein,
            SchemeKind::ModifiedRand => SchemeKind::ModifiedNonRand,
            SchemeKind::ReducedRand => SchemeKind::ReducedNonRand,
            other => other,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// Everything a step needs to know about the chain and the randomization on
/// `(t_prev, t_next]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepContext {
    pub step: usize,
    pub t_prev: f64,
    pub t_next: f64,
    pub h: f64,
    pub u: f64,
    pub t_eval: f64,
    pub r_prev: usize,
    pub r_eval: usize,
    pub r_next: usize,
    pub n_switch: usize,
    pub tau1: Option<f64>,
}

impl StepContext {
    /// Reads the chain on step `step`. `t_eval` defaults to
    /// `t_prev + h u`; pass the stored evaluation time to reuse it verbatim.
    pub fn from_chain(
        chain: &ChainPath,
        step: usize,
        t_prev: f64,
        t_next: f64,
        u: f64,
        t_eval: Option<f64>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidArgument(format!("u = {u} outside [0, 1]")));
        }
        let h = t_next - t_prev;
        let t_eval = t_eval.unwrap_or(t_prev + h * u);
        let n_switch = chain.count_switches(t_prev, t_next)?;
        let tau1 = if n_switch > 0 {
            chain.first_switch_in(t_prev, t_next)?
        } else {
            None
        };
        Ok(Self {
            step,
            t_prev,
            t_next,
            h,
            u,
            t_eval,
            r_prev: chain.state_at(t_prev)?,
            r_eval: chain.state_at(t_eval)?,
            r_next: chain.state_at(t_next)?,
            n_switch,
            tau1,
        })
    }
}

/// Scheme values `X^h_j` at every grid point of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    level: u32,
    dim: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored points (`n_h + 1`).
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

/// Noise indices of the times a step touches.
#[derive(Clone, Copy, Debug)]
struct StepIndices {
    prev: usize,
    eval: usize,
    next: usize,
    tau1: Option<usize>,
}

impl StepIndices {
    fn resolve(ctx: &StepContext, noise: &NoisePath, prev: Option<usize>) -> Result<Self> {
        let prev = match prev {
            Some(k) => k,
            None => noise.index_of(ctx.t_prev)?,
        };
        let eval = if ctx.t_eval == ctx.t_prev {
            prev
        } else {
            noise.index_of(ctx.t_eval)?
        };
        let next = noise.index_of(ctx.t_next)?;
        Ok(Self {
            prev,
            eval,
            next,
            tau1: None,
        })
    }

    fn with_tau1(mut self, ctx: &StepContext, noise: &NoisePath) -> Result<Self> {
        if ctx.n_switch == 1 {
            let tau = ctx.tau1.ok_or_else(|| {
                Error::InvalidArgument("one switch recorded but no switching time".into())
            })?;
            self.tau1 = Some(noise.index_of(tau)?);
        }
        Ok(self)
    }
}

/// Scratch buffers reused across steps.
struct Stepper<'m> {
    model: &'m Model,
    d: usize,
    dw: usize,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    sigma_alt: Vec<f64>,
    jac: Vec<f64>,
    prod: Vec<f64>,
    db: Vec<f64>,
    db_part: Vec<f64>,
}

impl<'m> Stepper<'m> {
    fn new(model: &'m Model) -> Self {
        let d = model.dim_x();
        let dw = model.dim_w();
        Self {
            model,
            d,
            dw,
            drift: vec![0.0; d],
            sigma: vec![0.0; d * dw],
            sigma_alt: vec![0.0; d],
            jac: vec![0.0; d * d],
            prod: vec![0.0; d],
            db: vec![0.0; dw],
            db_part: vec![0.0; dw],
        }
    }

    /// Fills `self.sigma` with all diffusion columns at `(t, x, state)`.
    fn load_sigma(&mut self, t: f64, x: &[f64], state: usize) {
        let c = self.model.coefficients();
        for l in 0..self.dw {
            c.diffusion(t, x, state, l, &mut self.sigma[l * self.d..(l + 1) * self.d]);
        }
    }

    fn predictor(
        &mut self,
        ctx: &StepContext,
        idx: &StepIndices,
        noise: &NoisePath,
        x: &[f64],
        out: &mut [f64],
    ) {
        let c = self.model.coefficients();
        c.drift(ctx.t_prev, x, ctx.r_prev, &mut self.drift);
        self.load_sigma(ctx.t_prev, x, ctx.r_prev);
        noise.increments_between(idx.prev, idx.eval, &mut self.db_part);
        let hu = ctx.h * ctx.u;
        for i in 0..self.d {
            let mut acc = x[i] + self.drift[i] * hu;
            for l in 0..self.dw {
                acc += self.sigma[l * self.d + i] * self.db_part[l];
            }
            out[i] = acc;
        }
    }

    fn euler(
        &mut self,
        ctx: &StepContext,
        idx: &StepIndices,
        noise: &NoisePath,
        x: &[f64],
        out: &mut [f64],
    ) {
        let c = self.model.coefficients();
        c.drift(ctx.t_prev, x, ctx.r_prev, &mut self.drift);
        self.load_sigma(ctx.t_prev, x, ctx.r_prev);
        noise.increments_between(idx.prev, idx.next, &mut self.db);
        for i in 0..self.d {
            let mut acc = x[i] + self.drift[i] * ctx.h;
            for l in 0..self.dw {
                acc += self.sigma[l * self.d + i] * self.db[l];
            }
            out[i] = acc;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn corrector(
        &mut self,
        ctx: &StepContext,
        idx: &StepIndices,
        noise: &NoisePath,
        x: &[f64],
        x_pred: &[f64],
        switching: SwitchCorrection,
        jacobian: JacobianSource,
        out: &mut [f64],
    ) -> Result<()> {
        let (d, dw) = (self.d, self.dw);
        let c = self.model.coefficients();
        c.drift(ctx.t_eval, x_pred, ctx.r_eval, &mut self.drift);
        self.load_sigma(ctx.t_prev, x, ctx.r_prev);
        noise.increments_between(idx.prev, idx.next, &mut self.db);

        for i in 0..d {
            let mut acc = x[i] + self.drift[i] * ctx.h;
            for l in 0..dw {
                acc += self.sigma[l * d + i] * self.db[l];
            }
            out[i] = acc;
        }

        for a in 0..dw {
            match jacobian {
                JacobianSource::Analytic => {
                    if !c.diffusion_jacobian(ctx.t_prev, x, ctx.r_prev, a, &mut self.jac) {
                        return Err(Error::Unsupported(
                            "model has no analytic diffusion Jacobian; use a derivative-free scheme"
                                .into(),
                        ));
                    }
                }
                JacobianSource::ForwardDifference => {
                    self.jac[0] = forward_difference(c, ctx.t_prev, x[0], ctx.r_prev, ctx.h);
                }
            }
            for b in 0..dw {
                let col = &self.sigma[b * d..(b + 1) * d];
                for i in 0..d {
                    self.prod[i] = self.jac[i * d..(i + 1) * d]
                        .iter()
                        .zip(col)
                        .map(|(m, v)| m * v)
                        .sum();
                }
                let ito = if a == b { ctx.h } else { 0.0 };
                let weight = 0.5 * (self.db[b] * self.db[a] - ito);
                for (o, p) in out.iter_mut().zip(&self.prod) {
                    *o += p * weight;
                }
            }
        }

        if ctx.n_switch == 1 && switching != SwitchCorrection::Omitted {
            let from = match switching {
                SwitchCorrection::FromFirstSwitch => idx
                    .tau1
                    .ok_or_else(|| Error::InvalidArgument("switching time index missing".into()))?,
                _ => idx.prev,
            };
            noise.increments_between(from, idx.next, &mut self.db_part);
            for l in 0..dw {
                c.diffusion(ctx.t_prev, x, ctx.r_next, l, &mut self.sigma_alt);
                let sigma = &self.sigma[l * d..(l + 1) * d];
                for ((o, alt), s) in out.iter_mut().zip(&self.sigma_alt).zip(sigma) {
                    *o += (alt - s) * self.db_part[l];
                }
            }
        }
        Ok(())
    }
}

fn check_supported(model: &Model, jacobian: JacobianSource) -> Result<()> {
    if !model.is_commutative() {
        return Err(Error::Unsupported(
            "Milstein-type schemes need commutative diffusion".into(),
        ));
    }
    if jacobian == JacobianSource::ForwardDifference && (model.dim_x() != 1 || model.dim_w() != 1) {
        return Err(Error::Unsupported(
            "derivative-free schemes are only defined for scalar models".into(),
        ));
    }
    Ok(())
}

/// First stage: the Euler-type value at the randomized time `t_eval`.
pub fn step_predictor(model: &Model, ctx: &StepContext, x_prev: &[f64], noise: &NoisePath) -> Result<Vec<f64>> {
    let idx = StepIndices::resolve(ctx, noise, None)?;
    let mut out = vec![0.0; model.dim_x()];
    Stepper::new(model).predictor(ctx, &idx, noise, x_prev, &mut out);
    Ok(out)
}

/// Second stage with an explicit choice of switching correction and Jacobian source.
pub fn step_corrector(
    model: &Model,
    ctx: &StepContext,
    x_prev: &[f64],
    x_pred: &[f64],
    noise: &NoisePath,
    switching: SwitchCorrection,
    jacobian: JacobianSource,
) -> Result<Vec<f64>> {
    check_supported(model, jacobian)?;
    let idx = StepIndices::resolve(ctx, noise, None)?;
    let idx = if switching == SwitchCorrection::FromFirstSwitch {
        idx.with_tau1(ctx, noise)?
    } else {
        idx
    };
    let mut out = vec![0.0; model.dim_x()];
    Stepper::new(model).corrector(ctx, &idx, noise, x_prev, x_pred, switching, jacobian, &mut out)?;
    Ok(out)
}

/// Corrector of the randomized Milstein scheme.
pub fn step_rand_milstein(
    model: &Model,
    ctx: &StepContext,
    x_prev: &[f64],
    x_pred: &[f64],
    noise: &NoisePath,
) -> Result<Vec<f64>> {
    step_corrector(model, ctx, x_prev, x_pred, noise, SwitchCorrection::FromFirstSwitch, JacobianSource::Analytic)
}

/// Corrector with the switching correction taken over the whole step.
pub fn step_modified(
    model: &Model,
    ctx: &StepContext,
    x_prev: &[f64],
    x_pred: &[f64],
    noise: &NoisePath,
) -> Result<Vec<f64>> {
    step_corrector(model, ctx, x_prev, x_pred, noise, SwitchCorrection::FullStep, JacobianSource::Analytic)
}

/// Corrector without the switching correction.
pub fn step_reduced(
    model: &Model,
    ctx: &StepContext,
    x_prev: &[f64],
    x_pred: &[f64],
    noise: &NoisePath,
) -> Result<Vec<f64>> {
    step_corrector(model, ctx, x_prev, x_pred, noise, SwitchCorrection::Omitted, JacobianSource::Analytic)
}

pub fn step_euler(model: &Model, ctx: &StepContext, x_prev: &[f64], noise: &NoisePath) -> Result<Vec<f64>> {
    let idx = StepIndices::resolve(ctx, noise, None)?;
    let mut out = vec![0.0; model.dim_x()];
    Stepper::new(model).euler(ctx, &idx, noise, x_prev, &mut out);
    Ok(out)
}

/// Runs `kind` over every step of `grid`.
///
/// Randomized kinds read `u_j` and the evaluation times from `vars`, which
/// must belong to the same level. Errors carry the failing step index.
pub fn integrate(
    kind: SchemeKind,
    model: &Model,
    grid: &LevelGrid,
    chain: &ChainPath,
    noise: &NoisePath,
    vars: Option<&RandomizationVariables>,
) -> Result<Trajectory> {
    if noise.dim() != model.dim_w() {
        return Err(Error::InvalidArgument(format!(
            "noise has {} coordinates, model needs {}",
            noise.dim(),
            model.dim_w()
        )));
    }
    if grid.horizon() != chain.horizon() {
        return Err(Error::InvalidArgument("grid and chain horizons differ".into()));
    }
    let vars = if kind.is_randomized() {
        let v = vars.ok_or_else(|| {
            Error::InvalidArgument(format!("{kind} needs randomization variables"))
        })?;
        if v.level() != grid.level() || v.len() != grid.n_steps() {
            return Err(Error::InvalidArgument(format!(
                "randomization variables are for level {} ({} steps), grid is level {} ({} steps)",
                v.level(),
                v.len(),
                grid.level(),
                grid.n_steps()
            )));
        }
        Some(v)
    } else {
        None
    };
    let switching = kind.switch_correction();
    let jacobian = kind.jacobian_source();
    if !kind.is_euler() {
        check_supported(model, jacobian)?;
    }

    let d = model.dim_x();
    let points = grid.points();
    let mut values = Vec::with_capacity(points.len() * d);
    values.extend_from_slice(model.x0());
    let mut stepper = Stepper::new(model);
    let mut x = model.x0().to_vec();
    let mut pred = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut prev_idx = None;

    for j in 1..points.len() {
        let (t_prev, t_next) = (points[j - 1], points[j]);
        let run = |stepper: &mut Stepper, pred: &mut [f64], next: &mut [f64]| -> Result<usize> {
            let (u, t_eval) = match vars {
                Some(v) => (v.u()[j - 1], Some(v.eval_times()[j - 1])),
                None => (0.0, Some(t_prev)),
            };
            let ctx = StepContext::from_chain(chain, j, t_prev, t_next, u, t_eval)?;
            let idx = StepIndices::resolve(&ctx, noise, prev_idx)?;
            if kind.is_euler() {
                stepper.euler(&ctx, &idx, noise, &x, next);
            } else {
                let idx = if switching == SwitchCorrection::FromFirstSwitch {
                    idx.with_tau1(&ctx, noise)?
                } else {
                    idx
                };
                stepper.predictor(&ctx, &idx, noise, &x, pred);
                stepper.corrector(&ctx, &idx, noise, &x, pred, switching, jacobian, next)?;
            }
            Ok(idx.next)
        };
        let reached = run(&mut stepper, &mut pred, &mut next).map_err(|e| e.at_step(j))?;
        prev_idx = Some(reached);
        std::mem::swap(&mut x, &mut next);
        values.extend_from_slice(&x);
    }

    Ok(Trajectory {
        level: grid.level(),
        dim: d,
        values,
    })
}
