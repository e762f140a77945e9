//! Regime-switching SDE coefficients and the built-in example models.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::GeneratorMatrix;
use crate::error::{Error, Result};

const COMMUTATIVITY_PROBES: usize = 100;
const COMMUTATIVITY_TOL: f64 = 1e-9;

/// Coefficient functions `b(t, x, i)`, `σ_l(t, x, i)` and `D_x σ_l(t, x, i)`
/// of `dX = b dt + Σ_l σ_l dB_l` with regime `i`.
///
/// Vectors are `dim_x` long; Jacobians are `dim_x × dim_x`, row-major.
pub trait Coefficients: Send + Sync {
    fn dim_x(&self) -> usize;

    fn dim_w(&self) -> usize;

    /// Number of regimes the coefficients are defined for, if restricted.
    fn n_states(&self) -> Option<usize> {
        None
    }

    fn drift(&self, t: f64, x: &[f64], state: usize, out: &mut [f64]);

    /// Column `col` of the diffusion matrix.
    fn diffusion(&self, t: f64, x: &[f64], state: usize, col: usize, out: &mut [f64]);

    /// Jacobian of diffusion column `col`. Returns `false` when the model
    /// has no analytic Jacobian (derivative-free use only).
    fn diffusion_jacobian(
        &self,
        _t: f64,
        _x: &[f64],
        _state: usize,
        _col: usize,
        _out: &mut [f64],
    ) -> bool {
        false
    }
}

/// A complete regime-switching SDE: coefficients, chain generator and
/// initial data on `[0, horizon]`.
#[derive(Clone)]
pub struct Model {
    coeffs: Arc<dyn Coefficients>,
    x0: Vec<f64>,
    i0: usize,
    horizon: f64,
    generator: GeneratorMatrix,
    commutative: bool,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("dim_x", &self.dim_x())
            .field("dim_w", &self.dim_w())
            .field("x0", &self.x0)
            .field("i0", &self.i0)
            .field("horizon", &self.horizon)
            .field("generator", &self.generator)
            .field("commutative", &self.commutative)
            .finish()
    }
}

impl Model {
    /// Assembles and validates a model.
    ///
    /// Scalar noise is always commutative. For `dim_w > 1`, claiming
    /// `commutative` is checked at random probe points and rejected if
    /// `D_x σ_a σ_b = D_x σ_b σ_a` fails anywhere.
    pub fn new(
        coeffs: Arc<dyn Coefficients>,
        x0: Vec<f64>,
        i0: usize,
        horizon: f64,
        generator: GeneratorMatrix,
        commutative: bool,
    ) -> Result<Self> {
        if coeffs.dim_x() == 0 || coeffs.dim_w() == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if x0.len() != coeffs.dim_x() {
            return Err(Error::InvalidArgument(format!(
                "initial value has {} components, model has {}",
                x0.len(),
                coeffs.dim_x()
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if i0 >= generator.n_states() {
            return Err(Error::InvalidArgument(format!(
                "initial state {i0} outside 0..{}",
                generator.n_states()
            )));
        }
        if let Some(n) = coeffs.n_states() {
            if n != generator.n_states() {
                return Err(Error::InvalidArgument(format!(
                    "coefficients define {n} regimes but the generator has {}",
                    generator.n_states()
                )));
            }
        }
        let model = Self {
            commutative: commutative || coeffs.dim_w() == 1,
            coeffs,
            x0,
            i0,
            horizon,
            generator,
        };
        if model.dim_w() > 1 && model.commutative {
            model.check_commutative()?;
        }
        Ok(model)
    }

    fn check_commutative(&self) -> Result<()> {
        let d = self.dim_x();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut jac = vec![0.0; d * d];
        let mut col = vec![0.0; d];
        let mut lhs = vec![0.0; d];
        let mut rhs = vec![0.0; d];
        for _ in 0..COMMUTATIVITY_PROBES {
            let t = rng.gen::<f64>() * self.horizon;
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let state = rng.gen_range(0..self.n_states());
            for a in 0..self.dim_w() {
                for b in (a + 1)..self.dim_w() {
                    for (out, (jc, sc)) in [(&mut lhs, (a, b)), (&mut rhs, (b, a))] {
                        if !self.coeffs.diffusion_jacobian(t, &x, state, jc, &mut jac) {
                            return Err(Error::Unsupported(
                                "commutativity needs an analytic diffusion Jacobian".into(),
                            ));
                        }
                        self.coeffs.diffusion(t, &x, state, sc, &mut col);
                        mat_vec(&jac, &col, out);
                    }
                    let gap = lhs
                        .iter()
                        .zip(&rhs)
                        .map(|(l, r)| (l - r).abs())
                        .fold(0.0, f64::max);
                    if gap > COMMUTATIVITY_TOL {
                        return Err(Error::InvalidArgument(format!(
                            "diffusion columns {a} and {b} do not commute at t={t}, state={state} (gap {gap:e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coeffs.as_ref()
    }

    pub fn dim_x(&self) -> usize {
        self.coeffs.dim_x()
    }

    pub fn dim_w(&self) -> usize {
        self.coeffs.dim_w()
    }

    pub fn n_states(&self) -> usize {
        self.generator.n_states()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn i0(&self) -> usize {
        self.i0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn is_commutative(&self) -> bool {
        self.commutative
    }

    pub fn drift(&self, t: f64, x: &[f64], state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x()];
        self.coeffs.drift(t, x, state, &mut out);
        out
    }

    pub fn diffusion(&self, t: f64, x: &[f64], state: usize, col: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x()];
        self.coeffs.diffusion(t, x, state, col, &mut out);
        out
    }

    pub fn diffusion_jacobian(&self, t: f64, x: &[f64], state: usize, col: usize) -> Option<Vec<f64>> {
        let d = self.dim_x();
        let mut out = vec![0.0; d * d];
        self.coeffs
            .diffusion_jacobian(t, x, state, col, &mut out)
            .then_some(out)
    }
}

pub(crate) fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Forward difference `(σ(t, x + step, i) - σ(t, x, i)) / step` standing in
/// for `σ'` in derivative-free schemes. Scalar models only.
pub fn derivative_free_jac(
    model: &Model,
    t: f64,
    x: f64,
    state: usize,
    step: f64,
) -> Result<f64> {
    if model.dim_x() != 1 || model.dim_w() != 1 {
        return Err(Error::Unsupported(
            "derivative-free Jacobian is only defined for scalar models".into(),
        ));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("difference step must be positive, got {step}")));
    }
    Ok(forward_difference(model.coefficients(), t, x, state, step))
}

pub(crate) fn forward_difference(
    coeffs: &dyn Coefficients,
    t: f64,
    x: f64,
    state: usize,
    step: f64,
) -> f64 {
    let mut hi = [0.0];
    let mut lo = [0.0];
    coeffs.diffusion(t, &[x + step], state, 0, &mut hi);
    coeffs.diffusion(t, &[x], state, 0, &mut lo);
    (hi[0] - lo[0]) / step
}

/// Scalar regime-switching families with regime-wise constant parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarFamily {
    /// `b = |x|, σ = x` in regime 0 and `b = sin|x|, σ = sin x` in regime 1.
    Ex1,
    /// `dX = λ(i)(μ(i) - X) dt + σ(i) X dB`.
    MeanReverting {
        lambda: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// `dX = μ(i) X dt + ν(i) X dB`.
    Gbm { mu: Vec<f64>, nu: Vec<f64> },
}

impl ScalarFamily {
    fn regimes(&self) -> usize {
        match self {
            ScalarFamily::Ex1 => 2,
            ScalarFamily::MeanReverting { lambda, .. } => lambda.len(),
            ScalarFamily::Gbm { mu, .. } => mu.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ScalarFamily::Ex1 => true,
            ScalarFamily::MeanReverting { lambda, mu, sigma } => {
                !lambda.is_empty() && lambda.len() == mu.len() && mu.len() == sigma.len()
            }
            ScalarFamily::Gbm { mu, nu } => !mu.is_empty() && mu.len() == nu.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "regime parameter lists must be non-empty and of equal length".into(),
            ))
        }
    }

    /// Wraps the family into a validated model.
    pub fn into_model(
        self,
        x0: f64,
        i0: usize,
        horizon: f64,
        generator: GeneratorMatrix,
    ) -> Result<Model> {
        self.validate()?;
        Model::new(Arc::new(self), vec![x0], i0, horizon, generator, true)
    }

    fn sigma(&self, x: f64, state: usize) -> f64 {
        match self {
            ScalarFamily::Ex1 => {
                if state == 0 {
                    x
                } else {
                    x.sin()
                }
            }
            ScalarFamily::MeanReverting { sigma, .. } => sigma[state] * x,
            ScalarFamily::Gbm { nu, .. } => nu[state] * x,
        }
    }
}

impl Coefficients for ScalarFamily {
    fn dim_x(&self) -> usize {
        1
    }

    fn dim_w(&self) -> usize {
        1
    }

    fn n_states(&self) -> Option<usize> {
        Some(self.regimes())
    }

    fn drift(&self, _t: f64, x: &[f64], state: usize, out: &mut [f64]) {
        let x = x[0];
        out[0] = match self {
            ScalarFamily::Ex1 => {
                if state == 0 {
                    x.abs()
                } else {
                    x.abs().sin()
                }
            }
            ScalarFamily::MeanReverting { lambda, mu, .. } => lambda[state] * (mu[state] - x),
            ScalarFamily::Gbm { mu, .. } => mu[state] * x,
        };
    }

    fn diffusion(&self, _t: f64, x: &[f64], state: usize, _col: usize, out: &mut [f64]) {
        out[0] = self.sigma(x[0], state);
    }

    fn diffusion_jacobian(&self, _t: f64, x: &[f64], state: usize, _col: usize, out: &mut [f64]) -> bool {
        out[0] = match self {
            ScalarFamily::Ex1 => {
                if state == 0 {
                    1.0
                } else {
                    x[0].cos()
                }
            }
            ScalarFamily::MeanReverting { sigma, .. } => sigma[state],
            ScalarFamily::Gbm { nu, .. } => nu[state],
        };
        true
    }
}

/// The built-in example models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltinModel {
    Ex1,
    MeanReverting,
    Gbm,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 3] = [BuiltinModel::Ex1, BuiltinModel::MeanReverting, BuiltinModel::Gbm];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinModel::Ex1 => "ex1",
            BuiltinModel::MeanReverting => "mean-reverting",
            BuiltinModel::Gbm => "gbm",
        }
    }

    /// Default parameters of the family.
    pub fn family(self) -> ScalarFamily {
        match self {
            BuiltinModel::Ex1 => ScalarFamily::Ex1,
            BuiltinModel::MeanReverting => ScalarFamily::MeanReverting {
                lambda: vec![0.5, 2.0],
                mu: vec![2.0, 1.0],
                sigma: vec![1.0, 0.5],
            },
            BuiltinModel::Gbm => ScalarFamily::Gbm {
                mu: vec![0.5, 1.0],
                nu: vec![1.2, 0.6],
            },
        }
    }
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model '{s}' (expected ex1, mean-reverting or gbm)")))
    }
}

/// All built-ins share `Q = [[-0.5, 0.5], [0.5, -0.5]]`, `X(0) = 1`,
/// `r(0) = 1` and `T = 1`.
pub fn make_builtin(which: BuiltinModel) -> Model {
    let generator = GeneratorMatrix::symmetric_two_state(0.5).expect("valid generator");
    which
        .family()
        .into_model(1.0, 1, 1.0, generator)
        .expect("built-in parameters are valid")
}
