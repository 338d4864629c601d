//! SDE problem instances: coefficient triples, jump laws and presets.

use std::any::Any;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};

/// Side information a coefficient may read besides `(t, x)`.
///
/// Random coefficients, the regime of a switching chain and the delayed
/// state of a delay equation all enter through this one value, so a single
/// evaluation signature covers plain and delay/switching equations.
#[derive(Clone, Copy, Default)]
pub struct EnvState<'a> {
    /// Current regime in `1..=m0`.
    pub regime: Option<usize>,
    /// Delayed state `x_{t-θ}`.
    pub delayed: Option<&'a [f64]>,
    pub extension: Option<&'a (dyn Any + Send + Sync)>,
}

impl<'a> EnvState<'a> {
    pub fn with_regime(mut self, regime: usize) -> Self {
        self.regime = Some(regime);
        self
    }

    pub fn with_delayed(mut self, delayed: &'a [f64]) -> Self {
        self.delayed = Some(delayed);
        self
    }
}

impl fmt::Debug for EnvState<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvState")
            .field("regime", &self.regime)
            .field("delayed", &self.delayed)
            .field("extension", &self.extension.map(|_| ".."))
            .finish()
    }
}

/// `(t, x, env, out)`: writes a state vector (or a row-major `d×m` matrix) into `out`.
/// Scalar factor of the state alone.
pub(crate) type Denominator = dyn Fn(&[f64]) -> f64 + Send + Sync;

pub type StateFn = dyn for<'a> Fn(f64, &[f64], &EnvState<'a>, &mut [f64]) + Send + Sync;
/// `(t, x, z, env, out)`: jump coefficient evaluated at mark `z`.
pub type MarkFn = dyn for<'a> Fn(f64, &[f64], &[f64], &EnvState<'a>, &mut [f64]) + Send + Sync;

/// Drift, diffusion and jump coefficients together with their growth metadata.
///
/// All evaluation goes through shared `Fn` objects, so a set is cheap to clone
/// and safe to evaluate from many threads.
#[derive(Clone)]
pub struct CoefficientSet {
    dim_state: usize,
    dim_noise: usize,
    dim_mark: usize,
    drift: Arc<StateFn>,
    diffusion: Arc<StateFn>,
    jump: Arc<MarkFn>,
    compensator: Arc<StateFn>,
    zeta: f64,
    horizon: f64,
    zero_mean_jump: bool,
    admissible_radius: f64,
}

fn zero_state_fn() -> Arc<StateFn> {
    Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0))
}

impl CoefficientSet {
    /// Coefficient set with `μ = σ = γ = 0`, `ζ = 0` and one mark coordinate.
    pub fn zero(dim_state: usize, dim_noise: usize, horizon: f64) -> Result<Self> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(SdeError::InvalidParameter(
                "state and noise dimensions must be positive".into(),
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SdeError::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self {
            dim_state,
            dim_noise,
            dim_mark: 1,
            drift: zero_state_fn(),
            diffusion: zero_state_fn(),
            jump: Arc::new(|_, _, _, _, out: &mut [f64]| out.fill(0.0)),
            compensator: zero_state_fn(),
            zeta: 0.0,
            horizon,
            zero_mean_jump: true,
            admissible_radius: 10.0,
        })
    }

    pub fn with_drift<F>(mut self, f: F) -> Self
    where
        F: for<'a> Fn(f64, &[f64], &EnvState<'a>, &mut [f64]) + Send + Sync + 'static,
    {
        self.drift = Arc::new(f);
        self
    }

    /// `f` writes the row-major `d×m` diffusion matrix.
    pub fn with_diffusion<F>(mut self, f: F) -> Self
    where
        F: for<'a> Fn(f64, &[f64], &EnvState<'a>, &mut [f64]) + Send + Sync + 'static,
    {
        self.diffusion = Arc::new(f);
        self
    }

    /// Jump coefficient with an explicit compensator mean `E_Z[γ(t, x, Z)]`.
    pub fn with_jump<F, G>(mut self, dim_mark: usize, jump: F, compensator_mean: G) -> Self
    where
        F: for<'a> Fn(f64, &[f64], &[f64], &EnvState<'a>, &mut [f64]) + Send + Sync + 'static,
        G: for<'a> Fn(f64, &[f64], &EnvState<'a>, &mut [f64]) + Send + Sync + 'static,
    {
        self.dim_mark = dim_mark.max(1);
        self.jump = Arc::new(jump);
        self.compensator = Arc::new(compensator_mean);
        self.zero_mean_jump = false;
        self
    }

    /// Jump coefficient whose mark expectation vanishes identically.
    pub fn with_zero_mean_jump<F>(mut self, dim_mark: usize, jump: F) -> Self
    where
        F: for<'a> Fn(f64, &[f64], &[f64], &EnvState<'a>, &mut [f64]) + Send + Sync + 'static,
    {
        self.dim_mark = dim_mark.max(1);
        self.jump = Arc::new(jump);
        self.compensator = zero_state_fn();
        self.zero_mean_jump = true;
        self
    }

    /// # Panics
    /// If `zeta` is negative or not finite.
    pub fn with_zeta(mut self, zeta: f64) -> Self {
        assert!(
            zeta >= 0.0 && zeta.is_finite(),
            "zeta must be nonnegative, got {zeta}"
        );
        self.zeta = zeta;
        self
    }

    pub fn with_admissible_radius(mut self, radius: f64) -> Self {
        self.admissible_radius = radius;
        self
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn dim_mark(&self) -> usize {
        self.dim_mark
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn zero_mean_jump(&self) -> bool {
        self.zero_mean_jump
    }

    pub fn admissible_radius(&self) -> f64 {
        self.admissible_radius
    }

    #[inline]
    pub fn drift_into(&self, t: f64, x: &[f64], env: &EnvState<'_>, out: &mut [f64]) {
        (self.drift)(t, x, env, out)
    }

    #[inline]
    pub fn diffusion_into(&self, t: f64, x: &[f64], env: &EnvState<'_>, out: &mut [f64]) {
        (self.diffusion)(t, x, env, out)
    }

    #[inline]
    pub fn jump_into(&self, t: f64, x: &[f64], z: &[f64], env: &EnvState<'_>, out: &mut [f64]) {
        (self.jump)(t, x, z, env, out)
    }

    #[inline]
    pub fn compensator_into(&self, t: f64, x: &[f64], env: &EnvState<'_>, out: &mut [f64]) {
        (self.compensator)(t, x, env, out)
    }

    pub fn drift(&self, t: f64, x: &[f64], env: &EnvState<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state];
        self.drift_into(t, x, env, &mut out);
        out
    }

    /// Row-major `d×m` matrix.
    pub fn diffusion(&self, t: f64, x: &[f64], env: &EnvState<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state * self.dim_noise];
        self.diffusion_into(t, x, env, &mut out);
        out
    }

    pub fn jump(&self, t: f64, x: &[f64], z: &[f64], env: &EnvState<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state];
        self.jump_into(t, x, z, env, &mut out);
        out
    }

    pub fn jump_compensator_mean(&self, t: f64, x: &[f64], env: &EnvState<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state];
        self.compensator_into(t, x, env, &mut out);
        out
    }

    /// Same coefficients, every output divided by `denominator(x)`.
    pub(crate) fn divided_by(&self, denominator: Arc<Denominator>) -> Self {
        let scale = |d: &Arc<Denominator>, x: &[f64], out: &mut [f64]| {
            let r = d(x);
            if r != 1.0 {
                out.iter_mut().for_each(|v| *v /= r);
            }
        };
        let (f, d) = (self.drift.clone(), denominator.clone());
        let drift = move |t: f64, x: &[f64], env: &EnvState<'_>, out: &mut [f64]| {
            f(t, x, env, out);
            scale(&d, x, out);
        };
        let (f, d) = (self.diffusion.clone(), denominator.clone());
        let diffusion = move |t: f64, x: &[f64], env: &EnvState<'_>, out: &mut [f64]| {
            f(t, x, env, out);
            scale(&d, x, out);
        };
        let (f, d) = (self.jump.clone(), denominator.clone());
        let jump = move |t: f64, x: &[f64], z: &[f64], env: &EnvState<'_>, out: &mut [f64]| {
            f(t, x, z, env, out);
            scale(&d, x, out);
        };
        let (f, d) = (self.compensator.clone(), denominator);
        let compensator = move |t: f64, x: &[f64], env: &EnvState<'_>, out: &mut [f64]| {
            f(t, x, env, out);
            scale(&d, x, out);
        };
        Self {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            jump: Arc::new(jump),
            compensator: Arc::new(compensator),
            ..self.clone()
        }
    }
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("dim_mark", &self.dim_mark)
            .field("zeta", &self.zeta)
            .field("horizon", &self.horizon)
            .field("zero_mean_jump", &self.zero_mean_jump)
            .finish_non_exhaustive()
    }
}

/// Distribution of jump marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkLaw {
    /// I.i.d. standard normal coordinates.
    StandardNormal { dim: usize },
    /// Every jump carries the same mark.
    Fixed(Vec<f64>),
}

impl MarkLaw {
    pub fn dim(&self) -> usize {
        match self {
            MarkLaw::StandardNormal { dim } => *dim,
            MarkLaw::Fixed(z) => z.len(),
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            MarkLaw::StandardNormal { .. } => {
                out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            }
            MarkLaw::Fixed(z) => out.copy_from_slice(z),
        }
    }

    /// Absolute moment `E|Z_1|^p` of one mark coordinate.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match self {
            MarkLaw::StandardNormal { .. } => crate::verify::normal_abs_moment(p).exp(),
            MarkLaw::Fixed(z) => z.first().map_or(0.0, |v| v.abs().powf(p)),
        }
    }

    /// Quadrature nodes and weights for `E[f(Z)]`.
    ///
    /// Normal marks use a 24-point Gauss–Hermite rule per coordinate (tensor
    /// product), exact for polynomials up to degree 47.
    pub fn quadrature(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            MarkLaw::Fixed(z) => vec![(z.clone(), 1.0)],
            MarkLaw::StandardNormal { dim } => {
                let (nodes, weights) = gauss_hermite(24);
                let mut rule: Vec<(Vec<f64>, f64)> = vec![(Vec::with_capacity(*dim), 1.0)];
                for _ in 0..*dim {
                    rule = rule
                        .into_iter()
                        .flat_map(|(z, w)| {
                            nodes.iter().zip(&weights).map(move |(&x, &wx)| {
                                let mut z = z.clone();
                                z.push(x);
                                (z, w * wx)
                            })
                        })
                        .collect();
                }
                rule
            }
        }
    }

    pub fn expectation(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        crate::sum::compensated_sum(self.quadrature().iter().map(|(z, w)| w * f(z)))
    }
}

/// Gauss–Hermite rule for the standard normal weight `e^{-z²/2}/√(2π)`.
pub(crate) fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on orthonormal Hermite polynomials for weight e^{-x²},
    // then rescaled to the probabilists' weight.
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().map(|v| v / sqrt_pi).collect();
    (nodes, weights)
}

/// Finite-intensity compound Poisson description of the jump measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpModel {
    /// Total intensity `λ = ρ(Z)`.
    pub intensity: f64,
    pub marks: MarkLaw,
}

impl JumpModel {
    pub fn new(intensity: f64, marks: MarkLaw) -> Result<Self> {
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(SdeError::InvalidParameter(format!(
                "jump intensity must be finite and nonnegative, got {intensity}"
            )));
        }
        Ok(Self { intensity, marks })
    }

    pub fn none() -> Self {
        Self {
            intensity: 0.0,
            marks: MarkLaw::StandardNormal { dim: 1 },
        }
    }

    /// `m_p = ∫|z|^p ρ(dz)/λ`, the mark moment under the normalized law.
    pub fn mark_moment(&self, p: f64) -> f64 {
        self.marks.abs_moment(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    Fixed(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Fixed(x) => x.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InitialLaw::Fixed(x) => x.clone(),
            InitialLaw::Gaussian { mean, std } => mean
                .iter()
                .map(|m| m + std * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// A complete problem: coefficients, jump law and initial law.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub coeffs: CoefficientSet,
    pub jumps: JumpModel,
    pub initial: InitialLaw,
}

impl Model {
    pub fn new(
        name: impl Into<String>,
        coeffs: CoefficientSet,
        jumps: JumpModel,
        initial: InitialLaw,
    ) -> Result<Self> {
        if initial.dim() != coeffs.dim_state() {
            return Err(SdeError::InvalidParameter(format!(
                "initial value has dimension {}, state has {}",
                initial.dim(),
                coeffs.dim_state()
            )));
        }
        if jumps.intensity > 0.0 && jumps.marks.dim() != coeffs.dim_mark() {
            return Err(SdeError::InvalidParameter(format!(
                "mark law has dimension {}, jump coefficient expects {}",
                jumps.marks.dim(),
                coeffs.dim_mark()
            )));
        }
        Ok(Self {
            name: name.into(),
            coeffs,
            jumps,
            initial,
        })
    }
}

/// Sawtooth modulation `2(s - ⌊s + 1/2⌋)`, range `(-1, 1]`.
#[inline]
pub fn sawtooth(s: f64) -> f64 {
    2.0 * (s - (s + 0.5).floor())
}

/// Parameters of the Lévy-driven double-well equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellParams {
    pub beta_hat: f64,
    pub sigma_hat: f64,
    pub gamma_hat: f64,
    /// Exponent `p` in the jump factor `(1 + x²)^{1/p}`.
    pub p_exp: f64,
}

impl Default for DoubleWellParams {
    fn default() -> Self {
        Self {
            beta_hat: 0.5,
            sigma_hat: 0.001,
            gamma_hat: 0.02,
            p_exp: 648.0,
        }
    }
}

impl DoubleWellParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("beta_hat", self.beta_hat),
            ("sigma_hat", self.sigma_hat),
            ("gamma_hat", self.gamma_hat),
            ("p_exp", self.p_exp),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SdeError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.p_exp < 4.0 {
            return Err(SdeError::InvalidParameter(format!(
                "p_exp must be at least 4, got {}",
                self.p_exp
            )));
        }
        Ok(())
    }
}

/// Double-well coefficients on `[0, 1]`, `ζ = 2`:
///
/// ```text
/// μ(s, x)    = β(s)x − β̂x³
/// σ(s, x)    = σ̂√s(1 − x²)
/// γ(s, x, z) = γ̂√s·x(1 + x²)^{1/p}·z
/// ```
///
/// The jump coefficient is linear in a standard normal mark, so its
/// compensator vanishes.
pub fn double_well_model(params: DoubleWellParams) -> Result<CoefficientSet> {
    params.validate()?;
    let DoubleWellParams {
        beta_hat,
        sigma_hat,
        gamma_hat,
        p_exp,
    } = params;
    let inv_p = p_exp.recip();
    Ok(CoefficientSet::zero(1, 1, 1.0)?
        .with_zeta(2.0)
        .with_drift(move |s, x, _, out| {
            let x = x[0];
            out[0] = sawtooth(s) * x - beta_hat * x * x * x;
        })
        .with_diffusion(move |s, x, _, out| {
            let x = x[0];
            out[0] = sigma_hat * s.max(0.0).sqrt() * (1.0 - x * x);
        })
        .with_zero_mean_jump(1, move |s, x, z, _, out| {
            let x = x[0];
            // (1 + x²)^{1/p} through log1p keeps precision for large p.
            let growth = (inv_p * (x * x).ln_1p()).exp();
            out[0] = gamma_hat * s.max(0.0).sqrt() * x * growth * z[0];
        }))
}

/// Double-well model with standard normal marks at intensity `intensity`,
/// started from the deterministic point `x0`.
pub fn double_well_preset(params: DoubleWellParams, intensity: f64, x0: f64) -> Result<Model> {
    Model::new(
        "double-well",
        double_well_model(params)?,
        JumpModel::new(intensity, MarkLaw::StandardNormal { dim: 1 })?,
        InitialLaw::Fixed(vec![x0]),
    )
}

/// Box `[t_min, t_max] × [-x_radius, x_radius]^d` for coefficient probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub t_min: f64,
    pub t_max: f64,
    pub x_radius: f64,
}

impl SampleBox {
    pub fn new(t_min: f64, t_max: f64, x_radius: f64) -> Result<Self> {
        if !(t_min < t_max && x_radius > 0.0 && t_max.is_finite() && x_radius.is_finite()) {
            return Err(SdeError::InvalidParameter(format!(
                "degenerate sample box t ∈ [{t_min}, {t_max}], |x| ≤ {x_radius}"
            )));
        }
        Ok(Self {
            t_min,
            t_max,
            x_radius,
        })
    }

    /// Whole horizon, `|x_i| ≤ admissible_radius`.
    pub fn for_coefficients(coeffs: &CoefficientSet) -> Self {
        Self {
            t_min: 0.0,
            t_max: coeffs.horizon(),
            x_radius: coeffs.admissible_radius(),
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) -> f64 {
        let t = rng.random_range(self.t_min..=self.t_max);
        x.iter_mut()
            .for_each(|v| *v = rng.random_range(-self.x_radius..=self.x_radius));
        t
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    if v.len() == 1 {
        v[0].abs()
    } else {
        v.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Empirical growth constants of a coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub samples: usize,
    /// Smallest `K` with `|μ| ≤ K(1 + |x|^{ζ+1})` on the samples.
    pub drift_constant: f64,
    /// Smallest `K` with `|σ| ≤ K(1 + |x|^{ζ/2+1})` on the samples.
    pub diffusion_constant: f64,
    pub worst_drift: Option<(f64, Vec<f64>)>,
    pub worst_diffusion: Option<(f64, Vec<f64>)>,
}

/// Fits the superlinear growth constants on random points of `sample_box`.
pub fn probe_growth(
    coeffs: &CoefficientSet,
    sample_box: SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    SampleBox::new(sample_box.t_min, sample_box.t_max, sample_box.x_radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = coeffs.dim_state();
    let zeta = coeffs.zeta();
    let env = EnvState::default();
    let mut x = vec![0.0; d];
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * coeffs.dim_noise()];
    let mut report = GrowthReport {
        samples: n_samples,
        drift_constant: 0.0,
        diffusion_constant: 0.0,
        worst_drift: None,
        worst_diffusion: None,
    };
    for _ in 0..n_samples {
        let t = sample_box.sample(&mut rng, &mut x);
        let r = norm(&x);
        coeffs.drift_into(t, &x, &env, &mut mu);
        coeffs.diffusion_into(t, &x, &env, &mut sigma);
        let k_mu = norm(&mu) / (1.0 + r.powf(zeta + 1.0));
        let k_sigma = norm(&sigma) / (1.0 + r.powf(zeta / 2.0 + 1.0));
        if k_mu > report.drift_constant {
            report.drift_constant = k_mu;
            report.worst_drift = Some((t, x.clone()));
        }
        if k_sigma > report.diffusion_constant {
            report.diffusion_constant = k_sigma;
            report.worst_diffusion = Some((t, x.clone()));
        }
    }
    Ok(report)
}
