//! Taming: every coefficient is divided by `D_n(x) = 1 + n^{-a}|x|^b`,
//! with `a = 1/2` and `b = 3ζ/2` by default.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::model::{norm, CoefficientSet, EnvState, MarkLaw, SampleBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TamingConfig {
    pub n: usize,
    pub zeta: f64,
    /// Exponent of `n` in the denominator.
    pub n_power: f64,
    /// Exponent of `|x|` in the denominator.
    pub x_power: f64,
}

impl TamingConfig {
    pub fn new(n: usize, zeta: f64) -> Result<Self> {
        Self::with_exponents(n, zeta, 0.5, 1.5 * zeta)
    }

    pub fn with_exponents(n: usize, zeta: f64, n_power: f64, x_power: f64) -> Result<Self> {
        if n == 0 {
            return Err(SdeError::InvalidParameter(
                "taming step count must be positive".into(),
            ));
        }
        if !(n_power > 0.0 && n_power.is_finite()) {
            return Err(SdeError::InvalidParameter(format!(
                "n_power must be positive, got {n_power}"
            )));
        }
        if !(x_power >= 0.0 && x_power.is_finite()) {
            return Err(SdeError::InvalidParameter(format!(
                "x_power must be nonnegative, got {x_power}"
            )));
        }
        Ok(Self {
            n,
            zeta,
            n_power,
            x_power,
        })
    }

    /// `n^{-n_power}`.
    pub fn n_factor(&self) -> f64 {
        (-self.n_power * (self.n as f64).ln()).exp()
    }

    /// `D_n(x)`; `|x|^b` is evaluated as `exp(b·ln|x|)` and taken as 0 at `x = 0`.
    #[inline]
    pub fn denominator(&self, x: &[f64]) -> f64 {
        denominator(self.n_factor(), self.x_power, x)
    }
}

#[inline]
fn denominator(n_factor: f64, x_power: f64, x: &[f64]) -> f64 {
    let r = norm(x);
    if r == 0.0 {
        1.0
    } else {
        1.0 + n_factor * (x_power * r.ln()).exp()
    }
}

/// Tamed copy of `coeffs`: drift, diffusion, jump and compensator mean all
/// divided by `D_n(x)`.
pub fn tame(coeffs: &CoefficientSet, cfg: TamingConfig) -> CoefficientSet {
    let n_factor = cfg.n_factor();
    let x_power = cfg.x_power;
    coeffs.divided_by(Arc::new(move |x: &[f64]| denominator(n_factor, x_power, x)))
}

/// Worst cases found by [`check_taming_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub samples: usize,
    /// Samples where a tamed magnitude exceeded the untamed one.
    pub magnitude_violations: usize,
    /// Largest `|tamed f| / |f|` over samples with `f ≠ 0`, per coefficient.
    pub max_drift_ratio: f64,
    pub max_diffusion_ratio: f64,
    /// Ratio of mark-integrated second moments `E|γ̂|² / E|γ|²`.
    pub max_jump_ratio: f64,
    /// Fitted `C` in `|μ̂| ≤ C n^{1/3}(1 + |x|)`.
    pub drift_constant: f64,
    /// Fitted `C` in `|σ̂| ≤ C n^{1/6}(1 + |x|)`.
    pub diffusion_constant: f64,
    /// Fitted `C` in `E|γ̂|² ≤ C n^{1/3}(1 + |x|²)`.
    pub jump_constant: f64,
}

/// Samples `(t, x)` in `sample_box` and checks the taming bounds.
pub fn check_taming_bounds(
    coeffs: &CoefficientSet,
    marks: &MarkLaw,
    cfg: TamingConfig,
    sample_box: SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<BoundReport> {
    SampleBox::new(sample_box.t_min, sample_box.t_max, sample_box.x_radius)?;
    let tamed = tame(coeffs, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = coeffs.dim_state();
    let env = EnvState::default();
    let quad = marks.quadrature();
    let nf = cfg.n as f64;
    let (n_third, n_sixth) = (nf.powf(1.0 / 3.0), nf.powf(1.0 / 6.0));

    let mut x = vec![0.0; d];
    let (mut f, mut g) = (
        vec![0.0; d * coeffs.dim_noise()],
        vec![0.0; d * coeffs.dim_noise()],
    );
    let mut report = BoundReport {
        samples: n_samples,
        magnitude_violations: 0,
        max_drift_ratio: 0.0,
        max_diffusion_ratio: 0.0,
        max_jump_ratio: 0.0,
        drift_constant: 0.0,
        diffusion_constant: 0.0,
        jump_constant: 0.0,
    };
    let ratio = |tamed: f64, raw: f64| if raw == 0.0 { None } else { Some(tamed / raw) };

    for _ in 0..n_samples {
        let t = sample_box.sample(&mut rng, &mut x);
        let r = norm(&x);
        let mut violated = false;

        coeffs.drift_into(t, &x, &env, &mut f[..d]);
        tamed.drift_into(t, &x, &env, &mut g[..d]);
        let (raw, tm) = (norm(&f[..d]), norm(&g[..d]));
        violated |= tm > raw;
        if let Some(q) = ratio(tm, raw) {
            report.max_drift_ratio = report.max_drift_ratio.max(q);
        }
        report.drift_constant = report.drift_constant.max(tm / (n_third * (1.0 + r)));

        coeffs.diffusion_into(t, &x, &env, &mut f);
        tamed.diffusion_into(t, &x, &env, &mut g);
        let (raw, tm) = (norm(&f), norm(&g));
        violated |= tm > raw;
        if let Some(q) = ratio(tm, raw) {
            report.max_diffusion_ratio = report.max_diffusion_ratio.max(q);
        }
        report.diffusion_constant = report.diffusion_constant.max(tm / (n_sixth * (1.0 + r)));

        let (mut raw2, mut tm2) = (0.0, 0.0);
        for (z, w) in &quad {
            coeffs.jump_into(t, &x, z, &env, &mut f[..d]);
            tamed.jump_into(t, &x, z, &env, &mut g[..d]);
            raw2 += w * norm(&f[..d]).powi(2);
            tm2 += w * norm(&g[..d]).powi(2);
        }
        violated |= tm2 > raw2;
        if let Some(q) = ratio(tm2, raw2) {
            report.max_jump_ratio = report.max_jump_ratio.max(q);
        }
        report.jump_constant = report.jump_constant.max(tm2 / (n_third * (1.0 + r * r)));

        if violated {
            report.magnitude_violations += 1;
        }
    }
    Ok(report)
}
