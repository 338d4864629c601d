//! Parameter constraints of the double-well example, evaluated in log space.
//!
//! The coercivity constraint carries a factor `2^{q-1}` and the normal moment
//! `m_q = (q-1)!!`; for `q` in the hundreds these leave the range of `f64`
//! long before the comparison is decided, so every left-hand side is summed
//! with log-sum-exp and reported as `log10` when it does not fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SdeError};
use crate::model::{
    double_well_model, CoefficientSet, DoubleWellParams, EnvState, MarkLaw, SampleBox,
};

const LN_10: f64 = std::f64::consts::LN_10;

/// `ln E|Z|^p` for a standard normal `Z` and even `p ≥ 2`, i.e. `ln (p-1)!!`.
pub fn normal_moment(p: u32) -> Result<f64> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(SdeError::InvalidParameter(format!(
            "closed-form normal moment needs an even order ≥ 2, got {p}"
        )));
    }
    let k = f64::from(p / 2);
    Ok(libm::lgamma(2.0 * k + 1.0) - k * std::f64::consts::LN_2 - libm::lgamma(k + 1.0))
}

/// `ln E|Z|^p = ln Γ((p+1)/2) + (p/2)·ln 2 − ln √π` for any real `p > -1`.
pub fn normal_abs_moment(p: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    libm::lgamma((p + 1.0) / 2.0) + 0.5 * p * std::f64::consts::LN_2
        - 0.5 * std::f64::consts::PI.ln()
}

/// `ln Σ exp(terms)`; `-∞` entries contribute nothing.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn ln_pos(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        v.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

/// One evaluated inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub id: String,
    pub scale: Scale,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs` in `scale`.
    pub margin: f64,
    pub satisfied: bool,
    pub lhs_log10: f64,
    pub rhs_log10: f64,
}

impl ConstraintReport {
    /// Builds a report from the natural logs of the left-hand summands.
    fn from_log_terms(id: String, lhs_terms: &[f64], rhs: f64) -> Self {
        let ln_lhs = log_sum_exp(lhs_terms);
        let ln_rhs = ln_pos(rhs);
        let (lhs_log10, rhs_log10) = (ln_lhs / LN_10, ln_rhs / LN_10);
        let fits = |v: f64| v == f64::NEG_INFINITY || v.abs() < 300.0;
        let satisfied = ln_lhs <= ln_rhs;
        if fits(lhs_log10) && fits(rhs_log10) {
            // direct summation keeps full relative precision for small orders
            let lhs = crate::sum::compensated_sum(lhs_terms.iter().map(|t| t.exp()));
            Self {
                id,
                scale: Scale::Linear,
                lhs,
                rhs,
                margin: rhs - lhs,
                satisfied,
                lhs_log10,
                rhs_log10,
            }
        } else {
            Self {
                id,
                scale: Scale::Log10,
                lhs: lhs_log10,
                rhs: rhs_log10,
                margin: rhs_log10 - lhs_log10,
                satisfied,
                lhs_log10,
                rhs_log10,
            }
        }
    }
}

fn check_nonnegative(named: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in named {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(SdeError::InvalidParameter(format!(
                "{name} must be nonnegative, got {v}"
            )));
        }
    }
    Ok(())
}

/// Coercivity constraint
/// `σ̂²(q−1) + 2^{q−1}(q−1)(γ̂²m₂ + γ̂^q m_q) ≤ 2β̂`.
pub fn check_coercivity(
    q: u32,
    beta_hat: f64,
    sigma_hat: f64,
    gamma_hat: f64,
) -> Result<ConstraintReport> {
    if q < 4 || !q.is_multiple_of(2) {
        return Err(SdeError::InvalidParameter(format!(
            "q must be even and ≥ 4, got {q}"
        )));
    }
    check_nonnegative(&[
        ("beta_hat", beta_hat),
        ("sigma_hat", sigma_hat),
        ("gamma_hat", gamma_hat),
    ])?;
    let qf = f64::from(q);
    let ln_q1 = (qf - 1.0).ln();
    let ln_pow2 = (qf - 1.0) * std::f64::consts::LN_2;
    let ln_gamma = ln_pos(gamma_hat);
    let terms = [
        2.0 * ln_pos(sigma_hat) + ln_q1,
        ln_pow2 + ln_q1 + 2.0 * ln_gamma + normal_moment(2)?,
        ln_pow2 + ln_q1 + qf * ln_gamma + normal_moment(q)?,
    ];
    Ok(ConstraintReport::from_log_terms(
        format!("coercivity q={q}"),
        &terms,
        2.0 * beta_hat,
    ))
}

/// Monotonicity constraint
/// `2(p₀−1)λσ̂² + (p₀−1)(2^{p₀−4}+½)((9/4)λγ̂²m₂ + (3/2)^{p₀}λ^{p₀−1}γ̂^{p₀}m_{p₀}) ≤ 3β̂`.
pub fn check_monotonicity(
    p0: u32,
    lambda: f64,
    beta_hat: f64,
    sigma_hat: f64,
    gamma_hat: f64,
) -> Result<ConstraintReport> {
    if p0 < 2 || !p0.is_multiple_of(2) {
        return Err(SdeError::InvalidParameter(format!(
            "p0 must be even and ≥ 2, got {p0}"
        )));
    }
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(SdeError::InvalidParameter(format!(
            "lambda must exceed 1, got {lambda}"
        )));
    }
    check_nonnegative(&[
        ("beta_hat", beta_hat),
        ("sigma_hat", sigma_hat),
        ("gamma_hat", gamma_hat),
    ])?;
    let p = f64::from(p0);
    let ln_lambda = lambda.ln();
    let ln_gamma = ln_pos(gamma_hat);
    let ln_prefactor = (p - 1.0).ln() + ((p - 4.0).exp2() + 0.5).ln();
    let terms = [
        (2.0 * (p - 1.0)).ln() + ln_lambda + 2.0 * ln_pos(sigma_hat),
        ln_prefactor + (2.25f64).ln() + ln_lambda + 2.0 * ln_gamma + normal_moment(2)?,
        ln_prefactor
            + p * (1.5f64).ln()
            + (p - 1.0) * ln_lambda
            + p * ln_gamma
            + normal_moment(p0)?,
    ];
    Ok(ConstraintReport::from_log_terms(
        format!("monotonicity p0={p0}"),
        &terms,
        3.0 * beta_hat,
    ))
}

/// `2(x−y)·(μ(s,x)−μ(s,y)) + |σ(t,x)−σ(t,y)|² + λ·E_Z|γ(t,x,Z)−γ(t,y,Z)|²`
/// with the mark expectation taken by quadrature.
pub fn monotonicity_quantity(
    coeffs: &CoefficientSet,
    marks: &MarkLaw,
    intensity: f64,
    (s, t): (f64, f64),
    x: &[f64],
    y: &[f64],
) -> f64 {
    let env = EnvState::default();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let diff = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(u, v)| u - v).collect::<Vec<_>>();
    let dx = diff(x.to_vec(), y.to_vec());
    let dmu = diff(coeffs.drift(s, x, &env), coeffs.drift(s, y, &env));
    let dsigma = diff(coeffs.diffusion(t, x, &env), coeffs.diffusion(t, y, &env));
    let jump = if intensity > 0.0 {
        intensity
            * marks.expectation(|z| {
                let d = diff(coeffs.jump(t, x, z, &env), coeffs.jump(t, y, z, &env));
                dot(&d, &d)
            })
    } else {
        0.0
    };
    2.0 * dot(&dx, &dmu) + dot(&dsigma, &dsigma) + jump
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub samples: usize,
    /// Smallest `C` with quantity `≤ C|x−y|²` on the samples.
    pub fitted_constant: f64,
    /// Samples where `−β̂(x−y)(x³−y³)` came out positive.
    pub cubic_sign_violations: usize,
    /// `(s, t, x, y)` attaining the fitted constant.
    pub worst: Option<(f64, f64, f64, f64)>,
}

/// Samples `(s, t, x, y)` and fits the one-sided Lipschitz constant of the
/// double-well coefficients with standard normal marks at `intensity`.
pub fn check_double_well_monotonicity_empirical(
    params: DoubleWellParams,
    intensity: f64,
    sample_box: SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let coeffs = double_well_model(params)?;
    let marks = MarkLaw::StandardNormal { dim: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MonotonicityReport {
        samples: n_samples,
        fitted_constant: f64::NEG_INFINITY,
        cubic_sign_violations: 0,
        worst: None,
    };
    let r = sample_box.x_radius;
    for _ in 0..n_samples {
        let s = rng.random_range(sample_box.t_min..=sample_box.t_max);
        let t = rng.random_range(sample_box.t_min..=sample_box.t_max);
        let x: f64 = rng.random_range(-r..=r);
        let y: f64 = rng.random_range(-r..=r);
        if x == y {
            continue;
        }
        if -params.beta_hat * (x - y) * (x.powi(3) - y.powi(3)) > 0.0 {
            report.cubic_sign_violations += 1;
        }
        let q = monotonicity_quantity(&coeffs, &marks, intensity, (s, t), &[x], &[y]);
        let c = q / ((x - y) * (x - y));
        if c > report.fitted_constant {
            report.fitted_constant = c;
            report.worst = Some((s, t, x, y));
        }
    }
    Ok(report)
}
