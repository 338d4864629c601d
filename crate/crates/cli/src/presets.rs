//! Named models the CLI can build from a `[model]` section.

use serde::{Deserialize, Serialize};
use tamed_sde::{
    double_well_preset, CoefficientSet, DoubleWellParams, InitialLaw, JumpModel, Model,
};

use crate::CliError;

pub const PRESETS: [&str; 7] = [
    "double-well",
    "zero",
    "linear",
    "ode-decay",
    "cubic-decay",
    "regime-drift",
    "delay-linear",
];

/// `[model]` section. Unset parameters take the preset's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: String,
    pub x0: Option<f64>,
    /// Jump intensity λ of the double-well preset.
    pub intensity: Option<f64>,
    pub beta_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub p_exp: Option<f64>,
    /// Drift and noise factors of `linear` and `delay-linear`.
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Constant drift per regime for `regime-drift`, regime 1 first.
    pub regime_drifts: Option<Vec<f64>>,
}

impl ModelSpec {
    pub fn double_well_params(&self) -> DoubleWellParams {
        let d = DoubleWellParams::default();
        DoubleWellParams {
            beta_hat: self.beta_hat.unwrap_or(d.beta_hat),
            sigma_hat: self.sigma_hat.unwrap_or(d.sigma_hat),
            gamma_hat: self.gamma_hat.unwrap_or(d.gamma_hat),
            p_exp: self.p_exp.unwrap_or(d.p_exp),
        }
    }

    pub fn intensity(&self) -> f64 {
        self.intensity.unwrap_or(1.0)
    }

    pub fn build(&self) -> Result<Model, CliError> {
        let fixed = |x0: f64| InitialLaw::Fixed(vec![self.x0.unwrap_or(x0)]);
        let one_d = || CoefficientSet::zero(1, 1, 1.0).map_err(CliError::from);
        let a = self.a.unwrap_or(1.0);
        let b = self.b.unwrap_or(0.0);
        let model = match self.preset.as_str() {
            "double-well" => double_well_preset(
                self.double_well_params(),
                self.intensity(),
                self.x0.unwrap_or(2.0),
            )?,
            "zero" => Model::new("zero", one_d()?, JumpModel::none(), fixed(1.0))?,
            "linear" => {
                let c = one_d()?
                    .with_drift(move |_, x, _, out| out[0] = a * x[0])
                    .with_diffusion(move |_, x, _, out| out[0] = b * x[0]);
                Model::new("linear", c, JumpModel::none(), fixed(1.0))?
            }
            "ode-decay" => {
                let c = one_d()?.with_drift(|_, x, _, out| out[0] = -x[0]);
                Model::new("ode-decay", c, JumpModel::none(), fixed(1.0))?
            }
            "cubic-decay" => {
                let c = one_d()?
                    .with_drift(|_, x, _, out| out[0] = -x[0].powi(3))
                    .with_zeta(2.0);
                Model::new("cubic-decay", c, JumpModel::none(), fixed(10.0))?
            }
            "regime-drift" => {
                let drifts = self
                    .regime_drifts
                    .clone()
                    .unwrap_or_else(|| vec![1.0, -1.0]);
                let c = one_d()?.with_drift(move |_, _, env, out| {
                    let r = env.regime.unwrap_or(1);
                    out[0] = drifts.get(r - 1).copied().unwrap_or(0.0);
                });
                Model::new("regime-drift", c, JumpModel::none(), fixed(0.0))?
            }
            "delay-linear" => {
                // dx = a·x_{t−θ} dt + b dW
                let c = one_d()?
                    .with_drift(move |_, x, env, out| out[0] = a * env.delayed.unwrap_or(x)[0])
                    .with_diffusion(move |_, _, _, out| out[0] = b);
                Model::new("delay-linear", c, JumpModel::none(), fixed(1.0))?
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown model preset '{other}'; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(model)
    }
}
