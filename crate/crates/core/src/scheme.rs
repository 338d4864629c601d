//! Time steppers.
//!
//! One cell of the randomized tamed Euler scheme reads
//!
//! ```text
//! x_k = x_{k-1} + μ̂(ξ_k, x_{k-1})·Δt + σ̂(t_{k-1}, x_{k-1})·ΔW_k
//!       + Σ_{τ_j ∈ (t_{k-1}, t_k]} γ̂(t_{k-1}, x_{k-1}, z_j) − λ·Δt·E_Z[γ̂(t_{k-1}, x_{k-1}, Z)]
//! ```
//!
//! with `ξ_k = t_{k-1} + Δt·φ_{k-1}` and hats denoting tamed coefficients.
//! All jumps of a cell are evaluated at the left state; the baselines drop
//! the randomization (`ξ_k → t_{k-1}`), the taming, or both.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::grid::TimeGrid;
use crate::markov::{regime_at, MarkovPath};
use crate::model::{CoefficientSet, EnvState, Model};
use crate::rng::PathDraw;
use crate::taming::{tame, TamingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeVariant {
    /// Tamed coefficients, drift at the randomized point.
    RandomizedTamed,
    /// Tamed coefficients, drift at the left endpoint.
    Tamed,
    /// Plain Euler–Maruyama.
    Classical,
    /// Untamed coefficients, drift at the randomized point.
    RandomizedUntamed,
}

impl SchemeVariant {
    pub const ALL: [SchemeVariant; 4] = [
        SchemeVariant::RandomizedTamed,
        SchemeVariant::Tamed,
        SchemeVariant::Classical,
        SchemeVariant::RandomizedUntamed,
    ];

    pub fn is_randomized(self) -> bool {
        matches!(
            self,
            SchemeVariant::RandomizedTamed | SchemeVariant::RandomizedUntamed
        )
    }

    pub fn is_tamed(self) -> bool {
        matches!(self, SchemeVariant::RandomizedTamed | SchemeVariant::Tamed)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeVariant::RandomizedTamed => "randomized-tamed",
            SchemeVariant::Tamed => "tamed",
            SchemeVariant::Classical => "classical",
            SchemeVariant::RandomizedUntamed => "randomized-untamed",
        }
    }
}

impl fmt::Display for SchemeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeVariant {
    type Err = SdeError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| SdeError::InvalidParameter(format!("unknown scheme variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub variant: SchemeVariant,
    pub n: usize,
    /// Exponent of `n` in the taming denominator.
    pub n_power: f64,
    /// Exponent of `|x|`; `None` means `3ζ/2` of the model.
    pub x_power: Option<f64>,
}

impl SchemeConfig {
    pub fn new(variant: SchemeVariant, n: usize) -> Self {
        Self {
            variant,
            n,
            n_power: 0.5,
            x_power: None,
        }
    }

    pub fn with_taming_exponents(mut self, n_power: f64, x_power: Option<f64>) -> Self {
        self.n_power = n_power;
        self.x_power = x_power;
        self
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn taming_config(&self, zeta: f64) -> Result<TamingConfig> {
        TamingConfig::with_exponents(
            self.n,
            zeta,
            self.n_power,
            self.x_power.unwrap_or(1.5 * zeta),
        )
    }

    /// Coefficients the variant actually steps with.
    pub fn effective_coefficients(&self, coeffs: &CoefficientSet) -> Result<CoefficientSet> {
        if self.variant.is_tamed() {
            Ok(tame(coeffs, self.taming_config(coeffs.zeta())?))
        } else {
            Ok(coeffs.clone())
        }
    }
}

/// Grid states `x_0, …, x_n` of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
    /// Regime `α_{t_k}` at every grid point, when switching is active.
    pub regimes: Option<Vec<usize>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> std::slice::ChunksExact<'_, f64> {
        self.states.chunks_exact(self.dim)
    }

    /// CSV with columns `t,x_1..x_d` and `regime` when present.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dim {
            out.push_str(&format!(",x_{i}"));
        }
        if self.regimes.is_some() {
            out.push_str(",regime");
        }
        out.push('\n');
        for (k, x) in self.states().enumerate() {
            out.push_str(&format!("{}", self.grid.point(k)));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            if let Some(r) = &self.regimes {
                out.push_str(&format!(",{}", r[k]));
            }
            out.push('\n');
        }
        out
    }
}

/// Reusable buffers for stepping one path.
struct Stepper<'c> {
    coeffs: &'c CoefficientSet,
    randomized: bool,
    intensity: f64,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    jump: Vec<f64>,
}

impl<'c> Stepper<'c> {
    fn new(coeffs: &'c CoefficientSet, randomized: bool, intensity: f64) -> Self {
        let d = coeffs.dim_state();
        Self {
            coeffs,
            randomized,
            intensity,
            drift: vec![0.0; d],
            diffusion: vec![0.0; d * coeffs.dim_noise()],
            jump: vec![0.0; d],
        }
    }

    /// Writes `x_k` into `out`, reading only `x_{k-1}`, `φ_{k-1}` and the
    /// noise of cell `k`.
    #[allow(clippy::too_many_arguments)]
    fn advance<'z>(
        &mut self,
        grid: &TimeGrid,
        k: usize,
        x: &[f64],
        dw: &[f64],
        marks: impl Iterator<Item = &'z [f64]>,
        phi: f64,
        env: &EnvState<'_>,
        out: &mut [f64],
    ) -> Result<()> {
        let c = self.coeffs;
        let dt = grid.dt();
        let t_left = grid.point(k - 1);
        let t_drift = if self.randomized {
            grid.xi_unchecked(k, phi)
        } else {
            t_left
        };
        let m = c.dim_noise();

        c.drift_into(t_drift, x, env, &mut self.drift);
        c.diffusion_into(t_left, x, env, &mut self.diffusion);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.diffusion[i * m..(i + 1) * m];
            let noise: f64 = row.iter().zip(dw).map(|(s, w)| s * w).sum();
            *o = x[i] + self.drift[i] * dt + noise;
        }
        for z in marks {
            c.jump_into(t_left, x, z, env, &mut self.jump);
            out.iter_mut().zip(&self.jump).for_each(|(o, g)| *o += g);
        }
        if self.intensity > 0.0 && !c.zero_mean_jump() {
            c.compensator_into(t_left, x, env, &mut self.jump);
            let scale = self.intensity * dt;
            out.iter_mut()
                .zip(&self.jump)
                .for_each(|(o, g)| *o -= scale * g);
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SdeError::Diverged {
                step: k,
                state: out.to_vec(),
            })
        }
    }
}

/// One cell `(t_{k-1}, t_k]` of the randomized scheme with already-tamed
/// coefficients.
///
/// `cell_jumps` must hold exactly the jumps `(τ, z)` with `τ ∈ (t_{k-1}, t_k]`.
#[allow(clippy::too_many_arguments)]
pub fn step(
    x: &[f64],
    k: usize,
    grid: &TimeGrid,
    tamed: &CoefficientSet,
    dw: &[f64],
    cell_jumps: &[(f64, Vec<f64>)],
    phi: f64,
    intensity: f64,
    env: &EnvState<'_>,
) -> Result<Vec<f64>> {
    grid.xi(k, phi)?;
    if x.len() != tamed.dim_state() || dw.len() != tamed.dim_noise() {
        return Err(SdeError::InvalidParameter(format!(
            "state/noise dimensions {}/{} do not match coefficients {}/{}",
            x.len(),
            dw.len(),
            tamed.dim_state(),
            tamed.dim_noise()
        )));
    }
    let (left, right) = (grid.point(k - 1), grid.point(k));
    if let Some(&(tau, _)) = cell_jumps
        .iter()
        .find(|(tau, _)| !(*tau > left && *tau <= right))
    {
        return Err(SdeError::TimeOutOfRange {
            t: tau,
            horizon: grid.horizon(),
        });
    }
    let mut out = vec![0.0; x.len()];
    Stepper::new(tamed, true, intensity).advance(
        grid,
        k,
        x,
        dw,
        cell_jumps.iter().map(|(_, z)| z.as_slice()),
        phi,
        env,
        &mut out,
    )?;
    Ok(out)
}

struct LevelNoise<'d> {
    grid: TimeGrid,
    increments: crate::rng::Increments,
    jump_cells: Vec<usize>,
    phis: Option<&'d [f64]>,
}

fn level_noise<'d>(
    model: &Model,
    cfg: &SchemeConfig,
    draw: &'d PathDraw,
) -> Result<LevelNoise<'d>> {
    let grid = TimeGrid::new(cfg.n, model.coeffs.horizon())?;
    if draw.horizon() != grid.horizon() {
        return Err(SdeError::InvalidParameter(format!(
            "draw covers [0, {}], model horizon is {}",
            draw.horizon(),
            grid.horizon()
        )));
    }
    let phis = if cfg.variant.is_randomized() {
        Some(draw.phis(cfg.n).ok_or(SdeError::MissingRandomizer(cfg.n))?)
    } else {
        None
    };
    Ok(LevelNoise {
        grid,
        increments: draw.increments_for(cfg.n)?,
        jump_cells: draw.jump_cells_for(cfg.n)?,
        phis,
    })
}

/// Simulates `model` on the `cfg.n`-step grid using the shared noise of `draw`.
pub fn simulate_path(model: &Model, cfg: &SchemeConfig, draw: &PathDraw) -> Result<Trajectory> {
    let coeffs = cfg.effective_coefficients(&model.coeffs)?;
    simulate_with(model, &coeffs, cfg, draw)
}

/// Same as [`simulate_path`] with the effective coefficients supplied, so a
/// caller looping over many paths tames once.
pub(crate) fn simulate_with(
    model: &Model,
    coeffs: &CoefficientSet,
    cfg: &SchemeConfig,
    draw: &PathDraw,
) -> Result<Trajectory> {
    let noise = level_noise(model, cfg, draw)?;
    let d = coeffs.dim_state();
    let n = cfg.n;
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(&draw.x0);
    let mut stepper = Stepper::new(coeffs, cfg.variant.is_randomized(), model.jumps.intensity);
    let env = EnvState::default();
    let mut next_jump = 0;
    for k in 1..=n {
        let first = next_jump;
        while next_jump < noise.jump_cells.len() && noise.jump_cells[next_jump] == k {
            next_jump += 1;
        }
        let (prev, rest) = states.split_at_mut(k * d);
        let phi = noise.phis.map_or(1.0, |p| p[k - 1]);
        stepper.advance(
            &noise.grid,
            k,
            &prev[(k - 1) * d..],
            noise.increments.get(k - 1),
            (first..next_jump).map(|j| draw.jumps.mark(j)),
            phi,
            &env,
            &mut rest[..d],
        )?;
    }
    Ok(Trajectory {
        grid: noise.grid,
        dim: d,
        states,
        regimes: None,
    })
}

/// Randomized tamed Euler scheme for a delay equation with Markovian
/// switching.
///
/// Coefficients read the regime `α_{κ_n(s)}` and the delayed state
/// `x_{κ_n(s−θ)}` through [`EnvState`]. The delay is snapped to the nearest
/// multiple of `Δt` so that `κ_n(s−θ)` lands on the grid; before time `θ` the
/// delayed state comes from `initial_segment`, which maps `t ∈ [0, θ]` to
/// `x_{t−θ}`.
pub fn simulate_sdde_switching(
    model: &Model,
    cfg: &SchemeConfig,
    draw: &PathDraw,
    delay: f64,
    initial_segment: Option<&dyn Fn(f64) -> Vec<f64>>,
    chain: &MarkovPath,
) -> Result<Trajectory> {
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(SdeError::InvalidParameter(format!(
            "delay must be nonnegative, got {delay}"
        )));
    }
    let coeffs = cfg.effective_coefficients(&model.coeffs)?;
    let noise = level_noise(model, cfg, draw)?;
    let grid = noise.grid;
    if chain.horizon < grid.horizon() {
        return Err(SdeError::InvalidParameter(format!(
            "chain covers [0, {}], need [0, {}]",
            chain.horizon,
            grid.horizon()
        )));
    }
    let lag = (delay / grid.dt()).round() as usize;
    if lag > 0 && initial_segment.is_none() {
        return Err(SdeError::MissingInitialSegment(delay));
    }
    let d = coeffs.dim_state();
    let n = cfg.n;
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(&draw.x0);
    let regimes = grid
        .points()
        .map(|t| regime_at(chain, t))
        .collect::<Result<Vec<_>>>()?;

    let mut stepper = Stepper::new(&coeffs, cfg.variant.is_randomized(), model.jumps.intensity);
    let mut segment_value = Vec::new();
    let mut next_jump = 0;
    for k in 1..=n {
        let first = next_jump;
        while next_jump < noise.jump_cells.len() && noise.jump_cells[next_jump] == k {
            next_jump += 1;
        }
        let (prev, rest) = states.split_at_mut(k * d);
        let delayed: &[f64] = if k > lag {
            &prev[(k - 1 - lag) * d..(k - lag) * d]
        } else {
            let segment = initial_segment.ok_or(SdeError::MissingInitialSegment(delay))?;
            segment_value.clear();
            segment_value.extend(segment(grid.point(k - 1)));
            if segment_value.len() != d {
                return Err(SdeError::InvalidParameter(format!(
                    "initial segment returned {} values, state has {d}",
                    segment_value.len()
                )));
            }
            &segment_value
        };
        let env = EnvState::default()
            .with_regime(regimes[k - 1])
            .with_delayed(delayed);
        let phi = noise.phis.map_or(1.0, |p| p[k - 1]);
        stepper.advance(
            &grid,
            k,
            &prev[(k - 1) * d..k * d],
            noise.increments.get(k - 1),
            (first..next_jump).map(|j| draw.jumps.mark(j)),
            phi,
            &env,
            &mut rest[..d],
        )?;
    }
    Ok(Trajectory {
        grid,
        dim: d,
        states,
        regimes: Some(regimes),
    })
}
