//! Equidistant time grids and the two evaluation-point maps of the scheme:
//! the left endpoint `κ_n(t) = t_{k-1}` and the randomized point
//! `ξ_n = t_{k-1} + Δt·φ_{k-1}` with `φ ∈ (0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(SdeError::InvalidParameter(
                "step count must be positive".into(),
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SdeError::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self { n, horizon })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// `t_k = (k·T)/n`, computed directly so that grids of size `n` and `2n`
    /// share their common points bit for bit.
    #[inline]
    pub fn point(&self, k: usize) -> f64 {
        if k == self.n {
            return self.horizon;
        }
        (k as f64 * self.horizon) / self.n as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|k| self.point(k))
    }

    /// Index `k ∈ 1..=n` of the cell `[t_{k-1}, t_k)` holding `t`; `T` maps
    /// to the last cell.
    pub fn cell_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(SdeError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let mut j = ((t * self.n as f64 / self.horizon).floor() as usize).min(self.n - 1);
        // floor of the scaled time can be off by one next to a grid point
        if j + 1 < self.n && self.point(j + 1) <= t {
            j += 1;
        } else if j > 0 && self.point(j) > t {
            j -= 1;
        }
        Ok(j + 1)
    }

    /// Left endpoint `κ_n(t)`.
    pub fn kappa(&self, t: f64) -> Result<f64> {
        Ok(self.point(self.cell_of(t)? - 1))
    }

    /// Randomized evaluation point `t_{k-1} + Δt·φ ∈ (t_{k-1}, t_k]`.
    pub fn xi(&self, k: usize, phi: f64) -> Result<f64> {
        if k == 0 || k > self.n {
            return Err(SdeError::StepOutOfRange { k, n: self.n });
        }
        if !(phi > 0.0 && phi <= 1.0) {
            return Err(SdeError::PhiOutOfRange(phi));
        }
        Ok(self.xi_unchecked(k, phi))
    }

    #[inline]
    pub(crate) fn xi_unchecked(&self, k: usize, phi: f64) -> f64 {
        let left = self.point(k - 1);
        // φ = 1 lands exactly on t_k
        if phi == 1.0 {
            return self.point(k);
        }
        let x = (left + self.dt() * phi).min(self.point(k));
        if x > left {
            x
        } else {
            left.next_up()
        }
    }

    /// Cell `k` with `τ ∈ (t_{k-1}, t_k]`, the convention for jump times.
    pub fn jump_cell(&self, tau: f64) -> Result<usize> {
        if !(tau > 0.0 && tau <= self.horizon) {
            return Err(SdeError::TimeOutOfRange {
                t: tau,
                horizon: self.horizon,
            });
        }
        let mut k = ((tau * self.n as f64 / self.horizon).ceil() as usize).clamp(1, self.n);
        if k < self.n && self.point(k) < tau {
            k += 1;
        } else if k > 1 && self.point(k - 1) >= tau {
            k -= 1;
        }
        Ok(k)
    }
}
