//! Continuous-time Markov chains on `{1, …, m0}` for regime switching.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::rng::StreamKey;

/// Generator matrix `Q`: nonnegative off-diagonal rates, zero row sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    m0: usize,
    q: Vec<f64>,
}

impl Generator {
    /// `q` is the full row-major `m0×m0` matrix.
    pub fn new(m0: usize, q: Vec<f64>) -> Result<Self> {
        if m0 == 0 {
            return Err(SdeError::InvalidGenerator("state space is empty".into()));
        }
        if q.len() != m0 * m0 {
            return Err(SdeError::InvalidGenerator(format!(
                "expected {} entries, got {}",
                m0 * m0,
                q.len()
            )));
        }
        for i in 0..m0 {
            let row = &q[i * m0..(i + 1) * m0];
            let mut off = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(SdeError::InvalidGenerator(format!("q[{i}][{j}] = {v}")));
                }
                if j != i {
                    if v < 0.0 {
                        return Err(SdeError::InvalidGenerator(format!(
                            "negative rate q[{}][{}] = {v}",
                            i + 1,
                            j + 1
                        )));
                    }
                    off += v;
                }
            }
            let sum = off + row[i];
            if sum.abs() > 1e-12 * off.max(1.0) {
                return Err(SdeError::InvalidGenerator(format!(
                    "row {} sums to {sum}, not 0",
                    i + 1
                )));
            }
        }
        Ok(Self { m0, q })
    }

    /// Builds `Q` from its off-diagonal rates; diagonal entries are ignored
    /// and replaced by `-Σ_{j≠i} q_ij`.
    pub fn from_rates(m0: usize, mut rates: Vec<f64>) -> Result<Self> {
        if rates.len() == m0 * m0 {
            for i in 0..m0 {
                rates[i * m0 + i] = 0.0;
                let off: f64 = rates[i * m0..(i + 1) * m0].iter().sum();
                rates[i * m0 + i] = -off;
            }
        }
        Self::new(m0, rates)
    }

    pub fn states(&self) -> usize {
        self.m0
    }

    /// Rate `q_ij` for 1-based states.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.q[(i - 1) * self.m0 + (j - 1)]
    }

    /// Total exit rate `-q_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rate(i, i)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }
}

/// Right-continuous piecewise-constant path of the chain on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPath {
    pub switch_times: Vec<f64>,
    /// `states[i]` holds on `[switch_times[i-1], switch_times[i])`.
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl MarkovPath {
    /// Path that stays in `state` on `[0, T]`.
    pub fn constant(state: usize, horizon: f64) -> Self {
        Self {
            switch_times: Vec::new(),
            states: vec![state],
            horizon,
        }
    }

    pub fn initial_state(&self) -> usize {
        self.states[0]
    }

    /// Fraction of `[0, T]` spent in `state`.
    pub fn occupation_fraction(&self, state: usize) -> f64 {
        let mut left = 0.0;
        let mut acc = 0.0;
        for (i, &s) in self.states.iter().enumerate() {
            let right = self.switch_times.get(i).copied().unwrap_or(self.horizon);
            if s == state {
                acc += right - left;
            }
            left = right;
        }
        acc / self.horizon
    }
}

/// Direct event simulation: exponential holding times with rate `-q_ii`,
/// jumps to `j ≠ i` with probability `q_ij / (-q_ii)`.
pub fn simulate_ctmc(
    gen: &Generator,
    alpha0: usize,
    horizon: f64,
    key: StreamKey,
) -> Result<MarkovPath> {
    if alpha0 == 0 || alpha0 > gen.m0 {
        return Err(SdeError::InvalidParameter(format!(
            "initial regime {alpha0} outside 1..={}",
            gen.m0
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SdeError::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut rng = key.rng();
    let mut path = MarkovPath::constant(alpha0, horizon);
    let mut t = 0.0;
    let mut state = alpha0;
    loop {
        let rate = gen.exit_rate(state);
        if rate <= 0.0 {
            break;
        }
        let hold = Exp::new(rate)
            .map_err(|e| SdeError::InvalidGenerator(e.to_string()))?
            .sample(&mut rng);
        t += hold;
        if t > horizon {
            break;
        }
        let mut u = rng.random::<f64>() * rate;
        let mut next = state;
        for j in (1..=gen.m0).filter(|&j| j != state) {
            let q = gen.rate(state, j);
            if q <= 0.0 {
                continue;
            }
            next = j;
            if u < q {
                break;
            }
            u -= q;
        }
        state = next;
        path.switch_times.push(t);
        path.states.push(state);
    }
    Ok(path)
}

/// `α_t`, right-continuous at switch times.
pub fn regime_at(path: &MarkovPath, t: f64) -> Result<usize> {
    if !(0.0..=path.horizon).contains(&t) {
        return Err(SdeError::TimeOutOfRange {
            t,
            horizon: path.horizon,
        });
    }
    let idx = path.switch_times.partition_point(|&s| s <= t);
    Ok(path.states[idx])
}
