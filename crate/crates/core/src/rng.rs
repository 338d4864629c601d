//! Reproducible randomness for path-parallel Monte Carlo.
//!
//! Every substream is a ChaCha8 generator whose 256-bit seed is the SHA-256
//! digest of a [`StreamKey`]. Streams therefore depend only on
//! `(base_seed, path_index, tag)` and never on how paths are distributed
//! across workers.
//!
//! A [`PathDraw`] holds one path's randomness at the finest resolution.
//! Coarser levels see the same Brownian path through exact summation of fine
//! increments ([`coarsen`]) and the same jumps through integer cell
//! arithmetic, while each level draws its own randomizers `φ`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SdeError};
use crate::grid::TimeGrid;
use crate::model::{MarkLaw, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamTag {
    Brownian,
    Jumps,
    /// Randomizers of the level with this many steps.
    Randomizer(u64),
    Init,
    Markov,
}

impl StreamTag {
    fn encode(&self) -> [u8; 9] {
        let (code, arg) = match *self {
            StreamTag::Brownian => (1u8, 0u64),
            StreamTag::Jumps => (2, 0),
            StreamTag::Randomizer(level) => (3, level),
            StreamTag::Init => (4, 0),
            StreamTag::Markov => (5, 0),
        };
        let mut out = [0u8; 9];
        out[0] = code;
        out[1..].copy_from_slice(&arg.to_le_bytes());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub base_seed: u64,
    pub path_index: u64,
    pub tag: StreamTag,
}

impl StreamKey {
    pub fn new(base_seed: u64, path_index: u64, tag: StreamTag) -> Self {
        Self {
            base_seed,
            path_index,
            tag,
        }
    }

    pub fn with_tag(self, tag: StreamTag) -> Self {
        Self { tag, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"tamed-sde/stream/v1");
        h.update(self.base_seed.to_le_bytes());
        h.update(self.path_index.to_le_bytes());
        h.update(self.tag.encode());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

/// Sequence of `m`-vectors stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Increments {
    dim: usize,
    data: Vec<f64>,
}

impl Increments {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(SdeError::InvalidParameter(format!(
                "{} values do not form {dim}-vectors",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }
}

/// `n_fine` i.i.d. `N(0, (T/n_fine)·I_m)` vectors.
pub fn brownian_increments(key: StreamKey, n_fine: usize, m: usize, horizon: f64) -> Increments {
    let mut rng = key.rng();
    let sd = (horizon / n_fine as f64).sqrt();
    let data = (0..n_fine * m)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Increments {
        dim: m.max(1),
        data,
    }
}

/// Sums consecutive blocks of `factor` increments.
pub fn coarsen(fine: &Increments, factor: usize) -> Result<Increments> {
    let len = fine.len();
    if factor == 0 || !len.is_multiple_of(factor) {
        return Err(SdeError::NotDivisible { len, factor });
    }
    if factor == 1 {
        return Ok(fine.clone());
    }
    let dim = fine.dim;
    let mut data = vec![0.0; len / factor * dim];
    for (j, block) in fine.data.chunks_exact(factor * dim).enumerate() {
        let out = &mut data[j * dim..(j + 1) * dim];
        for inc in block.chunks_exact(dim) {
            out.iter_mut().zip(inc).for_each(|(o, v)| *o += v);
        }
    }
    Ok(Increments { dim, data })
}

/// Jump times in `(0, T]` (strictly increasing) with their marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    pub times: Vec<f64>,
    marks: Vec<f64>,
    mark_dim: usize,
}

impl JumpPath {
    pub fn empty(mark_dim: usize) -> Self {
        Self {
            times: Vec::new(),
            marks: Vec::new(),
            mark_dim: mark_dim.max(1),
        }
    }

    /// `marks` holds one `mark_dim`-vector per time.
    pub fn new(times: Vec<f64>, marks: Vec<f64>, mark_dim: usize) -> Result<Self> {
        if mark_dim == 0 || marks.len() != times.len() * mark_dim {
            return Err(SdeError::InvalidParameter(format!(
                "{} marks do not match {} jump times of dimension {mark_dim}",
                marks.len(),
                times.len()
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SdeError::InvalidParameter(
                "jump times must increase strictly".into(),
            ));
        }
        Ok(Self {
            times,
            marks,
            mark_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mark(&self, j: usize) -> &[f64] {
        &self.marks[j * self.mark_dim..(j + 1) * self.mark_dim]
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }
}

/// Compound Poisson path: `Poisson(λT)` jumps, uniform times, i.i.d. marks.
pub fn jump_path(
    key: StreamKey,
    intensity: f64,
    horizon: f64,
    marks: &MarkLaw,
) -> Result<JumpPath> {
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return Err(SdeError::InvalidParameter(format!(
            "jump intensity must be finite and nonnegative, got {intensity}"
        )));
    }
    let mark_dim = marks.dim().max(1);
    if intensity == 0.0 {
        return Ok(JumpPath::empty(mark_dim));
    }
    let mut rng = key.rng();
    let poisson = Poisson::new(intensity * horizon)
        .map_err(|e| SdeError::InvalidParameter(format!("Poisson mean: {e}")))?;
    let count = poisson.sample(&mut rng) as usize;
    let mut times: Vec<f64> = (0..count)
        .map(|_| horizon * (1.0 - rng.random::<f64>()))
        .collect();
    times.sort_by(f64::total_cmp);
    // ties have probability zero but would break strict ordering
    times.dedup();
    let mut data = vec![0.0; times.len() * mark_dim];
    for chunk in data.chunks_exact_mut(mark_dim) {
        marks.sample_into(&mut rng, chunk);
    }
    Ok(JumpPath {
        times,
        marks: data,
        mark_dim,
    })
}

/// Randomizers `φ ∈ (0, 1]` for a level with `n` steps.
pub fn randomizers(key: StreamKey, n: usize) -> Vec<f64> {
    let mut rng = key.rng();
    (0..n).map(|_| 1.0 - rng.random::<f64>()).collect()
}

/// All randomness of one Monte Carlo path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDraw {
    grid: TimeGrid,
    /// Brownian increments on the finest grid.
    pub fine_increments: Increments,
    pub jumps: JumpPath,
    /// Fine cell of each jump, `τ ∈ (t_{k-1}, t_k]`.
    jump_cells: Vec<usize>,
    /// Per-level randomizers, keyed by step count.
    pub phis: BTreeMap<usize, Vec<f64>>,
    pub x0: Vec<f64>,
}

impl PathDraw {
    /// Draws path `path_index` of `model` at resolution `n_fine`, with
    /// randomizers for every step count in `levels` and for `n_fine` itself.
    pub fn generate(
        model: &Model,
        base_seed: u64,
        path_index: u64,
        n_fine: usize,
        levels: &[usize],
    ) -> Result<Self> {
        let horizon = model.coeffs.horizon();
        let grid = TimeGrid::new(n_fine, horizon)?;
        let key = StreamKey::new(base_seed, path_index, StreamTag::Brownian);
        let fine_increments = brownian_increments(key, n_fine, model.coeffs.dim_noise(), horizon);
        let jumps = jump_path(
            key.with_tag(StreamTag::Jumps),
            model.jumps.intensity,
            horizon,
            &model.jumps.marks,
        )?;
        let jump_cells = jumps
            .times
            .iter()
            .map(|&tau| grid.jump_cell(tau))
            .collect::<Result<Vec<_>>>()?;
        let mut phis = BTreeMap::new();
        for &n in levels.iter().chain(std::iter::once(&n_fine)) {
            if n == 0 || !n_fine.is_multiple_of(n) {
                return Err(SdeError::NotDivisible {
                    len: n_fine,
                    factor: n.max(1),
                });
            }
            phis.entry(n)
                .or_insert_with(|| randomizers(key.with_tag(StreamTag::Randomizer(n as u64)), n));
        }
        let x0 = model
            .initial
            .sample(&mut key.with_tag(StreamTag::Init).rng());
        Ok(Self {
            grid,
            fine_increments,
            jumps,
            jump_cells,
            phis,
            x0,
        })
    }

    /// Assembles a draw from explicit parts; jump times must lie in `(0, T]`
    /// and be strictly increasing.
    pub fn from_parts(
        horizon: f64,
        fine_increments: Increments,
        jumps: JumpPath,
        phis: BTreeMap<usize, Vec<f64>>,
        x0: Vec<f64>,
    ) -> Result<Self> {
        let grid = TimeGrid::new(fine_increments.len(), horizon)?;
        if jumps.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SdeError::InvalidParameter(
                "jump times must increase strictly".into(),
            ));
        }
        for (&n, phi) in &phis {
            if phi.len() != n {
                return Err(SdeError::InvalidParameter(format!(
                    "level {n} carries {} randomizers",
                    phi.len()
                )));
            }
            if let Some(&bad) = phi.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
                return Err(SdeError::PhiOutOfRange(bad));
            }
        }
        let jump_cells = jumps
            .times
            .iter()
            .map(|&tau| grid.jump_cell(tau))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            fine_increments,
            jumps,
            jump_cells,
            phis,
            x0,
        })
    }

    pub fn n_fine(&self) -> usize {
        self.grid.n()
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn phis(&self, n: usize) -> Option<&[f64]> {
        self.phis.get(&n).map(Vec::as_slice)
    }

    /// Brownian increments over the cells of the `n`-step grid.
    pub fn increments_for(&self, n: usize) -> Result<Increments> {
        let len = self.n_fine();
        if n == 0 || !len.is_multiple_of(n) {
            return Err(SdeError::NotDivisible {
                len,
                factor: n.max(1),
            });
        }
        coarsen(&self.fine_increments, len / n)
    }

    /// Cell index (1-based) on the `n`-step grid of every jump, in time order.
    pub fn jump_cells_for(&self, n: usize) -> Result<Vec<usize>> {
        let len = self.n_fine();
        if n == 0 || !len.is_multiple_of(n) {
            return Err(SdeError::NotDivisible {
                len,
                factor: n.max(1),
            });
        }
        let factor = len / n;
        Ok(self
            .jump_cells
            .iter()
            .map(|&k| (k - 1) / factor + 1)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{double_well_preset, DoubleWellParams};
    use proptest::prelude::*;
    use rand::Rng;

    fn key(path: u64, tag: StreamTag) -> StreamKey {
        StreamKey::new(7, path, tag)
    }

    #[test]
    fn brownian_moments() {
        let inc = brownian_increments(key(0, StreamTag::Brownian), 1_000_000, 1, 1.0);
        let var = inc.as_slice().iter().map(|v| v * v).sum::<f64>();
        // sum of squared increments over [0, 1] concentrates at T
        assert!((var - 1.0).abs() < 0.01, "quadratic variation {var}");

        // unit-variance draws: n_fine = 1, T = 1, one draw per key
        let draws: Vec<f64> = (0..1_000_000u64)
            .map(|i| brownian_increments(key(i, StreamTag::Brownian), 1, 1, 1.0).get(0)[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / 1e6;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (1e6 - 1.0);
        assert!(mean.abs() < 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn brownian_is_deterministic() {
        let a = brownian_increments(key(3, StreamTag::Brownian), 100, 2, 1.0);
        let b = brownian_increments(key(3, StreamTag::Brownian), 100, 2, 1.0);
        assert_eq!(a, b);
        let c = brownian_increments(key(4, StreamTag::Brownian), 100, 2, 1.0);
        assert_ne!(a, c);
    }

    #[test]
    fn coarsen_examples() {
        let fine = Increments::new(1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(coarsen(&fine, 2).unwrap().as_slice(), &[3.0, 7.0]);
        assert_eq!(coarsen(&fine, 1).unwrap(), fine);
        assert_eq!(coarsen(&fine, 4).unwrap().as_slice(), &[10.0]);
        assert!(matches!(
            coarsen(&fine, 3),
            Err(SdeError::NotDivisible { .. })
        ));
        assert!(coarsen(&fine, 0).is_err());

        let two = Increments::new(2, vec![1.0, 10.0, 2.0, 20.0]).unwrap();
        assert_eq!(coarsen(&two, 2).unwrap().as_slice(), &[3.0, 30.0]);
    }

    #[test]
    fn jump_path_examples() {
        let marks = MarkLaw::StandardNormal { dim: 1 };
        assert!(jump_path(key(0, StreamTag::Jumps), 0.0, 1.0, &marks)
            .unwrap()
            .is_empty());
        let a = jump_path(key(5, StreamTag::Jumps), 3.0, 1.0, &marks).unwrap();
        let b = jump_path(key(5, StreamTag::Jumps), 3.0, 1.0, &marks).unwrap();
        assert_eq!(a, b);
        assert!(a.times.windows(2).all(|w| w[0] < w[1]));
        assert!(a.times.iter().all(|&t| t > 0.0 && t <= 1.0));

        let total: usize = (0..100_000u64)
            .map(|i| {
                jump_path(key(i, StreamTag::Jumps), 1.0, 1.0, &marks)
                    .unwrap()
                    .len()
            })
            .sum();
        let mean = total as f64 / 1e5;
        assert!((mean - 1.0).abs() < 0.02, "mean count {mean}");
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 100_000u64;
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x = key(i, StreamTag::Brownian).rng().random::<f64>();
            let y = key(i, StreamTag::Jumps).rng().random::<f64>();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx * sy / nf / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(corr.abs() < 4.0 / (nf).sqrt(), "corr {corr}");
    }

    #[test]
    fn randomizers_lie_in_half_open_unit_interval() {
        let phis = randomizers(key(1, StreamTag::Randomizer(64)), 100_000);
        assert!(phis.iter().all(|&p| p > 0.0 && p <= 1.0));
        let other = randomizers(key(1, StreamTag::Randomizer(128)), 64);
        assert_ne!(&phis[..64], &other[..]);
    }

    #[test]
    fn path_draw_is_pure_function_of_seed_and_index() {
        let model = double_well_preset(DoubleWellParams::default(), 5.0, 2.0).unwrap();
        let a = PathDraw::generate(&model, 11, 42, 256, &[16, 64]).unwrap();
        let b = PathDraw::generate(&model, 11, 42, 256, &[64, 16]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.phis(16).unwrap().len(), 16);
        assert_eq!(a.phis(256).unwrap().len(), 256);
        assert_eq!(a.x0, vec![2.0]);
        assert!(PathDraw::generate(&model, 11, 42, 256, &[48]).is_err());
    }

    #[test]
    fn jump_cells_nest() {
        let model = double_well_preset(DoubleWellParams::default(), 50.0, 2.0).unwrap();
        let draw = PathDraw::generate(&model, 1, 0, 1024, &[]).unwrap();
        for n in [1, 2, 8, 64, 1024] {
            let g = TimeGrid::new(n, 1.0).unwrap();
            let cells = draw.jump_cells_for(n).unwrap();
            for (tau, k) in draw.jumps.times.iter().zip(cells) {
                assert_eq!(g.jump_cell(*tau).unwrap(), k);
            }
        }
    }

    proptest! {
        #[test]
        fn coarsening_telescopes(seed in any::<u64>(), a in 1usize..6, b in 1usize..6, blocks in 1usize..20) {
            let fine = brownian_increments(StreamKey::new(seed, 0, StreamTag::Brownian), a * b * blocks, 2, 1.0);
            let two_step = coarsen(&coarsen(&fine, a).unwrap(), b).unwrap();
            let one_step = coarsen(&fine, a * b).unwrap();
            let scale: f64 = fine.as_slice().iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
            for (x, y) in two_step.as_slice().iter().zip(one_step.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * scale);
            }
        }
    }
}
