//! Monte Carlo strong-error studies and diagnostic probes.
//!
//! Paths are independent work items on a rayon pool. Work is cut into
//! fixed chunks of path indices, each chunk is reduced sequentially, and
//! chunk results are combined in index order, so every number reported here
//! is independent of the worker count.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::model::{norm, CoefficientSet, EnvState, Model};
use crate::rng::PathDraw;
use crate::scheme::{simulate_with, SchemeConfig, SchemeVariant, Trajectory};
use crate::sum::CompensatedSum;

const CHUNK: usize = 64;

/// Time functional the strong error is taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorTime {
    /// `|x_T − x^n_T|`.
    #[default]
    Terminal,
    /// `max_k |x_{t_k} − x^n_{t_k}|` over the coarse grid.
    MaxOverGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Scheme measured at every level.
    pub variant: SchemeVariant,
    /// Scheme of the reference solution.
    pub reference_variant: SchemeVariant,
    /// Taming exponents shared by the levels and the reference.
    pub n_power: f64,
    pub x_power: Option<f64>,
    pub levels: Vec<usize>,
    pub reference_n: usize,
    pub num_paths: usize,
    pub p_list: Vec<f64>,
    pub error_time: ErrorTime,
    pub base_seed: u64,
    pub batches: usize,
    /// Worker threads; 0 lets rayon decide. Never affects results.
    pub workers: usize,
}

impl StudyConfig {
    /// Levels `2^6 … 2^11`, reference `2^13`, 2000 paths, `p ∈ {1, 2, 3, 4}`.
    pub fn desk_scale(base_seed: u64) -> Self {
        Self {
            variant: SchemeVariant::RandomizedTamed,
            reference_variant: SchemeVariant::RandomizedTamed,
            n_power: 0.5,
            x_power: None,
            levels: (6..=11).map(|e| 1usize << e).collect(),
            reference_n: 1 << 13,
            num_paths: 2000,
            p_list: vec![1.0, 2.0, 3.0, 4.0],
            error_time: ErrorTime::Terminal,
            base_seed,
            batches: 20,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SdeError::InvalidParameter(msg));
        if self.levels.is_empty() {
            return bad("levels must not be empty".into());
        }
        if self.reference_n == 0 {
            return bad("reference_n must be positive".into());
        }
        for &n in &self.levels {
            if n == 0 || n > self.reference_n || !self.reference_n.is_multiple_of(n) {
                return bad(format!(
                    "level {n} does not divide reference_n = {}",
                    self.reference_n
                ));
            }
        }
        if self.p_list.is_empty() || self.p_list.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return bad(format!(
                "p_list must hold finite values ≥ 1, got {:?}",
                self.p_list
            ));
        }
        if self.batches < 2 {
            return bad(format!("need at least 2 batches, got {}", self.batches));
        }
        if self.num_paths < self.batches {
            return bad(format!(
                "{} paths cannot fill {} batches",
                self.num_paths, self.batches
            ));
        }
        if !(self.n_power > 0.0 && self.n_power.is_finite()) {
            return bad(format!("n_power must be positive, got {}", self.n_power));
        }
        Ok(())
    }

    fn scheme(&self, variant: SchemeVariant, n: usize) -> SchemeConfig {
        SchemeConfig::new(variant, n).with_taming_exponents(self.n_power, self.x_power)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub dt: f64,
    pub p: f64,
    /// `(E|x − x^n|^p)^{1/p}` over non-diverged paths.
    pub error: f64,
    pub stderr: f64,
    pub diverged_frac: f64,
    /// False when more than half the paths diverged.
    pub usable: bool,
}

/// OLS fit of `log2 e = slope·log2 Δt + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log2` units.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEntry {
    pub p: f64,
    /// `None` when fewer than three usable positive rows exist.
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetadata {
    pub model: String,
    pub variant: SchemeVariant,
    pub reference_variant: SchemeVariant,
    pub reference_n: usize,
    pub num_paths: usize,
    pub base_seed: u64,
    pub error_time: ErrorTime,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Ordered by level as configured, then by `p`.
    pub rows: Vec<ErrorRow>,
    pub slopes: Vec<SlopeEntry>,
    pub metadata: StudyMetadata,
}

impl ErrorReport {
    pub fn rows_for(&self, p: f64) -> impl Iterator<Item = &ErrorRow> {
        self.rows.iter().filter(move |r| r.p == p)
    }

    pub fn slope(&self, p: f64) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.p == p)
            .and_then(|s| s.fit)
            .map(|f| f.slope)
    }

    pub fn max_diverged_frac(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.diverged_frac)
            .fold(0.0, f64::max)
    }

    /// `dt,p,error,stderr,diverged_frac` rows followed by `# slope` comments.
    /// Floats use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,p,error,stderr,diverged_frac\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.dt, r.p, r.error, r.stderr, r.diverged_frac
            ));
        }
        for s in &self.slopes {
            match s.fit {
                Some(f) => out.push_str(&format!("# slope p={}: {}\n", s.p, f.slope)),
                None => out.push_str(&format!("# slope p={}: nan\n", s.p)),
            }
        }
        for r in self.rows.iter().filter(|r| !r.usable) {
            out.push_str(&format!("# unusable dt={} p={}\n", r.dt, r.p));
        }
        out
    }
}

/// Least squares of `log2 e` on `log2 Δt`.
pub fn fit_rate(errors: &[(f64, f64)]) -> Result<RateFit> {
    if errors.len() < 3 {
        return Err(SdeError::InvalidParameter(format!(
            "rate fit needs at least 3 rows, got {}",
            errors.len()
        )));
    }
    if let Some(&(_, e)) = errors.iter().find(|&&(_, e)| !(e > 0.0 && e.is_finite())) {
        return Err(SdeError::NonPositiveError(e));
    }
    if let Some(&(dt, _)) = errors
        .iter()
        .find(|&&(dt, _)| !(dt > 0.0 && dt.is_finite()))
    {
        return Err(SdeError::InvalidParameter(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let xs: Vec<f64> = errors.iter().map(|&(dt, _)| dt.log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|&(_, e)| e.log2()).collect();
    let m = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / m;
    let y_bar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SdeError::InvalidParameter(
            "rate fit needs distinct step sizes".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_bar) * (y - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (sse / m).sqrt(),
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SdeError::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// Evaluates `f` on every path index, chunk by chunk, and returns results in
/// index order.
fn map_paths<T, F>(workers: usize, num_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let chunks: Vec<std::ops::Range<usize>> = (0..num_paths)
        .step_by(CHUNK)
        .map(|a| a..(a + CHUNK).min(num_paths))
        .collect();
    let per_chunk: Vec<Result<Vec<T>>> = pool(workers)?.install(|| {
        chunks
            .into_par_iter()
            .map(|r| r.map(&f).collect())
            .collect()
    });
    let mut out = Vec::with_capacity(num_paths);
    for c in per_chunk {
        out.extend(c?);
    }
    Ok(out)
}

fn run_or_diverge(result: Result<Trajectory>) -> Result<Option<Trajectory>> {
    match result {
        Ok(t) => Ok(Some(t)),
        Err(SdeError::Diverged { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn path_distance(reference: &Trajectory, coarse: &Trajectory, mode: ErrorTime) -> f64 {
    let factor = (reference.len() - 1) / (coarse.len() - 1);
    let gap = |k: usize| {
        let (a, b) = (coarse.state(k), reference.state(k * factor));
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm(&diff)
    };
    match mode {
        ErrorTime::Terminal => gap(coarse.len() - 1),
        ErrorTime::MaxOverGrid => (0..coarse.len()).map(gap).fold(0.0, f64::max),
    }
}

/// Strong errors of `cfg.variant` against `cfg.reference_variant` at
/// `reference_n`, on coupled noise.
pub fn strong_error_study(model: &Model, cfg: &StudyConfig) -> Result<ErrorReport> {
    strong_error_study_with_progress(model, cfg, &|_, _| {})
}

/// As [`strong_error_study`], calling `progress(done, total)` as paths finish.
pub fn strong_error_study_with_progress(
    model: &Model,
    cfg: &StudyConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ErrorReport> {
    cfg.validate()?;
    let ref_cfg = cfg.scheme(cfg.reference_variant, cfg.reference_n);
    let ref_coeffs = ref_cfg.effective_coefficients(&model.coeffs)?;
    let level_cfgs: Vec<(SchemeConfig, CoefficientSet)> = cfg
        .levels
        .iter()
        .map(|&n| {
            let sc = cfg.scheme(cfg.variant, n);
            sc.effective_coefficients(&model.coeffs).map(|c| (sc, c))
        })
        .collect::<Result<_>>()?;

    let done = AtomicUsize::new(0);
    let distances: Vec<Vec<Option<f64>>> = map_paths(cfg.workers, cfg.num_paths, |i| {
        let draw =
            PathDraw::generate(model, cfg.base_seed, i as u64, cfg.reference_n, &cfg.levels)?;
        let reference = run_or_diverge(simulate_with(model, &ref_coeffs, &ref_cfg, &draw))?;
        let mut row = Vec::with_capacity(level_cfgs.len());
        for (sc, coeffs) in &level_cfgs {
            let coarse = match &reference {
                Some(_) => run_or_diverge(simulate_with(model, coeffs, sc, &draw))?,
                None => None,
            };
            row.push(match (&reference, coarse) {
                (Some(r), Some(c)) => Some(path_distance(r, &c, cfg.error_time)),
                _ => None,
            });
        }
        progress(done.fetch_add(1, Ordering::Relaxed) + 1, cfg.num_paths);
        Ok(row)
    })?;

    let horizon = model.coeffs.horizon();
    let mut rows = Vec::new();
    for (l, &n) in cfg.levels.iter().enumerate() {
        let column: Vec<Option<f64>> = distances.iter().map(|d| d[l]).collect();
        let diverged = column.iter().filter(|d| d.is_none()).count();
        let diverged_frac = diverged as f64 / cfg.num_paths as f64;
        for &p in &cfg.p_list {
            let (error, stderr) = lp_error(&column, p, cfg.batches);
            rows.push(ErrorRow {
                dt: horizon / n as f64,
                p,
                error,
                stderr,
                diverged_frac,
                usable: diverged_frac <= 0.5,
            });
        }
    }
    let slopes = cfg
        .p_list
        .iter()
        .map(|&p| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.p == p && r.usable && r.error > 0.0 && r.error.is_finite())
                .map(|r| (r.dt, r.error))
                .collect();
            SlopeEntry {
                p,
                fit: fit_rate(&pts).ok(),
            }
        })
        .collect();
    Ok(ErrorReport {
        rows,
        slopes,
        metadata: StudyMetadata {
            model: model.name.clone(),
            variant: cfg.variant,
            reference_variant: cfg.reference_variant,
            reference_n: cfg.reference_n,
            num_paths: cfg.num_paths,
            base_seed: cfg.base_seed,
            error_time: cfg.error_time,
            batches: cfg.batches,
        },
    })
}

/// `(mean d^p)^{1/p}` over finite entries with a delta-method batch-means
/// standard error; batches are contiguous ranges of path indices.
fn lp_error(distances: &[Option<f64>], p: f64, batches: usize) -> (f64, f64) {
    let mut total = CompensatedSum::default();
    let mut count = 0usize;
    let mut batch_means = Vec::with_capacity(batches);
    let m = distances.len();
    for b in 0..batches {
        let range = (b * m / batches)..((b + 1) * m / batches);
        let mut acc = CompensatedSum::default();
        let mut c = 0usize;
        for d in distances[range].iter().flatten() {
            let v = d.powf(p);
            acc.add(v);
            total.add(v);
            c += 1;
        }
        if c > 0 {
            batch_means.push(acc.value() / c as f64);
        }
        count += c;
    }
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = total.value() / count as f64;
    let error = mean.powf(1.0 / p);
    let k = batch_means.len();
    if k < 2 || mean == 0.0 {
        return (error, if k < 2 { f64::NAN } else { 0.0 });
    }
    // shifted by the first batch so identical batches give exactly zero
    let shift = batch_means[0];
    let (s1, s2) = batch_means
        .iter()
        .map(|v| v - shift)
        .fold((0.0, 0.0), |(a, b), d| (a + d, b + d * d));
    let kf = k as f64;
    let var = ((s2 - s1 * s1 / kf) / (kf - 1.0)).max(0.0);
    let se_mean = (var / k as f64).sqrt();
    (error, error / (p * mean) * se_mean)
}

/// Shared settings of the moment and taming-gap probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Variant and taming exponents; `scheme.n` is replaced by each entry
    /// of `n_list`.
    pub scheme: SchemeConfig,
    pub n_list: Vec<usize>,
    pub num_paths: usize,
    pub base_seed: u64,
    pub workers: usize,
}

impl ProbeConfig {
    pub fn new(
        variant: SchemeVariant,
        n_list: Vec<usize>,
        num_paths: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            scheme: SchemeConfig::new(variant, 1),
            n_list,
            num_paths,
            base_seed,
            workers: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(SdeError::InvalidParameter(format!(
                "n_list must hold positive step counts, got {:?}",
                self.n_list
            )));
        }
        if self.num_paths == 0 {
            return Err(SdeError::InvalidParameter(
                "num_paths must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: usize,
    /// `max_k (1/M) Σ_i |x^n_{t_k}|^q`, `+∞` once any path diverged.
    pub sup_moment: f64,
    /// Grid index attaining the maximum.
    pub argmax_k: usize,
    pub diverged_frac: f64,
}

/// Empirical `sup_k E|x^n_{t_k}|^q` for each `n`.
pub fn moment_probe(model: &Model, cfg: &ProbeConfig, q: f64) -> Result<Vec<MomentRow>> {
    cfg.validate()?;
    if !(q >= 2.0 && q.is_finite()) {
        return Err(SdeError::InvalidParameter(format!(
            "moment order must be ≥ 2, got {q}"
        )));
    }
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let sc = cfg.scheme.with_n(n);
        let coeffs = sc.effective_coefficients(&model.coeffs)?;
        let powers: Vec<Option<Vec<f64>>> = map_paths(cfg.workers, cfg.num_paths, |i| {
            let draw = PathDraw::generate(model, cfg.base_seed, i as u64, n, &[n])?;
            Ok(run_or_diverge(simulate_with(model, &coeffs, &sc, &draw))?
                .map(|tr| tr.states().map(|x| norm(x).powf(q)).collect()))
        })?;
        let diverged = powers.iter().filter(|p| p.is_none()).count();
        let mut sums = vec![CompensatedSum::default(); n + 1];
        for path in powers.iter().flatten() {
            sums.iter_mut().zip(path).for_each(|(s, v)| s.add(*v));
        }
        let (argmax_k, sup) = sums
            .iter()
            .map(|s| s.value() / cfg.num_paths as f64)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| {
                if v > best.1 {
                    (k, v)
                } else {
                    best
                }
            });
        rows.push(MomentRow {
            n,
            sup_moment: if diverged > 0 || !sup.is_finite() {
                f64::INFINITY
            } else {
                sup
            },
            argmax_k,
            diverged_frac: diverged as f64 / cfg.num_paths as f64,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamingGapRow {
    pub n: usize,
    /// `E|μ(ξ, x) − μ̂(ξ, x)|^{p0}` averaged over the cells of `[0, T]`.
    pub drift_gap: f64,
    pub diffusion_gap: f64,
    /// Mark-averaged `|γ − γ̂|^{p0}`.
    pub jump_gap: f64,
    pub diverged_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamingGapReport {
    pub p0: f64,
    pub rows: Vec<TamingGapRow>,
    /// Fits of `log2 gap` on `log2 Δt`; the slope is the decay exponent in
    /// `n`. `None` when a component vanishes at some `n`.
    pub drift_fit: Option<RateFit>,
    pub diffusion_fit: Option<RateFit>,
    pub jump_fit: Option<RateFit>,
}

/// Distance between original and effective coefficients along simulated
/// paths, evaluated at `(ξ_k, x_{k-1})` for the drift and `(t_{k-1}, x_{k-1})`
/// otherwise.
pub fn taming_gap_probe(model: &Model, cfg: &ProbeConfig, p0: f64) -> Result<TamingGapReport> {
    cfg.validate()?;
    if !(p0 >= 2.0 && p0.is_finite()) {
        return Err(SdeError::InvalidParameter(format!(
            "p0 must be ≥ 2, got {p0}"
        )));
    }
    let raw = &model.coeffs;
    let quad = model.jumps.marks.quadrature();
    let with_jumps = model.jumps.intensity > 0.0;
    let d = raw.dim_state();
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let sc = cfg.scheme.with_n(n);
        let eff = sc.effective_coefficients(raw)?;
        let per_path: Vec<Option<[f64; 3]>> = map_paths(cfg.workers, cfg.num_paths, |i| {
            let draw = PathDraw::generate(model, cfg.base_seed, i as u64, n, &[n])?;
            let Some(tr) = run_or_diverge(simulate_with(model, &eff, &sc, &draw))? else {
                return Ok(None);
            };
            let env = EnvState::default();
            let phis = draw.phis(n);
            let mut acc = [CompensatedSum::default(); 3];
            let mut a = vec![0.0; d * raw.dim_noise().max(1)];
            let mut b = a.clone();
            let gap = |a: &[f64], b: &[f64]| {
                let diff: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
                norm(&diff).powf(p0)
            };
            for k in 1..=n {
                let x = tr.state(k - 1);
                let t_left = tr.grid.point(k - 1);
                let xi = match (sc.variant.is_randomized(), phis) {
                    (true, Some(ph)) => tr.grid.xi_unchecked(k, ph[k - 1]),
                    _ => t_left,
                };
                raw.drift_into(xi, x, &env, &mut a[..d]);
                eff.drift_into(xi, x, &env, &mut b[..d]);
                acc[0].add(gap(&a[..d], &b[..d]));
                let dm = d * raw.dim_noise();
                raw.diffusion_into(t_left, x, &env, &mut a[..dm]);
                eff.diffusion_into(t_left, x, &env, &mut b[..dm]);
                acc[1].add(gap(&a[..dm], &b[..dm]));
                if with_jumps {
                    let mut j = CompensatedSum::default();
                    for (z, w) in &quad {
                        raw.jump_into(t_left, x, z, &env, &mut a[..d]);
                        eff.jump_into(t_left, x, z, &env, &mut b[..d]);
                        j.add(w * gap(&a[..d], &b[..d]));
                    }
                    acc[2].add(j.value());
                }
            }
            Ok(Some(acc.map(|s| s.value() / n as f64)))
        })?;
        let ok: Vec<[f64; 3]> = per_path.iter().flatten().copied().collect();
        let mean = |c: usize| {
            let mut s = CompensatedSum::default();
            ok.iter().for_each(|v| s.add(v[c]));
            if ok.is_empty() {
                f64::NAN
            } else {
                s.value() / ok.len() as f64
            }
        };
        rows.push(TamingGapRow {
            n,
            drift_gap: mean(0),
            diffusion_gap: mean(1),
            jump_gap: mean(2),
            diverged_frac: (per_path.len() - ok.len()) as f64 / cfg.num_paths as f64,
        });
    }
    let horizon = raw.horizon();
    let fit = |get: fn(&TamingGapRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (horizon / r.n as f64, get(r)))
            .collect();
        fit_rate(&pts).ok()
    };
    Ok(TamingGapReport {
        p0,
        drift_fit: fit(|r| r.drift_gap),
        diffusion_fit: fit(|r| r.diffusion_gap),
        jump_fit: fit(|r| r.jump_gap),
        rows,
    })
}
