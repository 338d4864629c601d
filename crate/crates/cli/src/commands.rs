//! Subcommand bodies. Each writes its artifacts under `run.out` and returns
//! the paths together with a short human-readable summary.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use tamed_sde::{
    check_coercivity, check_double_well_monotonicity_empirical, check_monotonicity,
    check_taming_bounds, moment_probe, probe_growth, simulate_ctmc, simulate_path,
    simulate_sdde_switching, strong_error_study_with_progress, BoundReport, ConstraintReport,
    ErrorReport, Generator, GrowthReport, MarkovPath, MonotonicityReport, PathDraw, ProbeConfig,
    SampleBox, SlopeEntry, StreamKey, StreamTag, StudyMetadata,
};

use crate::config::{Format, RunConfig};
use crate::plot::error_plot;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn write(
    cfg: &RunConfig,
    name: &str,
    contents: &str,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.run.out)?;
    let path = cfg.run.out.join(name);
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Rates<'a> {
    slopes: &'a [SlopeEntry],
    metadata: &'a StudyMetadata,
}

/// Strong-error study: `errors.csv` (or `errors.json`), `rates.json` and
/// optionally `errors.svg`.
pub fn converge(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model_spec()?.build()?;
    let study = cfg.study_config();
    study
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let step = (study.num_paths / 20).max(1);
    let progress = |done: usize, total: usize| {
        if done.is_multiple_of(step) || done == total {
            eprintln!("converge: {done}/{total} paths");
        }
    };
    let report: ErrorReport = strong_error_study_with_progress(&model, &study, &progress)?;

    let mut files = Vec::new();
    match cfg.run.format {
        Format::Csv => write(cfg, "errors.csv", &report.to_csv(), &mut files)?,
        Format::Json => write(cfg, "errors.json", &json(&report), &mut files)?,
    }
    let rates = Rates {
        slopes: &report.slopes,
        metadata: &report.metadata,
    };
    write(cfg, "rates.json", &json(&rates), &mut files)?;
    if cfg.study.plot {
        write(cfg, "errors.svg", &error_plot(&report), &mut files)?;
    }

    let mut summary = String::new();
    for s in &report.slopes {
        match s.fit {
            Some(f) => summary.push_str(&format!(
                "p = {}: slope {:.4} (rms residual {:.3})\n",
                s.p, f.slope, f.residual
            )),
            None => summary.push_str(&format!("p = {}: slope unavailable\n", s.p)),
        }
    }
    let fraction = report.max_diverged_frac();
    if fraction > cfg.study.divergence_threshold {
        return Err(CliError::DivergenceThreshold {
            fraction,
            threshold: cfg.study.divergence_threshold,
        });
    }
    Ok(Outcome { files, summary })
}

/// One trajectory at `scheme.n` steps, through the delay/switching stepper
/// when a delay or a generator is configured.
pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model_spec()?.build()?;
    let n = cfg.scheme.n;
    let scheme = cfg.scheme_config(n);
    let sim = &cfg.simulate;
    let draw = PathDraw::generate(&model, cfg.run.seed, sim.path_index, n, &[n])?;
    let horizon = model.coeffs.horizon();
    let trajectory = if sim.delay > 0.0 || sim.switching.is_some() {
        let chain = match &sim.switching {
            Some(sw) => {
                let gen = Generator::from_rates(sw.states, sw.generator.clone())?;
                let key = StreamKey::new(cfg.run.seed, sim.path_index, StreamTag::Markov);
                simulate_ctmc(&gen, sw.initial_state, horizon, key)?
            }
            None => MarkovPath::constant(1, horizon),
        };
        let segment_value = sim.initial_segment.clone();
        let segment = segment_value.map(|c| move |_: f64| c.clone());
        let segment_ref = segment.as_ref().map(|f| f as &dyn Fn(f64) -> Vec<f64>);
        simulate_sdde_switching(&model, &scheme, &draw, sim.delay, segment_ref, &chain)?
    } else {
        simulate_path(&model, &scheme, &draw)?
    };
    let mut files = Vec::new();
    match cfg.run.format {
        Format::Csv => write(cfg, "trajectory.csv", &trajectory.to_csv(), &mut files)?,
        Format::Json => write(cfg, "trajectory.json", &json(&trajectory), &mut files)?,
    }
    let summary = format!("{} steps, x_T = {:?}\n", n, trajectory.terminal());
    Ok(Outcome { files, summary })
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    constraints: Vec<ConstraintReport>,
    empirical_monotonicity: Option<MonotonicityReport>,
    taming_bounds: BoundReport,
    growth: GrowthReport,
}

/// Parameter constraints (double-well only), taming bounds and growth probes.
pub fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.model_spec()?;
    let model = spec.build()?;
    let v = &cfg.verify;
    let mut constraints = Vec::new();
    let mut empirical = None;
    if spec.preset == "double-well" {
        let p = spec.double_well_params();
        for &q in &v.q {
            constraints.push(check_coercivity(q, p.beta_hat, p.sigma_hat, p.gamma_hat)?);
        }
        for &p0 in &v.p0 {
            constraints.push(check_monotonicity(
                p0,
                v.lambda,
                p.beta_hat,
                p.sigma_hat,
                p.gamma_hat,
            )?);
        }
        let bx = SampleBox::new(0.0, 1.0, 2.0)?;
        empirical = Some(check_double_well_monotonicity_empirical(
            p,
            spec.intensity(),
            bx,
            v.samples,
            cfg.run.seed,
        )?);
    }
    let bx = SampleBox::for_coefficients(&model.coeffs);
    let taming = cfg.scheme_config(v.n).taming_config(model.coeffs.zeta())?;
    let taming_bounds = check_taming_bounds(
        &model.coeffs,
        &model.jumps.marks,
        taming,
        bx,
        v.samples,
        cfg.run.seed,
    )?;
    let growth = probe_growth(&model.coeffs, bx, v.samples, cfg.run.seed)?;

    let mut summary = String::new();
    for c in &constraints {
        summary.push_str(&format!(
            "{:<20} {:>7} lhs {:>14.6e} rhs {:>10.4e} margin {:>14.6e} {}\n",
            c.id,
            format!("{:?}", c.scale).to_lowercase(),
            c.lhs,
            c.rhs,
            c.margin,
            if c.satisfied { "satisfied" } else { "VIOLATED" }
        ));
    }
    if let Some(m) = &empirical {
        summary.push_str(&format!(
            "empirical one-sided Lipschitz constant {:.6}\n",
            m.fitted_constant
        ));
    }
    summary.push_str(&format!(
        "taming: {} magnitude violations in {} samples\n",
        taming_bounds.magnitude_violations, taming_bounds.samples
    ));

    let out = VerifyOutput {
        constraints,
        empirical_monotonicity: empirical,
        taming_bounds,
        growth,
    };
    let mut files = Vec::new();
    match cfg.run.format {
        Format::Csv => {
            let mut csv = String::from("id,scale,lhs,rhs,margin,satisfied\n");
            for c in &out.constraints {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.id,
                    format!("{:?}", c.scale).to_lowercase(),
                    c.lhs,
                    c.rhs,
                    c.margin,
                    c.satisfied
                ));
            }
            write(cfg, "verify.csv", &csv, &mut files)?;
        }
        Format::Json => {}
    }
    write(cfg, "verify.json", &json(&out), &mut files)?;
    Ok(Outcome { files, summary })
}

/// `sup_k E|x_{t_k}|^q` per step count.
pub fn moments(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model_spec()?.build()?;
    let m = &cfg.moments;
    let probe = ProbeConfig {
        scheme: cfg.scheme_config(1),
        n_list: m.n_list.clone(),
        num_paths: m.paths,
        base_seed: cfg.run.seed,
        workers: cfg.run.workers,
    };
    let rows = moment_probe(&model, &probe, m.q)?;
    let mut files = Vec::new();
    match cfg.run.format {
        Format::Csv => {
            let mut csv = String::from("n,sup_moment,argmax_k,diverged_frac\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    r.n, r.sup_moment, r.argmax_k, r.diverged_frac
                ));
            }
            write(cfg, "moments.csv", &csv, &mut files)?;
        }
        Format::Json => write(cfg, "moments.json", &json(&rows), &mut files)?,
    }
    let finite: Vec<f64> = rows
        .iter()
        .map(|r| r.sup_moment)
        .filter(|v| v.is_finite())
        .collect();
    let summary = if finite.len() == rows.len() {
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        format!("sup moments bounded, max/min ratio {:.4}\n", max / min)
    } else {
        format!(
            "{} of {} step counts blew up\n",
            rows.len() - finite.len(),
            rows.len()
        )
    };
    Ok(Outcome { files, summary })
}
