use tamed_sde::{
    double_well_preset, fit_rate, moment_probe, strong_error_study, taming_gap_probe,
    CoefficientSet, DoubleWellParams, ErrorReport, ErrorTime, InitialLaw, JumpModel, MarkLaw,
    Model, ProbeConfig, SchemeVariant, StudyConfig,
};

fn ode_decay() -> Model {
    let c = CoefficientSet::zero(1, 1, 1.0)
        .unwrap()
        .with_drift(|_, x, _, out| out[0] = -x[0]);
    Model::new(
        "ode-decay",
        c,
        JumpModel::none(),
        InitialLaw::Fixed(vec![1.0]),
    )
    .unwrap()
}

fn double_well() -> Model {
    double_well_preset(DoubleWellParams::default(), 1.0, 2.0).unwrap()
}

fn small_study(seed: u64) -> StudyConfig {
    StudyConfig {
        levels: vec![16, 32, 64, 128],
        reference_n: 1024,
        num_paths: 200,
        ..StudyConfig::desk_scale(seed)
    }
}

fn assert_lp_ordering(report: &ErrorReport) {
    for pair in report.rows.windows(2) {
        if pair[0].dt == pair[1].dt {
            assert!(pair[0].p < pair[1].p);
            assert!(pair[1].error >= pair[0].error * (1.0 - 1e-12), "{pair:?}");
        }
    }
}

#[test]
fn ode_mode_converges_at_first_order() {
    let cfg = StudyConfig {
        variant: SchemeVariant::RandomizedUntamed,
        reference_variant: SchemeVariant::RandomizedUntamed,
        num_paths: 20,
        ..StudyConfig::desk_scale(3)
    };
    let report = strong_error_study(&ode_decay(), &cfg).unwrap();
    for p in [1.0, 2.0, 3.0, 4.0] {
        let slope = report.slope(p).unwrap();
        assert!((0.9..=1.1).contains(&slope), "p = {p}: {slope}");
    }
    let e = (-1f64).exp();
    for n in cfg.levels {
        let x = (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((x - e).abs() < 2.0 / n as f64);
    }
}

#[test]
fn level_at_reference_has_zero_error() {
    let cfg = StudyConfig {
        levels: vec![64, 256],
        reference_n: 256,
        num_paths: 40,
        ..small_study(1)
    };
    let report = strong_error_study(&double_well(), &cfg).unwrap();
    for row in report.rows.iter().filter(|r| r.dt == 1.0 / 256.0) {
        assert_eq!(row.error, 0.0);
        assert_eq!(row.stderr, 0.0);
    }
    assert!(report
        .rows
        .iter()
        .filter(|r| r.dt == 1.0 / 64.0)
        .all(|r| r.error > 0.0));
}

#[test]
fn double_well_report_is_ordered_and_monotone() {
    for error_time in [ErrorTime::Terminal, ErrorTime::MaxOverGrid] {
        let cfg = StudyConfig {
            error_time,
            ..small_study(2)
        };
        let report = strong_error_study(&double_well(), &cfg).unwrap();
        assert_eq!(report.rows.len(), 16);
        assert_lp_ordering(&report);
        for p in &cfg.p_list {
            let rows: Vec<_> = report.rows_for(*p).collect();
            for w in rows.windows(2) {
                assert!(w[1].error <= w[0].error + 3.0 * (w[0].stderr + w[1].stderr));
            }
        }
        assert_eq!(report.max_diverged_frac(), 0.0);
    }
}

#[test]
fn max_over_grid_dominates_terminal_error() {
    let terminal = strong_error_study(&double_well(), &small_study(4)).unwrap();
    let sup = strong_error_study(
        &double_well(),
        &StudyConfig {
            error_time: ErrorTime::MaxOverGrid,
            ..small_study(4)
        },
    )
    .unwrap();
    for (a, b) in terminal.rows.iter().zip(&sup.rows) {
        assert!(b.error >= a.error);
    }
}

#[test]
fn deterministic_errors_have_zero_spread() {
    // σ = γ = 0 with a time-constant drift: every path sees the same error
    let c = CoefficientSet::zero(1, 1, 1.0)
        .unwrap()
        .with_drift(|_, x, _, out| out[0] = x[0] - x[0].powi(3))
        .with_zeta(2.0);
    let m = Model::new("cubic", c, JumpModel::none(), InitialLaw::Fixed(vec![1.5])).unwrap();
    let report = strong_error_study(&m, &small_study(5)).unwrap();
    for row in &report.rows {
        assert!(row.error > 0.0);
        assert_eq!(row.stderr, 0.0, "{row:?}");
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let base = small_study(6);
    let one = strong_error_study(
        &double_well(),
        &StudyConfig {
            workers: 1,
            ..base.clone()
        },
    )
    .unwrap();
    let three = strong_error_study(&double_well(), &StudyConfig { workers: 3, ..base }).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.to_csv(), three.to_csv());
}

#[test]
fn csv_cells_round_trip() {
    let report = strong_error_study(&double_well(), &small_study(7)).unwrap();
    let csv = report.to_csv();
    let data: Vec<&str> = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .collect();
    assert_eq!(data.len(), report.rows.len());
    for (line, row) in data.iter().zip(&report.rows) {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(
            v,
            vec![row.dt, row.p, row.error, row.stderr, row.diverged_frac]
        );
    }
    assert_eq!(
        csv.lines().filter(|l| l.starts_with("# slope p=")).count(),
        4
    );
}

#[test]
fn untamed_blow_up_is_counted_not_dropped() {
    let c = CoefficientSet::zero(1, 1, 1.0)
        .unwrap()
        .with_drift(|_, x, _, out| out[0] = -x[0].powi(3))
        .with_diffusion(|_, _, _, out| out[0] = 1.0)
        .with_zeta(2.0);
    let m = Model::new("cubic", c, JumpModel::none(), InitialLaw::Fixed(vec![10.0])).unwrap();
    let cfg = StudyConfig {
        variant: SchemeVariant::Classical,
        levels: vec![8, 16, 32],
        reference_n: 4096,
        num_paths: 40,
        ..StudyConfig::desk_scale(8)
    };
    let report = strong_error_study(&m, &cfg).unwrap();
    let coarse: Vec<_> = report.rows.iter().filter(|r| r.dt == 0.125).collect();
    assert!(coarse.iter().all(|r| r.diverged_frac == 1.0 && !r.usable));
    assert!(report.to_csv().contains("# unusable dt=0.125 p=1"));
}

#[test]
fn frozen_l1_column_regression() {
    let l1 = [
        0.0505168099,
        0.0354740285,
        0.0249509386,
        0.0175644721,
        0.0123686827,
        0.0087087569,
        0.0061346808,
        0.0043477010,
        0.0031492921,
        0.0023850943,
    ];
    let rows: Vec<(f64, f64)> = l1
        .iter()
        .enumerate()
        .map(|(i, &e)| (2f64.powi(-8 - i as i32), e))
        .collect();
    let fit = fit_rate(&rows).unwrap();
    assert!((fit.slope - 0.4955166927733022).abs() < 1e-12);
    assert!((fit.intercept + 0.37378612117188936).abs() < 1e-12);
}

#[test]
fn moment_probe_on_constant_model() {
    let m = Model::new(
        "zero",
        CoefficientSet::zero(1, 1, 1.0).unwrap(),
        JumpModel::none(),
        InitialLaw::Fixed(vec![-1.7]),
    )
    .unwrap();
    let cfg = ProbeConfig::new(SchemeVariant::RandomizedTamed, vec![4, 16], 10, 1);
    for row in moment_probe(&m, &cfg, 3.0).unwrap() {
        assert_eq!(row.sup_moment, 1.7f64.powf(3.0));
        assert_eq!(row.diverged_frac, 0.0);
    }
}

#[test]
fn moment_probe_flags_classical_blow_up() {
    let c = CoefficientSet::zero(1, 1, 1.0)
        .unwrap()
        .with_drift(|_, x, _, out| out[0] = -x[0].powi(3))
        .with_zeta(2.0);
    let m = Model::new("cubic", c, JumpModel::none(), InitialLaw::Fixed(vec![10.0])).unwrap();
    let rows = moment_probe(
        &m,
        &ProbeConfig::new(SchemeVariant::Classical, vec![8], 4, 1),
        4.0,
    )
    .unwrap();
    assert_eq!(rows[0].sup_moment, f64::INFINITY);
    assert_eq!(rows[0].diverged_frac, 1.0);
    let tamed = moment_probe(
        &m,
        &ProbeConfig::new(SchemeVariant::RandomizedTamed, vec![8], 4, 1),
        4.0,
    )
    .unwrap();
    assert_eq!(tamed[0].sup_moment, 1e4);
}

#[test]
fn taming_gap_vanishes_without_taming() {
    let cfg = ProbeConfig::new(SchemeVariant::RandomizedUntamed, vec![16, 32, 64], 20, 1);
    let report = taming_gap_probe(&double_well(), &cfg, 2.0).unwrap();
    for row in &report.rows {
        assert_eq!(
            (row.drift_gap, row.diffusion_gap, row.jump_gap),
            (0.0, 0.0, 0.0)
        );
    }
    let zero = Model::new(
        "zero",
        CoefficientSet::zero(1, 1, 1.0).unwrap().with_zeta(2.0),
        JumpModel::new(1.0, MarkLaw::StandardNormal { dim: 1 }).unwrap(),
        InitialLaw::Fixed(vec![0.0]),
    )
    .unwrap();
    let tamed = ProbeConfig::new(SchemeVariant::RandomizedTamed, vec![16, 32, 64], 20, 1);
    for row in taming_gap_probe(&zero, &tamed, 2.0).unwrap().rows {
        assert_eq!(
            (row.drift_gap, row.diffusion_gap, row.jump_gap),
            (0.0, 0.0, 0.0)
        );
    }
}

#[test]
fn double_well_taming_gap_decays() {
    let n_list: Vec<usize> = (6..=12).map(|e| 1 << e).collect();
    let mut exponents = Vec::new();
    for seed in [1, 2] {
        let cfg = ProbeConfig::new(SchemeVariant::RandomizedTamed, n_list.clone(), 200, seed);
        let report = taming_gap_probe(&double_well(), &cfg, 2.0).unwrap();
        let fit = report.drift_fit.unwrap();
        eprintln!(
            "seed {seed}: drift {:?} diffusion {:?} jump {:?}",
            report.drift_fit, report.diffusion_fit, report.jump_fit
        );
        exponents.push(fit.slope);
    }
    for e in &exponents {
        assert!(*e >= 0.9, "{exponents:?}");
    }
    assert!((exponents[0] - exponents[1]).abs() < 0.05);
}
