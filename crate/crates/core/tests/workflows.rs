use ddopt::ga::{run_ga, write_history_csv, GaConfig};
use ddopt::metrics::{evaluate, fit_scaling};
use ddopt::model::{BathSpec, PulseModel, SystemModel};
use ddopt::sequence::{cyclic_ok, parse_family_spec, repeat, xy4};
use ddopt::sweep::{landscape_2d, sweep_1d, write_csv, Axis, ModelKind, Param, Params, SweepPlan};

fn plan(axes: Vec<Axis>, fixed: Params, kind: ModelKind, sequences: &[&str]) -> SweepPlan {
    SweepPlan {
        axes,
        fixed,
        sequences: sequences.iter().map(|s| s.to_string()).collect(),
        pulse_model: kind,
        n_spins: 4,
        n_seeds: 3,
        seed: 11,
    }
}

#[test]
fn ga_run_beats_repeated_xy4_and_keeps_levels_monotone() {
    let mut cfg = GaConfig::new(8, PulseModel::Ideal, 0.5, 1e-3, 1e-5);
    cfg.seed = 4;
    let res = run_ga(cfg.clone()).unwrap();
    assert!(cyclic_ok(&res.best));
    assert_eq!(res.best.len(), 8);

    let sys = SystemModel::random(&BathSpec::new(4, 0, cfg.j, cfg.beta).unwrap()).unwrap();
    let baseline = evaluate(&repeat(&xy4(0.5), 2), &sys, &PulseModel::Ideal).unwrap().fitness;
    assert!(res.best_q >= baseline - 1e-9, "GA {} < 2xXY4 {}", res.best_q, baseline);

    for w in res.level_bests.windows(2) {
        assert!(w[1].q >= w[0].q - 1e-9, "level best dropped: {:?}", w);
        assert!(w[1].groups > w[0].groups);
    }
    let evals: Vec<usize> = res.history.iter().map(|h| h.evaluations).collect();
    assert!(evals.windows(2).all(|w| w[1] >= w[0]));

    let mut buf = Vec::new();
    write_history_csv(&res.history, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), res.history.len() + 1);
    assert!(text.starts_with("level,generation,"));
}

#[test]
fn sweep_csv_feeds_scaling_fit() {
    let axis = Axis {
        param: Param::TauD,
        min: 1e-3,
        max: 1e-1,
        points_per_decade: 3,
    };
    let fixed = Params {
        j: Some(1e-3),
        beta: Some(1e-6),
        ..Default::default()
    };
    let p = plan(vec![axis], fixed, ModelKind::Ideal, &["xy4", "ga8a"]);
    let rows = sweep_1d(&p, &p.templates().unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 7);

    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["x", "y", "sequence", "tau_d", "tau_c", "D_mean", "D_stderr", "n_seeds", "reason"]
    );
    let mut by_seq: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let d: f64 = rec[5].parse().unwrap();
        by_seq.entry(rec[2].to_string()).or_default().push((x, d));
    }
    let s4 = fit_scaling(&by_seq["xy4"]).unwrap().slope;
    let s8 = fit_scaling(&by_seq["ga8a"]).unwrap().slope;
    assert!((s4 - 2.0).abs() < 0.2, "xy4 slope {s4}");
    assert!((s8 - 3.0).abs() < 0.2, "ga8a slope {s8}");
}

#[test]
fn landscape_winner_is_the_smallest_distance_in_each_cell() {
    let axes = vec![
        Axis {
            param: Param::TauD,
            min: 1e-2,
            max: 1.0,
            points_per_decade: 1,
        },
        Axis {
            param: Param::Epsilon,
            min: 1e-3,
            max: 1e-1,
            points_per_decade: 1,
        },
    ];
    let fixed = Params {
        j: Some(1e-3),
        beta: Some(1e-6),
        ..Default::default()
    };
    let p = plan(axes, fixed, ModelKind::FlipAngle, &["xy4", "rga8a", "cdd2"]);
    let (cells, rows) = landscape_2d(&p, &p.templates().unwrap()).unwrap();
    assert_eq!(cells.len(), 9);
    for (cell, chunk) in cells.iter().zip(rows.chunks(3)) {
        let best = chunk.iter().filter_map(|r| r.d_mean).fold(f64::INFINITY, f64::min);
        assert_eq!(cell.d_best, Some(best));
        assert!(chunk.iter().any(|r| r.sequence == cell.winner && r.d_mean == Some(best)));
    }
    // At the largest flip error, the robust sequence should win.
    let worst = cells.iter().filter(|c| c.y > 0.05).collect::<Vec<_>>();
    assert!(worst.iter().all(|c| c.winner != "xy4"), "{worst:?}");
}

#[test]
fn fixed_cycle_time_marks_infeasible_cells() {
    let axis = Axis {
        param: Param::TauP,
        min: 1e-3,
        max: 1.0,
        points_per_decade: 1,
    };
    let fixed = Params {
        j: Some(1e-3),
        beta: Some(1e-6),
        tau_c: Some(1.0),
        ..Default::default()
    };
    let p = plan(vec![axis], fixed, ModelKind::FiniteWidth, &["cdd2"]);
    let rows = sweep_1d(&p, &p.templates().unwrap()).unwrap();
    // cdd2 has more than 4 pulses, so tau_p = 0.1 and 1 leave no free time.
    let ok: Vec<bool> = rows.iter().map(|r| r.d_mean.is_some()).collect();
    assert_eq!(ok, [true, true, false, false]);
    assert!(rows[3].reason.contains("infeasible"), "{}", rows[3].reason);
    for r in rows.iter().filter(|r| r.d_mean.is_some()) {
        assert!((r.tau_c.unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn family_specs_build_cyclic_sequences() {
    for spec in ["ga8a:X,Y", "cdd3", "qdd3,3", "udd4:Y", "ga8a_level2", "rga8a_level2", "rga64a:Y,X"] {
        let s = parse_family_spec(spec, 0.1).unwrap();
        assert!(cyclic_ok(&s), "{spec}");
    }
    assert!(parse_family_spec("ga4:X,X", 0.1).is_err());
    assert!(parse_family_spec("cdd", 0.1).is_err());
}
