use antiviral::dynamics::{
    integrate, locate_events, rhs_full, viral_peak, EfficacySchedule, IntegrationOptions,
    PatientParameters,
};
use antiviral::workbench::{load_patient_table, registry_patient};
use proptest::prelude::*;

fn perturbed() -> impl Strategy<Value = PatientParameters> {
    (0usize..9, 0.8f64..1.25, 0.8f64..1.25, 0.8f64..1.25).prop_map(|(k, fb, fd, fp)| {
        let mut p = load_patient_table()[k].params;
        p.beta *= fb;
        p.delta *= fd;
        p.p *= fp;
        p
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn states_stay_non_negative_and_u_never_grows(
        params in perturbed(),
        t_tr in 0.0f64..15.0,
        eta_beta in 0.0f64..0.99,
        eta_p in 0.0f64..0.99,
    ) {
        let sched = EfficacySchedule::new(t_tr, eta_beta, eta_p).unwrap();
        let traj = integrate(&params, &sched, 60.0, &IntegrationOptions::default()).unwrap();
        let samples = traj.samples();
        for s in &samples {
            prop_assert!(s.u >= 0.0 && s.i >= 0.0 && s.v >= 0.0);
        }
        for w in samples.windows(2) {
            prop_assert!(w[1].u <= w[0].u);
        }
    }

    #[test]
    fn viral_load_falls_after_untreated_peak(params in perturbed()) {
        let traj = integrate(&params, &EfficacySchedule::untreated(), 60.0, &IntegrationOptions::default()).unwrap();
        let t_hat = locate_events(&traj, 100.0).unwrap().t_v_max.unwrap();
        let n = 2000;
        let grid: Vec<f64> = (1..=n).map(|k| t_hat + (60.0 - t_hat) * k as f64 / n as f64).collect();
        let v: Vec<f64> = grid.iter().map(|&t| traj.state_at(t).v).collect();
        for w in v.windows(2) {
            // Strict decrease until V underflows to the solver's resolution.
            prop_assert!(w[1] < w[0] || w[0] < 1e-30);
        }
    }
}

#[test]
fn registry_event_ordering() {
    for e in load_patient_table() {
        let traj = integrate(&e.params, &EfficacySchedule::untreated(), 100.0, &IntegrationOptions::default()).unwrap();
        let ev = locate_events(&traj, 100.0).unwrap();
        let (a, b, c, d) = (ev.t_v_min.unwrap(), ev.t_i_max.unwrap(), ev.t_crit.unwrap(), ev.t_v_max.unwrap());
        assert!(a < b && b < c && c < d, "{}: {a} {b} {c} {d}", e.id);
    }
}

#[test]
fn fast_manifold_holds_when_clearance_dominates() {
    let opts = IntegrationOptions::default();
    let mut checked = 0;
    for e in load_patient_table().into_iter().filter(|e| e.params.c / e.params.delta >= 3.0) {
        let p = e.params;
        let traj = integrate(&p, &EfficacySchedule::untreated(), 30.0, &opts).unwrap();
        let t0 = 5.0 / p.c;
        for k in 0..=500 {
            let t = t0 + (30.0 - t0) * k as f64 / 500.0;
            let s = traj.state_at(t);
            let proxy = p.c / p.p * s.v;
            assert!((s.i - proxy).abs() <= 0.05 * s.i, "{} at t={t}: I={} cV/p={proxy}", e.id, s.i);
        }
        checked += 1;
    }
    assert!(checked >= 2);
}

#[test]
fn halving_tolerance_barely_moves_the_peak() {
    for e in load_patient_table() {
        let coarse = IntegrationOptions { rel_tol: 1e-6, abs_tol: 1e-6, ..Default::default() };
        let fine = IntegrationOptions { rel_tol: 5e-7, abs_tol: 5e-7, ..Default::default() };
        let peak = |o: &IntegrationOptions| viral_peak(&integrate(&e.params, &EfficacySchedule::untreated(), 40.0, o).unwrap()).t;
        let (a, b) = (peak(&coarse), peak(&fine));
        assert!((a - b).abs() < 1e-3, "{}: {a} vs {b}", e.id);
    }
}

#[test]
fn detection_time_sits_on_the_limit() {
    let b = registry_patient("B").unwrap();
    let traj = integrate(&b, &EfficacySchedule::untreated(), 100.0, &IntegrationOptions::default()).unwrap();
    let ev = locate_events(&traj, 100.0).unwrap();
    let t = ev.t_detect.unwrap();
    assert!((traj.state_at(t).v - 100.0).abs() <= 1.0);
    assert!(traj.derivative_at(t).dv > 0.0);
    assert!(t < ev.t_v_max.unwrap());
}

#[test]
fn subcritical_start_has_no_peak() {
    let b = registry_patient("B").unwrap();
    // R(0) < 1 from the start.
    let sched = EfficacySchedule::replication(0.0, 0.9).unwrap();
    let traj = integrate(&b, &sched, 30.0, &IntegrationOptions::default()).unwrap();
    let ev = locate_events(&traj, 100.0).unwrap();
    assert!(ev.t_v_max.is_none() || ev.t_v_max == Some(0.0));
    let v: Vec<f64> = (1..290).map(|k| traj.state_at(0.5 + k as f64 * 0.1).v).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn hand_evaluated_derivative() {
    let a = registry_patient("A").unwrap();
    let s = antiviral::dynamics::InfectionState::new(0.0, 4e8, 0.0, 0.31);
    let d = rhs_full(&s, &a, 0.0, 0.0).unwrap();
    assert!((d.du + 16.74).abs() < 1e-9);
    assert!((d.di - 16.74).abs() < 1e-9);
    assert!((d.dv + 0.744).abs() < 1e-12);
}
