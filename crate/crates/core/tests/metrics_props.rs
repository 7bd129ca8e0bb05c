use antiviral::analysis::critical_efficacy;
use antiviral::dynamics::{integrate, locate_events, EfficacySchedule, IntegrationOptions, Trajectory};
use antiviral::metrics::{duration_of_infection, metrics_against, MetricsOptions};
use antiviral::workbench::{load_patient_table, registry_patient};
use proptest::prelude::*;

fn long() -> MetricsOptions {
    MetricsOptions { horizon: 300.0, ..Default::default() }
}

fn untreated(id: &str) -> Trajectory {
    integrate(&registry_patient(id).unwrap(), &EfficacySchedule::untreated(), 300.0, &IntegrationOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pre_peak_treatment_never_raises_the_peak(k in 0usize..9, frac in 0.0f64..0.99, eta_beta in 0.0f64..0.95, eta_p in 0.0f64..0.95) {
        let id = load_patient_table()[k].id.clone();
        let base = untreated(&id);
        let t_hat = locate_events(&base, 100.0).unwrap().t_v_max.unwrap();
        let sched = EfficacySchedule::new(frac * t_hat, eta_beta, eta_p).unwrap();
        let r = metrics_against(&base, &sched, &long()).unwrap();
        prop_assert!(r.delta_v >= -1e-9, "delta_v {}", r.delta_v);
    }
}

#[test]
fn weaker_subcritical_doses_peak_earlier() {
    for id in ["B", "E"] {
        let base = untreated(id);
        let ev = locate_events(&base, 100.0).unwrap();
        let t_tr = ev.t_detect.unwrap();
        let eta_c = critical_efficacy(base.params(), base.state_at(t_tr).u);
        let mut last = 0.0;
        for k in 0..12 {
            let eta = eta_c * k as f64 / 12.0;
            let r = metrics_against(&base, &EfficacySchedule::replication(t_tr, eta).unwrap(), &long()).unwrap();
            assert!(r.t_peak >= last - 1e-4, "{id} eta {eta}: {} after {last}", r.t_peak);
            last = r.t_peak;
        }
    }
}

#[test]
fn stronger_supercritical_doses_shorten_infection() {
    for id in ["A", "B", "E"] {
        let base = untreated(id);
        let t_tr = locate_events(&base, 100.0).unwrap().t_detect.unwrap();
        let eta_c = critical_efficacy(base.params(), base.state_at(t_tr).u);
        let mut last = f64::INFINITY;
        for k in 1..=10 {
            let eta = eta_c + (0.99 - eta_c) * k as f64 / 10.0;
            let r = metrics_against(&base, &EfficacySchedule::replication(t_tr, eta).unwrap(), &long()).unwrap();
            assert!(r.di <= last + 1e-6, "{id} eta {eta}: DI {} after {last}", r.di);
            last = r.di;
        }
    }
}

#[test]
fn duration_agrees_with_fine_grid() {
    for (id, t_tr, eta) in [("B", 4.0, 0.73), ("E", 9.0, 0.54), ("A", 5.0, 0.95)] {
        let p = registry_patient(id).unwrap();
        let traj = integrate(&p, &EfficacySchedule::replication(t_tr, eta).unwrap(), 300.0, &IntegrationOptions::default()).unwrap();
        let di = duration_of_infection(&traj, 100.0).unwrap();
        let n = 300_000;
        let dt = 300.0 / n as f64;
        let grid = (0..n).filter(|&k| traj.state_at((k as f64 + 0.5) * dt).v > 100.0).count() as f64 * dt;
        assert!((di - grid).abs() < 0.05, "{id}: {di} vs {grid}");
    }
}

#[test]
fn detection_start_is_effective_exactly_above_the_threshold() {
    for e in load_patient_table() {
        let base = untreated(&e.id);
        let t_tr = locate_events(&base, 100.0).unwrap().t_detect.unwrap();
        let eta_c = critical_efficacy(&e.params, base.state_at(t_tr).u);
        for eta in [eta_c - 0.2, eta_c - 0.03, eta_c + 0.03, (eta_c + 0.1).min(0.99)] {
            if !(0.0..1.0).contains(&eta) {
                continue;
            }
            let r = metrics_against(&base, &EfficacySchedule::replication(t_tr, eta).unwrap(), &long()).unwrap();
            assert_eq!(r.effective, eta > eta_c, "{} eta {eta} (eta_c {eta_c})", e.id);
        }
    }
}

#[test]
fn effective_start_beats_two_logs() {
    let base = untreated("A");
    let t_tr = locate_events(&base, 100.0).unwrap().t_detect.unwrap();
    let eta_c = critical_efficacy(base.params(), base.state_at(t_tr).u);
    let r = metrics_against(&base, &EfficacySchedule::replication(t_tr, (eta_c + 0.05).min(0.99)).unwrap(), &long()).unwrap();
    assert!(r.effective && r.delta_v > 2.0, "{r:?}");
}

#[test]
fn subcritical_gain_is_smaller_than_effective_gain() {
    let base = untreated("B");
    let t_tr = locate_events(&base, 100.0).unwrap().t_detect.unwrap();
    let weak = metrics_against(&base, &EfficacySchedule::replication(t_tr, 0.73).unwrap(), &long()).unwrap();
    let strong = metrics_against(&base, &EfficacySchedule::replication(t_tr, 0.9).unwrap(), &long()).unwrap();
    assert!(weak.delta_v > 0.0 && weak.delta_v < strong.delta_v);
    assert!(!weak.effective && strong.effective);
    assert_eq!(strong.t_peak, t_tr);
}

#[test]
fn subcritical_early_start_delays_peak() {
    let base = untreated("E");
    let t_hat = locate_events(&base, 100.0).unwrap().t_v_max.unwrap();
    let r = metrics_against(&base, &EfficacySchedule::replication(6.0, 0.54).unwrap(), &long()).unwrap();
    assert!(!r.effective && r.t_peak > t_hat);
}
