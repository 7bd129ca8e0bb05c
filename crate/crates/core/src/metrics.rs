//! Treatment-effectiveness metrics computed from trajectories.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    crossings, integrate, viral_peak, Direction, EfficacyPair, EfficacySchedule, InfectionState,
    IntegrationOptions, PatientParameters, Trajectory,
};
use crate::error::{Error, Result};

pub const DEFAULT_DETECTION_LIMIT: f64 = 100.0;
pub const DEFAULT_HORIZON: f64 = 100.0;
/// Peak times closer than this (days) count as equal; covers grid-dependent
/// jitter between runs that differ only in where steps fall.
pub const PEAK_TIME_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// log10 difference between the untreated and treated peak loads.
    pub delta_v: f64,
    /// Days with V above the detection limit.
    pub di: f64,
    pub t_peak: f64,
    pub v_max: f64,
    pub effective: bool,
    pub untreated_t_peak: f64,
    pub untreated_v_max: f64,
}

/// Settings shared by the metric evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsOptions {
    pub detection_limit: f64,
    pub horizon: f64,
    pub integration: IntegrationOptions,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            detection_limit: DEFAULT_DETECTION_LIMIT,
            horizon: DEFAULT_HORIZON,
            integration: IntegrationOptions::default(),
        }
    }
}

/// Time of the viral peak; `None` when V is still rising at the horizon.
///
/// A treatment that turns V down at `t_tr` peaks at `t_tr`.
pub fn time_to_peak(traj: &Trajectory) -> Option<f64> {
    let peak = viral_peak(traj);
    (!peak.beyond_horizon).then_some(peak.t)
}

fn peak_load(traj: &Trajectory, which: &str) -> Result<(f64, f64)> {
    let peak = viral_peak(traj);
    if peak.beyond_horizon {
        return Err(Error::MissingEvent(format!(
            "{which} viral peak lies beyond the horizon of {} d",
            traj.horizon()
        )));
    }
    Ok((peak.t, peak.v))
}

/// `log10 V_untreated(t̂V) - log10 V_treated(t̂V,tr)`.
pub fn delta_v(untreated: &Trajectory, treated: &Trajectory) -> Result<f64> {
    let (_, vu) = peak_load(untreated, "untreated")?;
    let (_, vt) = peak_load(treated, "treated")?;
    Ok(vu.log10() - vt.log10())
}

/// Linear-scale variant of [`delta_v`], in copies/mL.
pub fn delta_v_linear(untreated: &Trajectory, treated: &Trajectory) -> Result<f64> {
    let (_, vu) = peak_load(untreated, "untreated")?;
    let (_, vt) = peak_load(treated, "treated")?;
    Ok(vu - vt)
}

/// Total time with V above `detection_limit`, summed over all intervals.
pub fn duration_of_infection(traj: &Trajectory, detection_limit: f64) -> Result<f64> {
    if !(detection_limit.is_finite() && detection_limit > 0.0) {
        return Err(Error::Domain(format!("detection limit must be > 0, got {detection_limit}")));
    }
    let end = traj.end();
    if end.v > detection_limit {
        return Err(Error::HorizonTooShort { t_end: end.t, v_end: end.v, limit: detection_limit });
    }
    let g = |s: &InfectionState, _: EfficacyPair| s.v - detection_limit;
    let ups = crossings(traj, &g, Direction::Rising, 0.0, traj.horizon());
    let downs = crossings(traj, &g, Direction::Falling, 0.0, traj.horizon());

    let mut events: Vec<(f64, bool)> = ups.into_iter().map(|t| (t, true)).chain(downs.into_iter().map(|t| (t, false))).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut total = 0.0;
    let mut open = (traj.start().v > detection_limit).then_some(0.0);
    for (t, rising) in events {
        match (rising, open) {
            (true, None) => open = Some(t),
            (false, Some(t0)) => {
                total += t - t0;
                open = None;
            }
            _ => {}
        }
    }
    Ok(total)
}

/// Simulate untreated and treated runs and score the treatment.
pub fn metrics_report(params: &PatientParameters, schedule: &EfficacySchedule, detection_limit: f64) -> Result<MetricsReport> {
    metrics_report_with(params, schedule, &MetricsOptions { detection_limit, ..Default::default() })
}

pub fn metrics_report_with(
    params: &PatientParameters,
    schedule: &EfficacySchedule,
    options: &MetricsOptions,
) -> Result<MetricsReport> {
    let untreated = integrate(params, &EfficacySchedule::untreated(), options.horizon, &options.integration)?;
    metrics_against(&untreated, schedule, options)
}

/// Like [`metrics_report_with`] but reuses an untreated run of the same patient.
pub fn metrics_against(untreated: &Trajectory, schedule: &EfficacySchedule, options: &MetricsOptions) -> Result<MetricsReport> {
    let treated = integrate(untreated.params(), schedule, options.horizon, &options.integration)?;
    let (tu, vu) = peak_load(untreated, "untreated")?;
    let (tt, vt) = peak_load(&treated, "treated")?;
    let di = duration_of_infection(&treated, options.detection_limit)?;
    Ok(MetricsReport {
        delta_v: vu.log10() - vt.log10(),
        di,
        t_peak: tt,
        v_max: vt,
        effective: tt < tu - PEAK_TIME_TOL,
        untreated_t_peak: tu,
        untreated_v_max: vu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patient(beta: f64, delta: f64, p: f64) -> PatientParameters {
        PatientParameters::new(beta, delta, p, 2.4, 4e8, 0.0, 0.31).unwrap()
    }

    fn run(params: &PatientParameters, sched: &EfficacySchedule) -> Trajectory {
        integrate(params, sched, 100.0, &IntegrationOptions::default()).unwrap()
    }

    #[test]
    fn untreated_peak_times() {
        let c = patient(5.24e-7, 0.51, 0.2);
        assert!((time_to_peak(&run(&c, &EfficacySchedule::untreated())).unwrap() - 4.42).abs() < 0.05);
        let i = patient(3.08e-10, 2.01, 299.0);
        assert!((time_to_peak(&run(&i, &EfficacySchedule::untreated())).unwrap() - 7.09).abs() < 0.05);
    }

    #[test]
    fn effective_treatment_peaks_at_start() {
        let b = patient(1.26e-7, 0.81, 0.2);
        let sched = EfficacySchedule::replication(5.0, 0.95).unwrap();
        assert_eq!(time_to_peak(&run(&b, &sched)), Some(5.0));
    }

    #[test]
    fn identical_runs_have_zero_delta_v() {
        let b = patient(1.26e-7, 0.81, 0.2);
        let t = run(&b, &EfficacySchedule::untreated());
        assert_eq!(delta_v(&t, &t).unwrap(), 0.0);
        let report = metrics_report(&b, &EfficacySchedule::replication(4.0, 0.0).unwrap(), 100.0).unwrap();
        assert!(!report.effective);
        assert!(report.delta_v.abs() < 1e-6);
    }

    #[test]
    fn undetectable_run_has_zero_duration() {
        let b = patient(1.26e-7, 0.81, 0.2);
        let t = run(&b, &EfficacySchedule::replication(0.0, 0.9).unwrap());
        assert_eq!(duration_of_infection(&t, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn short_horizon_is_reported() {
        let b = patient(1.26e-7, 0.81, 0.2);
        let t = integrate(&b, &EfficacySchedule::untreated(), 15.0, &IntegrationOptions::default()).unwrap();
        assert!(matches!(duration_of_infection(&t, 100.0), Err(Error::HorizonTooShort { .. })));
    }

    #[test]
    fn duration_matches_fine_grid() {
        let b = patient(1.26e-7, 0.81, 0.2);
        let t = run(&b, &EfficacySchedule::untreated());
        let di = duration_of_infection(&t, 100.0).unwrap();
        let n = 200_000;
        let dt = 100.0 / n as f64;
        let grid: f64 = (0..n).filter(|k| t.state_at((*k as f64 + 0.5) * dt).v > 100.0).count() as f64 * dt;
        assert!((di - grid).abs() < 0.05);
    }
}
