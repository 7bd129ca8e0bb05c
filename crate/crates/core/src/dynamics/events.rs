use serde::{Deserialize, Serialize};

use super::model::{EfficacyPair, InfectionState};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Probes per solver step when scanning for sign changes.
const PROBES_PER_STEP: usize = 8;
/// Bisection stops once the bracket is this narrow (days).
pub const EVENT_TIME_TOL: f64 = 1e-6;

/// Characteristic times of one run, in days. Absent events are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EventTimes {
    /// Early local minimum of V.
    pub t_v_min: Option<f64>,
    /// Peak of I.
    pub t_i_max: Option<f64>,
    /// U crosses the critical cell count (R drops through 1).
    pub t_crit: Option<f64>,
    /// Peak of V.
    pub t_v_max: Option<f64>,
    /// First upward crossing of the detection limit.
    pub t_detect: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Rising,
    Falling,
}

impl Direction {
    fn matches(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Rising => a < 0.0 && b >= 0.0,
            Direction::Falling => a > 0.0 && b <= 0.0,
        }
    }
}

/// A scalar function of the state and the efficacies in force.
pub(crate) type Indicator<'a> = dyn Fn(&InfectionState, EfficacyPair) -> f64 + 'a;

/// All crossings of `g` in `direction` within `[from, to]`, in time order.
///
/// Each step is probed on a uniform sub-grid; a bracket is refined by
/// bisection inside its step. A sign change across the efficacy jump
/// (same time, different efficacies) is reported at the jump.
pub(crate) fn crossings(traj: &Trajectory, g: &Indicator<'_>, direction: Direction, from: f64, to: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for step in traj.steps.iter() {
        let d = &step.dense;
        if d.t1() < from || d.t0 > to {
            prev = None;
            continue;
        }
        let eval = |t: f64| {
            let [u, i, v] = d.eval(t);
            let s = InfectionState { t, u: u.max(0.0), i: i.max(0.0), v: v.max(0.0) };
            g(&s, step.pair)
        };
        for k in 0..=PROBES_PER_STEP {
            let t = d.t0 + d.h * k as f64 / PROBES_PER_STEP as f64;
            let t = if k == PROBES_PER_STEP { d.t1() } else { t };
            if t < from || t > to {
                continue;
            }
            let value = eval(t);
            if let Some((tp, vp)) = prev {
                if direction.matches(vp, value) {
                    if t == tp {
                        out.push(t);
                    } else {
                        out.push(bisect(&eval, tp, vp, t));
                    }
                }
            }
            prev = Some((t, value));
        }
    }
    out
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, fa: f64, mut b: f64) -> f64 {
    let sa = fa.signum();
    while b - a > EVENT_TIME_TOL {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn check_grid(traj: &Trajectory) -> Result<()> {
    for w in traj.steps.windows(2) {
        let (a, b) = (&w[0].dense, &w[1].dense);
        if !(a.h > 0.0 && b.h > 0.0 && (a.t1() - b.t0).abs() <= 1e-12 * b.t0.abs().max(1.0)) {
            return Err(Error::Contract(format!(
                "trajectory time grid is not contiguous and increasing near t = {}",
                b.t0
            )));
        }
    }
    Ok(())
}

/// Reproduction number under the given efficacies at state `s`.
pub(crate) fn reproduction_at(traj: &Trajectory, s: &InfectionState, pair: EfficacyPair) -> f64 {
    let p = traj.params();
    s.u * p.beta * pair.beta_factor() * p.p * pair.p_factor() / (p.c * p.delta)
}

/// Time of the largest local maximum of `value` among the falling
/// crossings of its derivative `slope` after `from`.
fn highest_peak(
    traj: &Trajectory,
    slope: &Indicator<'_>,
    value: impl Fn(&InfectionState) -> f64,
    from: f64,
) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for t in crossings(traj, slope, Direction::Falling, from, traj.horizon()) {
        if t >= traj.horizon() {
            continue;
        }
        let v = value(&traj.state_at(t));
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((t, v));
        }
    }
    best.map(|(t, _)| t)
}

/// Global maximum of the viral load over the simulated window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViralPeak {
    pub t: f64,
    pub v: f64,
    /// The maximum sits at the horizon with V still rising, so the true
    /// peak lies later.
    pub beyond_horizon: bool,
}

/// Locate the largest viral load, including both window endpoints.
pub fn viral_peak(traj: &Trajectory) -> ViralPeak {
    let horizon = traj.horizon();
    let dv = |s: &InfectionState, pair: EfficacyPair| traj.derivative(s, pair).dv;
    let start = traj.start();
    let end = traj.end();
    let mut best = (0.0, start.v);
    for t in crossings(traj, &dv, Direction::Falling, 0.0, horizon) {
        let v = traj.state_at(t).v;
        if v > best.1 {
            best = (t, v);
        }
    }
    let end_rising = traj.derivative(&end, traj.schedule().at(horizon)).dv > 0.0;
    if end.v > best.1 {
        best = (horizon, end.v);
    }
    ViralPeak { t: best.0, v: best.1, beyond_horizon: best.0 == horizon && end_rising }
}

/// Locate the characteristic event times of a trajectory.
///
/// Peaks of V and I are the highest local maxima, so a short dip right
/// after treatment starts does not mask a later, larger peak. The early
/// minimum of V is searched before `t_crit` only.
pub fn locate_events(traj: &Trajectory, detection_limit: f64) -> Result<EventTimes> {
    check_grid(traj)?;
    if !(detection_limit.is_finite() && detection_limit > 0.0) {
        return Err(Error::Domain(format!("detection limit must be > 0, got {detection_limit}")));
    }
    let horizon = traj.horizon();

    let dv = |s: &InfectionState, pair: EfficacyPair| traj.derivative(s, pair).dv;
    let di = |s: &InfectionState, pair: EfficacyPair| traj.derivative(s, pair).di;
    let r_minus_one = |s: &InfectionState, pair: EfficacyPair| reproduction_at(traj, s, pair) - 1.0;
    let above_limit = |s: &InfectionState, _: EfficacyPair| s.v - detection_limit;

    let t_crit = crossings(traj, &r_minus_one, Direction::Falling, 0.0, horizon).into_iter().find(|&t| t < horizon);
    let window_end = t_crit.unwrap_or(horizon);
    let t_v_min = crossings(traj, &dv, Direction::Rising, 0.0, window_end).into_iter().find(|&t| t > 0.0 && t < horizon);
    let t_v_max = highest_peak(traj, &dv, |s| s.v, t_v_min.unwrap_or(0.0));
    let t_i_max = highest_peak(traj, &di, |s| s.i, 0.0);
    let t_detect = if traj.start().v >= detection_limit {
        None
    } else {
        crossings(traj, &above_limit, Direction::Rising, 0.0, horizon).into_iter().next()
    };

    Ok(EventTimes { t_v_min, t_i_max, t_crit, t_v_max, t_detect })
}

#[cfg(test)]
mod tests {
    use super::super::model::{EfficacySchedule, PatientParameters};
    use super::super::trajectory::{integrate, IntegrationOptions};
    use super::*;

    fn patient_b() -> PatientParameters {
        PatientParameters::new(1.26e-7, 0.81, 0.2, 2.4, 4e8, 0.0, 0.31).unwrap()
    }

    #[test]
    fn patient_b_untreated_events() {
        let traj = integrate(&patient_b(), &EfficacySchedule::untreated(), 30.0, &IntegrationOptions::default()).unwrap();
        let ev = locate_events(&traj, 100.0).unwrap();
        assert!((ev.t_v_min.unwrap() - 0.24).abs() < 0.05);
        assert!((ev.t_i_max.unwrap() - 11.81).abs() < 0.05);
        assert!((ev.t_crit.unwrap() - 11.90).abs() < 0.05);
        assert!((ev.t_v_max.unwrap() - 12.20).abs() < 0.05);
        let v = traj.state_at(ev.t_detect.unwrap()).v;
        assert!((v - 100.0).abs() < 1.0);
    }

    #[test]
    fn potent_treatment_peaks_at_start() {
        let sched = EfficacySchedule::replication(4.0, 0.95).unwrap();
        let traj = integrate(&patient_b(), &sched, 30.0, &IntegrationOptions::default()).unwrap();
        let ev = locate_events(&traj, 100.0).unwrap();
        assert_eq!(ev.t_v_max, Some(4.0));
        assert_eq!(ev.t_crit, Some(4.0));
    }

    #[test]
    fn subcritical_start_has_no_peak() {
        let sched = EfficacySchedule::replication(0.0, 0.9).unwrap();
        let traj = integrate(&patient_b(), &sched, 30.0, &IntegrationOptions::default()).unwrap();
        let ev = locate_events(&traj, 100.0).unwrap();
        assert_eq!(ev.t_v_max, None);
        assert_eq!(ev.t_v_min, None);
        assert_eq!(ev.t_detect, None);
    }

    #[test]
    fn rejects_bad_detection_limit() {
        let traj = integrate(&patient_b(), &EfficacySchedule::untreated(), 5.0, &IntegrationOptions::default()).unwrap();
        assert!(locate_events(&traj, 0.0).is_err());
    }
}
