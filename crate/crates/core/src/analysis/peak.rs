use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::thresholds::critical_efficacy;
use crate::dynamics::{
    integrate, locate_events, viral_peak, EfficacyPair, EfficacySchedule, InfectionState, IntegrationOptions,
    PatientParameters,
};
use crate::error::{Error, Result};
use crate::metrics::PEAK_TIME_TOL;

/// Closed-form estimate of the treated viral peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakApproximation {
    pub k1: f64,
    /// Days; negative when `R > 1`.
    pub k2: f64,
    pub t_peak: f64,
    pub v_peak: f64,
    /// `f(βV/δ) > βV/δ` at the treatment state, where the estimate is
    /// known to decrease with `R`.
    pub within_lemma_interval: bool,
}

fn treated_r(params: &PatientParameters, state: &InfectionState, eta_p: f64) -> Result<f64> {
    state.check_non_negative()?;
    EfficacyPair::replication(eta_p)?;
    let r = state.u * params.beta * params.p * (1.0 - eta_p) / (params.c * params.delta);
    // Values within rounding of 1 count as exactly 1.
    if r < 1.0 - 1e-12 {
        return Err(Error::Domain(format!("closed-form peak needs R(t_tr) >= 1, got {r}")));
    }
    Ok(if r <= 1.0 + 1e-12 { 1.0 } else { r })
}

/// Peak time after a replication-inhibiting treatment started at `state_at_tr.t`.
///
/// `k1 = V / ((δ/β)(1-R)² + R·V)`, `k2 = 1 / (δ(1-R) - β·V)`,
/// `t_peak = k2·ln(k1) + t_tr`.
pub fn peak_time_closed_form(
    params: &PatientParameters,
    state_at_tr: &InfectionState,
    eta_p: f64,
) -> Result<PeakApproximation> {
    let r = treated_r(params, state_at_tr, eta_p)?;
    let v = state_at_tr.v;
    if !(v > 0.0) {
        return Err(Error::Domain("closed-form peak needs V(t_tr) > 0".into()));
    }
    let (beta, delta) = (params.beta, params.delta);
    let k1 = v / (delta / beta * (1.0 - r).powi(2) + r * v);
    let k2 = 1.0 / (delta * (1.0 - r) - beta * v);
    let t_peak = if r == 1.0 { state_at_tr.t } else { k2 * k1.ln() + state_at_tr.t };
    let v_peak = peak_viral_load_closed_form(params, state_at_tr, eta_p)?;
    let x = beta * v / delta;
    let within_lemma_interval = r > 1.0 && lemma_f(v, r, params) > x;
    Ok(PeakApproximation { k1, k2, t_peak, v_peak, within_lemma_interval })
}

/// Viral load at the treated peak:
/// `V + (p(1-η_p)/c)·U - (δ/β)(ln R + 1)`.
pub fn peak_viral_load_closed_form(params: &PatientParameters, state_at_tr: &InfectionState, eta_p: f64) -> Result<f64> {
    let r = treated_r(params, state_at_tr, eta_p)?;
    let p_eff = params.p * (1.0 - eta_p);
    Ok(state_at_tr.v + p_eff / params.c * state_at_tr.u - params.delta / params.beta * (r.ln() + 1.0))
}

/// `f(x) = [(1-R)² + R·x]·exp((-2(1-R)² + 2x(1-R) - x²) / ((1-R)² + R·x))` with `x = βV/δ`.
pub fn lemma_f(v: f64, r: f64, params: &PatientParameters) -> f64 {
    let x = params.beta * v / params.delta;
    let a = (1.0 - r).powi(2);
    let den = a + r * x;
    den * ((-2.0 * a + 2.0 * x * (1.0 - r) - x * x) / den).exp()
}

/// Search settings for [`early_treatment_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyTreatmentSearch {
    /// Coarse scan spacing over treatment times (days).
    pub scan_step: f64,
    /// Bisection tolerance on the treatment time (days).
    pub tol: f64,
    pub horizon: f64,
    pub integration: IntegrationOptions,
}

impl Default for EarlyTreatmentSearch {
    fn default() -> Self {
        Self { scan_step: 0.25, tol: 0.01, horizon: 100.0, integration: IntegrationOptions::default() }
    }
}

/// Untreated reference times needed by the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UntreatedPeak {
    pub t_v_min: f64,
    pub t_v_max: f64,
}

pub fn untreated_peak(params: &PatientParameters, search: &EarlyTreatmentSearch) -> Result<UntreatedPeak> {
    let traj = integrate(params, &EfficacySchedule::untreated(), search.horizon, &search.integration)?;
    let ev = locate_events(&traj, 1.0)?;
    match (ev.t_v_min, ev.t_v_max) {
        (Some(t_v_min), Some(t_v_max)) => Ok(UntreatedPeak { t_v_min, t_v_max }),
        _ => Err(Error::MissingEvent("untreated run has no early minimum and peak of V".into())),
    }
}

/// Whether starting `eta_p` at `t_tr` pushes the global viral peak past `t_v_max`.
fn peak_delayed(
    params: &PatientParameters,
    t_tr: f64,
    eta_p: f64,
    t_v_max: f64,
    search: &EarlyTreatmentSearch,
) -> Result<bool> {
    let sched = EfficacySchedule::replication(t_tr, eta_p)?;
    let traj = integrate(params, &sched, search.horizon, &search.integration)?;
    let peak = viral_peak(&traj);
    Ok(peak.beyond_horizon || peak.t > t_v_max + PEAK_TIME_TOL)
}

/// Latest treatment start in `(ťV, t̂V)` for which `eta_p` still delays the viral peak.
///
/// Scans forward from the early minimum; the delayed starts are assumed to
/// form one interval beginning there. Returns `None` when no start delays
/// the peak.
pub fn early_treatment_time(
    params: &PatientParameters,
    eta_p: f64,
    search: &EarlyTreatmentSearch,
) -> Result<Option<f64>> {
    let reference = untreated_peak(params, search)?;
    early_treatment_time_with(params, eta_p, &reference, search)
}

pub fn early_treatment_time_with(
    params: &PatientParameters,
    eta_p: f64,
    reference: &UntreatedPeak,
    search: &EarlyTreatmentSearch,
) -> Result<Option<f64>> {
    EfficacyPair::replication(eta_p)?;
    if !(search.scan_step > 0.0 && search.tol > 0.0) {
        return Err(Error::Domain("scan_step and tol must be > 0".into()));
    }
    let UntreatedPeak { t_v_min, t_v_max } = *reference;
    let delayed = |t: f64| peak_delayed(params, t, eta_p, t_v_max, search);

    let mut lo = t_v_min;
    if !delayed(lo)? {
        return Ok(None);
    }
    let mut hi = None;
    let mut t = lo + search.scan_step;
    while t < t_v_max {
        if delayed(t)? {
            lo = t;
        } else {
            hi = Some(t);
            break;
        }
        t += search.scan_step;
    }
    let mut hi = hi.unwrap_or(t_v_max);
    while hi - lo > search.tol {
        let mid = 0.5 * (lo + hi);
        if delayed(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Result of maximizing the early treatment time over the admissible efficacies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximalEarlyTreatment {
    pub eta_p: f64,
    pub t_e: f64,
    pub t_v_max: f64,
}

impl MaximalEarlyTreatment {
    pub fn ratio(&self) -> f64 {
        self.t_e / self.t_v_max
    }
}

/// Largest early treatment time over `eta_p` on an even grid of `n_eta`
/// points in `(0, η^c(ťV))`.
pub fn maximal_early_treatment_time(
    params: &PatientParameters,
    n_eta: usize,
    search: &EarlyTreatmentSearch,
) -> Result<Option<MaximalEarlyTreatment>> {
    if n_eta == 0 {
        return Err(Error::Domain("n_eta must be > 0".into()));
    }
    let reference = untreated_peak(params, search)?;
    let traj = integrate(params, &EfficacySchedule::untreated(), reference.t_v_min + 1.0, &search.integration)?;
    let eta_c = critical_efficacy(params, traj.state_at(reference.t_v_min).u);
    let etas: Vec<f64> = (1..=n_eta).map(|k| eta_c * k as f64 / (n_eta + 1) as f64).collect();
    let results = etas
        .par_iter()
        .map(|&eta| early_treatment_time_with(params, eta, &reference, search).map(|t| t.map(|t| (eta, t))))
        .collect::<Result<Vec<_>>>()?;
    Ok(results
        .into_iter()
        .flatten()
        .fold(None, |best: Option<(f64, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map(|(eta_p, t_e)| MaximalEarlyTreatment { eta_p, t_e, t_v_max: reference.t_v_max }))
}
