use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::registry::load_patient_table;
use crate::analysis::{critical_cells, critical_efficacy, effective_set_contains, reproduction_number, u_infinity};
use crate::dynamics::{integrate, locate_events, EfficacyPair, EfficacySchedule, PatientParameters};
use crate::error::{Error, Result};
use crate::metrics::MetricsOptions;

/// Untreated characteristics of one registry patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub patient: String,
    pub u_c: f64,
    pub u_inf: f64,
    pub r0: f64,
    pub t_v_min: Option<f64>,
    pub t_i_max: Option<f64>,
    pub t_crit: Option<f64>,
    pub t_v_max: Option<f64>,
    pub v_max: f64,
}

pub fn table2_row(patient: &str, params: &PatientParameters, options: &MetricsOptions) -> Result<Table2Row> {
    let traj = integrate(params, &EfficacySchedule::untreated(), options.horizon, &options.integration)?;
    let ev = locate_events(&traj, options.detection_limit)?;
    let v_max = ev.t_v_max.map(|t| traj.state_at(t).v).unwrap_or_else(|| traj.max_viral_load());
    Ok(Table2Row {
        patient: patient.to_string(),
        u_c: critical_cells(params, EfficacyPair::NONE),
        u_inf: u_infinity(params, &params.initial_state(), EfficacyPair::NONE)?,
        r0: reproduction_number(params.u0, params, EfficacyPair::NONE)?,
        t_v_min: ev.t_v_min,
        t_i_max: ev.t_i_max,
        t_crit: ev.t_crit,
        t_v_max: ev.t_v_max,
        v_max,
    })
}

/// Rows for every registry patient, in id order.
pub fn table2(options: &MetricsOptions) -> Result<Vec<Table2Row>> {
    load_patient_table().par_iter().map(|e| table2_row(&e.id, &e.params, options)).collect()
}

/// Threshold quantities for treatment starting at `t_tr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub t_tr: f64,
    pub u: f64,
    pub r: f64,
    pub eta_c: f64,
}

/// `η^c` along the untreated trajectory at the given treatment times.
pub fn threshold_curve(params: &PatientParameters, times: &[f64], options: &MetricsOptions) -> Result<Vec<ThresholdPoint>> {
    let horizon = times.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Domain("treatment times must be finite and >= 0".into()));
    }
    let traj = integrate(params, &EfficacySchedule::untreated(), horizon, &options.integration)?;
    times
        .iter()
        .map(|&t| {
            let u = traj.state_at(t).u;
            Ok(ThresholdPoint { t_tr: t, u, r: reproduction_number(u, params, EfficacyPair::NONE)?, eta_c: critical_efficacy(params, u) })
        })
        .collect()
}

/// One cell of the effective-set map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCell {
    pub eta_beta: f64,
    pub eta_p: f64,
    pub effective: bool,
}

/// Analytic effective-set membership on an `n × n` grid of `k/n`, `k = 0..n`.
pub fn effective_set_grid(params: &PatientParameters, t_tr: f64, n: usize, options: &MetricsOptions) -> Result<Vec<EffectiveCell>> {
    if n == 0 {
        return Err(Error::Domain("grid size must be > 0".into()));
    }
    let traj = integrate(params, &EfficacySchedule::untreated(), t_tr.max(f64::MIN_POSITIVE), &options.integration)?;
    let u = traj.state_at(t_tr).u;
    let axis: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
    Ok(axis
        .iter()
        .flat_map(|&eb| axis.iter().map(move |&ep| (eb, ep)))
        .map(|(eta_beta, eta_p)| EffectiveCell {
            eta_beta,
            eta_p,
            effective: effective_set_contains(params, u, EfficacyPair { eta_beta, eta_p }),
        })
        .collect())
}
