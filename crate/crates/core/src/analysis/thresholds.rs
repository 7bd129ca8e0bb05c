use serde::{Deserialize, Serialize};

use super::lambert::lambert_w0;
use crate::dynamics::{EfficacyPair, InfectionState, PatientParameters};
use crate::error::{Error, Result};

/// Reproduction number and final-size constant evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproductionContext {
    pub r: f64,
    pub k: f64,
    pub u_at: f64,
    pub i_at: f64,
    pub v_at: f64,
}

impl ReproductionContext {
    /// Evaluate `R` and `K` at `state` under constant efficacies `eta`.
    ///
    /// `K = (β'/c)(p'·I/δ + V)`, with `β' = β(1-η_β)` and `p' = p(1-η_p)`.
    pub fn at(params: &PatientParameters, state: &InfectionState, eta: EfficacyPair) -> Result<Self> {
        state.check_non_negative()?;
        eta.validate()?;
        let beta_eff = params.beta * eta.beta_factor();
        let p_eff = params.p * eta.p_factor();
        Ok(Self {
            r: state.u * beta_eff * p_eff / (params.c * params.delta),
            k: beta_eff / params.c * (p_eff * state.i / params.delta + state.v),
            u_at: state.u,
            i_at: state.i,
            v_at: state.v,
        })
    }
}

/// `R = U·β(1-η_β)·p(1-η_p) / (c·δ)`.
pub fn reproduction_number(u: f64, params: &PatientParameters, eta: EfficacyPair) -> Result<f64> {
    if !(u.is_finite() && u >= 0.0) {
        return Err(Error::Domain(format!("U must be finite and >= 0, got {u}")));
    }
    eta.validate()?;
    Ok(u * params.beta * eta.beta_factor() * params.p * eta.p_factor() / (params.c * params.delta))
}

/// Susceptible-cell level at which `R = 1` under `eta`.
pub fn critical_cells(params: &PatientParameters, eta: EfficacyPair) -> f64 {
    params.c * params.delta / (params.beta * eta.beta_factor() * params.p * eta.p_factor())
}

/// Single-inhibitor efficacy that brings `R` to 1 at `u_at_tr`; 0 when
/// `u_at_tr` is already at or below the critical level.
pub fn critical_efficacy(params: &PatientParameters, u_at_tr: f64) -> f64 {
    let uc = critical_cells(params, EfficacyPair::NONE);
    if u_at_tr <= uc {
        0.0
    } else {
        1.0 - uc / u_at_tr
    }
}

/// Whether the combined pair keeps `R(t_tr)` strictly below 1.
pub fn effective_set_contains(params: &PatientParameters, u_at_tr: f64, pair: EfficacyPair) -> bool {
    let uc = critical_cells(params, EfficacyPair::NONE);
    u_at_tr * pair.beta_factor() * pair.p_factor() < uc
}

fn final_size_w(ctx: &ReproductionContext) -> Result<f64> {
    let x = -ctx.r * (-(ctx.r + ctx.k)).exp();
    // K >= 0, so x >= -1/e up to rounding.
    let x = x.max(-1.0 / std::f64::consts::E);
    lambert_w0(x)
}

/// Final number of susceptible cells when the efficacies `eta` are held from `state_at` on.
pub fn u_infinity(params: &PatientParameters, state_at: &InfectionState, eta: EfficacyPair) -> Result<f64> {
    let ctx = ReproductionContext::at(params, state_at, eta)?;
    if ctx.r == 0.0 {
        return Ok(0.0);
    }
    let w = final_size_w(&ctx)?;
    Ok(-critical_cells(params, eta) * w)
}

/// Fraction of the susceptible cells present at `state_at_tr` that are
/// eventually infected.
pub fn dead_fraction(params: &PatientParameters, state_at_tr: &InfectionState, eta: EfficacyPair) -> Result<f64> {
    let ctx = ReproductionContext::at(params, state_at_tr, eta)?;
    if !(ctx.r > 0.0) {
        return Err(Error::Domain("dead fraction needs R > 0".into()));
    }
    dead_fraction_from(ctx.r, ctx.k)
}

/// `D = 1 + W(-R·e^{-(R+K)}) / R`.
pub fn dead_fraction_from(r: f64, k: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) || !(k >= 0.0) {
        return Err(Error::Domain(format!("dead fraction needs R > 0 and K >= 0, got R = {r}, K = {k}")));
    }
    let ctx = ReproductionContext { r, k, u_at: 0.0, i_at: 0.0, v_at: 0.0 };
    let d = 1.0 + final_size_w(&ctx)? / r;
    if d < 0.0 && d > -1e-10 {
        Ok(0.0)
    } else {
        Ok(d.clamp(0.0, 1.0))
    }
}
