use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates and initial conditions of one patient.
///
/// Units: `beta` in mL·day⁻¹·copies⁻¹, `delta` and `c` in day⁻¹, `p` in
/// copies·(cell·mL)⁻¹·day⁻¹, `u0`/`i0` in cells and `v0` in copies/mL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientParameters {
    pub beta: f64,
    pub delta: f64,
    pub p: f64,
    pub c: f64,
    pub u0: f64,
    #[serde(default)]
    pub i0: f64,
    pub v0: f64,
}

impl PatientParameters {
    pub fn new(beta: f64, delta: f64, p: f64, c: f64, u0: f64, i0: f64, v0: f64) -> Result<Self> {
        let params = Self { beta, delta, p, c, u0, i0, v0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let strictly_positive = [
            ("beta", self.beta),
            ("delta", self.delta),
            ("p", self.p),
            ("c", self.c),
            ("u0", self.u0),
            ("v0", self.v0),
        ];
        for (name, value) in strictly_positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if !(self.i0.is_finite() && self.i0 >= 0.0) {
            return Err(Error::Domain(format!("i0 must be finite and >= 0, got {}", self.i0)));
        }
        Ok(())
    }

    /// Whether viral clearance is faster than infected-cell death, the regime
    /// in which the two-state reduction is meaningful.
    pub fn reduction_valid(&self) -> bool {
        self.c > self.delta
    }

    /// Same rates, different initial state.
    pub fn with_initial(&self, u0: f64, i0: f64, v0: f64) -> Self {
        Self { u0, i0, v0, ..*self }
    }

    pub fn initial_state(&self) -> InfectionState {
        InfectionState { t: 0.0, u: self.u0, i: self.i0, v: self.v0 }
    }
}

/// Constant inhibition fractions of the infection rate and the replication rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficacyPair {
    pub eta_beta: f64,
    pub eta_p: f64,
}

impl EfficacyPair {
    pub const NONE: EfficacyPair = EfficacyPair { eta_beta: 0.0, eta_p: 0.0 };

    pub fn new(eta_beta: f64, eta_p: f64) -> Result<Self> {
        let pair = Self { eta_beta, eta_p };
        pair.validate()?;
        Ok(pair)
    }

    pub fn replication(eta_p: f64) -> Result<Self> {
        Self::new(0.0, eta_p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("eta_beta", self.eta_beta), ("eta_p", self.eta_p)] {
            if !(0.0..1.0).contains(&value) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1), got {value}")));
            }
        }
        Ok(())
    }

    /// Effective infection rate multiplier `1 - eta_beta`.
    #[inline]
    pub fn beta_factor(&self) -> f64 {
        1.0 - self.eta_beta
    }

    /// Effective replication rate multiplier `1 - eta_p`.
    #[inline]
    pub fn p_factor(&self) -> f64 {
        1.0 - self.eta_p
    }
}

/// Step-function treatment: no inhibition before `t_tr`, constant full
/// inhibition at and after it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficacySchedule {
    pub t_tr: Option<f64>,
    pub eta_beta: f64,
    pub eta_p: f64,
}

impl EfficacySchedule {
    pub fn untreated() -> Self {
        Self::default()
    }

    pub fn new(t_tr: f64, eta_beta: f64, eta_p: f64) -> Result<Self> {
        let schedule = Self { t_tr: Some(t_tr), eta_beta, eta_p };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn replication(t_tr: f64, eta_p: f64) -> Result<Self> {
        Self::new(t_tr, 0.0, eta_p)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.t_tr {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Domain(format!("t_tr must be finite and >= 0, got {t}")));
            }
        }
        self.full().validate()
    }

    /// The constant efficacies applied once treatment has started.
    pub fn full(&self) -> EfficacyPair {
        EfficacyPair { eta_beta: self.eta_beta, eta_p: self.eta_p }
    }

    /// Efficacies in force at time `t`.
    pub fn at(&self, t: f64) -> EfficacyPair {
        match self.t_tr {
            Some(t_tr) if t >= t_tr => self.full(),
            _ => EfficacyPair::NONE,
        }
    }

    /// True when treatment starts and actually inhibits something.
    pub fn is_active(&self) -> bool {
        self.t_tr.is_some() && (self.eta_beta > 0.0 || self.eta_p > 0.0)
    }
}

/// Susceptible cells, infected cells and viral load at time `t` (days).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InfectionState {
    pub t: f64,
    pub u: f64,
    pub i: f64,
    pub v: f64,
}

impl InfectionState {
    pub fn new(t: f64, u: f64, i: f64, v: f64) -> Self {
        Self { t, u, i, v }
    }

    pub(crate) fn check_non_negative(&self) -> Result<()> {
        if self.u < 0.0 || self.i < 0.0 || self.v < 0.0 || !self.u.is_finite() || !self.i.is_finite() || !self.v.is_finite() {
            return Err(Error::Domain(format!(
                "state must be finite and non-negative, got (U, I, V) = ({}, {}, {})",
                self.u, self.i, self.v
            )));
        }
        Ok(())
    }
}

/// Full three-state model or the two-state fast-manifold reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Full,
    Reduced,
}

/// Time derivative of the full state, per day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub du: f64,
    pub di: f64,
    pub dv: f64,
}

/// Right-hand side of the controlled three-state model.
pub fn rhs_full(
    state: &InfectionState,
    params: &PatientParameters,
    eta_beta: f64,
    eta_p: f64,
) -> Result<Derivative> {
    state.check_non_negative()?;
    let pair = EfficacyPair::new(eta_beta, eta_p)?;
    let [du, di, dv] = full_field(params, pair, [state.u, state.i, state.v]);
    Ok(Derivative { du, di, dv })
}

/// Right-hand side of the two-state reduction; returns `(dU, dV)`.
pub fn rhs_reduced(
    u: f64,
    v: f64,
    params: &PatientParameters,
    eta_beta: f64,
    eta_p: f64,
) -> Result<(f64, f64)> {
    if !(u >= 0.0 && v >= 0.0) {
        return Err(Error::Domain(format!("state must be non-negative, got (U, V) = ({u}, {v})")));
    }
    let pair = EfficacyPair::new(eta_beta, eta_p)?;
    let [du, dv] = reduced_field(params, pair, [u, v]);
    Ok((du, dv))
}

#[inline]
pub(crate) fn full_field(params: &PatientParameters, pair: EfficacyPair, y: [f64; 3]) -> [f64; 3] {
    let [u, i, v] = y;
    let infection = params.beta * pair.beta_factor() * u * v;
    [
        -infection,
        infection - params.delta * i,
        params.p * pair.p_factor() * i - params.c * v,
    ]
}

#[inline]
pub(crate) fn reduced_field(params: &PatientParameters, pair: EfficacyPair, y: [f64; 2]) -> [f64; 2] {
    let [u, v] = y;
    let beta_eff = params.beta * pair.beta_factor();
    let growth = params.p * pair.p_factor() * beta_eff / params.c * u - params.delta;
    [-beta_eff * u * v, growth * v]
}
