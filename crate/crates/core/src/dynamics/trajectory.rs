use serde::{Deserialize, Serialize};

use super::model::{
    full_field, reduced_field, Derivative, EfficacyPair, EfficacySchedule, InfectionState, ModelKind,
    PatientParameters,
};
use super::solver::{integrate_span, DenseStep, StepControl};
use crate::error::{Error, Result};

/// Tolerances and step limits for [`integrate`].
///
/// `abs_tol` is relative to each component's initial magnitude, so the
/// same value works for cells (~1e8) and copies/mL (~1e-1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationOptions {
    pub model_kind: ModelKind,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Step cap used during the first `fine_until` days, where the early
    /// viral minimum sits.
    pub fine_step: f64,
    pub fine_until: f64,
    pub max_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            model_kind: ModelKind::Full,
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            max_step: 0.25,
            fine_step: 0.01,
            fine_until: 1.0,
            max_steps: 1_000_000,
        }
    }
}

impl IntegrationOptions {
    pub fn reduced() -> Self {
        Self { model_kind: ModelKind::Reduced, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol), ("max_step", self.max_step), ("fine_step", self.fine_step)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Domain("max_steps must be > 0".into()));
        }
        Ok(())
    }
}

/// One accepted solver step in (U, I, V) coordinates with the efficacies in force.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub dense: DenseStep<3>,
    pub pair: EfficacyPair,
}

/// Dense solution of one simulation run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: PatientParameters,
    schedule: EfficacySchedule,
    model_kind: ModelKind,
    horizon: f64,
    pub(crate) steps: Vec<Step>,
}

impl Trajectory {
    pub fn params(&self) -> &PatientParameters {
        &self.params
    }

    pub fn schedule(&self) -> &EfficacySchedule {
        &self.schedule
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model_kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn start(&self) -> InfectionState {
        self.state_in(&self.steps[0], 0.0)
    }

    pub fn end(&self) -> InfectionState {
        let last = self.steps.last().expect("trajectory has at least one step");
        self.state_in(last, self.horizon)
    }

    fn state_in(&self, step: &Step, t: f64) -> InfectionState {
        let [u, i, v] = step.dense.eval(t);
        InfectionState { t, u: u.max(0.0), i: i.max(0.0), v: v.max(0.0) }
    }

    /// Index of the step covering `t`; at a step boundary the later step wins.
    fn step_index(&self, t: f64) -> usize {
        let idx = self.steps.partition_point(|s| s.dense.t0 <= t);
        idx.saturating_sub(1)
    }

    /// Interpolated state at `t`, clamped to `[0, horizon]`.
    pub fn state_at(&self, t: f64) -> InfectionState {
        let t = t.clamp(0.0, self.horizon);
        self.state_in(&self.steps[self.step_index(t)], t)
    }

    /// States at every accepted step boundary.
    pub fn samples(&self) -> Vec<InfectionState> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(self.start());
        for s in &self.steps {
            out.push(self.state_in(s, s.dense.t1()));
        }
        out
    }

    /// `n` states on a uniform time grid over `[0, horizon]`.
    pub fn resample(&self, n: usize) -> Vec<InfectionState> {
        match n {
            0 => Vec::new(),
            1 => vec![self.start()],
            _ => (0..n).map(|k| self.state_at(self.horizon * k as f64 / (n - 1) as f64)).collect(),
        }
    }

    /// Time derivative of the state under the given efficacies.
    pub fn derivative(&self, state: &InfectionState, pair: EfficacyPair) -> Derivative {
        derivative_for(self.model_kind, &self.params, pair, state)
    }

    /// Time derivative at `t` using the efficacies in force there.
    pub fn derivative_at(&self, t: f64) -> Derivative {
        let s = self.state_at(t);
        self.derivative(&s, self.schedule.at(s.t))
    }

    /// Largest sampled viral load.
    pub fn max_viral_load(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| (0..=8).map(move |k| s.dense.eval(s.dense.t0 + s.dense.h * k as f64 / 8.0)[2]))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn derivative_for(
    kind: ModelKind,
    params: &PatientParameters,
    pair: EfficacyPair,
    state: &InfectionState,
) -> Derivative {
    match kind {
        ModelKind::Full => {
            let [du, di, dv] = full_field(params, pair, [state.u, state.i, state.v]);
            Derivative { du, di, dv }
        }
        ModelKind::Reduced => {
            let [du, dv] = reduced_field(params, pair, [state.u, state.v]);
            let p_eff = params.p * pair.p_factor();
            Derivative { du, di: params.c / p_eff * dv, dv }
        }
    }
}

/// Integrate the model from the patient's initial state over `[0, horizon]`.
///
/// The time span is split at `t_tr`, so no step straddles the efficacy jump.
/// The reduced model reconstructs `I = c·V / (p(1 - η_p))`.
pub fn integrate(
    params: &PatientParameters,
    schedule: &EfficacySchedule,
    horizon: f64,
    options: &IntegrationOptions,
) -> Result<Trajectory> {
    params.validate()?;
    schedule.validate()?;
    options.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be finite and > 0, got {horizon}")));
    }

    let mut spans: Vec<(f64, f64, EfficacyPair)> = Vec::with_capacity(2);
    match schedule.t_tr {
        Some(t_tr) if t_tr <= 0.0 => spans.push((0.0, horizon, schedule.full())),
        Some(t_tr) if t_tr < horizon => {
            spans.push((0.0, t_tr, EfficacyPair::NONE));
            spans.push((t_tr, horizon, schedule.full()));
        }
        _ => spans.push((0.0, horizon, EfficacyPair::NONE)),
    }

    let u_scale = params.u0;
    let v_scale = params.v0;
    let i_scale = params.i0.max(params.c * params.v0 / params.p);

    let mut steps = Vec::new();
    let mut state = [params.u0, params.i0, params.v0];

    for (t0, t1, pair) in spans {
        match options.model_kind {
            ModelKind::Full => {
                let ctl = StepControl {
                    rel_tol: options.rel_tol,
                    abs_tol: [options.abs_tol * u_scale, options.abs_tol * i_scale, options.abs_tol * v_scale],
                    max_step: options.max_step,
                    fine_step: options.fine_step,
                    fine_until: options.fine_until,
                    max_steps: options.max_steps,
                    non_negative: true,
                };
                let span = integrate_span(|y: &[f64; 3]| full_field(params, pair, *y), t0, state, t1, &ctl)
                    .map_err(|f| Error::Integration {
                        reason: f.reason,
                        last_good: InfectionState::new(f.t, f.y[0], f.y[1], f.y[2]),
                    })?;
                if let Some(last) = span.last() {
                    state = last.eval(t1);
                }
                steps.extend(span.into_iter().map(|dense| Step { dense, pair }));
            }
            ModelKind::Reduced => {
                let ctl = StepControl {
                    rel_tol: options.rel_tol,
                    abs_tol: [options.abs_tol * u_scale, options.abs_tol * v_scale],
                    max_step: options.max_step,
                    fine_step: options.fine_step,
                    fine_until: options.fine_until,
                    max_steps: options.max_steps,
                    non_negative: true,
                };
                let to_i = params.c / (params.p * pair.p_factor());
                let span = integrate_span(|y: &[f64; 2]| reduced_field(params, pair, *y), t0, [state[0], state[2]], t1, &ctl)
                    .map_err(|f| Error::Integration {
                        reason: f.reason,
                        last_good: InfectionState::new(f.t, f.y[0], to_i * f.y[1], f.y[1]),
                    })?;
                if let Some(last) = span.last() {
                    let [u, v] = last.eval(t1);
                    state = [u, to_i * v, v];
                }
                steps.extend(
                    span.into_iter().map(|d| Step { dense: d.map(|&[u, v]| [u, to_i * v, v]), pair }),
                );
            }
        }
    }

    Ok(Trajectory { params: *params, schedule: *schedule, model_kind: options.model_kind, horizon, steps })
}
