//! Controlled target-cell-limited model, its integration and event location.

mod events;
mod model;
mod solver;
mod trajectory;

pub use events::{locate_events, viral_peak, EventTimes, ViralPeak, EVENT_TIME_TOL};
pub use model::{
    rhs_full, rhs_reduced, Derivative, EfficacyPair, EfficacySchedule, InfectionState, ModelKind,
    PatientParameters,
};
pub use trajectory::{integrate, IntegrationOptions, Trajectory};

pub(crate) use events::{crossings, Direction};
