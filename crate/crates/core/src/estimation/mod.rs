//! Fitting patient parameters to viral-load data.

mod de;
mod fit;
mod observation;

pub use de::{minimize, DeOutcome, DeSettings};
pub use fit::{
    fit_cost, fit_patient, profile_ci, profile_threshold, FitConfig, FitResult, FreeBound, FreeParam,
    ProfileInterval, ProfileSettings,
};
pub use observation::{rmsle, Measurement, ViralObservation, PREDICTION_FLOOR};
