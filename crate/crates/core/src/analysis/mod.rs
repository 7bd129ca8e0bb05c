//! Reproduction numbers, thresholds, final size and closed-form peak estimates.

mod lambert;
mod peak;
mod thresholds;

pub use lambert::lambert_w0;
pub use peak::{
    early_treatment_time, early_treatment_time_with, lemma_f, maximal_early_treatment_time,
    peak_time_closed_form, peak_viral_load_closed_form, untreated_peak, EarlyTreatmentSearch,
    MaximalEarlyTreatment, PeakApproximation, UntreatedPeak,
};
pub use thresholds::{
    critical_cells, critical_efficacy, dead_fraction, dead_fraction_from, effective_set_contains,
    reproduction_number, u_infinity, ReproductionContext,
};
