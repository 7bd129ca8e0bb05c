//! Patient registry, data ingestion, scenario runs and result export.

mod data;
mod export;
mod registry;
mod reports;
mod scenario;

pub use data::{load_viral_csv, parse_viral_csv};
pub use export::{export_results, load_results_json, write_results, write_rows, ExportFormat};
pub use registry::{load_patient_table, registry_patient, PatientEntry, REGISTRY_C, REGISTRY_U0, REGISTRY_V0};
pub use reports::{
    effective_set_grid, table2, table2_row, threshold_curve, EffectiveCell, Table2Row, ThresholdPoint,
};
pub use scenario::{
    run_scenario, run_scenario_serial, OutputOptions, PatientSpec, Provenance, RunError, RunRecord, ScenarioConfig,
    ScenarioResult, ScheduleSpec, SweepGrid, ThresholdSnapshot, TreatmentTime, MAX_TRAJECTORY_POINTS,
};
