use crate::dynamics::PatientParameters;
use crate::error::{Error, Result};

/// Initial susceptible cells shared by every registry patient.
pub const REGISTRY_U0: f64 = 4e8;
/// Initial viral load shared by every registry patient, copies/mL.
pub const REGISTRY_V0: f64 = 0.31;
/// Viral clearance rate shared by every registry patient, per day.
pub const REGISTRY_C: f64 = 2.4;

// (id, β, δ, p)
const ROWS: [(&str, f64, f64, f64); 9] = [
    ("A", 1.35e-7, 0.61, 0.2),
    ("B", 1.26e-7, 0.81, 0.2),
    ("C", 5.24e-7, 0.51, 0.2),
    ("D", 7.92e-10, 1.21, 361.6),
    ("E", 1.51e-7, 2.01, 0.2),
    ("F", 5.74e-10, 0.81, 382.0),
    ("G", 1.23e-7, 0.91, 0.2),
    ("H", 2.62e-9, 1.61, 278.2),
    ("I", 3.08e-10, 2.01, 299.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PatientEntry {
    pub id: String,
    pub params: PatientParameters,
}

/// The nine built-in patients, in id order.
pub fn load_patient_table() -> Vec<PatientEntry> {
    ROWS.iter()
        .map(|&(id, beta, delta, p)| PatientEntry {
            id: id.to_string(),
            params: PatientParameters { beta, delta, p, c: REGISTRY_C, u0: REGISTRY_U0, i0: 0.0, v0: REGISTRY_V0 },
        })
        .collect()
}

/// Look up a registry patient by id (case-insensitive).
pub fn registry_patient(id: &str) -> Result<PatientParameters> {
    load_patient_table()
        .into_iter()
        .find(|e| e.id.eq_ignore_ascii_case(id.trim()))
        .map(|e| e.params)
        .ok_or_else(|| Error::Config(format!("unknown patient '{id}' (expected A to I)")))
}
