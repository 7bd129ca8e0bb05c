use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are floored here before taking logs.
pub const PREDICTION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Measurement {
    /// Quantified viral load, copies/mL.
    Measured(f64),
    /// Below the given detection limit, copies/mL.
    CensoredBelow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViralObservation {
    /// Days post infection.
    pub t: f64,
    pub value: Measurement,
}

impl ViralObservation {
    pub fn measured(t: f64, v: f64) -> Result<Self> {
        let obs = Self { t, value: Measurement::Measured(v) };
        obs.validate()?;
        Ok(obs)
    }

    pub fn censored(t: f64, limit: f64) -> Result<Self> {
        let obs = Self { t, value: Measurement::CensoredBelow(limit) };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::Domain(format!("observation time must be finite and >= 0, got {}", self.t)));
        }
        let v = match self.value {
            Measurement::Measured(v) | Measurement::CensoredBelow(v) => v,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("viral load must be finite and > 0, got {v}")));
        }
        Ok(())
    }

    pub fn is_censored(&self) -> bool {
        matches!(self.value, Measurement::CensoredBelow(_))
    }

    /// Squared log10 residual of a prediction against this observation.
    pub fn squared_log_error(&self, predicted: f64) -> f64 {
        let lp = predicted.max(PREDICTION_FLOOR).log10();
        match self.value {
            Measurement::Measured(v) => (lp - v.log10()).powi(2),
            Measurement::CensoredBelow(dl) if predicted > dl => (lp - dl.log10()).powi(2),
            Measurement::CensoredBelow(_) => 0.0,
        }
    }
}

/// Root mean squared log10 error.
pub fn rmsle(predicted: &[f64], observed: &[ViralObservation]) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::Domain("rmsle needs at least one observation".into()));
    }
    if predicted.len() != observed.len() {
        return Err(Error::Contract(format!(
            "rmsle needs equal lengths, got {} predictions for {} observations",
            predicted.len(),
            observed.len()
        )));
    }
    let sum: f64 = predicted.iter().zip(observed).map(|(p, o)| o.squared_log_error(*p)).sum();
    Ok((sum / observed.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decades() {
        let obs = [ViralObservation::measured(1.0, 1e3).unwrap()];
        assert_eq!(rmsle(&[1e3], &obs).unwrap(), 0.0);
        assert!((rmsle(&[1e4], &obs).unwrap() - 1.0).abs() < 1e-12);
        let obs = [ViralObservation::measured(1.0, 1e3).unwrap(), ViralObservation::measured(2.0, 1e2).unwrap()];
        assert!((rmsle(&[1e4, 1e4], &obs).unwrap() - 1.5811).abs() < 1e-4);
    }

    #[test]
    fn censored_points() {
        let obs = [ViralObservation::censored(1.0, 100.0).unwrap()];
        assert_eq!(rmsle(&[50.0], &obs).unwrap(), 0.0);
        assert!((rmsle(&[1000.0], &obs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_and_errors() {
        let obs = [ViralObservation::measured(1.0, 1.0).unwrap()];
        assert!((rmsle(&[0.0], &obs).unwrap() - 12.0).abs() < 1e-12);
        assert!(rmsle(&[], &[]).is_err());
        assert!(rmsle(&[1.0, 2.0], &obs).is_err());
        assert!(ViralObservation::measured(-1.0, 1.0).is_err());
        assert!(ViralObservation::measured(1.0, 0.0).is_err());
    }
}
