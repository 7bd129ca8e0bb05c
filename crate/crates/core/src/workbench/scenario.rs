use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::registry::registry_patient;
use crate::analysis::{
    critical_efficacy, effective_set_contains, maximal_early_treatment_time, reproduction_number, EarlyTreatmentSearch,
};
use crate::dynamics::{
    integrate, locate_events, viral_peak, EfficacyPair, EfficacySchedule, EventTimes, InfectionState,
    IntegrationOptions, ModelKind, PatientParameters, Trajectory,
};
use crate::error::{Error, Result};
use crate::metrics::{duration_of_infection, DEFAULT_DETECTION_LIMIT, PEAK_TIME_TOL};

/// Upper bound on exported trajectory points per run.
pub const MAX_TRAJECTORY_POINTS: usize = 2000;

/// Treatment start, either absolute or tied to a feature of the untreated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreatmentTime {
    None,
    At(f64),
    /// First time the untreated load reaches the detection limit.
    DetectionLimit,
    /// Fraction of the maximal early treatment time.
    EarlyFraction(f64),
    /// Fraction of the untreated peak time.
    PeakFraction(f64),
}

impl fmt::Display for TreatmentTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreatmentTime::None => write!(f, "none"),
            TreatmentTime::At(t) => write!(f, "{t}"),
            TreatmentTime::DetectionLimit => write!(f, "t_dl"),
            TreatmentTime::EarlyFraction(k) => write!(f, "{k}*t_e"),
            TreatmentTime::PeakFraction(k) => write!(f, "{k}*t_peak"),
        }
    }
}

impl FromStr for TreatmentTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("invalid treatment time '{s}'"));
        let fraction = |prefix: &str| -> Result<f64> {
            let k: f64 = if prefix.is_empty() { 1.0 } else { prefix.trim().parse().map_err(|_| bad())? };
            if k.is_finite() && k >= 0.0 {
                Ok(k)
            } else {
                Err(bad())
            }
        };
        match s {
            "none" => return Ok(TreatmentTime::None),
            "t_dl" => return Ok(TreatmentTime::DetectionLimit),
            _ => {}
        }
        if let Some(head) = s.strip_suffix("t_e") {
            return Ok(TreatmentTime::EarlyFraction(fraction(head.trim_end().strip_suffix('*').unwrap_or(head))?));
        }
        if let Some(head) = s.strip_suffix("t_peak") {
            return Ok(TreatmentTime::PeakFraction(fraction(head.trim_end().strip_suffix('*').unwrap_or(head))?));
        }
        let t: f64 = s.parse().map_err(|_| bad())?;
        TreatmentTime::at(t)
    }
}

impl TreatmentTime {
    pub fn at(t: f64) -> Result<Self> {
        if t.is_finite() && t >= 0.0 {
            Ok(TreatmentTime::At(t))
        } else {
            Err(Error::Config(format!("treatment time must be finite and >= 0, got {t}")))
        }
    }
}

impl Serialize for TreatmentTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TreatmentTime::At(t) => s.serialize_f64(*t),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for TreatmentTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(t) => TreatmentTime::at(t),
            Raw::Int(t) => TreatmentTime::at(t as f64),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Registry id, list of registry ids, or inline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatientSpec {
    Id(String),
    Ids(Vec<String>),
    Inline(PatientParameters),
}

impl PatientSpec {
    /// Labelled parameter sets, in declaration order.
    pub fn resolve(&self) -> Result<Vec<(String, PatientParameters)>> {
        let out = match self {
            PatientSpec::Id(id) => vec![(id.trim().to_ascii_uppercase(), registry_patient(id)?)],
            PatientSpec::Ids(ids) => {
                if ids.is_empty() {
                    return Err(Error::Config("patient list is empty".into()));
                }
                ids.iter()
                    .map(|id| Ok((id.trim().to_ascii_uppercase(), registry_patient(id)?)))
                    .collect::<Result<_>>()?
            }
            PatientSpec::Inline(p) => {
                p.validate()?;
                vec![("inline".to_string(), *p)]
            }
        };
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub t_tr: TreatmentTime,
    #[serde(default)]
    pub eta_beta: f64,
    #[serde(default)]
    pub eta_p: f64,
}

/// Cartesian grid over treatment start and the two efficacies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub t_tr: Vec<TreatmentTime>,
    #[serde(default = "zero_axis")]
    pub eta_beta: Vec<f64>,
    #[serde(default = "zero_axis")]
    pub eta_p: Vec<f64>,
}

fn zero_axis() -> Vec<f64> {
    vec![0.0]
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Config(format!("sweep axis '{name}' is empty")));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!("sweep axis '{name}' must be strictly increasing")));
    }
    Ok(())
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.t_tr.is_empty() {
            return Err(Error::Config("sweep axis 't_tr' is empty".into()));
        }
        let numeric: Vec<f64> =
            self.t_tr.iter().filter_map(|t| if let TreatmentTime::At(v) = t { Some(*v) } else { None }).collect();
        check_axis("t_tr", &numeric).or_else(|e| if numeric.is_empty() { Ok(()) } else { Err(e) })?;
        for (i, a) in self.t_tr.iter().enumerate() {
            if !matches!(a, TreatmentTime::At(_)) && self.t_tr[..i].contains(a) {
                return Err(Error::Config(format!("sweep axis 't_tr' repeats '{a}'")));
            }
        }
        check_axis("eta_beta", &self.eta_beta)?;
        check_axis("eta_p", &self.eta_p)?;
        for &e in self.eta_beta.iter().chain(&self.eta_p) {
            EfficacyPair::replication(e)?;
        }
        Ok(())
    }

    /// Grid points with `eta_p` varying fastest.
    pub fn points(&self) -> Vec<ScheduleSpec> {
        let mut out = Vec::with_capacity(self.t_tr.len() * self.eta_beta.len() * self.eta_p.len());
        for &t_tr in &self.t_tr {
            for &eta_beta in &self.eta_beta {
                for &eta_p in &self.eta_p {
                    out.push(ScheduleSpec { t_tr, eta_beta, eta_p });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub events: bool,
    pub thresholds: bool,
    pub trajectory: bool,
    /// Points per exported trajectory, at most [`MAX_TRAJECTORY_POINTS`].
    pub trajectory_points: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self { events: true, thresholds: true, trajectory: false, trajectory_points: 500 }
    }
}

fn default_detection_limit() -> f64 {
    DEFAULT_DETECTION_LIMIT
}

fn default_t_e_grid() -> usize {
    20
}

/// One scenario file. `patient` and `horizon` are required; exactly one of
/// `schedule` and `sweep` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub patient: PatientSpec,
    pub horizon: f64,
    #[serde(default = "default_detection_limit")]
    pub detection_limit: f64,
    #[serde(default)]
    pub model_kind: ModelKind,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub outputs: OutputOptions,
    #[serde(default)]
    pub seed: u64,
    /// Efficacy grid size used to resolve `t_e`.
    #[serde(default = "default_t_e_grid")]
    pub t_e_grid: usize,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be finite and > 0, got {}", self.horizon)));
        }
        if !(self.detection_limit.is_finite() && self.detection_limit > 0.0) {
            return Err(Error::Config(format!("detection_limit must be finite and > 0, got {}", self.detection_limit)));
        }
        if self.t_e_grid == 0 {
            return Err(Error::Config("t_e_grid must be > 0".into()));
        }
        let points = self.outputs.trajectory_points;
        if self.outputs.trajectory && !(2..=MAX_TRAJECTORY_POINTS).contains(&points) {
            return Err(Error::Config(format!("trajectory_points must lie in [2, {MAX_TRAJECTORY_POINTS}], got {points}")));
        }
        match (&self.schedule, &self.sweep) {
            (Some(s), None) => EfficacyPair::new(s.eta_beta, s.eta_p).map(|_| ()),
            (None, Some(g)) => g.validate(),
            (Some(_), Some(_)) => Err(Error::Config("give either 'schedule' or 'sweep', not both".into())),
            (None, None) => Err(Error::Config("one of 'schedule' or 'sweep' is required".into())),
        }?;
        self.patient.resolve().map(|_| ())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn points(&self) -> Vec<ScheduleSpec> {
        match (&self.schedule, &self.sweep) {
            (Some(s), _) => vec![*s],
            (None, Some(g)) => g.points(),
            (None, None) => Vec::new(),
        }
    }

    fn integration(&self) -> IntegrationOptions {
        IntegrationOptions { model_kind: self.model_kind, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for RunError {
    fn from(e: &Error) -> Self {
        Self { kind: e.kind().to_string(), message: e.to_string() }
    }
}

/// Threshold quantities at the treatment start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSnapshot {
    pub u_at_tr: f64,
    /// Reproduction number at `t_tr` without treatment.
    pub r_at_tr: f64,
    /// Reproduction number at `t_tr` under the scheduled efficacies.
    pub r_treated: f64,
    pub eta_c: f64,
    pub in_effective_set: bool,
}

/// Outcome of one grid point. Fields that could not be computed are `None`
/// and the first failure is kept in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub patient: String,
    pub t_tr_spec: TreatmentTime,
    pub t_tr: Option<f64>,
    pub eta_beta: f64,
    pub eta_p: f64,
    pub t_peak: Option<f64>,
    pub v_max: Option<f64>,
    pub delta_v_log10: Option<f64>,
    pub di: Option<f64>,
    pub effective: Option<bool>,
    pub events: Option<EventTimes>,
    pub thresholds: Option<ThresholdSnapshot>,
    pub trajectory: Option<Vec<InfectionState>>,
    pub error: Option<RunError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub provenance: Provenance,
    pub config: ScenarioConfig,
    pub runs: Vec<RunRecord>,
}

/// Untreated reference quantities for one patient.
struct Reference {
    label: String,
    params: PatientParameters,
    untreated: Trajectory,
    t_peak: Option<f64>,
    v_peak: f64,
    t_detect: Option<f64>,
    t_e: Option<std::result::Result<f64, RunError>>,
}

fn reference_for(label: String, params: PatientParameters, config: &ScenarioConfig, need_t_e: bool) -> Result<Reference> {
    let integration = config.integration();
    let untreated = integrate(&params, &EfficacySchedule::untreated(), config.horizon, &integration)?;
    let events = locate_events(&untreated, config.detection_limit)?;
    let peak = viral_peak(&untreated);
    let t_e = need_t_e.then(|| {
        let search = EarlyTreatmentSearch { horizon: config.horizon, integration, ..Default::default() };
        match maximal_early_treatment_time(&params, config.t_e_grid, &search) {
            Ok(Some(m)) => Ok(m.t_e),
            Ok(None) => Err(RunError::from(&Error::MissingEvent("no treatment start delays the peak".into()))),
            Err(e) => Err(RunError::from(&e)),
        }
    });
    Ok(Reference {
        label,
        params,
        t_peak: (!peak.beyond_horizon).then_some(peak.t),
        v_peak: peak.v,
        t_detect: events.t_detect,
        untreated,
        t_e,
    })
}

fn resolve_time(spec: TreatmentTime, r: &Reference) -> std::result::Result<Option<f64>, RunError> {
    let missing = |what: &str| RunError::from(&Error::MissingEvent(format!("untreated run has no {what}")));
    match spec {
        TreatmentTime::None => Ok(None),
        TreatmentTime::At(t) => Ok(Some(t)),
        TreatmentTime::DetectionLimit => r.t_detect.map(Some).ok_or_else(|| missing("detection-limit crossing")),
        TreatmentTime::PeakFraction(k) => r.t_peak.map(|t| Some(k * t)).ok_or_else(|| missing("viral peak")),
        TreatmentTime::EarlyFraction(k) => match &r.t_e {
            Some(Ok(t)) => Ok(Some(k * t)),
            Some(Err(e)) => Err(e.clone()),
            None => Err(missing("early treatment time")),
        },
    }
}

fn run_point(config: &ScenarioConfig, r: &Reference, point: &ScheduleSpec) -> RunRecord {
    let mut rec = RunRecord {
        patient: r.label.clone(),
        t_tr_spec: point.t_tr,
        t_tr: None,
        eta_beta: point.eta_beta,
        eta_p: point.eta_p,
        t_peak: None,
        v_max: None,
        delta_v_log10: None,
        di: None,
        effective: None,
        events: None,
        thresholds: None,
        trajectory: None,
        error: None,
    };
    let t_tr = match resolve_time(point.t_tr, r) {
        Ok(t) => t,
        Err(e) => {
            rec.error = Some(e);
            return rec;
        }
    };
    rec.t_tr = t_tr;
    let fail = |rec: &mut RunRecord, e: &Error| {
        if rec.error.is_none() {
            rec.error = Some(RunError::from(e));
        }
    };

    let schedule = EfficacySchedule { t_tr, eta_beta: point.eta_beta, eta_p: point.eta_p };
    let treated = match schedule.validate().and_then(|_| integrate(&r.params, &schedule, config.horizon, &config.integration())) {
        Ok(t) => t,
        Err(e) => {
            fail(&mut rec, &e);
            return rec;
        }
    };

    let peak = viral_peak(&treated);
    match r.t_peak {
        Some(tu) => rec.effective = Some(!peak.beyond_horizon && peak.t < tu - PEAK_TIME_TOL),
        None => fail(&mut rec, &Error::MissingEvent("untreated viral peak lies beyond the horizon".into())),
    }
    if peak.beyond_horizon {
        fail(&mut rec, &Error::MissingEvent(format!("treated viral peak lies beyond the horizon of {} d", config.horizon)));
    } else {
        rec.t_peak = Some(peak.t);
        rec.v_max = Some(peak.v);
        if r.t_peak.is_some() {
            rec.delta_v_log10 = Some(r.v_peak.log10() - peak.v.log10());
        }
    }
    match duration_of_infection(&treated, config.detection_limit) {
        Ok(di) => rec.di = Some(di),
        Err(e) => fail(&mut rec, &e),
    }

    if config.outputs.events {
        match locate_events(&treated, config.detection_limit) {
            Ok(ev) => rec.events = Some(ev),
            Err(e) => fail(&mut rec, &e),
        }
    }
    if config.outputs.thresholds {
        if let Some(t) = t_tr {
            let u = r.untreated.state_at(t).u;
            let pair = schedule.full();
            rec.thresholds = Some(ThresholdSnapshot {
                u_at_tr: u,
                r_at_tr: reproduction_number(u, &r.params, EfficacyPair::NONE).unwrap_or(f64::NAN),
                r_treated: reproduction_number(u, &r.params, pair).unwrap_or(f64::NAN),
                eta_c: critical_efficacy(&r.params, u),
                in_effective_set: effective_set_contains(&r.params, u, pair),
            });
        }
    }
    if config.outputs.trajectory {
        rec.trajectory = Some(treated.resample(config.outputs.trajectory_points));
    }
    rec
}

/// Run every grid point of `config`, in parallel, keeping grid order.
///
/// Failures of individual points are recorded on their records; only
/// configuration problems and failures of the untreated reference runs
/// abort the whole scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    run_scenario_impl(config, true)
}

/// Serial variant of [`run_scenario`]; produces identical output.
pub fn run_scenario_serial(config: &ScenarioConfig) -> Result<ScenarioResult> {
    run_scenario_impl(config, false)
}

fn run_scenario_impl(config: &ScenarioConfig, parallel: bool) -> Result<ScenarioResult> {
    config.validate()?;
    let points = config.points();
    let need_t_e = points.iter().any(|p| matches!(p.t_tr, TreatmentTime::EarlyFraction(_)));

    let patients = config.patient.resolve()?;
    let mut seen = BTreeMap::new();
    for (label, _) in &patients {
        if seen.insert(label.clone(), ()).is_some() {
            return Err(Error::Config(format!("patient '{label}' listed twice")));
        }
    }
    let build = |(label, params): &(String, PatientParameters)| reference_for(label.clone(), *params, config, need_t_e);
    let references: Vec<Reference> = if parallel {
        patients.par_iter().map(build).collect::<Result<_>>()?
    } else {
        patients.iter().map(build).collect::<Result<_>>()?
    };

    let jobs: Vec<(&Reference, &ScheduleSpec)> =
        references.iter().flat_map(|r| points.iter().map(move |p| (r, p))).collect();
    let runs: Vec<RunRecord> = if parallel {
        jobs.par_iter().map(|(r, p)| run_point(config, r, p)).collect()
    } else {
        jobs.iter().map(|(r, p)| run_point(config, r, p)).collect()
    };
    for run in runs.iter().filter(|r| r.error.is_some()) {
        log::warn!("run {} t_tr={} failed: {}", run.patient, run.t_tr_spec, run.error.as_ref().map_or("", |e| &e.message));
    }

    Ok(ScenarioResult {
        provenance: Provenance {
            config_hash: config.hash(),
            seed: config.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        config: config.clone(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treatment_time_forms() {
        assert_eq!("t_dl".parse::<TreatmentTime>().unwrap(), TreatmentTime::DetectionLimit);
        assert_eq!("0.7*t_e".parse::<TreatmentTime>().unwrap(), TreatmentTime::EarlyFraction(0.7));
        assert_eq!("t_e".parse::<TreatmentTime>().unwrap(), TreatmentTime::EarlyFraction(1.0));
        assert_eq!("0.5 * t_peak".parse::<TreatmentTime>().unwrap(), TreatmentTime::PeakFraction(0.5));
        assert_eq!("none".parse::<TreatmentTime>().unwrap(), TreatmentTime::None);
        assert_eq!("4".parse::<TreatmentTime>().unwrap(), TreatmentTime::At(4.0));
        assert!("-1".parse::<TreatmentTime>().is_err());
        assert!("x*t_e".parse::<TreatmentTime>().is_err());
        assert!("t_later".parse::<TreatmentTime>().is_err());
    }

    #[test]
    fn config_requires_patient_and_horizon() {
        assert!(ScenarioConfig::from_toml_str("horizon = 100\n[schedule]\nt_tr = 4\n").is_err());
        assert!(ScenarioConfig::from_toml_str("patient = \"B\"\n[schedule]\nt_tr = 4\n").is_err());
        assert!(ScenarioConfig::from_toml_str("patient = \"B\"\nhorizon = 100\n").is_err());
        let c = ScenarioConfig::from_toml_str("patient = \"B\"\nhorizon = 100\n[schedule]\nt_tr = \"t_dl\"\neta_p = 0.5\n").unwrap();
        assert_eq!(c.detection_limit, 100.0);
        assert_eq!(c.model_kind, ModelKind::Full);
    }

    #[test]
    fn sweep_axes_validated() {
        let base = "patient = \"B\"\nhorizon = 100\n[sweep]\nt_tr = [4, 6]\n";
        assert!(ScenarioConfig::from_toml_str(&format!("{base}eta_p = [0.5, 0.2]\n")).is_err());
        assert!(ScenarioConfig::from_toml_str(&format!("{base}eta_p = []\n")).is_err());
        assert!(ScenarioConfig::from_toml_str(&format!("{base}eta_p = [0.2, 1.0]\n")).is_err());
        assert!(ScenarioConfig::from_toml_str("patient = \"B\"\nhorizon = 100\n[sweep]\nt_tr = [6, 4]\n").is_err());
        let c = ScenarioConfig::from_toml_str(&format!("{base}eta_p = [0.2, 0.5, 0.8]\n")).unwrap();
        assert_eq!(c.points().len(), 6);
    }

    #[test]
    fn hash_is_stable() {
        let text = "patient = \"B\"\nhorizon = 100\n[schedule]\nt_tr = 4\neta_p = 0.5\n";
        let a = ScenarioConfig::from_toml_str(text).unwrap();
        let b = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
