use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::de::{minimize, DeSettings};
use super::observation::{rmsle, ViralObservation};
use crate::dynamics::{integrate, EfficacySchedule, IntegrationOptions, PatientParameters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeParam {
    Beta,
    Delta,
    P,
}

impl FreeParam {
    /// β and p are searched in log10 space, δ linearly.
    pub fn log_scaled(self) -> bool {
        !matches!(self, FreeParam::Delta)
    }

    pub fn get(self, params: &PatientParameters) -> f64 {
        match self {
            FreeParam::Beta => params.beta,
            FreeParam::Delta => params.delta,
            FreeParam::P => params.p,
        }
    }

    fn set(self, params: &mut PatientParameters, value: f64) {
        match self {
            FreeParam::Beta => params.beta = value,
            FreeParam::Delta => params.delta = value,
            FreeParam::P => params.p = value,
        }
    }

    fn to_search(self, v: f64) -> f64 {
        if self.log_scaled() {
            v.log10()
        } else {
            v
        }
    }

    fn from_search(self, x: f64) -> f64 {
        if self.log_scaled() {
            10f64.powf(x)
        } else {
            x
        }
    }
}

impl std::str::FromStr for FreeParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" => Ok(FreeParam::Beta),
            "delta" => Ok(FreeParam::Delta),
            "p" => Ok(FreeParam::P),
            other => Err(Error::Config(format!("unknown parameter '{other}' (expected beta, delta or p)"))),
        }
    }
}

/// One free parameter and its bounds in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeBound {
    pub param: FreeParam,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub free: Vec<FreeBound>,
    /// Fixed rates (c, and any of β, δ, p not listed as free) and initial conditions.
    pub base: PatientParameters,
    #[serde(default)]
    pub de: DeSettings,
    #[serde(default)]
    pub integration: IntegrationOptions,
}

impl FitConfig {
    /// β, δ and p free over bounds wide enough for the registry patients.
    pub fn standard(base: PatientParameters) -> Self {
        Self {
            free: vec![
                FreeBound { param: FreeParam::Beta, lower: 1e-11, upper: 1e-5 },
                FreeBound { param: FreeParam::Delta, lower: 0.05, upper: 5.0 },
                FreeBound { param: FreeParam::P, lower: 0.01, upper: 1e4 },
            ],
            base,
            de: DeSettings::default(),
            // Candidates needing more steps than this are stiff corners of the box; they score infinite cost.
            integration: IntegrationOptions { rel_tol: 1e-7, max_steps: 20_000, ..IntegrationOptions::default() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::Config("at least one free parameter is required".into()));
        }
        for (k, b) in self.free.iter().enumerate() {
            if self.free[..k].iter().any(|o| o.param == b.param) {
                return Err(Error::Config(format!("{:?} listed twice", b.param)));
            }
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(Error::Config(format!("bounds for {:?} must be finite with lower < upper", b.param)));
            }
            if b.param.log_scaled() && b.lower <= 0.0 {
                return Err(Error::Config(format!("log-scaled bounds for {:?} must be > 0", b.param)));
            }
        }
        self.base.validate()
    }

    fn search_bounds(&self) -> Vec<(f64, f64)> {
        self.free.iter().map(|b| (b.param.to_search(b.lower), b.param.to_search(b.upper))).collect()
    }

    fn params_at(&self, x: &[f64]) -> PatientParameters {
        let mut p = self.base;
        for (b, &xi) in self.free.iter().zip(x) {
            b.param.set(&mut p, b.param.from_search(xi));
        }
        p
    }

    fn search_point(&self, params: &PatientParameters) -> Vec<f64> {
        self.free.iter().map(|b| b.param.to_search(b.param.get(params))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: PatientParameters,
    pub rmsle: f64,
    pub generations_used: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Simulate `params` untreated and score it against `data`.
pub fn fit_cost(params: &PatientParameters, data: &[ViralObservation], integration: &IntegrationOptions) -> Result<f64> {
    let horizon = data.iter().map(|o| o.t).fold(0.0, f64::max).max(1e-6);
    let traj = integrate(params, &EfficacySchedule::untreated(), horizon, integration)?;
    let predicted: Vec<f64> = data.iter().map(|o| traj.state_at(o.t).v).collect();
    rmsle(&predicted, data)
}

fn check_data(data: &[ViralObservation]) -> Result<()> {
    for o in data {
        o.validate()?;
    }
    let measured = data.iter().filter(|o| !o.is_censored()).count();
    if measured < 3 {
        return Err(Error::Domain(format!("fitting needs at least 3 quantified observations, got {measured}")));
    }
    Ok(())
}

/// Fit the free parameters of `config` to `data` by differential evolution.
pub fn fit_patient(data: &[ViralObservation], config: &FitConfig) -> Result<FitResult> {
    check_data(data)?;
    config.validate()?;
    let cost = |x: &[f64]| fit_cost(&config.params_at(x), data, &config.integration).unwrap_or(f64::INFINITY);
    let out = minimize(cost, &config.search_bounds(), &config.de, None)?;
    Ok(FitResult {
        params: config.params_at(&out.best),
        rmsle: out.cost,
        generations_used: out.generations,
        converged: out.converged,
        history: out.history,
        evaluations: out.evaluations,
    })
}

/// Profile-likelihood interval for one free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileInterval {
    pub param: FreeParam,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// The profile never crossed the threshold before the lower bound.
    pub lower_open: bool,
    pub upper_open: bool,
    /// Largest profiled RMSLE accepted inside the interval.
    pub threshold: f64,
}

/// Settings for the profile walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSettings {
    /// First step away from the optimum, as a fraction of the search range.
    pub initial_step: f64,
    /// Bisection steps used to refine each boundary.
    pub refine_steps: usize,
    /// DE settings for re-optimizing the other free parameters.
    pub inner: DeSettings,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            initial_step: 1e-3,
            refine_steps: 12,
            inner: DeSettings { max_generations: 60, ..DeSettings::default() },
        }
    }
}

/// RMSLE threshold for a profile interval at confidence `level`.
///
/// Log residuals are taken as Gaussian with variance `rmsle_opt²`, so the
/// likelihood-ratio bound `n·(rmsle² - rmsle_opt²) / rmsle_opt² <= χ²₁(level)`
/// becomes `rmsle <= rmsle_opt·sqrt(1 + χ²₁(level)/n)`.
pub fn profile_threshold(rmsle_opt: f64, n: usize, level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Domain(format!("confidence level must lie in [0, 1), got {level}")));
    }
    if level == 0.0 {
        return Ok(rmsle_opt);
    }
    let chi2 = ChiSquared::new(1.0).map_err(|e| Error::Domain(e.to_string()))?.inverse_cdf(level);
    Ok(rmsle_opt * (1.0 + chi2 / n as f64).sqrt())
}

/// Sweep `param` away from its fitted value, re-optimizing the other free
/// parameters at each point, and report where the profiled RMSLE crosses
/// the threshold.
pub fn profile_ci(
    data: &[ViralObservation],
    fit: &FitResult,
    config: &FitConfig,
    param: FreeParam,
    level: f64,
    settings: &ProfileSettings,
) -> Result<ProfileInterval> {
    check_data(data)?;
    config.validate()?;
    let idx = config
        .free
        .iter()
        .position(|b| b.param == param)
        .ok_or_else(|| Error::Config(format!("{param:?} is not a free parameter of this fit")))?;
    let estimate = param.get(&fit.params);
    let threshold = profile_threshold(fit.rmsle, data.len(), level)?;
    if level == 0.0 {
        return Ok(ProfileInterval { param, estimate, lower: estimate, upper: estimate, lower_open: false, upper_open: false, threshold });
    }

    let bounds = config.search_bounds();
    let (lo_b, hi_b) = bounds[idx];
    let x_opt = config.search_point(&fit.params);
    let others: Vec<usize> = (0..bounds.len()).filter(|&k| k != idx).collect();
    let other_bounds: Vec<(f64, f64)> = others.iter().map(|&k| bounds[k]).collect();
    let other_start: Vec<f64> = others.iter().map(|&k| x_opt[k]).collect();

    let profiled = |xi: f64| -> f64 {
        let assemble = |rest: &[f64]| {
            let mut x = x_opt.clone();
            x[idx] = xi;
            for (k, v) in others.iter().zip(rest) {
                x[*k] = *v;
            }
            x
        };
        let eval = |rest: &[f64]| fit_cost(&config.params_at(&assemble(rest)), data, &config.integration).unwrap_or(f64::INFINITY);
        if others.is_empty() {
            eval(&[])
        } else {
            minimize(eval, &other_bounds, &settings.inner, Some(&other_start)).map(|o| o.cost).unwrap_or(f64::INFINITY)
        }
    };

    let range = hi_b - lo_b;
    let walk = |dir: f64| -> (f64, bool) {
        let limit = if dir > 0.0 { hi_b } else { lo_b };
        let mut inside = x_opt[idx];
        let mut step = settings.initial_step * range;
        loop {
            let x = inside + dir * step;
            let reached_limit = (x - limit) * dir >= 0.0;
            let x = if reached_limit { limit } else { x };
            if profiled(x) > threshold {
                let mut outside = x;
                for _ in 0..settings.refine_steps {
                    let mid = 0.5 * (inside + outside);
                    if profiled(mid) > threshold {
                        outside = mid;
                    } else {
                        inside = mid;
                    }
                }
                return (0.5 * (inside + outside), false);
            }
            if reached_limit {
                return (limit, true);
            }
            inside = x;
            step *= 2.0;
        }
    };

    let (lo_x, lower_open) = walk(-1.0);
    let (hi_x, upper_open) = walk(1.0);
    Ok(ProfileInterval {
        param,
        estimate,
        lower: param.from_search(lo_x),
        upper: param.from_search(hi_x),
        lower_open,
        upper_open,
        threshold,
    })
}
