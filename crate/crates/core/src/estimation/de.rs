use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DE/rand/1/bin settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeSettings {
    /// `None` means ten members per dimension.
    pub population_size: Option<usize>,
    pub weight: f64,
    pub crossover: f64,
    pub max_generations: usize,
    pub seed: u64,
    /// Stop once the population's cost spread falls below this.
    pub stop_tol: f64,
}

impl Default for DeSettings {
    fn default() -> Self {
        Self { population_size: None, weight: 0.8, crossover: 0.9, max_generations: 300, seed: 0, stop_tol: 1e-10 }
    }
}

impl DeSettings {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population_size.unwrap_or(10 * dim).max(4)
    }

    fn validate(&self) -> Result<()> {
        if let Some(n) = self.population_size {
            if n < 4 {
                return Err(Error::Config(format!("population_size must be >= 4, got {n}")));
            }
        }
        if !(self.weight > 0.0 && self.weight <= 2.0) {
            return Err(Error::Config(format!("weight must lie in (0, 2], got {}", self.weight)));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::Config(format!("crossover must lie in [0, 1], got {}", self.crossover)));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Config("stop_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOutcome {
    pub best: Vec<f64>,
    pub cost: f64,
    pub generations: usize,
    pub converged: bool,
    /// Best cost after initialization and after each generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Minimize `cost` over the box `bounds`.
///
/// Random draws happen serially in a fixed order; only cost evaluations run
/// in parallel, so the outcome depends on the seed alone. A non-finite cost
/// marks a failed candidate. `start`, when given, replaces the first member.
pub fn minimize<F>(cost: F, bounds: &[(f64, f64)], settings: &DeSettings, start: Option<&[f64]>) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    settings.validate()?;
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::Config("at least one free dimension is required".into()));
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("bounds for dimension {k} must be finite with lower < upper")));
        }
    }
    let np = settings.population_for(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut pop: Vec<Vec<f64>> =
        (0..np).map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()).collect();
    if let Some(x0) = start {
        if x0.len() != dim {
            return Err(Error::Contract(format!("start has {} entries for {dim} dimensions", x0.len())));
        }
        pop[0] = x0.iter().zip(bounds).map(|(v, &(lo, hi))| v.clamp(lo, hi)).collect();
    }
    let sanitize = |c: f64| if c.is_finite() { c } else { f64::INFINITY };
    let mut costs: Vec<f64> = pop.par_iter().map(|x| sanitize(cost(x))).collect();
    let mut evaluations = np;
    if costs.iter().all(|c| c.is_infinite()) {
        return Err(Error::Optimization("every initial candidate failed to evaluate".into()));
    }

    let best_of = |costs: &[f64]| {
        costs.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc })
    };
    let mut history = vec![best_of(&costs).1];
    let mut converged = false;
    let mut generations = 0;

    while generations < settings.max_generations {
        let (lo_c, hi_c) = costs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
        if hi_c - lo_c <= settings.stop_tol {
            converged = true;
            break;
        }

        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = || loop {
                    let r = rng.random_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let r1 = pick();
                let r2 = loop {
                    let r = pick();
                    if r != r1 {
                        break r;
                    }
                };
                let r3 = loop {
                    let r = pick();
                    if r != r1 && r != r2 {
                        break r;
                    }
                };
                let j_rand = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        let cross = rng.random::<f64>() < settings.crossover || j == j_rand;
                        let v = if cross { pop[r1][j] + settings.weight * (pop[r2][j] - pop[r3][j]) } else { pop[i][j] };
                        v.clamp(bounds[j].0, bounds[j].1)
                    })
                    .collect()
            })
            .collect();

        let trial_costs: Vec<f64> = trials.par_iter().map(|x| sanitize(cost(x))).collect();
        evaluations += np;
        for (i, (trial, c)) in trials.into_iter().zip(trial_costs).enumerate() {
            if c <= costs[i] {
                pop[i] = trial;
                costs[i] = c;
            }
        }
        generations += 1;
        history.push(best_of(&costs).1);
    }

    let (bi, bc) = best_of(&costs);
    Ok(DeOutcome { best: pop[bi].clone(), cost: bc, generations, converged, history, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.3).powi(2)).sum()
    }

    #[test]
    fn finds_sphere_minimum() {
        let settings = DeSettings { seed: 7, ..Default::default() };
        let out = minimize(sphere, &[(-5.0, 5.0); 3], &settings, None).unwrap();
        assert!(out.cost < 1e-8);
        assert!(out.best.iter().all(|v| (v - 0.3).abs() < 1e-4));
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn same_seed_same_outcome() {
        let settings = DeSettings { seed: 11, max_generations: 40, ..Default::default() };
        let a = minimize(sphere, &[(-5.0, 5.0); 2], &settings, None).unwrap();
        let b = minimize(sphere, &[(-5.0, 5.0); 2], &settings, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let s = DeSettings::default();
        assert!(minimize(sphere, &[], &s, None).is_err());
        assert!(minimize(sphere, &[(1.0, 1.0)], &s, None).is_err());
        assert!(minimize(sphere, &[(0.0, 1.0)], &DeSettings { population_size: Some(3), ..s }, None).is_err());
        assert!(minimize(|_| f64::NAN, &[(0.0, 1.0)], &s, None).is_err());
    }
}
