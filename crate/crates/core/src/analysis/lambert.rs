use std::f64::consts::E;

use crate::error::{Error, Result};

const MAX_ITER: usize = 50;

/// Principal branch of the Lambert W function on `[-1/e, 0]`.
///
/// Halley iteration seeded by the branch-point series near `-1/e` and by
/// the Taylor series near 0. Arguments a few ulps below `-1/e` are treated
/// as the branch point.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if !(x.is_finite() && x <= 0.0 && x >= branch - 4.0 * f64::EPSILON) {
        return Err(Error::Domain(format!("lambert_w0 needs x in [-1/e, 0], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x <= branch {
        return Ok(-1.0);
    }
    if x.abs() < 1e-8 {
        return Ok(x * (1.0 + x * (-1.0 + 1.5 * x)));
    }

    let mut w = if x < -0.25 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
    } else {
        x * (1.0 + x * (-1.0 + 1.5 * x))
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 <= 0.0 {
            // Seed overshot the branch point.
            w = -1.0 + 1e-12;
            continue;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.clamp(-1.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_eq!(lambert_w0(-1.0 / E).unwrap(), -1.0);
    }

    #[test]
    fn reference_values() {
        // Independent oracle: bisection on w·e^w = x over [-1, 0].
        let oracle = |x: f64| {
            let (mut lo, mut hi) = (-1.0f64, 0.0f64);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if m * m.exp() < x {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            0.5 * (lo + hi)
        };
        for x in [-0.36787, -0.3, -0.27067, -0.20521, -0.1, -1e-3, -1e-7] {
            let w = lambert_w0(x).unwrap();
            assert!((w - oracle(x)).abs() < 1e-12, "x = {x}");
        }
        assert!((lambert_w0(-0.20521).unwrap() + 0.2683).abs() < 1e-3);
    }

    #[test]
    fn tiny_arguments_keep_relative_accuracy() {
        let x = -2e-31;
        let w = lambert_w0(x).unwrap();
        assert!(((w - x) / x).abs() < 1e-15);
    }

    #[test]
    fn outside_domain() {
        assert!(lambert_w0(0.1).is_err());
        assert!(lambert_w0(-0.4).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
    }
}
