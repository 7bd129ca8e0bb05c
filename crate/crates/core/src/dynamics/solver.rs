//! Dormand–Prince 5(4) with PI step-size control and the standard
//! fourth-order continuous extension.
//!
//! The solver is autonomous per call: the efficacy jump is handled by the
//! caller splitting the time span, so a step never straddles it.

// Butcher tableau (autonomous form, nodes unused).
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;

/// Step-size policy for one call of [`integrate_span`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepControl<const N: usize> {
    pub rel_tol: f64,
    pub abs_tol: [f64; N],
    pub max_step: f64,
    /// Tighter step cap applied while `t < fine_until`.
    pub fine_step: f64,
    pub fine_until: f64,
    pub max_steps: usize,
    /// Reject steps that leave the non-negative orthant.
    pub non_negative: bool,
}

/// One accepted step together with its interpolation coefficients.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        std::array::from_fn(|k| r1[k] + theta * (r2[k] + theta1 * (r3[k] + theta * (r4[k] + theta1 * r5[k]))))
    }

    /// Apply a linear map to every coefficient vector; the interpolant of
    /// the mapped state is the mapped interpolant.
    pub fn map<const M: usize>(&self, f: impl Fn(&[f64; N]) -> [f64; M]) -> DenseStep<M> {
        DenseStep { t0: self.t0, h: self.h, coeffs: std::array::from_fn(|j| f(&self.coeffs[j])) }
    }
}

#[derive(Debug)]
pub(crate) struct SpanFailure<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub reason: String,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|k| y[k] + h * terms.iter().map(|(a, v)| a * v[k]).sum::<f64>())
}

/// Integrate `y' = f(y)` from `(t0, y0)` to `t1`, returning the accepted steps.
///
/// Steps producing a component below `-abs_tol` are rejected and halved;
/// smaller negative excursions are clamped to zero.
pub(crate) fn integrate_span<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    ctl: &StepControl<N>,
) -> Result<Vec<DenseStep<N>>, SpanFailure<N>>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let mut steps = Vec::new();
    if t1 <= t0 {
        return Ok(steps);
    }
    let cap = |t: f64| if t < ctl.fine_until { ctl.max_step.min(ctl.fine_step) } else { ctl.max_step };

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(&y);
    let mut h = initial_step(&f, &y, &k1, ctl).min(cap(t)).min(t1 - t0);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;

    loop {
        if steps.len() >= ctl.max_steps {
            return Err(SpanFailure { t, y, reason: format!("exceeded {} steps", ctl.max_steps) });
        }
        let h_min = 16.0 * f64::EPSILON * t.abs();
        if !(h > h_min) {
            return Err(SpanFailure { t, y, reason: format!("step size underflow (h = {h:e})") });
        }
        let last = t + h >= t1 - h_min;
        if last {
            h = t1 - t;
        }

        let k2 = f(&axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(&axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let y6 = axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(&y6);
        let mut y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);

        if y_new.iter().any(|v| !v.is_finite())
            || (ctl.non_negative && y_new.iter().zip(&ctl.abs_tol).any(|(v, atol)| *v < -atol))
        {
            h *= 0.5;
            rejected_last = true;
            continue;
        }
        if ctl.non_negative {
            for v in y_new.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        let k7 = f(&y_new);

        let mut acc = 0.0;
        for k in 0..N {
            let e = h * (E1 * k1[k] + E3 * k3[k] + E4 * k4[k] + E5 * k5[k] + E6 * k6[k] + E7 * k7[k]);
            let scale = ctl.abs_tol[k] + ctl.rel_tol * y[k].abs().max(y_new[k].abs());
            acc += (e / scale).powi(2);
        }
        let err = (acc / N as f64).sqrt();

        if err <= 1.0 {
            let r1 = y;
            let r2: [f64; N] = std::array::from_fn(|k| y_new[k] - y[k]);
            let r3: [f64; N] = std::array::from_fn(|k| h * k1[k] - r2[k]);
            let r4: [f64; N] = std::array::from_fn(|k| r2[k] - h * k7[k] - r3[k]);
            let r5: [f64; N] = std::array::from_fn(|k| {
                h * (D1 * k1[k] + D3 * k3[k] + D4 * k4[k] + D5 * k5[k] + D6 * k6[k] + D7 * k7[k])
            });
            steps.push(DenseStep { t0: t, h, coeffs: [r1, r2, r3, r4, r5] });

            t = if last { t1 } else { t + h };
            y = y_new;
            k1 = k7;
            if last {
                return Ok(steps);
            }

            let err_c = err.max(1e-10);
            let mut fac = err_c.powf(0.2 - PI_BETA * 0.75) / err_old.powf(PI_BETA) / SAFETY;
            fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            if rejected_last {
                fac = fac.max(1.0);
            }
            err_old = err.max(1e-4);
            h = (h / fac).min(cap(t));
            rejected_last = false;
        } else {
            let fac = (err.powf(0.2) / SAFETY).min(1.0 / FAC_MIN);
            h /= fac;
            rejected_last = true;
        }
    }
}

/// Initial step heuristic from Hairer, Nørsett & Wanner.
fn initial_step<const N: usize, F>(f: &F, y: &[f64; N], f0: &[f64; N], ctl: &StepControl<N>) -> f64
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let scale: [f64; N] = std::array::from_fn(|k| ctl.abs_tol[k] + ctl.rel_tol * y[k].abs());
    let norm = |v: &[f64; N]| (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = f(&y1);
    let diff: [f64; N] = std::array::from_fn(|k| f1[k] - f0[k]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}
