//! Adaptive Dormand-Prince 5(4) integration over complex state vectors.
//!
//! One integrator serves the whole crate: Liouvillian evolution, reduced
//! Bloch systems, and two-time correlation propagation. Error control is
//! per-component on the complex modulus; the embedded 4th-order solution
//! supplies the error estimate and the first stage is reused across steps
//! (FSAL).

use ndarray::Array1;
use num_complex::Complex64 as C64;
use std::ops::ControlFlow;

use crate::error::CoreError;

/// Integrator tolerances and guards.
#[derive(Clone, Debug)]
pub struct OdeOptions {
    /// Relative tolerance on each component modulus.
    pub rtol: f64,
    /// Absolute tolerance on each component modulus.
    pub atol: f64,
    /// Hard cap on accepted+rejected steps before giving up.
    pub max_steps: usize,
    /// Optional cap on the step size.
    pub h_max: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-12, max_steps: 50_000_000, h_max: None }
    }
}

/// One accepted integrator step, exposed to step observers.
///
/// Derivatives at both endpoints come for free from the FSAL scheme and
/// enable cubic-Hermite reconstruction of the solution on the step.
pub struct StepRecord<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a Array1<C64>,
    pub y1: &'a Array1<C64>,
    pub f0: &'a Array1<C64>,
    pub f1: &'a Array1<C64>,
}

// Dormand-Prince RK5(4)7M coefficients.
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
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*: weights of the embedded error estimate (stage 7 = FSAL output).
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 + 92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'f> {
    f: &'f dyn Fn(f64, &Array1<C64>) -> Array1<C64>,
    opts: OdeOptions,
    n_steps: usize,
}

impl<'f> Stepper<'f> {
    /// Weighted RMS norm of the error estimate.
    fn error_norm(&self, err: &Array1<C64>, y0: &Array1<C64>, y1: &Array1<C64>) -> f64 {
        let n = err.len() as f64;
        let sum: f64 = err
            .iter()
            .zip(y0.iter().zip(y1.iter()))
            .map(|(e, (a, b))| {
                let scale = self.opts.atol + self.opts.rtol * a.norm().max(b.norm());
                let r = e.norm() / scale;
                r * r
            })
            .sum();
        (sum / n).sqrt()
    }

    /// Single trial step; returns (y1, f1, error_norm).
    fn try_step(
        &self,
        t: f64,
        h: f64,
        y: &Array1<C64>,
        k1: &Array1<C64>,
    ) -> (Array1<C64>, Array1<C64>, f64) {
        let f = &self.f;
        let hc = C64::new(h, 0.0);
        let y2 = y + &(k1 * (hc * A21));
        let k2 = f(t + C2 * h, &y2);
        let y3 = y + &(k1 * (hc * A31)) + &(&k2 * (hc * A32));
        let k3 = f(t + C3 * h, &y3);
        let y4 = y + &(k1 * (hc * A41)) + &(&k2 * (hc * A42)) + &(&k3 * (hc * A43));
        let k4 = f(t + C4 * h, &y4);
        let y5 = y
            + &(k1 * (hc * A51))
            + &(&k2 * (hc * A52))
            + &(&k3 * (hc * A53))
            + &(&k4 * (hc * A54));
        let k5 = f(t + C5 * h, &y5);
        let y6 = y
            + &(k1 * (hc * A61))
            + &(&k2 * (hc * A62))
            + &(&k3 * (hc * A63))
            + &(&k4 * (hc * A64))
            + &(&k5 * (hc * A65));
        let k6 = f(t + h, &y6);
        let y1 = y
            + &(k1 * (hc * B1))
            + &(&k3 * (hc * B3))
            + &(&k4 * (hc * B4))
            + &(&k5 * (hc * B5))
            + &(&k6 * (hc * B6));
        let k7 = f(t + h, &y1);
        let err = k1 * (hc * E1)
            + &(&k3 * (hc * E3))
            + &(&k4 * (hc * E4))
            + &(&k5 * (hc * E5))
            + &(&k6 * (hc * E6))
            + &(&k7 * (hc * E7));
        let en = self.error_norm(&err, y, &y1);
        (y1, k7, en)
    }
}

/// Guess for the initial step from the derivative magnitude at t0.
fn initial_step(y0: &Array1<C64>, f0: &Array1<C64>, span: f64, opts: &OdeOptions) -> f64 {
    let ny = y0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let nf = f0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let h = if nf > 0.0 {
        0.01 * (ny.max(opts.atol) / nf)
    } else {
        span * 1e-3
    };
    h.min(span).max(span * 1e-12)
}

/// Integrate y' = f(t, y) from `t0` to `t_end`, invoking `on_step` after
/// every accepted step. The observer may stop the run early; the state at
/// the stopping step is returned.
pub fn integrate_adaptive<F, O>(
    f: F,
    t0: f64,
    t_end: f64,
    y0: &Array1<C64>,
    opts: &OdeOptions,
    mut on_step: O,
) -> Result<(f64, Array1<C64>), CoreError>
where
    F: Fn(f64, &Array1<C64>) -> Array1<C64>,
    O: FnMut(StepRecord) -> ControlFlow<()>,
{
    assert!(t_end >= t0, "integrate_adaptive: t_end must be >= t0");
    if t_end == t0 {
        return Ok((t0, y0.clone()));
    }
    let span = t_end - t0;
    let mut stepper = Stepper { f: &f, opts: opts.clone(), n_steps: 0 };
    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y);
    let mut h = initial_step(&y, &k1, span, opts).min(opts.h_max.unwrap_or(f64::INFINITY));

    while t < t_end {
        if stepper.n_steps >= opts.max_steps {
            return Err(CoreError::Integrator(format!(
                "step budget of {} exhausted at t = {t:.6e}",
                opts.max_steps
            )));
        }
        let h_floor = 1e-14 * t.abs().max(1.0);
        if h < h_floor {
            return Err(CoreError::Integrator(format!(
                "step size underflow (h = {h:.3e} at t = {t:.6e}); \
                 the system is too stiff for the requested tolerance"
            )));
        }
        let h_trial = h.min(t_end - t);
        stepper.n_steps += 1;
        let (y1, k7, en) = stepper.try_step(t, h_trial, &y, &k1);
        if en <= 1.0 {
            let t1 = t + h_trial;
            let flow = on_step(StepRecord {
                t0: t,
                t1,
                y0: &y,
                y1: &y1,
                f0: &k1,
                f1: &k7,
            });
            t = t1;
            y = y1;
            k1 = k7;
            if let ControlFlow::Break(()) = flow {
                return Ok((t, y));
            }
            // Standard PI-free growth limit.
            let fac = (0.9 * en.powf(-0.2)).clamp(0.2, 5.0);
            h = (h_trial * fac).min(opts.h_max.unwrap_or(f64::INFINITY));
        } else {
            h = h_trial * (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Ok((t, y))
}

/// Integrate and sample the solution at the (ascending) times in `t_grid`.
///
/// `t_grid[0]` is the initial time. Sampling restarts the stepper at every
/// grid point, which keeps the returned states fully deterministic.
pub fn integrate_to_grid<F>(
    f: F,
    t_grid: &[f64],
    y0: &Array1<C64>,
    opts: &OdeOptions,
) -> Result<Vec<Array1<C64>>, CoreError>
where
    F: Fn(f64, &Array1<C64>) -> Array1<C64>,
{
    assert!(!t_grid.is_empty(), "integrate_to_grid: empty time grid");
    assert!(
        t_grid.windows(2).all(|w| w[1] > w[0]),
        "integrate_to_grid: time grid must be strictly increasing"
    );
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(y0.clone());
    let mut y = y0.clone();
    for w in t_grid.windows(2) {
        let (_, y1) = integrate_adaptive(&f, w[0], w[1], &y, opts, |_| ControlFlow::Continue(()))?;
        out.push(y1.clone());
        y = y1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let lambda = C64::new(-0.7, 2.3);
        let f = move |_t: f64, y: &Array1<C64>| y * lambda;
        let y0 = array![C64::new(1.0, 0.0)];
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let states = integrate_to_grid(f, &grid, &y0, &OdeOptions::default()).unwrap();
        for (t, s) in grid.iter().zip(&states) {
            let exact = (lambda * *t).exp();
            assert!(
                (s[0] - exact).norm() < 1e-9,
                "t = {t}: got {}, want {exact}",
                s[0]
            );
        }
    }

    #[test]
    fn harmonic_oscillator_energy_is_conserved() {
        // y'' = -y as a first-order complex system.
        let f = |_t: f64, y: &Array1<C64>| array![y[1], -y[0]];
        let y0 = array![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let grid = [0.0, 50.0 * std::f64::consts::PI];
        let states = integrate_to_grid(f, &grid, &y0, &OdeOptions::default()).unwrap();
        let last = &states[1];
        let energy = last[0].norm_sqr() + last[1].norm_sqr();
        assert!((energy - 1.0).abs() < 1e-7, "energy drift: {energy}");
    }

    #[test]
    fn observer_can_stop_early() {
        let f = |_t: f64, y: &Array1<C64>| y * C64::new(-1.0, 0.0);
        let y0 = array![C64::new(1.0, 0.0)];
        let (t, y) = integrate_adaptive(f, 0.0, 1e6, &y0, &OdeOptions::default(), |s| {
            if s.y1[0].norm() < 1e-6 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert!(t < 20.0, "stopped too late: t = {t}");
        assert!(y[0].norm() < 1e-6);
    }
}
