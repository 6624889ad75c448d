//! Observables on top of the generator: entanglement of two-emitter states
//! and emission spectra from two-time correlation functions.
//!
//! Spectra are computed by two deliberately independent routes that must
//! agree to high precision:
//!
//! * time domain: propagate B(tau) = exp(L tau) (sigma-_n' rho_ss) with the
//!   adaptive integrator and Fourier transform the correlation
//!   g_nn'(tau) = tr(sigma+_n B(tau)) with an oscillation-exact quadrature;
//! * frequency domain: solve the shifted resolvent system
//!   (i D I - L + vec(rho_ss) tr) x = vec(sigma-_n' rho_ss) per detuning D.
//!
//! Both evaluate S0_nn'(D) = integral_0^inf g_nn'(tau) exp(-i D tau) dtau,
//! so an emitter whose effective frequency sits above the rotating frame
//! peaks at positive D. The emitted spectrum is Re sum_nn' S0_nn'.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Factorize, Solve};
use num_complex::Complex64 as C64;
use std::ops::ControlFlow;

use crate::error::CoreError;
use crate::linalg::{eigvals_hermitian, hermitize, partial_transpose, vec_col};
use crate::liouvillian::{sigma_minus, sigma_plus, LindbladModel};
use crate::ode::{integrate_adaptive, OdeOptions};
use crate::qnm::RateSet;

/// Logarithmic negativity E_N = log2(2 N + 1) of a density matrix, where N
/// is the absolute sum of negative eigenvalues of the partial transpose
/// over the sites in `subset`. Zero for separable states; 1 for a Bell
/// state of two emitters.
pub fn log_negativity(
    rho: &Array2<C64>,
    n_sites: usize,
    subset: &[usize],
) -> Result<f64, CoreError> {
    let pt = partial_transpose(&hermitize(rho), n_sites, subset);
    let evals = eigvals_hermitian(&pt)?;
    let neg: f64 = evals.iter().filter(|x| **x < 0.0).map(|x| -*x).sum();
    Ok((2.0 * neg + 1.0).log2())
}

/// Emission spectrum columns over a detuning grid (units of the rate set).
#[derive(Clone, Debug)]
pub struct SpectrumSeries {
    /// Detuning grid.
    pub delta: Vec<f64>,
    /// Re sum over all emitter pairs.
    pub total: Vec<f64>,
    /// Re sum over the diagonal (same-emitter) correlations.
    pub diagonal: Vec<f64>,
    /// Re sum over the cross-emitter correlations.
    pub cross: Vec<f64>,
    /// Detector-weighted spectrum, when weights were supplied.
    pub weighted: Option<Vec<f64>>,
    /// Raw one-sided correlation transforms, one n x n matrix per detuning.
    pub s0: Vec<Array2<C64>>,
}

/// Which route computes the spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumMethod {
    TimeDomain,
    Resolvent,
}

/// Tuning knobs of the time-domain route. The defaults hold the two-route
/// agreement below 1e-6 of the spectral peak for every shipped scenario.
#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    /// Integrator tolerances for the correlation propagation.
    pub ode: OdeOptions,
    /// Stop once the correlation has fallen below this fraction of its
    /// running maximum.
    pub trunc_rel: f64,
    /// Accepted steps the correlation must stay below the cutoff before the
    /// propagation stops (guards against stopping inside an oscillation).
    pub consecutive_below: usize,
    /// Hard cap on the propagation horizon; reaching it before the
    /// correlation has decayed is an error.
    pub tau_max: Option<f64>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            ode: OdeOptions { rtol: 1e-9, atol: 1e-14, max_steps: 20_000_000, h_max: None },
            trunc_rel: 1e-12,
            consecutive_below: 3,
            tau_max: None,
        }
    }
}

/// Symmetric detuning grid of `n_points` spanning
/// +- `half_width_factor` * max(|coherent coupling|, max diagonal decay).
pub fn default_delta_grid(rates: &RateSet, half_width_factor: f64, n_points: usize) -> Vec<f64> {
    assert!(n_points >= 2, "default_delta_grid: need at least 2 points");
    let n = rates.n();
    let mut scale: f64 = 0.0;
    for a in 0..n {
        scale = scale.max(rates.gamma_down[(a, a)]);
        for b in 0..n {
            if a != b {
                scale = scale.max((rates.delta_down[(a, b)] + rates.delta_up[(a, b)]).abs());
            }
        }
    }
    let w = half_width_factor * scale.max(1e-300);
    (0..n_points)
        .map(|i| -w + 2.0 * w * i as f64 / (n_points - 1) as f64)
        .collect()
}

/// Stationary-state emission spectrum.
///
/// `rho_ss` must be the stationary state of `model` (see
/// [`LindbladModel::steady_state`]); `weights` are per-emitter complex
/// detection amplitudes for the optional weighted column.
pub fn spectrum(
    model: &LindbladModel,
    rho_ss: &Array2<C64>,
    delta: &[f64],
    method: SpectrumMethod,
    opts: &SpectrumOptions,
    weights: Option<&[C64]>,
) -> Result<SpectrumSeries, CoreError> {
    let n = model.n_emitters();
    let d = model.dim();
    if rho_ss.dim() != (d, d) {
        return Err(CoreError::InvalidInput(format!(
            "rho_ss must be {d}x{d}, got {:?}",
            rho_ss.dim()
        )));
    }
    if delta.is_empty() {
        return Err(CoreError::InvalidInput("empty detuning grid".into()));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(CoreError::InvalidInput(format!(
                "detector weights must have {n} entries, got {}",
                w.len()
            )));
        }
    }
    let s0 = match method {
        SpectrumMethod::Resolvent => s0_resolvent(model, rho_ss, delta)?,
        SpectrumMethod::TimeDomain => s0_time_domain(model, rho_ss, delta, opts)?,
    };
    Ok(assemble(delta, s0, weights))
}

/// Largest pointwise deviation between the two spectra, relative to the
/// largest magnitude of `reference`, maximized over all columns.
pub fn max_relative_deviation(test: &SpectrumSeries, reference: &SpectrumSeries) -> f64 {
    let columns = [
        (&test.total, &reference.total),
        (&test.diagonal, &reference.diagonal),
        (&test.cross, &reference.cross),
    ];
    let mut worst: f64 = 0.0;
    for (a, b) in columns {
        let scale = b.iter().fold(0.0_f64, |m, &x| m.max(x.abs())).max(1e-300);
        for (x, y) in a.iter().zip(b.iter()) {
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}

/// One detected spectral line.
#[derive(Clone, Copy, Debug)]
pub struct Peak {
    /// Grid position of the maximum.
    pub position: f64,
    /// Spectrum value at the maximum.
    pub height: f64,
    /// Topographic prominence over the surrounding spectrum.
    pub prominence: f64,
    /// Width of the line at half prominence, by linear interpolation.
    pub fwhm: f64,
}

/// Local maxima with prominence at least `min_prominence_rel` times the
/// global maximum, sorted by position. Plateau maxima report the sample
/// with the smallest |position|.
pub fn detect_peaks(delta: &[f64], s: &[f64], min_prominence_rel: f64) -> Vec<Peak> {
    assert_eq!(delta.len(), s.len(), "detect_peaks: grid/value length mismatch");
    let n = s.len();
    if n < 3 {
        return Vec::new();
    }
    let global_max = s.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let threshold = min_prominence_rel * global_max.abs();

    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if s[i] > s[i - 1] && s[i] >= s[i + 1] {
            // Walk over a possible plateau of equal values.
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < n && s[j + 1] < s[i] {
                // Tie-break inside the plateau toward the smallest |delta|.
                let apex = (i..=j)
                    .min_by(|&p, &q| {
                        delta[p].abs().partial_cmp(&delta[q].abs()).expect("finite grid")
                    })
                    .expect("plateau is non-empty");
                peaks.push(apex);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    let mut out = Vec::new();
    for &p in &peaks {
        // Prominence: lowest point on the way to higher ground on each side.
        let mut left_base = s[p];
        let mut k = p;
        while k > 0 {
            k -= 1;
            if s[k] > s[p] {
                break;
            }
            left_base = left_base.min(s[k]);
        }
        let mut right_base = s[p];
        let mut k = p;
        while k + 1 < n {
            k += 1;
            if s[k] > s[p] {
                break;
            }
            right_base = right_base.min(s[k]);
        }
        let prominence = s[p] - left_base.max(right_base);
        if prominence < threshold {
            continue;
        }
        // Width at half prominence, interpolated on the grid.
        let level = s[p] - 0.5 * prominence;
        let mut left_x = delta[0];
        for k in (0..p).rev() {
            if s[k] < level {
                let t = (level - s[k]) / (s[k + 1] - s[k]);
                left_x = delta[k] + t * (delta[k + 1] - delta[k]);
                break;
            }
            left_x = delta[k];
        }
        let mut right_x = delta[n - 1];
        for k in (p + 1)..n {
            if s[k] < level {
                let t = (level - s[k - 1]) / (s[k] - s[k - 1]);
                right_x = delta[k - 1] + t * (delta[k] - delta[k - 1]);
                break;
            }
            right_x = delta[k];
        }
        out.push(Peak {
            position: delta[p],
            height: s[p],
            prominence,
            fwhm: right_x - left_x,
        });
    }
    out.sort_by(|a, b| a.position.partial_cmp(&b.position).expect("finite positions"));
    out
}

// ---------------------------------------------------------------------------
// internals
// ---------------------------------------------------------------------------

/// Sparse evaluation of tr(op X) on vec(X): tr(op X) = sum op_ij X_ji.
struct TraceSelector {
    terms: Vec<(usize, C64)>,
}

impl TraceSelector {
    fn new(op: &Array2<C64>, d: usize) -> Self {
        let mut terms = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let c = op[(i, j)];
                if c != C64::new(0.0, 0.0) {
                    terms.push((j + d * i, c));
                }
            }
        }
        TraceSelector { terms }
    }

    fn eval(&self, v: &Array1<C64>) -> C64 {
        self.terms.iter().map(|&(idx, c)| c * v[idx]).sum()
    }
}

fn assemble(delta: &[f64], s0: Vec<Array2<C64>>, weights: Option<&[C64]>) -> SpectrumSeries {
    let n = s0[0].nrows();
    let mut total = Vec::with_capacity(delta.len());
    let mut diagonal = Vec::with_capacity(delta.len());
    let mut cross = Vec::with_capacity(delta.len());
    let mut weighted = weights.map(|_| Vec::with_capacity(delta.len()));
    for m in &s0 {
        let mut diag = C64::new(0.0, 0.0);
        let mut all = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                all += m[(a, b)];
                if a == b {
                    diag += m[(a, b)];
                }
            }
        }
        total.push(all.re);
        diagonal.push(diag.re);
        cross.push((all - diag).re);
        if let (Some(out), Some(w)) = (weighted.as_mut(), weights) {
            let mut s = C64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    s += w[a].conj() * w[b] * m[(a, b)];
                }
            }
            out.push(s.re);
        }
    }
    SpectrumSeries { delta: delta.to_vec(), total, diagonal, cross, weighted, s0 }
}

fn s0_resolvent(
    model: &LindbladModel,
    rho_ss: &Array2<C64>,
    delta: &[f64],
) -> Result<Vec<Array2<C64>>, CoreError> {
    let n = model.n_emitters();
    let d = model.dim();
    let dd = d * d;
    let l = model.liouvillian_matrix();
    let rvec = vec_col(rho_ss);

    // Shift the generator by |rho_ss><tr| to make it invertible at zero
    // detuning. The source vectors are traceless and tr(sigma+ rho_ss) = 0,
    // so the shift never leaks into the computed correlations.
    let mut base = -l;
    for i in 0..dd {
        for j in 0..d {
            base[(i, j * (d + 1))] += rvec[i];
        }
    }

    let selectors: Vec<_> = (0..n).map(|a| TraceSelector::new(&sigma_plus(a, n), d)).collect();
    let sources: Vec<_> = (0..n).map(|b| vec_col(&sigma_minus(b, n).dot(rho_ss))).collect();

    let mut out = Vec::with_capacity(delta.len());
    for &dl in delta {
        let mut m = base.clone();
        for i in 0..dd {
            m[(i, i)] += C64::new(0.0, dl);
        }
        let lu = m.factorize()?;
        let mut s0 = Array2::zeros((n, n));
        for (b, src) in sources.iter().enumerate() {
            let x = lu.solve(src)?;
            for (a, sel) in selectors.iter().enumerate() {
                s0[(a, b)] = sel.eval(&x);
            }
        }
        out.push(s0);
    }
    Ok(out)
}

/// One quadrature segment: the correlation on [t0, t0 + h] as a quintic
/// polynomial in u = (tau - t0)/h, one coefficient row per emitter channel.
struct Segment {
    t0: f64,
    h: f64,
    coef: Vec<[C64; 6]>,
}

/// Moments m_k = integral_0^1 u^k exp(-i theta u) du for k = 0..5, plus
/// exp(-i theta) for phase chaining. Recurrence for large theta, series for
/// small theta where the recurrence would cancel.
fn oscillatory_moments(theta: f64) -> (C64, [C64; 6]) {
    let e = C64::new(0.0, -theta).exp();
    let mut m = [C64::new(0.0, 0.0); 6];
    if theta.abs() >= 0.8 {
        let it = C64::new(0.0, theta);
        m[0] = (C64::new(1.0, 0.0) - e) / it;
        for k in 1..6 {
            m[k] = (C64::new(k as f64, 0.0) * m[k - 1] - e) / it;
        }
    } else {
        // m_k = sum_j (-i theta)^j / (j! (k + j + 1)), converging fast.
        let mit = C64::new(0.0, -theta);
        let mut term = C64::new(1.0, 0.0);
        for j in 0..24 {
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += term / C64::new((k + j + 1) as f64, 0.0);
            }
            term = term * mit / C64::new((j + 1) as f64, 0.0);
            if term.norm() < 1e-18 {
                break;
            }
        }
    }
    (e, m)
}

/// Quintic two-point Hermite coefficients in the monomial basis on [0, 1],
/// from endpoint values g, scaled first derivatives D = h g', and scaled
/// second derivatives S = h^2 g''.
fn quintic_coef(g0: C64, d0: C64, s0: C64, g1: C64, d1: C64, s1: C64) -> [C64; 6] {
    let half = C64::new(0.5, 0.0);
    [
        g0,
        d0,
        s0 * half,
        (g1 - g0) * 10.0 - d0 * 6.0 - d1 * 4.0 - s0 * 1.5 + s1 * half,
        (g0 - g1) * 15.0 + d0 * 8.0 + d1 * 7.0 + s0 * 1.5 - s1,
        (g1 - g0) * 6.0 - (d0 + d1) * 3.0 - (s0 - s1) * half,
    ]
}

/// Upper bound on the oscillation | Im eigenvalue | of the correlation
/// sector, used to size quadrature segments. For two emitters the
/// one-excitation transition frequencies are exactly the eigenvalues of the
/// coherent coupling matrix; for more emitters consecutive-manifold gaps
/// can reach twice its spectral norm.
fn oscillation_bound(model: &LindbladModel) -> Result<f64, CoreError> {
    let r = model.rates();
    let n = r.n();
    let mut dm = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            if a != b {
                dm[(a, b)] = C64::new(r.delta_down[(a, b)] + r.delta_up[(a, b)], 0.0);
            }
        }
    }
    let evals = eigvals_hermitian(&dm)?;
    let osc = evals.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
        * if n <= 2 { 1.0 } else { 2.0 };
    let up = model.up_matrix();
    let mut damp: f64 = 0.0;
    for a in 0..n {
        damp = damp.max(r.gamma_down[(a, a)] + up[(a, a)] + r.gamma_dephase[a]);
    }
    Ok((osc * osc + damp * damp).sqrt())
}

fn s0_time_domain(
    model: &LindbladModel,
    rho_ss: &Array2<C64>,
    delta: &[f64],
    opts: &SpectrumOptions,
) -> Result<Vec<Array2<C64>>, CoreError> {
    let n = model.n_emitters();
    let d = model.dim();
    let l = model.liouvillian_matrix();
    let selectors: Vec<_> = (0..n).map(|a| TraceSelector::new(&sigma_plus(a, n), d)).collect();

    // Segment length limits: the quintic interpolant stays below ~1e-7
    // relative error while (segment length) * (local frequency) <= 0.4.
    // Fast transients are covered by capping the merge count, because the
    // integrator's own accepted step tracks the fastest surviving mode.
    let omega = oscillation_bound(model)?.max(1e-300);
    let h_cap = 0.4 / omega;
    let step_rate = (600.0 * opts.ode.rtol).powf(0.2);
    let merge_cap = ((0.4 / step_rate) as usize).clamp(1, 64);
    let tau_max = opts.tau_max.unwrap_or(1e9 / omega);

    let mut s0 = vec![Array2::<C64>::zeros((n, n)); delta.len()];

    for src_idx in 0..n {
        let b0 = vec_col(&sigma_minus(src_idx, n).dot(rho_ss));
        let b0_norm = b0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if b0_norm < 1e-14 {
            // Nothing to emit from this source (e.g. a vacuum steady state):
            // the correlation is identically zero.
            continue;
        }
        let mut segments: Vec<Segment> = Vec::new();

        struct Open {
            t0: f64,
            y0: Array1<C64>,
            f0: Array1<C64>,
            n_steps: usize,
        }
        let mut open: Option<Open> = None;
        let mut g_ref: f64 =
            selectors.iter().map(|s| s.eval(&b0).norm()).fold(0.0, f64::max);
        let mut below = 0usize;
        let mut decayed = false;

        let close = |segments: &mut Vec<Segment>,
                     o: Open,
                     t1: f64,
                     y1: &Array1<C64>,
                     f1: &Array1<C64>| {
            let h = t1 - o.t0;
            if h <= 0.0 {
                return;
            }
            let g2_0 = l.dot(&o.f0);
            let g2_1 = l.dot(f1);
            let coef = selectors
                .iter()
                .map(|sel| {
                    quintic_coef(
                        sel.eval(&o.y0),
                        sel.eval(&o.f0) * h,
                        sel.eval(&g2_0) * h * h,
                        sel.eval(y1),
                        sel.eval(f1) * h,
                        sel.eval(&g2_1) * h * h,
                    )
                })
                .collect();
            segments.push(Segment { t0: o.t0, h, coef });
        };

        let (t_end, y_end) = integrate_adaptive(
            |_, y| l.dot(y),
            0.0,
            tau_max,
            &b0,
            &opts.ode,
            |rec| {
                if open.is_none() {
                    open = Some(Open {
                        t0: rec.t0,
                        y0: rec.y0.clone(),
                        f0: rec.f0.clone(),
                        n_steps: 0,
                    });
                }
                {
                    let o = open.as_mut().expect("segment just opened");
                    o.n_steps += 1;
                }
                let g_now: f64 =
                    selectors.iter().map(|s| s.eval(rec.y1).norm()).fold(0.0, f64::max);
                g_ref = g_ref.max(g_now);
                // Cross-correlations start at zero, so the reference is the
                // running maximum; the state-norm floor catches sources whose
                // channel projections never rise above zero at all.
                let y_norm: f64 = rec.y1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if g_now < opts.trunc_rel * g_ref || y_norm < opts.trunc_rel * b0_norm {
                    below += 1;
                } else {
                    below = 0;
                }
                let stop = below >= opts.consecutive_below;
                let o = open.as_ref().expect("segment is open");
                if stop || o.n_steps >= merge_cap || rec.t1 - o.t0 >= h_cap {
                    let o = open.take().expect("segment is open");
                    close(&mut segments, o, rec.t1, rec.y1, rec.f1);
                }
                if stop {
                    decayed = true;
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        )?;
        if let Some(o) = open.take() {
            let f_end = l.dot(&y_end);
            close(&mut segments, o, t_end, &y_end, &f_end);
        }
        if !decayed {
            return Err(CoreError::Integrator(format!(
                "correlation from emitter {src_idx} had not decayed below \
                 {:.0e} of its maximum by tau = {t_end:.3e}; the generator \
                 may be marginal",
                opts.trunc_rel
            )));
        }

        for (k, &dl) in delta.iter().enumerate() {
            // Phase chaining: exp(-i dl t0) accumulated across consecutive
            // segments to avoid one exponential per segment.
            let mut phase = C64::new(0.0, -dl * segments.first().map_or(0.0, |s| s.t0)).exp();
            for seg in &segments {
                let theta = dl * seg.h;
                let (e, m) = oscillatory_moments(theta);
                for (ch, c) in seg.coef.iter().enumerate() {
                    let integral = c[0] * m[0]
                        + c[1] * m[1]
                        + c[2] * m[2]
                        + c[3] * m[3]
                        + c[4] * m[4]
                        + c[5] * m[5];
                    s0[k][(ch, src_idx)] += integral * phase * seg.h;
                }
                phase *= e;
            }
        }
    }
    Ok(s0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{dressed_density, BareState, DressedState};
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn bell_state_has_unit_log_negativity() {
        let rho = dressed_density(&DressedState::plus());
        let en = log_negativity(&rho, 2, &[1]).unwrap();
        assert!((en - 1.0).abs() < 1e-12, "E_N(|+>) = {en}");
        // Partial transpose over either site gives the same value.
        let en0 = log_negativity(&rho, 2, &[0]).unwrap();
        assert!((en - en0).abs() < 1e-12);
    }

    #[test]
    fn separable_states_have_zero_log_negativity() {
        let ground = BareState::ground().to_density();
        assert!(log_negativity(&ground, 2, &[1]).unwrap().abs() < 1e-12);
        let mut mixed: Array2<C64> = Array2::zeros((4, 4));
        mixed[(0, 0)] = c(0.5, 0.0);
        mixed[(3, 3)] = c(0.5, 0.0);
        assert!(log_negativity(&mixed, 2, &[1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn moments_match_direct_quadrature() {
        for &theta in &[0.05_f64, 0.5, 0.79, 0.81, 3.0, 20.0] {
            let (_, m) = oscillatory_moments(theta);
            for k in 0..6 {
                // Simpson's rule on a fine grid.
                let n = 20_000;
                let h = 1.0 / n as f64;
                let f = |u: f64| {
                    let p = u.powi(k as i32);
                    C64::new(0.0, -theta * u).exp() * p
                };
                let mut acc = f(0.0) + f(1.0);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += f(i as f64 * h) * w;
                }
                acc *= h / 3.0;
                assert!(
                    (acc - m[k]).norm() < 1e-12,
                    "theta {theta}, k {k}: {acc} vs {:?}",
                    m[k]
                );
            }
        }
    }

    #[test]
    fn quintic_reconstruction_is_exact_for_quintics() {
        // p(u) with random-ish complex coefficients, integrated against
        // exp(-i theta u): the Hermite data of p must reproduce p exactly.
        let coef = [
            c(0.3, -0.1),
            c(-1.2, 0.4),
            c(0.7, 0.9),
            c(0.2, -0.8),
            c(-0.5, 0.3),
            c(1.1, 0.2),
        ];
        let p = |u: f64| -> C64 {
            (0..6).map(|k| coef[k] * u.powi(k as i32)).sum()
        };
        let dp = |u: f64| -> C64 {
            (1..6).map(|k| coef[k] * (k as f64) * u.powi(k as i32 - 1)).sum()
        };
        let d2p = |u: f64| -> C64 {
            (2..6)
                .map(|k| coef[k] * ((k * (k - 1)) as f64) * u.powi(k as i32 - 2))
                .sum()
        };
        let hermite = quintic_coef(p(0.0), dp(0.0), d2p(0.0), p(1.0), dp(1.0), d2p(1.0));
        for (k, co) in coef.iter().enumerate() {
            assert!((hermite[k] - co).norm() < 1e-12, "coefficient {k}");
        }
        let theta = 2.3;
        let (_, m) = oscillatory_moments(theta);
        let filon: C64 = (0..6).map(|k| hermite[k] * m[k]).sum();
        let n = 40_000;
        let h = 1.0 / n as f64;
        let f = |u: f64| p(u) * C64::new(0.0, -theta * u).exp();
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(i as f64 * h) * w;
        }
        acc *= h / 3.0;
        assert!((filon - acc).norm() < 1e-12, "{filon} vs {acc}");
    }

    fn single_emitter_model(l: f64, g: f64) -> LindbladModel {
        let rates = RateSet {
            omega0: 1.0,
            gamma_down: array![[l]],
            gamma_up: array![[g]],
            delta_down: array![[0.0]],
            delta_up: array![[0.0]],
            gamma_dephase: vec![0.0],
            gamma_pump: vec![0.0],
        };
        LindbladModel::new(rates, true).unwrap()
    }

    #[test]
    fn single_emitter_spectrum_is_a_lorentzian() {
        // Decay l, gain pump g: the stationary emission line is
        // rho_ee * r / (r^2 + D^2) with r = (l + g)/2, peaked at D = 0.
        let (l, g) = (1.0, 0.2);
        let model = single_emitter_model(l, g);
        let rho_ss = model.steady_state().unwrap();
        let rho_ee = g / (l + g);
        let r = 0.5 * (l + g);
        let delta: Vec<f64> = (0..241).map(|i| -6.0 + 12.0 * i as f64 / 240.0).collect();
        for method in [SpectrumMethod::Resolvent, SpectrumMethod::TimeDomain] {
            let s = spectrum(
                &model,
                &rho_ss,
                &delta,
                method,
                &SpectrumOptions::default(),
                None,
            )
            .unwrap();
            let peak = rho_ee / r;
            for (k, &dl) in delta.iter().enumerate() {
                let expect = rho_ee * r / (r * r + dl * dl);
                assert!(
                    (s.total[k] - expect).abs() < 1e-7 * peak,
                    "{method:?} at D = {dl}: {} vs {expect}",
                    s.total[k]
                );
            }
        }
    }

    fn pair_model() -> LindbladModel {
        // Coupling well above the linewidths so the dressed lines resolve.
        let rates = RateSet {
            omega0: 1.0,
            gamma_down: array![[1.0, 0.9], [0.9, 1.0]],
            gamma_up: array![[0.05, 0.04], [0.04, 0.05]],
            delta_down: array![[0.0, 3.0], [3.0, 0.0]],
            delta_up: array![[0.0, 0.0], [0.0, 0.0]],
            gamma_dephase: vec![0.01, 0.01],
            gamma_pump: vec![0.02, 0.02],
        };
        LindbladModel::new(rates, true).unwrap()
    }

    #[test]
    fn two_routes_agree_on_a_pumped_pair() {
        let model = pair_model();
        let rho_ss = model.steady_state().unwrap();
        let delta = default_delta_grid(model.rates(), 4.0, 301);
        let opts = SpectrumOptions::default();
        let td =
            spectrum(&model, &rho_ss, &delta, SpectrumMethod::TimeDomain, &opts, None).unwrap();
        let res =
            spectrum(&model, &rho_ss, &delta, SpectrumMethod::Resolvent, &opts, None).unwrap();
        let dev = max_relative_deviation(&td, &res);
        assert!(dev < 1e-6, "route deviation {dev:.3e}");
    }

    #[test]
    fn dressed_lines_sit_at_the_coherent_coupling() {
        // Narrow lines relative to the coupling so overlap does not pull the
        // maxima. Independent pumps populate the antisymmetric state, whose
        // narrow line shows up in the per-emitter (diagonal) column; the
        // collective column only carries the symmetric transitions.
        let rates = RateSet {
            omega0: 1.0,
            gamma_down: array![[0.2, 0.18], [0.18, 0.2]],
            gamma_up: array![[0.01, 0.008], [0.008, 0.01]],
            delta_down: array![[0.0, 3.0], [3.0, 0.0]],
            delta_up: array![[0.0, 0.0], [0.0, 0.0]],
            gamma_dephase: vec![0.002, 0.002],
            gamma_pump: vec![0.004, 0.004],
        };
        let model = LindbladModel::new(rates, false).unwrap();
        let rho_ss = model.steady_state().unwrap();
        let delta: Vec<f64> = (0..1201).map(|i| -6.0 + 0.01 * i as f64).collect();
        let s = spectrum(
            &model,
            &rho_ss,
            &delta,
            SpectrumMethod::Resolvent,
            &SpectrumOptions::default(),
            None,
        )
        .unwrap();
        let step = delta[1] - delta[0];
        let peaks = detect_peaks(&delta, &s.diagonal, 1e-3);
        assert_eq!(peaks.len(), 2, "expected two dressed lines: {peaks:?}");
        assert!((peaks[0].position + 3.0).abs() <= step, "{:?}", peaks[0]);
        assert!((peaks[1].position - 3.0).abs() <= step, "{:?}", peaks[1]);
        // The subradiant line is the narrow one.
        assert!(peaks[0].fwhm < peaks[1].fwhm);
        // The collective column keeps its dominant line at the upper branch.
        let total_peaks = detect_peaks(&delta, &s.total, 1e-3);
        let top = total_peaks
            .iter()
            .max_by(|a, b| a.height.total_cmp(&b.height))
            .unwrap();
        assert!((top.position - 3.0).abs() <= step, "{top:?}");
    }

    #[test]
    fn vacuum_steady_state_emits_nothing() {
        // No gain and no pump: the steady state is the ground state and the
        // correlation is identically zero, so both routes return a flat
        // spectrum instead of hunting for a decay that never happens.
        let rates = RateSet {
            omega0: 1.0,
            gamma_down: array![[1.0, 0.6], [0.6, 1.0]],
            gamma_up: Array2::zeros((2, 2)),
            delta_down: array![[0.0, 0.8], [0.8, 0.0]],
            delta_up: Array2::zeros((2, 2)),
            gamma_dephase: vec![0.01, 0.01],
            gamma_pump: vec![0.0, 0.0],
        };
        let model = LindbladModel::new(rates, true).unwrap();
        let rho_ss = model.steady_state().unwrap();
        let delta: Vec<f64> = (0..11).map(|i| -2.0 + 0.4 * i as f64).collect();
        for method in [SpectrumMethod::TimeDomain, SpectrumMethod::Resolvent] {
            let s = spectrum(
                &model,
                &rho_ss,
                &delta,
                method,
                &SpectrumOptions::default(),
                None,
            )
            .unwrap();
            for v in s.total.iter().chain(s.diagonal.iter()).chain(s.cross.iter()) {
                assert!(v.abs() < 1e-12, "{method:?} leaked {v:.3e}");
            }
        }
    }

    #[test]
    fn uniform_weights_reproduce_the_total() {
        let model = pair_model();
        let rho_ss = model.steady_state().unwrap();
        let delta = default_delta_grid(model.rates(), 3.0, 101);
        let w = [c(1.0, 0.0), c(1.0, 0.0)];
        let s = spectrum(
            &model,
            &rho_ss,
            &delta,
            SpectrumMethod::Resolvent,
            &SpectrumOptions::default(),
            Some(&w),
        )
        .unwrap();
        let weighted = s.weighted.expect("weights were supplied");
        for (a, b) in weighted.iter().zip(s.total.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_detection_on_synthetic_lines() {
        let delta: Vec<f64> = (0..2001).map(|i| -10.0 + 20.0 * i as f64 / 2000.0).collect();
        let s: Vec<f64> = delta
            .iter()
            .map(|&x| {
                1.0 / (1.0 + (x + 4.0) * (x + 4.0)) + 0.3 / (0.01 + (x - 4.0) * (x - 4.0)) * 0.01
            })
            .collect();
        let peaks = detect_peaks(&delta, &s, 1e-3);
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!((peaks[0].position + 4.0).abs() < 0.02);
        assert!((peaks[1].position - 4.0).abs() < 0.02);
        // Widths are measured at half prominence, which sits a little above
        // half height for a peak riding on the other line's tail: slightly
        // under the ideal Lorentzian FWHM of 2 and 0.2.
        assert!((peaks[0].fwhm - 1.95).abs() < 0.1, "{:?}", peaks[0]);
        assert!((peaks[1].fwhm - 0.2).abs() < 0.02, "{:?}", peaks[1]);
    }
}
