//! Reduced equations of motion for two emitters, in the bare product basis
//! and in the dressed (collective) basis, plus closed-form solutions where
//! they exist.
//!
//! Basis ordering matches [`crate::linalg::embed_site`]:
//! index 0 = |g_a g_b>, 1 = |g_a e_b>, 2 = |e_a g_b>, 3 = |e_a e_b>, and the
//! tracked coherence is rho23 = <g_a e_b| rho |e_a g_b>. The dressed basis
//! uses |+-> = (|e_a g_b> +- |g_a e_b>)/sqrt(2) and rho_pm = <+|rho|->.
//!
//! Starting from a state with only populations and the one-excitation
//! coherence (every preset initial state), the full Lindblad generator never
//! populates the remaining coherence sectors, so these five components are
//! closed and evolve identically to the full density matrix.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use num_complex::Complex64 as C64;

use crate::error::CoreError;
use crate::linalg::hermitize;
use crate::liouvillian::LindbladModel;
use crate::ode::{integrate_to_grid, OdeOptions};

/// Populations and one-excitation coherence in the bare product basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BareState {
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
    pub rho44: f64,
    pub rho23: C64,
}

/// Populations and +/- coherence in the dressed collective basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DressedState {
    pub rho_gg: f64,
    pub rho_pp: f64,
    pub rho_mm: f64,
    pub rho_tt: f64,
    pub rho_pm: C64,
}

impl BareState {
    /// Both emitters in the ground state.
    pub fn ground() -> Self {
        BareState { rho11: 1.0, rho22: 0.0, rho33: 0.0, rho44: 0.0, rho23: C64::new(0.0, 0.0) }
    }

    /// Emitter a excited, emitter b ground.
    pub fn excited_a() -> Self {
        BareState { rho11: 0.0, rho22: 0.0, rho33: 1.0, rho44: 0.0, rho23: C64::new(0.0, 0.0) }
    }

    /// Population of emitter a (excited), rho33 + rho44.
    pub fn pop_a(&self) -> f64 {
        self.rho33 + self.rho44
    }

    /// Population of emitter b (excited), rho22 + rho44.
    pub fn pop_b(&self) -> f64 {
        self.rho22 + self.rho44
    }

    pub fn trace(&self) -> f64 {
        self.rho11 + self.rho22 + self.rho33 + self.rho44
    }

    /// Rotate to the dressed basis.
    pub fn to_dressed(&self) -> DressedState {
        let half_sum = 0.5 * (self.rho22 + self.rho33);
        DressedState {
            rho_gg: self.rho11,
            rho_pp: half_sum + self.rho23.re,
            rho_mm: half_sum - self.rho23.re,
            rho_tt: self.rho44,
            rho_pm: C64::new(0.5 * (self.rho33 - self.rho22), self.rho23.im),
        }
    }

    /// Embed into a full 4x4 density matrix (the untracked coherence
    /// sectors are identically zero for the supported initial states).
    pub fn to_density(&self) -> Array2<C64> {
        let mut rho = Array2::zeros((4, 4));
        rho[(0, 0)] = C64::new(self.rho11, 0.0);
        rho[(1, 1)] = C64::new(self.rho22, 0.0);
        rho[(2, 2)] = C64::new(self.rho33, 0.0);
        rho[(3, 3)] = C64::new(self.rho44, 0.0);
        rho[(1, 2)] = self.rho23;
        rho[(2, 1)] = self.rho23.conj();
        rho
    }

    /// Project a full 4x4 density matrix onto the tracked components.
    pub fn from_density(rho: &Array2<C64>) -> Self {
        assert_eq!(rho.dim(), (4, 4), "from_density: expected a 4x4 matrix");
        BareState {
            rho11: rho[(0, 0)].re,
            rho22: rho[(1, 1)].re,
            rho33: rho[(2, 2)].re,
            rho44: rho[(3, 3)].re,
            rho23: rho[(1, 2)],
        }
    }

    fn to_vec(self) -> Array1<C64> {
        Array1::from(vec![
            C64::new(self.rho11, 0.0),
            C64::new(self.rho22, 0.0),
            C64::new(self.rho33, 0.0),
            C64::new(self.rho44, 0.0),
            self.rho23,
        ])
    }

    fn from_vec(v: &Array1<C64>) -> Self {
        BareState {
            rho11: v[0].re,
            rho22: v[1].re,
            rho33: v[2].re,
            rho44: v[3].re,
            rho23: v[4],
        }
    }
}

impl DressedState {
    /// Symmetric single-excitation state |+>.
    pub fn plus() -> Self {
        DressedState {
            rho_gg: 0.0,
            rho_pp: 1.0,
            rho_mm: 0.0,
            rho_tt: 0.0,
            rho_pm: C64::new(0.0, 0.0),
        }
    }

    /// Antisymmetric single-excitation state |->.
    pub fn minus() -> Self {
        DressedState {
            rho_gg: 0.0,
            rho_pp: 0.0,
            rho_mm: 1.0,
            rho_tt: 0.0,
            rho_pm: C64::new(0.0, 0.0),
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho_gg + self.rho_pp + self.rho_mm + self.rho_tt
    }

    /// Population of emitter a: (rho_pp + rho_mm)/2 + Re rho_pm + rho_tt.
    pub fn pop_a(&self) -> f64 {
        0.5 * (self.rho_pp + self.rho_mm) + self.rho_pm.re + self.rho_tt
    }

    /// Rotate back to the bare product basis.
    pub fn to_bare(&self) -> BareState {
        let half_sum = 0.5 * (self.rho_pp + self.rho_mm);
        BareState {
            rho11: self.rho_gg,
            rho22: half_sum - self.rho_pm.re,
            rho33: half_sum + self.rho_pm.re,
            rho44: self.rho_tt,
            rho23: C64::new(0.5 * (self.rho_pp - self.rho_mm), self.rho_pm.im),
        }
    }

    fn to_vec(self) -> Array1<C64> {
        Array1::from(vec![
            C64::new(self.rho_gg, 0.0),
            C64::new(self.rho_pp, 0.0),
            C64::new(self.rho_mm, 0.0),
            C64::new(self.rho_tt, 0.0),
            self.rho_pm,
        ])
    }

    fn from_vec(v: &Array1<C64>) -> Self {
        DressedState {
            rho_gg: v[0].re,
            rho_pp: v[1].re,
            rho_mm: v[2].re,
            rho_tt: v[3].re,
            rho_pm: v[4],
        }
    }
}

/// Coefficients of the bare-basis equations, extracted from a two-emitter
/// model. `g` entries are the total upward rates (gain plus heuristic
/// pump, cross-pump toggle applied).
#[derive(Clone, Copy, Debug)]
pub struct BareBloch {
    pub l_aa: f64,
    pub l_bb: f64,
    pub l_ab: f64,
    pub g_aa: f64,
    pub g_bb: f64,
    pub g_ab: f64,
    /// Effective coherent coupling delta_down + delta_up.
    pub delta: f64,
    pub dephase_a: f64,
    pub dephase_b: f64,
}

impl BareBloch {
    pub fn from_model(model: &LindbladModel) -> Result<Self, CoreError> {
        if model.n_emitters() != 2 {
            return Err(CoreError::InvalidInput(format!(
                "reduced equations are written for 2 emitters, got {}",
                model.n_emitters()
            )));
        }
        let r = model.rates();
        let up = model.up_matrix();
        Ok(BareBloch {
            l_aa: r.gamma_down[(0, 0)],
            l_bb: r.gamma_down[(1, 1)],
            l_ab: r.gamma_down[(0, 1)],
            g_aa: up[(0, 0)],
            g_bb: up[(1, 1)],
            g_ab: up[(0, 1)],
            delta: r.delta_down[(0, 1)] + r.delta_up[(0, 1)],
            dephase_a: r.gamma_dephase[0],
            dephase_b: r.gamma_dephase[1],
        })
    }

    /// Time derivative of the tracked components.
    ///
    /// Populations: each emitter decays at its diagonal rate and is pumped
    /// at the diagonal upward rate; the cross rates couple only through the
    /// one-excitation coherence. The coherence decays at the mean of all
    /// four diagonal rates plus the mean dephasing rate, is sourced by the
    /// population imbalances through the cross rates, and precesses with
    /// the coherent coupling.
    pub fn rhs(&self, s: &BareState) -> BareState {
        let re23 = s.rho23.re;
        let im23 = s.rho23.im;
        let d22 = -(self.l_bb + self.g_aa) * s.rho22 + self.l_aa * s.rho44
            + self.g_bb * s.rho11
            - (self.l_ab + self.g_ab) * re23
            - 2.0 * self.delta * im23;
        let d33 = -(self.l_aa + self.g_bb) * s.rho33 + self.l_bb * s.rho44
            + self.g_aa * s.rho11
            - (self.l_ab + self.g_ab) * re23
            + 2.0 * self.delta * im23;
        let d44 = -(self.l_aa + self.l_bb) * s.rho44
            + self.g_aa * s.rho22
            + self.g_bb * s.rho33
            + 2.0 * self.g_ab * re23;
        let d11 = -(d22 + d33 + d44);
        let damp = 0.5 * (self.l_aa + self.l_bb + self.g_aa + self.g_bb)
            + 0.5 * (self.dephase_a + self.dephase_b);
        let d23 = -C64::new(damp, 0.0) * s.rho23
            + C64::new(
                0.5 * self.l_ab * (2.0 * s.rho44 - s.rho33 - s.rho22)
                    + 0.5 * self.g_ab * (2.0 * s.rho11 - s.rho33 - s.rho22),
                0.0,
            )
            - C64::new(0.0, self.delta * (s.rho33 - s.rho22));
        BareState { rho11: d11, rho22: d22, rho33: d33, rho44: d44, rho23: d23 }
    }
}

/// Coefficients of the dressed-basis equations. Requires a symmetric pair
/// (equal diagonal rates, equal dephasing and pump), because the +/- states
/// only decouple from each other in that case.
#[derive(Clone, Copy, Debug)]
pub struct DressedBloch {
    pub l_d: f64,
    pub l_ab: f64,
    pub g_d: f64,
    pub g_ab: f64,
    pub delta: f64,
    pub dephase: f64,
}

impl DressedBloch {
    pub fn from_model(model: &LindbladModel) -> Result<Self, CoreError> {
        let b = BareBloch::from_model(model)?;
        let scale = [b.l_aa, b.g_aa, b.l_ab.abs(), b.g_ab.abs(), 1e-300]
            .into_iter()
            .fold(0.0_f64, f64::max);
        if (b.l_aa - b.l_bb).abs() > 1e-9 * scale
            || (b.g_aa - b.g_bb).abs() > 1e-9 * scale
            || (b.dephase_a - b.dephase_b).abs() > 1e-9 * scale.max(b.dephase_a.abs())
        {
            return Err(CoreError::InvalidInput(
                "dressed-basis equations need a symmetric emitter pair \
                 (equal diagonal decay, upward, and dephasing rates)"
                    .into(),
            ));
        }
        Ok(DressedBloch {
            l_d: b.l_aa,
            l_ab: b.l_ab,
            g_d: b.g_aa,
            g_ab: b.g_ab,
            delta: b.delta,
            dephase: b.dephase_a,
        })
    }

    /// Collective decay rates (L_plus, L_minus) = l_d +- l_ab.
    pub fn l_pm(&self) -> (f64, f64) {
        (self.l_d + self.l_ab, self.l_d - self.l_ab)
    }

    /// Collective upward rates (G_plus, G_minus) = g_d +- g_ab.
    pub fn g_pm(&self) -> (f64, f64) {
        (self.g_d + self.g_ab, self.g_d - self.g_ab)
    }

    /// Time derivative in the dressed basis.
    ///
    /// The |+> and |-> populations exchange only through dephasing (rate
    /// dephase/2 each way); decay and pumping act on them with the
    /// collective rates. The +- coherence rotates at twice the coherent
    /// coupling and relaxes at the mean single-emitter rate, while
    /// dephasing damps only its imaginary part.
    pub fn rhs(&self, s: &DressedState) -> DressedState {
        let (lp, lm) = self.l_pm();
        let (gp, gm) = self.g_pm();
        let flip = 0.5 * self.dephase * (s.rho_pp - s.rho_mm);
        let d_pp = lp * s.rho_tt + gp * s.rho_gg - (lp + gp) * s.rho_pp - flip;
        let d_mm = lm * s.rho_tt + gm * s.rho_gg - (lm + gm) * s.rho_mm + flip;
        let d_tt = -2.0 * self.l_d * s.rho_tt
            + self.g_d * (s.rho_pp + s.rho_mm)
            + self.g_ab * (s.rho_pp - s.rho_mm);
        let d_gg = -(d_pp + d_mm + d_tt);
        let d_pm = -C64::new(self.l_d + self.g_d, 2.0 * self.delta) * s.rho_pm
            - C64::new(0.0, self.dephase * s.rho_pm.im);
        DressedState { rho_gg: d_gg, rho_pp: d_pp, rho_mm: d_mm, rho_tt: d_tt, rho_pm: d_pm }
    }

    /// Stationary state from the 3x3 population balance.
    ///
    /// The +- coherence has no stationary source, so it vanishes exactly.
    /// The populations solve a linear system; when that system is singular
    /// (for instance a completely dark |-> state with no dephasing) the
    /// stationary state is not unique and an error is returned.
    pub fn steady(&self) -> Result<DressedState, CoreError> {
        let (lp, lm) = self.l_pm();
        let (gp, gm) = self.g_pm();
        let hd = 0.5 * self.dephase;
        let a: Array2<f64> = ndarray::array![
            [lp + 2.0 * gp + hd, gp - hd, -(lp - gp)],
            [gm - hd, lm + 2.0 * gm + hd, -(lm - gm)],
            [gp, gm, -2.0 * self.l_d],
        ];
        // Rank check before solving: a singular balance matrix means a
        // one-parameter family of stationary states.
        let amax = a.iter().fold(0.0_f64, |m, &x| m.max(x.abs())).max(1e-300);
        let det = det3(&a);
        if det.abs() < 1e-12 * amax.powi(3) {
            return Err(CoreError::DegenerateSteadyState(format!(
                "population balance matrix is singular (det {det:.3e}); \
                 a dark collective state makes the stationary state non-unique"
            )));
        }
        let rhs: Array1<f64> = ndarray::array![gp, gm, 0.0];
        let sol = a
            .solve(&rhs)
            .map_err(|e| CoreError::Linalg(format!("dressed steady-state solve: {e}")))?;
        let (pp, mm, tt) = (sol[0], sol[1], sol[2]);
        Ok(DressedState {
            rho_gg: 1.0 - pp - mm - tt,
            rho_pp: pp,
            rho_mm: mm,
            rho_tt: tt,
            rho_pm: C64::new(0.0, 0.0),
        })
    }

    /// Closed-form solution without any upward process or dephasing:
    /// the dressed populations decay as pure exponentials at the collective
    /// rates and the coherence at the mean rate with phase 2*delta.
    ///
    /// Requires g = pump = dephase = 0 and an empty doubly excited level in
    /// the initial state (otherwise the populations pick up feed terms).
    pub fn nogain_analytic(
        &self,
        initial: &DressedState,
        t: f64,
    ) -> Result<DressedState, CoreError> {
        if self.g_d != 0.0 || self.g_ab != 0.0 || self.dephase != 0.0 {
            return Err(CoreError::InvalidInput(
                "closed-form solution requires zero upward rates and zero dephasing".into(),
            ));
        }
        if initial.rho_tt != 0.0 {
            return Err(CoreError::InvalidInput(
                "closed-form solution requires an empty doubly excited level".into(),
            ));
        }
        let (lp, lm) = self.l_pm();
        let pp = initial.rho_pp * (-lp * t).exp();
        let mm = initial.rho_mm * (-lm * t).exp();
        let pm = initial.rho_pm
            * (-C64::new(self.l_d, 2.0 * self.delta) * t).exp();
        Ok(DressedState {
            rho_gg: 1.0 - pp - mm,
            rho_pp: pp,
            rho_mm: mm,
            rho_tt: 0.0,
            rho_pm: pm,
        })
    }
}

fn det3(a: &Array2<f64>) -> f64 {
    a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
        - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
        + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)])
}

/// Integrate the bare-basis equations over an ascending time grid.
pub fn evolve_bare(
    model: &LindbladModel,
    initial: &BareState,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<BareState>, CoreError> {
    let ctx = BareBloch::from_model(model)?;
    let y0 = initial.to_vec();
    let raw = integrate_to_grid(
        |_, y| ctx.rhs(&BareState::from_vec(y)).to_vec(),
        t_grid,
        &y0,
        opts,
    )?;
    Ok(raw.iter().map(BareState::from_vec).collect())
}

/// Integrate the dressed-basis equations over an ascending time grid.
pub fn evolve_dressed(
    model: &LindbladModel,
    initial: &DressedState,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<DressedState>, CoreError> {
    let ctx = DressedBloch::from_model(model)?;
    let y0 = initial.to_vec();
    let raw = integrate_to_grid(
        |_, y| ctx.rhs(&DressedState::from_vec(y)).to_vec(),
        t_grid,
        &y0,
        opts,
    )?;
    Ok(raw.iter().map(DressedState::from_vec).collect())
}

/// Stationary dressed state of a symmetric pair.
pub fn dressed_steady(model: &LindbladModel) -> Result<DressedState, CoreError> {
    DressedBloch::from_model(model)?.steady()
}

/// Hermitized 4x4 density matrix of a dressed state, in the bare basis.
pub fn dressed_density(s: &DressedState) -> Array2<C64> {
    hermitize(&s.to_bare().to_density())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace;
    use crate::qnm::RateSet;
    use ndarray::array;

    fn model(l_ab: f64, g_d: f64, g_ab: f64, dephase: f64, pump: f64) -> LindbladModel {
        let rates = RateSet {
            omega0: 1.0,
            gamma_down: array![[1.0, l_ab], [l_ab, 1.0]],
            gamma_up: array![[g_d, g_ab], [g_ab, g_d]],
            delta_down: array![[0.0, 0.35], [0.35, 0.0]],
            delta_up: array![[0.0, -0.05], [-0.05, 0.0]],
            gamma_dephase: vec![dephase, dephase],
            gamma_pump: vec![pump, pump],
        };
        LindbladModel::new(rates, true).unwrap()
    }

    fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
    }

    #[test]
    fn conversions_round_trip() {
        let s = BareState {
            rho11: 0.1,
            rho22: 0.2,
            rho33: 0.4,
            rho44: 0.3,
            rho23: C64::new(0.07, -0.03),
        };
        let back = s.to_dressed().to_bare();
        assert!((back.rho22 - s.rho22).abs() < 1e-15);
        assert!((back.rho33 - s.rho33).abs() < 1e-15);
        assert!((back.rho23 - s.rho23).norm() < 1e-15);
        // Dressed populations of |e_a g_b>: half in each of |+>, |->.
        let d = BareState::excited_a().to_dressed();
        assert!((d.rho_pp - 0.5).abs() < 1e-15);
        assert!((d.rho_mm - 0.5).abs() < 1e-15);
        assert!((d.rho_pm.re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bare_matches_full_liouvillian() {
        let m = model(0.6, 0.25, 0.2, 0.04, 0.03);
        let s0 = BareState::excited_a();
        let ts = grid(8.0, 16);
        let reduced = evolve_bare(&m, &s0, &ts, &OdeOptions::default()).unwrap();
        let full = m.evolve(&s0.to_density(), &ts, &OdeOptions::default()).unwrap();
        for (r, f) in reduced.iter().zip(full.iter()) {
            let fb = BareState::from_density(f);
            assert!((r.rho22 - fb.rho22).abs() < 1e-9);
            assert!((r.rho33 - fb.rho33).abs() < 1e-9);
            assert!((r.rho44 - fb.rho44).abs() < 1e-9);
            assert!((r.rho23 - fb.rho23).norm() < 1e-9);
            // Untracked coherences must stay empty in the full evolution.
            assert!(f[(0, 3)].norm() < 1e-10);
            assert!(f[(0, 1)].norm() < 1e-10);
        }
    }

    #[test]
    fn dressed_matches_bare_through_rotation() {
        let m = model(0.8, 0.3, 0.3, 0.02, 0.0);
        let s0 = BareState::excited_a();
        let ts = grid(6.0, 12);
        let bare = evolve_bare(&m, &s0, &ts, &OdeOptions::default()).unwrap();
        let dressed = evolve_dressed(&m, &s0.to_dressed(), &ts, &OdeOptions::default()).unwrap();
        for (b, d) in bare.iter().zip(dressed.iter()) {
            let bd = b.to_dressed();
            assert!((bd.rho_pp - d.rho_pp).abs() < 1e-9);
            assert!((bd.rho_mm - d.rho_mm).abs() < 1e-9);
            assert!((bd.rho_tt - d.rho_tt).abs() < 1e-9);
            assert!((bd.rho_pm - d.rho_pm).norm() < 1e-9);
        }
    }

    #[test]
    fn dressed_steady_matches_liouvillian_null_space() {
        let m = model(0.5, 0.2, 0.15, 0.06, 0.01);
        let ss = dressed_steady(&m).unwrap();
        let rho = m.steady_state().unwrap();
        let bare = BareState::from_density(&rho).to_dressed();
        assert!((ss.rho_pp - bare.rho_pp).abs() < 1e-10);
        assert!((ss.rho_mm - bare.rho_mm).abs() < 1e-10);
        assert!((ss.rho_tt - bare.rho_tt).abs() < 1e-10);
        assert!((ss.rho_gg - bare.rho_gg).abs() < 1e-10);
        assert!(bare.rho_pm.norm() < 1e-10, "stationary +- coherence must vanish");
        assert!((trace(&rho).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_solve_matches_fixed_point_iteration() {
        // Cross-check the linear solve against Gauss-Seidel iteration of the
        // balance relations, each population written as feed over drain.
        let m = model(0.7, 0.25, 0.2, 0.04, 0.03);
        let b = DressedBloch::from_model(&m).unwrap();
        let (lp, lm) = b.l_pm();
        let (gp, gm) = b.g_pm();
        let hd = 0.5 * b.dephase;
        let (mut pp, mut mm, mut tt) = (0.0_f64, 0.0_f64, 0.0_f64);
        let mut converged = false;
        for _ in 0..200_000 {
            let gg = 1.0 - pp - mm - tt;
            let pp1 = (lp * tt + gp * gg + hd * mm) / (lp + gp + hd);
            let mm1 = (lm * tt + gm * gg + hd * pp1) / (lm + gm + hd);
            let tt1 = (gp * pp1 + gm * mm1) / (2.0 * b.l_d);
            let step = (pp1 - pp).abs().max((mm1 - mm).abs()).max((tt1 - tt).abs());
            pp = pp1;
            mm = mm1;
            tt = tt1;
            if step < 1e-15 {
                converged = true;
                break;
            }
        }
        assert!(converged, "fixed-point iteration stalled");
        let ss = b.steady().unwrap();
        assert!((ss.rho_pp - pp).abs() < 1e-12);
        assert!((ss.rho_mm - mm).abs() < 1e-12);
        assert!((ss.rho_tt - tt).abs() < 1e-12);
    }

    #[test]
    fn fully_collective_limit_has_closed_form_populations() {
        // l_ab = l_d and g_ab = g_d: rho_pp = g l / (l + g)^2,
        // rho_tt = (g / (l + g))^2, emitter population g / (l + g).
        // A whisper of dephasing keeps the dark |-> state regular.
        let (l, g) = (1.0, 0.3);
        let m = model(l, g, g, 1e-7, 0.0);
        let ss = dressed_steady(&m).unwrap();
        let tol = 1e-5;
        assert!((ss.rho_pp - g * l / (l + g).powi(2)).abs() < tol);
        assert!((ss.rho_tt - (g / (l + g)).powi(2)).abs() < tol);
        assert!((ss.to_bare().pop_a() - g / (l + g)).abs() < tol);
    }

    #[test]
    fn dark_state_without_dephasing_is_degenerate() {
        let m = model(1.0, 0.0, 0.0, 0.0, 0.0);
        let err = dressed_steady(&m);
        assert!(
            matches!(err, Err(CoreError::DegenerateSteadyState(_))),
            "perfectly subradiant pair must be flagged: {err:?}"
        );
    }

    #[test]
    fn nogain_closed_form_matches_integration() {
        let m = model(0.7, 0.0, 0.0, 0.0, 0.0);
        let ctx = DressedBloch::from_model(&m).unwrap();
        let s0 = BareState::excited_a().to_dressed();
        let ts = grid(5.0, 10);
        let num = evolve_dressed(&m, &s0, &ts, &OdeOptions::default()).unwrap();
        for (t, n) in ts.iter().zip(num.iter()) {
            let a = ctx.nogain_analytic(&s0, *t).unwrap();
            assert!((a.rho_pp - n.rho_pp).abs() < 1e-10);
            assert!((a.rho_mm - n.rho_mm).abs() < 1e-10);
            assert!((a.rho_pm - n.rho_pm).norm() < 1e-10);
            assert!((a.rho_gg - n.rho_gg).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_is_preserved_by_both_reductions() {
        let m = model(0.4, 0.35, 0.1, 0.08, 0.05);
        let ts = grid(12.0, 6);
        let bare = evolve_bare(&m, &BareState::ground(), &ts, &OdeOptions::default()).unwrap();
        for s in &bare {
            assert!((s.trace() - 1.0).abs() < 1e-10);
        }
        let dressed =
            evolve_dressed(&m, &DressedState::plus(), &ts, &OdeOptions::default()).unwrap();
        for s in &dressed {
            assert!((s.trace() - 1.0).abs() < 1e-10);
        }
    }
}
