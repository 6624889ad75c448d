//! Emitter decay/pump rates and coherent shifts from a single quasinormal
//! mode of a lossy, optionally amplifying resonator.
//!
//! The mode enters through its complex resonance (omega_c - i*gamma_c), its
//! projected amplitude at each emitter, and one dimensionless overlap
//! integral of the normalized mode intensity with the gain region. Every
//! returned rate is expressed in background-Purcell units: the decay rate a
//! reference dipole would have in the homogeneous background medium at the
//! same frequency. In those units all dipole-moment and vacuum-permittivity
//! prefactors cancel, so the module works entirely from
//!
//!   Im G_B(omega) = n_b * k^3 / (6 pi),   k = omega / (hbar c),
//!
//! with omega in eV and lengths in nm.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::CoreError;

/// hbar * c in eV nm.
pub const HBAR_C_EV_NM: f64 = 197.32698;

/// Single-quasinormal-mode description of the photonic environment.
///
/// `mode_amp[i]` is the projected mode amplitude d_i . f_c(r_i) / |d_ref| at
/// emitter i, in nm^(-3/2); `dipole_scale[i]` rescales emitter i's dipole
/// magnitude relative to the reference dipole. `gain_overlap` is the overlap
/// integral of the normalized mode intensity with the amplifying region and
/// `alpha_g` the gain strength (-Im eps of the gain medium).
#[derive(Clone, Debug, PartialEq)]
pub struct QnmModel {
    /// Mode resonance frequency, eV.
    pub omega_c: f64,
    /// Mode half-linewidth, eV. Must stay positive: gamma_c -> 0 is the
    /// lasing threshold where the linear theory breaks down.
    pub gamma_c: f64,
    /// Projected mode amplitude per emitter, nm^(-3/2).
    pub mode_amp: Vec<C64>,
    /// Overlap of mode intensity with the gain region, dimensionless.
    pub gain_overlap: f64,
    /// Gain strength, -Im eps_gain. Zero turns amplification off.
    pub alpha_g: f64,
    /// Background refractive index.
    pub n_b: f64,
    /// Dipole magnitude per emitter relative to the reference dipole.
    pub dipole_scale: Vec<f64>,
    /// Projected mode amplitude at a detector position, if spectra weighted
    /// by propagation to a detector are wanted.
    pub detector_amp: Option<C64>,
}

impl QnmModel {
    /// Number of emitters covered by the model.
    pub fn n_emitters(&self) -> usize {
        self.mode_amp.len()
    }

    /// Check all model invariants, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.omega_c > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "qnm.omega_c must be > 0 eV, got {}",
                self.omega_c
            )));
        }
        if !(self.gamma_c > 0.0) {
            return Err(CoreError::UnstableGenerator(format!(
                "qnm.gamma_c must be > 0 eV (gamma_c <= 0 is at or past the \
                 lasing threshold), got {}",
                self.gamma_c
            )));
        }
        if !(self.n_b > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "qnm.n_b must be > 0, got {}",
                self.n_b
            )));
        }
        if self.alpha_g < 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "qnm.alpha_g must be >= 0, got {}",
                self.alpha_g
            )));
        }
        if self.gain_overlap < 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "qnm.gain_overlap must be >= 0, got {}",
                self.gain_overlap
            )));
        }
        if self.mode_amp.is_empty() {
            return Err(CoreError::InvalidInput("qnm.mode_amp is empty".into()));
        }
        if self.dipole_scale.len() != self.mode_amp.len() {
            return Err(CoreError::InvalidInput(format!(
                "qnm.dipole_scale has {} entries but qnm.mode_amp has {}",
                self.dipole_scale.len(),
                self.mode_amp.len()
            )));
        }
        if self.mode_amp.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::InvalidInput("qnm.mode_amp has a non-finite entry".into()));
        }
        if self.dipole_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(CoreError::InvalidInput(
                "qnm.dipole_scale entries must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Complex expansion coefficient A_c(omega) = omega / (2 (omega_c~ - omega))
    /// of the single-mode Green function, omega_c~ = omega_c - i gamma_c.
    pub fn ac_coefficient(&self, omega: f64) -> C64 {
        assert!(omega > 0.0, "ac_coefficient: omega must be > 0, got {omega}");
        let denom = C64::new(self.omega_c - omega, -self.gamma_c);
        C64::new(omega, 0.0) / (2.0 * denom)
    }

    /// Im G_B(omega) = n_b k^3 / (6 pi) of the homogeneous background,
    /// nm^-3. This is the Purcell normalization: a rate r (same internal
    /// units) corresponds to r / im_green_background in Purcell units.
    pub fn im_green_background(&self, omega: f64) -> f64 {
        assert!(omega > 0.0, "im_green_background: omega must be > 0, got {omega}");
        let k = omega / HBAR_C_EV_NM;
        self.n_b * k.powi(3) / (6.0 * std::f64::consts::PI)
    }

    /// Projected single-mode Green function between emitters `a` and `b`:
    /// s_a s_b A_c(omega) f_a f_b (unconjugated product), nm^-3.
    pub fn green_projected(&self, omega: f64, a: usize, b: usize) -> C64 {
        let f = &self.mode_amp;
        self.dipole_scale[a] * self.dipole_scale[b] * self.ac_coefficient(omega) * f[a] * f[b]
    }

    /// Projected gain kernel between emitters `a` and `b`:
    /// s_a s_b |A_c(omega)|^2 f_a conj(f_b) alpha_g gain_overlap, nm^-3.
    pub fn k_projected(&self, omega: f64, a: usize, b: usize) -> C64 {
        let f = &self.mode_amp;
        let a2 = self.ac_coefficient(omega).norm_sqr();
        self.dipole_scale[a] * self.dipole_scale[b]
            * a2
            * f[a]
            * f[b].conj()
            * self.alpha_g
            * self.gain_overlap
    }

    /// Loss-medium decay matrix element in Purcell units:
    /// Im[green_projected] / Im G_B. Diagonal entries are the Purcell
    /// factor of the corresponding emitter.
    pub fn gamma_nldos(&self, omega: f64, a: usize, b: usize) -> f64 {
        self.green_projected(omega, a, b).im / self.im_green_background(omega)
    }

    /// Loss-medium coherent coupling (a != b) or Lamb shift (a == b) in
    /// Purcell units: -Re[green_projected] / (2 Im G_B).
    pub fn delta_nldos(&self, omega: f64, a: usize, b: usize) -> f64 {
        -self.green_projected(omega, a, b).re / (2.0 * self.im_green_background(omega))
    }

    /// Gain-driven incoherent pump matrix element in Purcell units:
    /// Re[k_projected] / Im G_B.
    pub fn gamma_up(&self, omega: f64, a: usize, b: usize) -> f64 {
        self.k_projected(omega, a, b).re / self.im_green_background(omega)
    }

    /// Gain contribution to the coherent coupling in Purcell units:
    /// -Im[k_projected] / (2 Im G_B). Vanishes for equal-phase mode
    /// amplitudes, and always on the diagonal.
    pub fn delta_up(&self, omega: f64, a: usize, b: usize) -> f64 {
        -self.k_projected(omega, a, b).im / (2.0 * self.im_green_background(omega))
    }

    /// Total decay matrix element: the gain medium contributes the same
    /// amount to downward and upward transitions, so
    /// gamma_down = gamma_nldos + gamma_up entrywise.
    pub fn gamma_down_total(&self, omega: f64, a: usize, b: usize) -> f64 {
        self.gamma_nldos(omega, a, b) + self.gamma_up(omega, a, b)
    }

    /// Total coherent coupling: delta_down = delta_nldos + delta_up.
    pub fn delta_down_total(&self, omega: f64, a: usize, b: usize) -> f64 {
        self.delta_nldos(omega, a, b) + self.delta_up(omega, a, b)
    }

    /// Assemble the full rate set at working frequency `omega0`.
    ///
    /// `gamma_dephase` and `gamma_pump` are per-emitter pure-dephasing and
    /// heuristic incoherent-pump rates, already in Purcell units of
    /// Im G_B(omega0); they are passed through unchanged.
    pub fn rate_set(
        &self,
        omega0: f64,
        gamma_dephase: &[f64],
        gamma_pump: &[f64],
    ) -> Result<RateSet, CoreError> {
        self.validate()?;
        if !(omega0 > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "omega0 must be > 0 eV, got {omega0}"
            )));
        }
        let n = self.n_emitters();
        if gamma_dephase.len() != n || gamma_pump.len() != n {
            return Err(CoreError::InvalidInput(format!(
                "gamma_dephase/gamma_pump must have {n} entries, got {}/{}",
                gamma_dephase.len(),
                gamma_pump.len()
            )));
        }
        let mut gamma_down = Array2::zeros((n, n));
        let mut gamma_up = Array2::zeros((n, n));
        let mut delta_down = Array2::zeros((n, n));
        let mut delta_up = Array2::zeros((n, n));
        // Upper triangle mirrored; for complex amplitude phases k_projected
        // picks up an antisymmetric imaginary part which has no symmetric
        // Lindblad reading, so the (a, b) value with a <= b is used.
        for a in 0..n {
            for b in a..n {
                let gd = self.gamma_down_total(omega0, a, b);
                let gu = self.gamma_up(omega0, a, b);
                let dd = self.delta_down_total(omega0, a, b);
                let du = self.delta_up(omega0, a, b);
                gamma_down[(a, b)] = gd;
                gamma_down[(b, a)] = gd;
                gamma_up[(a, b)] = gu;
                gamma_up[(b, a)] = gu;
                delta_down[(a, b)] = dd;
                delta_down[(b, a)] = dd;
                delta_up[(a, b)] = du;
                delta_up[(b, a)] = du;
            }
        }
        let rates = RateSet {
            omega0,
            gamma_down,
            gamma_up,
            delta_down,
            delta_up,
            gamma_dephase: gamma_dephase.to_vec(),
            gamma_pump: gamma_pump.to_vec(),
        };
        rates.validate()?;
        Ok(rates)
    }

    /// Rescale all mode amplitudes by one positive factor so that the
    /// diagonal total decay rate of emitter 0 meets every anchor
    /// `(omega, target)` in Purcell units.
    ///
    /// Every rate is quadratic in the amplitude scale, so a single step is
    /// exact. If the anchors are not simultaneously achievable within a
    /// relative spread of 1e-6, the per-anchor best-fit residuals are
    /// reported instead.
    pub fn calibrate(&self, anchors: &[(f64, f64)]) -> Result<QnmModel, CoreError> {
        self.validate()?;
        if anchors.is_empty() {
            return Err(CoreError::InvalidInput("calibrate: no anchors given".into()));
        }
        let mut scales_sq = Vec::with_capacity(anchors.len());
        for &(omega, target) in anchors {
            if !(omega > 0.0) || !(target > 0.0) {
                return Err(CoreError::InvalidInput(format!(
                    "calibrate: anchor (omega = {omega}, target = {target}) \
                     must be positive"
                )));
            }
            let current = self.gamma_down_total(omega, 0, 0);
            if !(current > 0.0) {
                return Err(CoreError::InvalidInput(format!(
                    "calibrate: model predicts non-positive decay {current} at \
                     omega = {omega} eV; cannot scale to {target}"
                )));
            }
            scales_sq.push(target / current);
        }
        let s2_ref = scales_sq[0];
        let spread = scales_sq
            .iter()
            .map(|s2| (s2 / s2_ref - 1.0).abs())
            .fold(0.0, f64::max);
        if spread > 1e-6 {
            let residuals: Vec<String> = anchors
                .iter()
                .zip(&scales_sq)
                .map(|(&(omega, target), s2)| {
                    let achieved = target * s2_ref / s2;
                    format!(
                        "omega = {omega} eV: target {target}, best-fit {achieved:.6} \
                         (rel. residual {:.3e})",
                        (achieved - target).abs() / target
                    )
                })
                .collect();
            return Err(CoreError::InconsistentAnchors(format!(
                "no single amplitude scale fits all anchors (spread {spread:.3e}); {}",
                residuals.join("; ")
            )));
        }
        let s = s2_ref.sqrt();
        let mut out = self.clone();
        for f in &mut out.mode_amp {
            *f *= s;
        }
        if let Some(d) = &mut out.detector_amp {
            *d *= s;
        }
        Ok(out)
    }
}

/// Complete incoherent/coherent rate description of n emitters at one
/// working frequency, in background-Purcell units.
///
/// `gamma_down` is the total decay matrix (loss-medium part plus the gain
/// contribution), `gamma_up` the gain-driven pump matrix, `delta_down` /
/// `delta_up` the matching coherent couplings (diagonal of `delta_down` is
/// the Lamb shift, absorbed into the rotating frame and never applied by
/// the generator builders). `gamma_dephase` and `gamma_pump` are
/// per-emitter pure-dephasing and heuristic-pump rates.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSet {
    /// Working frequency, eV.
    pub omega0: f64,
    pub gamma_down: Array2<f64>,
    pub gamma_up: Array2<f64>,
    pub delta_down: Array2<f64>,
    pub delta_up: Array2<f64>,
    pub gamma_dephase: Vec<f64>,
    pub gamma_pump: Vec<f64>,
}

impl RateSet {
    /// Number of emitters.
    pub fn n(&self) -> usize {
        self.gamma_down.nrows()
    }

    /// Largest rate magnitude, used for relative tolerances.
    pub fn rate_scale(&self) -> f64 {
        let mats = [&self.gamma_down, &self.gamma_up, &self.delta_down, &self.delta_up];
        let m = mats
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0_f64, |acc, &x| acc.max(x.abs()));
        self.gamma_dephase
            .iter()
            .chain(&self.gamma_pump)
            .fold(m, |acc, &x| acc.max(x.abs()))
    }

    /// Validate symmetry, dimensions, and sign constraints. Indefinite rate
    /// matrices are allowed here (the stability guard in the Liouvillian
    /// module catches unphysical generators); negative diagonals are not.
    pub fn validate(&self) -> Result<(), CoreError> {
        let n = self.n();
        for (name, m) in [
            ("gamma_down", &self.gamma_down),
            ("gamma_up", &self.gamma_up),
            ("delta_down", &self.delta_down),
            ("delta_up", &self.delta_up),
        ] {
            if m.dim() != (n, n) {
                return Err(CoreError::InvalidInput(format!(
                    "rates.{name} must be {n}x{n}, got {:?}",
                    m.dim()
                )));
            }
            let scale = self.rate_scale().max(1e-300);
            for a in 0..n {
                for b in (a + 1)..n {
                    if (m[(a, b)] - m[(b, a)]).abs() > 1e-9 * scale {
                        return Err(CoreError::InvalidInput(format!(
                            "rates.{name} is not symmetric at ({a}, {b}): \
                             {} vs {}",
                            m[(a, b)],
                            m[(b, a)]
                        )));
                    }
                }
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(CoreError::InvalidInput(format!(
                    "rates.{name} has a non-finite entry"
                )));
            }
        }
        for a in 0..n {
            if self.gamma_down[(a, a)] < 0.0 {
                return Err(CoreError::InvalidInput(format!(
                    "rates.gamma_down[{a}][{a}] must be >= 0, got {}",
                    self.gamma_down[(a, a)]
                )));
            }
            if self.gamma_up[(a, a)] < 0.0 {
                return Err(CoreError::InvalidInput(format!(
                    "rates.gamma_up[{a}][{a}] must be >= 0, got {}",
                    self.gamma_up[(a, a)]
                )));
            }
        }
        if self.gamma_dephase.len() != n || self.gamma_pump.len() != n {
            return Err(CoreError::InvalidInput(format!(
                "rates.gamma_dephase/gamma_pump must have {n} entries, got {}/{}",
                self.gamma_dephase.len(),
                self.gamma_pump.len()
            )));
        }
        if self.gamma_dephase.iter().any(|g| *g < 0.0) {
            return Err(CoreError::InvalidInput(
                "rates.gamma_dephase entries must be >= 0".into(),
            ));
        }
        if self.gamma_pump.iter().any(|g| *g < 0.0) {
            return Err(CoreError::InvalidInput(
                "rates.gamma_pump entries must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Heuristic-pump rate matrix. Diagonal entries are the per-emitter pump
    /// rates; with `include_cross` the off-diagonal entries couple emitters
    /// a and b at sqrt(P_a P_b), which reduces to the common pump rate for
    /// equal pumps and keeps the matrix positive semidefinite.
    pub fn pump_matrix(&self, include_cross: bool) -> Array2<f64> {
        let n = self.n();
        let mut m = Array2::zeros((n, n));
        for a in 0..n {
            m[(a, a)] = self.gamma_pump[a];
        }
        if include_cross {
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        m[(a, b)] = (self.gamma_pump[a] * self.gamma_pump[b]).sqrt();
                    }
                }
            }
        }
        m
    }

    /// Copy with the cross-emitter gain pump entries zeroed (diagonal kept).
    /// Used by the cross-pump toggle of the spectrum pipeline.
    pub fn with_cross_gain_zeroed(&self) -> RateSet {
        let mut out = self.clone();
        let n = self.n();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    out.gamma_up[(a, b)] = 0.0;
                }
            }
        }
        out
    }

    /// Collective decay rates (Gamma_plus, Gamma_minus) of the symmetric /
    /// antisymmetric single-excitation states of a two-emitter system.
    ///
    /// Gamma_plus = gamma_down_aa + gamma_down_ab and
    /// Gamma_minus = gamma_down_aa - gamma_down_ab, which equals the
    /// loss-medium + gain decomposition Gamma_LDOS_aa +- Gamma_NLDOS_ab +
    /// Gamma_up_aa +- Gamma_up_ab because gamma_down already contains the
    /// gain contribution entrywise.
    pub fn collective(&self) -> Result<(f64, f64), CoreError> {
        if self.n() != 2 {
            return Err(CoreError::InvalidInput(format!(
                "collective rates are defined for exactly 2 emitters, got {}",
                self.n()
            )));
        }
        let scale = self.rate_scale().max(1e-300);
        let (gaa, gbb) = (self.gamma_down[(0, 0)], self.gamma_down[(1, 1)]);
        if (gaa - gbb).abs() > 1e-9 * scale {
            return Err(CoreError::InvalidInput(format!(
                "collective rates need equal diagonal decay rates, got \
                 gamma_down_aa = {gaa} vs gamma_down_bb = {gbb}"
            )));
        }
        let gab = self.gamma_down[(0, 1)];
        Ok((gaa + gab, gaa - gab))
    }

    /// True if the two-emitter set has equal diagonals and the dephase/pump
    /// vectors are uniform, within `tol` relative to the rate scale.
    pub fn is_symmetric_pair(&self, tol: f64) -> bool {
        if self.n() != 2 {
            return false;
        }
        let scale = self.rate_scale().max(1e-300);
        let close = |x: f64, y: f64| (x - y).abs() <= tol * scale;
        close(self.gamma_down[(0, 0)], self.gamma_down[(1, 1)])
            && close(self.gamma_up[(0, 0)], self.gamma_up[(1, 1)])
            && close(self.gamma_dephase[0], self.gamma_dephase[1])
            && close(self.gamma_pump[0], self.gamma_pump[1])
    }
}
