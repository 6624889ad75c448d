//! Simulation engine for the collective emission dynamics of two-level
//! emitters coupled through a lossy, optionally amplifying photonic medium.
//!
//! The crate is organized around a single pipeline:
//!
//! 1. [`qnm`] turns a quasinormal-mode description of the medium into
//!    incoherent decay/pump rates and coherent coupling shifts, all in
//!    background-Purcell units.
//! 2. [`liouvillian`] builds the Lindblad generator on the full 2^n
//!    Hilbert space, evolves density matrices, and solves steady states.
//! 3. [`bloch`] carries the reduced two-emitter equations of motion in
//!    the bare and dressed (symmetric/antisymmetric) bases, with
//!    closed-form steady states and no-gain analytic solutions.
//! 4. [`observables`] computes logarithmic negativity, two-time
//!    correlations, and incoherent emission spectra.
//!
//! All rates are dimensionless multiples of the background-medium decay
//! rate of a reference dipole at the working frequency; time is measured
//! in inverse rates of the same unit system.

pub mod bloch;
pub mod error;
pub mod linalg;
pub mod liouvillian;
pub mod observables;
pub mod ode;
pub mod qnm;

pub use error::CoreError;

/// Complex double-precision scalar used throughout.
pub type C64 = num_complex::Complex64;
