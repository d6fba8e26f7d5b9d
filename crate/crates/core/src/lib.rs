//! Four-level Rydberg RF receiver simulator.
//!
//! Models a ladder EIT scheme (ground → intermediate → Rydberg → Rydberg')
//! in a Doppler-broadened thermal vapor cell, driven by a probe laser, a
//! coupling laser (optionally phase-modulated), and an RF field between the
//! two Rydberg states. Two detection protocols are implemented:
//!
//! * **CP** (conventional protocol): DC probe transparency — the change in
//!   probe transmission induced by the coupling beam, reduced by
//!   Autler–Townes splitting when the RF field is on.
//! * **MTP** (modulation transfer protocol): the coupling beam carries weak
//!   phase-modulation sidebands at `omega_mod`; the atomic nonlinearity
//!   transfers the modulation onto the probe, which is detected as a beat
//!   at `omega_mod` and quantified by the relative modulation amplitude
//!   (R.M.A).
//!
//! The crate is organized bottom-up:
//!
//! * [`atom`] — physical constants, parameter sets, unit conversions.
//! * [`linalg`] — dense 16×16 complex LU kernel used by every solve.
//! * [`liouvillian`] — vectorized master-equation generators per velocity
//!   class (Hamiltonian commutator blocks, relaxation, feed).
//! * [`steady`] — stationary solutions: direct solve (CP), first-order
//!   harmonic balance (MTP), and a time-domain integrator used as oracle.
//! * [`velocity`] — Maxwell-weighted velocity quadrature grids.
//! * [`medium`] — Doppler averaging and slice-by-slice propagation of the
//!   probe carrier and generated sidebands through the cell; density
//!   calibration against a target resonant transmission.
//! * [`analysis`] — spectra, modulation-parameter maps, RF response curves,
//!   slope maps, bandwidth contours, sensitivities, and protocol ratios.
//!
//! All computations are deterministic: parallel sweeps reduce in a fixed
//! order, so results are independent of thread count.

pub mod analysis;
pub mod atom;
pub mod linalg;
pub mod liouvillian;
pub mod medium;
pub mod steady;
pub mod velocity;

pub use num_complex::Complex64 as C64;

/// Errors surfaced by solvers and pipelines.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// A 16×16 system was numerically singular (reciprocal condition
    /// estimate below threshold). Signals unphysical parameters such as
    /// all relaxation rates zero.
    #[error("singular linear system (rcond estimate {rcond:.3e}); check that relaxation rates are positive")]
    Singular { rcond: f64 },

    /// The time-domain integrator did not reach a periodic steady state
    /// within the allowed number of periods.
    #[error("time-domain integration did not converge: stroboscopic change {delta:.3e} after {periods} periods (threshold {threshold:.1e})")]
    OracleDivergence {
        periods: usize,
        delta: f64,
        threshold: f64,
    },

    /// Density calibration could not bracket or converge to the target
    /// transmission.
    #[error("density calibration failed: {reason}")]
    Calibration { reason: String },

    /// A non-finite value appeared where output was required.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// The harmonic ladder refused to decay: even at the deepest truncation
    /// the highest retained harmonic is not negligible against the first.
    #[error("harmonic ladder not converged at truncation depth {depth}: tail ratio {tail:.3e}; the drive is too strong or the modulation too slow for a periodic steady state expansion")]
    TruncationStall { depth: usize, tail: f64 },

    /// Two map grids that must match element-wise do not.
    #[error("grid mismatch: {reason}")]
    GridMismatch { reason: String },

    /// A parameter violated its documented domain.
    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
}

pub type Result<T> = std::result::Result<T, SimError>;
