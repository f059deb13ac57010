//! Tolerance constants, centralized so every check and property test
//! agrees on the same thresholds.

/// Entrywise bound for U·U† = 1 checks on gates and compiled circuits.
pub const UNITARITY: f64 = 1e-10;

/// Postselection weights at or below this are classified as paradoxes.
/// True zeros in these circuits sit near 1e-30, true nonzeros at ≥ 1e-2.
pub const ZERO_WEIGHT: f64 = 1e-12;

/// Bound on ‖Σ λᵢ vᵢvᵢ† − A‖ for eigendecompositions of Hermitian inputs.
pub const EIG_RECONSTRUCT: f64 = 1e-9;

/// States match when 1 − |⟨a|b⟩|²/(‖a‖²‖b‖²) is at most this.
/// Fidelity-based so that global phase never matters.
pub const FIDELITY: f64 = 1e-10;

/// Trace preservation and trace-one checks.
pub const TRACE: f64 = 1e-12;

/// A vector tagged normalized must have norm within this of 1.
pub const NORM: f64 = 1e-12;

/// Hermiticity / eigenvalue-floor slack for density matrices.
pub const DENSITY: f64 = 1e-10;

/// Max-norm residual allowed between the explicit prepare/project path
/// and the traced effective operator (times the loop dimension).
pub const TELEPORT_RESIDUAL: f64 = 1e-10;

/// Loop-map eigenvalues above this magnitude count toward the rank used
/// in the Paradox / Tautology / Consistent classification.
pub const LOOP_RANK: f64 = 1e-10;

/// Residual ‖D(ρ) − ρ‖ required of a reported Deutsch fixed point.
pub const DEUTSCH_RESIDUAL: f64 = 1e-10;

/// |λ − 1| below this marks a fixed direction of the vectorized map.
pub const EIGENVALUE_ONE: f64 = 1e-8;

/// Trace-distance agreement required between the iterative and spectral
/// Deutsch solvers when the fixed point is unique; also the stopping
/// tolerance of the max-entropy ascent.
pub const SOLVER_AGREEMENT: f64 = 1e-8;

/// Cap on Deutsch fixed-point iterations before falling back to the
/// spectral method.
pub const DEUTSCH_ITERATION_CAP: usize = 10_000;
