//! Exact statevector simulation and analysis of quantum circuits that
//! contain closed timelike curves modeled as post-selected teleportation
//! (P-CTC), together with Deutsch's self-consistency semantics for the
//! same circuits.
//!
//! A CTC is represented by a pair of wires prepared in |Φ+⟩ and projected
//! back onto |Φ+⟩ after the circuit runs. The surviving amplitude defines
//! a postselection weight; weight zero is a paradox, a rank-1 loop map is
//! a tautology (exactly one state can ride the loop), anything else is an
//! ordinary consistent history.
//!
//! Basis convention used everywhere: wire 0 is the most significant digit
//! of a basis index (circuit diagrams read top to bottom).

pub mod circuit;
pub mod cli;
pub mod deutsch;
pub mod experiments;
pub mod linalg;
pub mod pctc;
pub mod schema;
pub mod tol;

pub use circuit::{Basis, Circuit, GateSpec, InitState, Wire, WireRole};
pub use deutsch::{deutsch_map, fixed_points, DeutschSolution};
pub use linalg::{AmplitudeVector, LinalgError, Operator};
pub use pctc::{
    effective_operator, loop_operator, run_postselected, teleportation_identity_check,
    LoopAnalysis, LoopClassification, PctcOutcome,
};
