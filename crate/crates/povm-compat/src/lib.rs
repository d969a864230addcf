//! Joint measurability of finite-outcome quantum measurements.
//!
//! The crate decides whether a family of POVMs admits a joint measurement,
//! constructs the unique product joint for sharp-dominated families, runs a
//! convex-feasibility solver (Dykstra alternating projections) for everything
//! else, and reproduces the quantitative LSW/KS inequality analysis of the
//! Specker scenario for noisy qubit observables.
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! major capability end to end.

pub mod config;
pub mod linalg;
pub mod povm;
pub mod random;
pub mod sharp;
pub mod solver;

pub use config::Tolerances;
pub use linalg::{commutator_norm, frob_inner, ComplexScalar, HermitianMatrix};
pub use povm::{
    noisy_qubit, trine_directions, JointPovm, NoisyQubitObservable, OutcomeLabel, OutcomeTuple,
    Povm, QubitState,
};
