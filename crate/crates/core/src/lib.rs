//! Surrogate-based optimization of QAOA angles.
//!
//! The true cost is a (finite-shot) QAOA expectation value computed by an
//! exact statevector simulator. A thin-plate RBF interpolant over every
//! evaluation so far is minimized to propose the next angles to evaluate.

pub mod controller;
pub mod engine;
pub mod harness;
pub mod instances;
pub mod optim;
pub mod surrogate;
