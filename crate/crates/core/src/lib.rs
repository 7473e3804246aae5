//! Context-aware gate set tomography for single-qubit gate sets.
//!
//! The crate covers the whole pipeline: choosing fiducials and germs by
//! first-order sensitivity, simulating noisy (context-dependent) gate sets,
//! reconstructing PTMs from outcome frequencies by box-constrained L1
//! fitting, and quantifying errors with the diamond norm.

pub mod circuit;
pub mod dataset;
pub mod design;
pub mod fixtures;
pub mod label;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod ptm;
pub mod qpu;
pub mod reconstruct;
pub mod sdp;
pub mod sensitivity;

pub use circuit::{CircuitSpec, CompiledCircuit, ContextMode, ContextSpec, Germ};
pub use label::{BaseGate, Context, GateLabel};
pub use ptm::{GateSet, MeasVec, StateVec, SuperOp};
