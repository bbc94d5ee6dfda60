//! Simulation and pulse optimization for blockade-mediated controlled gates
//! on pairs of three-level emitters.

// Range checks are written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod dynamics;
pub mod gatelab;
pub mod linalg;
pub mod optimizer;
pub mod presets;
pub mod pulsegen;
