//! Problem instances: synthetic testbeds with known optima, matrix
//! completion with bilevel denoising, and compositional policy evaluation.

pub mod matcomp;
pub mod synthetic;
