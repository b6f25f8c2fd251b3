//! Online model-predictive control for interval type-2 Takagi-Sugeno fuzzy
//! systems with bounded time-varying state and input delays.
//!
//! The crate is layered bottom-up:
//!
//! * [`matkernel`]: dense matrices, symmetric eigenvalues, inverses, block assembly.
//! * [`lmi`]: affine LMI modelling plus a primal-dual interior-point SDP solver.
//! * [`it2`]: IT2 fuzzy plant/controller description and blending.
//! * [`synth`]: the per-step LMI synthesis problem and gain extraction.
//! * [`sim`]: closed-loop simulation with delay processes and history buffers.
//! * [`verify`]: certification oracles (Razumikhin decrease, invariance, proof replay).
//! * [`bench`]: config loading and the CSTR benchmark driver.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the double-precision versions used by the benchmark.

pub mod bench;
pub mod it2;
pub mod lmi;
pub mod matkernel;
mod scalar;
pub mod sim;
pub mod synth;
pub mod verify;

pub use scalar::Scalar;

pub type Matrix = matkernel::Matrix<f64>;
pub type SymMatrix = matkernel::SymMatrix<f64>;
pub type LmiProblem = lmi::LmiProblem<f64>;
pub type It2Plant = it2::It2Plant<f64>;
pub type It2Controller = it2::It2Controller<f64>;
pub type SynthConfig = synth::SynthConfig<f64>;
pub type SynthesisSolution = synth::SynthesisSolution<f64>;
pub type Trajectory = sim::Trajectory<f64>;
