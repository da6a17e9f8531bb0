//! Robust topology optimization of hyperelastic structures under load,
//! material and geometric uncertainty.
//!
//! The crate covers the plane-strain neo-Hookean finite element model, the
//! density filter and projection chain, Karhunen-Loève random fields, a
//! second-order perturbation estimate of the end-compliance statistics, its
//! adjoint design sensitivities and an MMA driver.

pub mod adjoint;
pub mod benchmarks;
pub mod design;
pub mod error;
pub mod fe;
pub mod hyperelastic;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod mma;
pub mod optimize;
pub mod perturbation;
pub mod problem;
pub mod stochastic;
pub mod tensor;

pub use error::{Error, Result};
