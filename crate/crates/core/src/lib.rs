//! Random scattering of tripartite inner/boundary/environment quantum systems.
//!
//! A Haar-random unitary acts on the boundary and environment only; the inner
//! factor is untouched. This crate simulates that channel with dense linear
//! algebra, evaluates its closed-form Haar averages (the averaged state, mean
//! purities, tail bounds on fluctuations) and checks each closed form against
//! brute-force Monte Carlo sampling.

pub mod concentration;
pub mod dims;
pub mod error;
pub mod experiment;
pub mod haar;
pub mod purity;
pub mod scattering;
pub mod states;
pub mod stats;
pub mod tensor;

pub use dims::{Subsystem, Subsystems, TripartiteDims};
pub use error::{Result, ScatterError};
pub use haar::RngStream;
pub use tensor::{CMatrix, CVector, DensityMatrix, SchmidtSpectrum, StateVector, C64};
