//! Mixed mimetic spectral element solver for 2D Darcy flow.
//!
//! Flux unknowns live on sub-edges of a tensor-product Gauss-Lobatto grid and
//! pressure unknowns on sub-volumes, so the discrete divergence is an exact
//! integer incidence matrix and mass balance holds to round-off on any mesh.
//! The constitutive law carries a full symmetric positive definite
//! permeability tensor through a K⁻¹-weighted mass matrix, and the resulting
//! saddle-point system is symmetric by construction.
//!
//! Modules follow the pipeline: [`quadrature`] and [`basis`] provide the GLL
//! rules and the nodal/edge polynomial families, [`mesh`] numbers the
//! unknowns and reconstructs fields, [`topology`] builds the incidence
//! matrix, [`assembly`] forms the saddle-point system, [`solver`] factors
//! it, and [`verification`] holds the benchmark problems, error norms, and
//! convergence studies. The [`cli`] module backs the `mimetic-darcy` binary.

pub mod assembly;
pub mod basis;
pub mod cli;
pub mod error;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod topology;
pub mod verification;

pub use error::{Error, Result};
