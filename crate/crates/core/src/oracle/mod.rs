//! Exact many-body dynamics on small one-dimensional lattices.

pub mod basis;
pub mod fluctuation;
pub mod hamiltonian;
pub mod state;
pub mod study;

pub use basis::{binomial, check_basis_guard, FockBasis, BASIS_GUARD, MAX_SITES};
pub use fluctuation::{fluctuation_number, FluctuationReport};
pub use hamiltonian::LatticeHamiltonian;
pub use state::{krylov_propagate, one_particle_density, slater_to_fock, FockState, OracleKrylov};
pub use study::{convergence_study, run_cell, CellResult, ResultRow, StudyConfig};
