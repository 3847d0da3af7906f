//! Mean-field and semiclassical dynamics of `N` fermions on a periodic box.
//!
//! Modules, bottom-up:
//! - [`grid`]: periodic grids, spectral transforms, potentials, kernels.
//! - [`init`]: free Fermi sea, Thomas-Fermi, Weyl quantisation, SCF ground states.
//! - [`dynamics`]: Hartree-Fock and Hartree propagation of orbital sets.
//! - [`semiclassics`]: commutator trace norms, Wigner transform, Vlasov solver.
//! - [`oracle`]: exact many-body evolution on small 1D lattices.
//! - [`io`]: on-disk formats for orbitals, phase-space densities and reports.

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod init;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod oracle;
pub mod orbitals;
pub mod semiclassics;

#[cfg(test)]
pub(crate) mod test_support;

pub use error::{Error, Result};
pub use grid::{Grid, KernelOperator, PotentialSpec, ScaleParams, SpatialField, C64};
pub use orbitals::OrbitalSet;
