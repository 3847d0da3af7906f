use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid, ScaleParams, C64};
use crate::orbitals::OrbitalSet;

/// Orthonormalised random complex orbitals.
pub(crate) fn random_projection(grid: &Grid, n: usize, seed: u64) -> OrbitalSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(grid.len(), n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut set = OrbitalSet::new_unchecked(grid, ScaleParams::new(n, grid.dim()).unwrap(), raw).unwrap();
    set.reorthonormalize().unwrap();
    set
}
