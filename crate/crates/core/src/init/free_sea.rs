use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScaleParams, C64};
use crate::orbitals::OrbitalSet;

/// Grid wavevectors ordered by `(|k|², k)` — the Aufbau order of the free
/// Laplacian with a deterministic tie-break.
pub fn shell_order(grid: &Grid) -> Vec<usize> {
    let mut slots: Vec<usize> = (0..grid.len()).collect();
    slots.sort_by_key(|&j| {
        let k = grid.wavevector(j);
        let k2: i64 = k.iter().map(|v| v * v).sum();
        (k2, k[0], k[1], k[2])
    });
    slots
}

/// Particle numbers `≤ max_n` that exactly fill complete momentum shells.
pub fn closed_shell_fillings(grid: &Grid, max_n: usize) -> Vec<usize> {
    let order = shell_order(grid);
    let k2 = |j: usize| -> i64 { grid.wavevector(j).iter().map(|v| v * v).sum() };
    (1..=max_n.min(order.len()))
        .filter(|&n| n == order.len() || k2(order[n - 1]) != k2(order[n]))
        .collect()
}

pub fn is_closed_shell(grid: &Grid, n: usize) -> bool {
    closed_shell_fillings(grid, n).last() == Some(&n)
}

/// Ground state of `N` free fermions: the `N` plane waves `e^{ip·x}/L^{d/2}`
/// with the smallest `|p|²`.
pub fn free_fermi_sea(grid: &Grid, scale: ScaleParams) -> Result<OrbitalSet> {
    let n = scale.n;
    if n > grid.len() {
        return Err(Error::CannotFill { requested: n, available: grid.len() });
    }
    if !is_closed_shell(grid, n) {
        log::warn!("N = {n} does not close a momentum shell; filling is anisotropic");
    }
    let order = shell_order(grid);
    let norm = 1.0 / grid.volume().sqrt();
    let d = grid.dim();
    let orbitals = DMatrix::from_fn(grid.len(), n, |r, c| {
        let slot = order[c];
        let phase: f64 = (0..d).map(|a| grid.momentum(slot, a) * grid.coordinate(r, a)).sum();
        C64::from_polar(norm, phase)
    });
    OrbitalSet::new(grid, scale, orbitals)
}

/// Integer wavevectors occupied by [`free_fermi_sea`].
pub fn occupied_wavevectors(grid: &Grid, n: usize) -> Vec<[i64; 3]> {
    shell_order(grid).into_iter().take(n).map(|j| grid.wavevector(j)).collect()
}
