//! Hartree-Fock ground states by self-consistent field iteration with linear
//! density-matrix mixing.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, PotentialSpec, ScaleParams, SpatialField, C64};
use crate::init::energy::hf_energy;
use crate::init::weyl::DEGENERACY_TOL;
use crate::linalg;
use crate::orbitals::OrbitalSet;

#[derive(Clone, Copy, Debug)]
pub struct ScfOptions {
    pub mixing: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Drop the exchange term (fermionic Hartree ground state).
    pub exchange: bool,
}

impl Default for ScfOptions {
    fn default() -> Self {
        Self { mixing: 0.3, tol: 1e-10, max_iter: 300, exchange: true }
    }
}

#[derive(Clone, Debug)]
pub struct ScfResult {
    pub orbitals: OrbitalSet,
    pub energy: f64,
    pub energies: Vec<f64>,
    pub iterations: usize,
    /// `‖ρ_out - ρ_in‖₁` at the last iteration.
    pub residual: f64,
    pub converged: bool,
    /// Energy rose after the third iteration.
    pub oscillatory: bool,
    pub degenerate: bool,
}

/// `V(x_r - x_c)` for every pair of grid points, read from the periodised
/// samples by index displacement.
pub(crate) fn pair_potential(grid: &Grid, samples: &SpatialField) -> DMatrix<f64> {
    let n = grid.len();
    let m = grid.points();
    let d = grid.dim();
    DMatrix::from_fn(n, n, |r, c| {
        let (a, b) = (grid.multi_index(r), grid.multi_index(c));
        let mut disp = [0usize; 3];
        for ax in 0..d {
            disp[ax] = (a[ax] + m - b[ax]) % m;
        }
        samples.values[grid.flat_index(disp)]
    })
}

/// Dense mean-field Hamiltonian in orthonormal grid coordinates for the
/// density matrix `omega` (kernel convention, `tr = h^d Σ ω(x,x) = N`).
pub(crate) fn dense_fock_matrix(
    grid: &Grid,
    scale: ScaleParams,
    kinetic: &DMatrix<C64>,
    v_ext: Option<&SpatialField>,
    vpair: Option<&DMatrix<f64>>,
    omega: &DMatrix<C64>,
    exchange: bool,
) -> DMatrix<C64> {
    let n = grid.len();
    let w = grid.cell_volume();
    let inv_n = 1.0 / scale.n as f64;
    let mut h = kinetic.clone();
    if let Some(v) = v_ext {
        for i in 0..n {
            h[(i, i)] += C64::new(v.values[i], 0.0);
        }
    }
    if let Some(vp) = vpair {
        for x in 0..n {
            let hartree: f64 = (0..n).map(|y| vp[(x, y)] * omega[(y, y)].re).sum::<f64>() * w * inv_n;
            h[(x, x)] += C64::new(hartree, 0.0);
        }
        if exchange {
            for x in 0..n {
                for y in 0..n {
                    h[(x, y)] -= omega[(x, y)] * (vp[(x, y)] * w * inv_n);
                }
            }
        }
    }
    h
}

/// Occupies the `N` lowest eigenmodes of `h`. Returns orbitals (sample
/// convention), the kernel, and whether the Fermi level is degenerate.
fn aufbau(grid: &Grid, scale: ScaleParams, h: &DMatrix<C64>) -> Result<(OrbitalSet, DMatrix<C64>, bool)> {
    let n = scale.n;
    let (vals, vecs) = linalg::hermitian_eigen(h)?;
    let degenerate = n < vals.len() && (vals[n] - vals[n - 1]).abs() < DEGENERACY_TOL;
    let inv_sqrt_w = 1.0 / grid.cell_volume().sqrt();
    let f = DMatrix::from_fn(grid.len(), n, |r, c| vecs[(r, c)] * inv_sqrt_w);
    let mut set = OrbitalSet::new_unchecked(grid, scale, f)?;
    if set.orthonormality_defect() > 1e-12 {
        set.reorthonormalize()?;
    }
    let kernel = set.kernel().entries;
    Ok((set, kernel, degenerate))
}

/// Minimises the Hartree-Fock functional over rank-`N` projections by SCF.
///
/// Each iteration diagonalises `h[ω] = -ε²Δ + V_ext + V*ρ - X`, fills the
/// `N` lowest modes and mixes `ω ← (1-α)ω + α ω_occ`. Convergence is measured
/// as `‖ρ_out - ρ_in‖₁`. Non-convergence is reported through the result
/// flags rather than as an error.
pub fn scf_ground_state(
    v_ext: Option<&SpatialField>,
    potential: &PotentialSpec,
    grid: &Grid,
    scale: ScaleParams,
    opts: ScfOptions,
) -> Result<ScfResult> {
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::InvalidParameter(format!("mixing must lie in (0, 1], got {}", opts.mixing)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    if scale.n > grid.len() {
        return Err(Error::CannotFill { requested: scale.n, available: grid.len() });
    }
    if let Some(v) = v_ext {
        grid.check_same(&v.grid)?;
    }
    let w = grid.cell_volume();
    let kinetic = grid.kinetic_matrix(scale.epsilon);
    let vpair = if potential.is_zero() { None } else { Some(pair_potential(grid, &potential.samples(grid)?)) };

    let h0 = dense_fock_matrix(grid, scale, &kinetic, v_ext, None, &DMatrix::zeros(1, 1), false);
    let (mut best, mut omega, mut degenerate) = aufbau(grid, scale, &h0)?;
    let mut energies = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    if vpair.is_none() {
        // non-interacting: one diagonalisation is exact
        residual = 0.0;
        iterations = 1;
        energies.push(hf_energy(&best, v_ext, potential)?);
    }
    while iterations < opts.max_iter && residual > opts.tol {
        iterations += 1;
        let h = dense_fock_matrix(grid, scale, &kinetic, v_ext, vpair.as_ref(), &omega, opts.exchange);
        let (occ, occ_kernel, deg) = aufbau(grid, scale, &h)?;
        degenerate = deg;
        residual = w * (0..grid.len())
            .map(|i| (occ_kernel[(i, i)].re - omega[(i, i)].re).abs())
            .sum::<f64>()
            / scale.n as f64;
        let energy = if opts.exchange {
            hf_energy(&occ, v_ext, potential)?
        } else {
            let parts = crate::init::energy::hf_energy_parts(&occ, v_ext, potential)?;
            parts.kinetic + parts.external + parts.direct
        };
        energies.push(energy);
        let a = opts.mixing;
        omega = &omega * C64::new(1.0 - a, 0.0) + occ_kernel * C64::new(a, 0.0);
        best = occ;
    }
    if degenerate {
        log::warn!("SCF Fermi level is degenerate; occupation tie broken by eigenvector order");
    }
    let oscillatory = energies
        .windows(2)
        .enumerate()
        .any(|(i, e)| i >= 3 && e[1] > e[0] + 1e-12 * e[0].abs().max(1.0));
    let converged = residual <= opts.tol;
    if !converged {
        log::warn!("SCF stopped after {iterations} iterations with residual {residual:.3e}");
    }
    let energy = *energies.last().expect("at least one iteration");
    Ok(ScfResult { orbitals: best, energy, energies, iterations, residual, converged, oscillatory, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cos_well;
    use crate::init::energy::hf_energy_parts;
    use crate::init::free_sea::free_fermi_sea;
    use std::f64::consts::PI;

    #[test]
    fn non_interacting_limit_is_free_sea() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let scale = ScaleParams::new(5, 1).unwrap();
        let res = scf_ground_state(None, &PotentialSpec::Zero, &g, scale, ScfOptions::default()).unwrap();
        let sea = free_fermi_sea(&g, scale).unwrap();
        assert!(res.converged);
        assert!(res.orbitals.hs_distance(&sea).unwrap() < 1e-8);
        let eps2 = scale.epsilon * scale.epsilon;
        assert!((res.energy - eps2 * (0.0 + 1.0 + 1.0 + 4.0 + 4.0)).abs() < 1e-10);
    }

    #[test]
    fn single_particle_has_no_interaction_energy() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let scale = ScaleParams::new(1, 1).unwrap();
        let v_ext = cos_well(&g, 2.0);
        let pot = PotentialSpec::gaussian(3.0, 0.5).unwrap();
        let res = scf_ground_state(Some(&v_ext), &pot, &g, scale, ScfOptions::default()).unwrap();
        let parts = hf_energy_parts(&res.orbitals, Some(&v_ext), &pot).unwrap();
        assert!(parts.interaction().abs() < 1e-14);
    }

    #[test]
    fn interacting_ground_state_is_variational() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let scale = ScaleParams::new(4, 1).unwrap();
        let v_ext = cos_well(&g, 2.0);
        let pot = PotentialSpec::gaussian(1.0, 0.5).unwrap();
        let res = scf_ground_state(Some(&v_ext), &pot, &g, scale, ScfOptions::default()).unwrap();
        assert!(res.converged, "residual {}", res.residual);
        assert!(!res.oscillatory);
        let sea = free_fermi_sea(&g, scale).unwrap();
        let e_sea = hf_energy(&sea, Some(&v_ext), &pot).unwrap();
        assert!(res.energy < e_sea);
        assert!((res.orbitals.trace() - 4.0).abs() < 1e-10);
        assert!(res.orbitals.projection_defect() < 1e-9 * 2.0);
    }

    #[test]
    fn invalid_mixing_rejected() {
        let g = Grid::new(1, 8, 2.0 * PI).unwrap();
        let scale = ScaleParams::new(2, 1).unwrap();
        let opts = ScfOptions { mixing: 0.0, ..ScfOptions::default() };
        assert!(scf_ground_state(None, &PotentialSpec::Zero, &g, scale, opts).is_err());
    }
}
