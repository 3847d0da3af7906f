//! Weyl quantisation of the local Fermi-ball phase-space density.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{KernelOperator, ScaleParams, SpatialField, C64};
use crate::init::thomas_fermi::fermi_momentum_field;
use crate::linalg;
use crate::orbitals::OrbitalSet;

/// Occupation gaps below this are reported as a degenerate Fermi level.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct WeylResult {
    /// Hermitised `Op^w_M` kernel.
    pub kernel: KernelOperator,
    /// Top-`N` eigenvectors of the kernel.
    pub orbitals: OrbitalSet,
    /// Eigenvalues of the kernel, descending.
    pub occupations: Vec<f64>,
    pub degenerate: bool,
}

/// Multilinear interpolation of a grid field at `2·coordinate/h` given in
/// doubled-index units (midpoints of grid points land on this half grid).
fn sample_half_grid(field: &SpatialField, doubled: [i64; 3]) -> f64 {
    let grid = &field.grid;
    let m = grid.points() as i64;
    let d = grid.dim();
    let mut total = 0.0;
    let corners = 1usize << d;
    let mut weight_sum = 0.0;
    for corner in 0..corners {
        let mut idx = [0usize; 3];
        let mut weight = 1.0;
        let mut valid = true;
        for a in 0..d {
            let twice = doubled[a];
            let (base, frac) = (twice.div_euclid(2), twice.rem_euclid(2));
            let up = (corner >> a) & 1 == 1;
            if frac == 0 {
                if up {
                    valid = false;
                    break;
                }
                idx[a] = base.rem_euclid(m) as usize;
            } else {
                idx[a] = (base + i64::from(up)).rem_euclid(m) as usize;
                weight *= 0.5;
            }
        }
        if valid {
            total += weight * field.values[grid.flat_index(idx)];
            weight_sum += weight;
        }
    }
    total / weight_sum
}

/// Kernel `Op^w_M(x,y) = L^{-d} Σ_k χ(ε|p_k| ≤ p_F((x+y)/2)) e^{i p_k·(x-y)}`
/// over the momentum lattice, with the midpoint taken along the minimal
/// periodic image of `x - y`.
pub fn weyl_kernel(rho: &SpatialField, scale: ScaleParams) -> Result<KernelOperator> {
    let grid = &rho.grid;
    let total = rho.integral();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!("density must be normalised, mass = {total}")));
    }
    let pf = fermi_momentum_field(rho, scale)?;
    let m = grid.points();
    let d = grid.dim();
    let n = grid.len();
    let eps = scale.epsilon;

    // momentum slots sorted by |p|, so a Fermi ball is a prefix
    let mut slots: Vec<(f64, [i64; 3])> = (0..n).map(|j| (grid.momentum_sq(j).sqrt(), grid.wavevector(j))).collect();
    slots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let roots: Vec<C64> = (0..m).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64)).collect();
    let inv_vol = 1.0 / grid.volume();
    let mi = m as i64;

    let mut entries = DMatrix::zeros(n, n);
    for r in 0..n {
        let xr = grid.multi_index(r);
        for c in 0..n {
            let xc = grid.multi_index(c);
            let mut sep = [0i64; 3];
            let mut doubled = [0i64; 3];
            for a in 0..d {
                let mut s = xr[a] as i64 - xc[a] as i64;
                // minimal image in index units, (-M/2, M/2]
                s = s.rem_euclid(mi);
                if s > mi / 2 {
                    s -= mi;
                }
                sep[a] = s;
                doubled[a] = 2 * xc[a] as i64 + s;
            }
            let cutoff = sample_half_grid(&pf, doubled) / eps;
            let mut acc = C64::new(0.0, 0.0);
            for (p, k) in &slots {
                if *p > cutoff {
                    break;
                }
                let mut phase = 0i64;
                for a in 0..d {
                    phase += k[a] * sep[a];
                }
                acc += roots[phase.rem_euclid(mi) as usize];
            }
            entries[(r, c)] = acc * inv_vol;
        }
    }
    KernelOperator::new(grid, entries)
}

/// Weyl kernel of the local Fermi ball for `rho`, Hermitised, and the
/// rank-`N` projection onto its top eigenvectors.
pub fn weyl_projection(rho: &SpatialField, scale: ScaleParams) -> Result<WeylResult> {
    let grid = rho.grid.clone();
    let n = scale.n;
    if n > grid.len() {
        return Err(Error::CannotFill { requested: n, available: grid.len() });
    }
    let raw = weyl_kernel(rho, scale)?;
    let herm = (&raw.entries + raw.entries.adjoint()) * C64::new(0.5, 0.0);
    let kernel = KernelOperator::new(&grid, herm)?;
    let (vals, vecs) = linalg::hermitian_eigen(&kernel.operator_matrix())?;
    let total = vals.len();
    let occupations: Vec<f64> = vals.iter().rev().copied().collect();
    let degenerate = n < total && (occupations[n - 1] - occupations[n]).abs() < DEGENERACY_TOL;
    if degenerate {
        log::warn!(
            "Weyl kernel has a degenerate occupation boundary ({} vs {})",
            occupations[n - 1],
            occupations[n]
        );
    }
    let inv_sqrt_w = 1.0 / grid.cell_volume().sqrt();
    // descending eigenvalue order, ties resolved by ascending-order index
    let orbitals = DMatrix::from_fn(grid.len(), n, |r, c| vecs[(r, total - 1 - c)] * inv_sqrt_w);
    let mut orbitals = OrbitalSet::new_unchecked(&grid, scale, orbitals)?;
    if orbitals.orthonormality_defect() > 1e-12 {
        orbitals.reorthonormalize()?;
    }
    Ok(WeylResult { kernel, orbitals, occupations, degenerate })
}
