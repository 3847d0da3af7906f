//! Orthonormal orbital sets: the low-rank factor of a Slater determinant's
//! one-particle density.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, KernelOperator, ScaleParams, SpatialField, C64};
use crate::linalg;

/// Orbital columns beyond this tolerance are rejected as non-orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// `N` orbitals sampled on a grid, stored column-major as an `M^d × N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalSet {
    pub grid: Grid,
    pub scale: ScaleParams,
    pub orbitals: DMatrix<C64>,
}

impl OrbitalSet {
    /// Wraps a matrix of orbital samples, checking shape and orthonormality.
    pub fn new(grid: &Grid, scale: ScaleParams, orbitals: DMatrix<C64>) -> Result<Self> {
        let set = Self::new_unchecked(grid, scale, orbitals)?;
        let defect = set.orthonormality_defect();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
        Ok(set)
    }

    pub(crate) fn new_unchecked(grid: &Grid, scale: ScaleParams, orbitals: DMatrix<C64>) -> Result<Self> {
        if orbitals.nrows() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "orbitals have {} rows, grid has {} points",
                orbitals.nrows(),
                grid.len()
            )));
        }
        if orbitals.ncols() != scale.n {
            return Err(Error::InvalidParameter(format!(
                "{} orbitals for N = {}",
                orbitals.ncols(),
                scale.n
            )));
        }
        if scale.dim != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "scale dimension {} on a {}-dimensional grid",
                scale.dim,
                grid.dim()
            )));
        }
        Ok(Self { grid: grid.clone(), scale, orbitals })
    }

    pub fn n(&self) -> usize {
        self.orbitals.ncols()
    }

    pub fn orbital(&self, j: usize) -> Vec<C64> {
        self.orbitals.column(j).iter().copied().collect()
    }

    /// `h^d F* F`.
    pub fn gram(&self) -> DMatrix<C64> {
        (self.orbitals.adjoint() * &self.orbitals) * C64::new(self.grid.cell_volume(), 0.0)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        linalg::identity_defect(&self.gram())
    }

    /// Symmetric (Löwdin) re-orthonormalisation, `F G^{-1/2}`.
    pub fn reorthonormalize(&mut self) -> Result<()> {
        let (vals, vecs) = linalg::hermitian_eigen(&self.gram())?;
        if vals.iter().any(|&v| v <= 1e-12) {
            return Err(Error::NotOrthonormal { defect: self.orthonormality_defect() });
        }
        let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| C64::new(1.0 / v.sqrt(), 0.0)),
        ));
        let g = &vecs * inv_sqrt * vecs.adjoint();
        self.orbitals = &self.orbitals * g;
        Ok(())
    }

    /// Dense kernel `ω(x,y) = Σ_j f_j(x) conj f_j(y)`.
    pub fn kernel(&self) -> KernelOperator {
        KernelOperator {
            grid: self.grid.clone(),
            entries: &self.orbitals * self.orbitals.adjoint(),
        }
    }

    /// Orbitals scaled to orthonormal grid coordinates, `h^{d/2} F`.
    pub fn coordinate_frame(&self) -> DMatrix<C64> {
        &self.orbitals * C64::new(self.grid.cell_volume().sqrt(), 0.0)
    }

    /// `ω(x,x) = Σ_j |f_j(x)|²`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.orbitals.row_iter().map(|row| row.iter().map(|z| z.norm_sqr()).sum()).collect()
    }

    /// `ρ(x) = N^{-1} ω(x,x)`, normalised to unit mass.
    pub fn density(&self) -> SpatialField {
        let n = self.n() as f64;
        SpatialField {
            grid: self.grid.clone(),
            values: self.diagonal().into_iter().map(|v| v / n).collect(),
        }
    }

    /// `tr ω = h^d Σ_x ω(x,x)`.
    pub fn trace(&self) -> f64 {
        self.grid.cell_volume() * self.diagonal().iter().sum::<f64>()
    }

    /// `‖ω² - ω‖_HS` from the factored form, `‖F(G - I)F*‖` with Gram `G`.
    pub fn projection_defect(&self) -> f64 {
        let g = self.gram();
        let d = &g - DMatrix::identity(g.nrows(), g.ncols());
        // ω² - ω = F (G - I) F* in orthonormal coordinates
        let frame = self.coordinate_frame();
        linalg::low_rank_frobenius(&(&frame * d), &frame)
    }

    /// `‖ω_self - ω_other‖_HS` without forming either kernel.
    ///
    /// Uses `‖ω_a - ω_b‖² = ‖(1-ω_b)A‖² + ‖(1-ω_a)B‖²` for orthonormal frames,
    /// which avoids the cancellation in `2N - 2 tr ω_a ω_b`.
    pub fn hs_distance(&self, other: &OrbitalSet) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let a = self.coordinate_frame();
        let b = other.coordinate_frame();
        let ra = &a - &b * (b.adjoint() * &a);
        let rb = &b - &a * (a.adjoint() * &b);
        Ok((ra.norm_squared() + rb.norm_squared()).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn plane_waves(grid: &Grid, ks: &[i64]) -> OrbitalSet {
        let l = grid.length();
        let m = DMatrix::from_fn(grid.len(), ks.len(), |r, c| {
            let x = grid.coordinate(r, 0);
            C64::from_polar(1.0 / l.sqrt(), ks[c] as f64 * x)
        });
        let scale = ScaleParams::new(ks.len(), 1).unwrap();
        OrbitalSet::new(grid, scale, m).unwrap()
    }

    #[test]
    fn plane_waves_are_orthonormal_projection() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let s = plane_waves(&g, &[0, 1, -1]);
        assert!(s.orthonormality_defect() < 1e-13);
        assert!((s.trace() - 3.0).abs() < 1e-12);
        assert!(s.projection_defect() < 1e-12);
        assert!((s.kernel().hs_norm() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let g = Grid::new(1, 8, 2.0 * PI).unwrap();
        let m = DMatrix::from_element(8, 1, C64::new(1.0, 0.0));
        let scale = ScaleParams::new(1, 1).unwrap();
        assert!(matches!(OrbitalSet::new(&g, scale, m), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn reorthonormalize_repairs_small_defect() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let mut s = plane_waves(&g, &[0, 2]);
        s.orbitals[(3, 0)] += C64::new(1e-6, 0.0);
        assert!(s.orthonormality_defect() > 1e-8);
        s.reorthonormalize().unwrap();
        assert!(s.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn hs_distance_matches_dense() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let a = plane_waves(&g, &[0, 1]);
        let b = plane_waves(&g, &[0, 3]);
        let dense = a.kernel().sub(&b.kernel()).unwrap().hs_norm();
        assert!((a.hs_distance(&b).unwrap() - dense).abs() < 1e-12);
        assert!((dense - 2f64.sqrt()).abs() < 1e-12);
        assert!(a.hs_distance(&a).unwrap() < 1e-14);
    }
}
