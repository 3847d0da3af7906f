//! Dense kernels and the distances between them.

use crate::error::Result;
use crate::grid::KernelOperator;
use crate::linalg;
use crate::orbitals::OrbitalSet;
use crate::semiclassics::commutator::check_dense_guard;

/// `ω(x,y) = Σ_j f_j(x) conj f_j(y)`, guarded to `M^d ≤ 4096`.
pub fn density_kernel(state: &OrbitalSet) -> Result<KernelOperator> {
    check_dense_guard(state.grid.len())?;
    Ok(state.kernel())
}

/// `‖A - B‖_HS`.
pub fn hs_distance(a: &KernelOperator, b: &KernelOperator) -> Result<f64> {
    Ok(a.sub(b)?.hs_norm())
}

/// `tr|A - B|`, the sum of singular values of the weighted difference.
pub fn trace_distance(a: &KernelOperator, b: &KernelOperator) -> Result<f64> {
    check_dense_guard(a.grid.len())?;
    Ok(linalg::nuclear_norm(&a.sub(b)?.operator_matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, ScaleParams, C64};
    use crate::test_support::random_projection;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn kernel_trace_and_hs_norm() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let s = random_projection(&g, 5, 11);
        let k = density_kernel(&s).unwrap();
        assert!((k.trace().re - 5.0).abs() < 1e-10);
        assert!((k.hs_norm() - 5f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn constant_mode_kernel() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let f = DMatrix::from_element(g.len(), 1, C64::new(1.0 / 3.0, 0.0));
        let s = OrbitalSet::new(&g, ScaleParams::new(1, 2).unwrap(), f).unwrap();
        let k = density_kernel(&s).unwrap();
        assert!(k.entries.iter().all(|z| (z - C64::new(1.0 / 9.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn rank_one_difference() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let u = random_projection(&g, 1, 2);
        let mut a = u.kernel();
        a.entries *= C64::new(-2.5, 0.0);
        let zero = KernelOperator::new(&g, DMatrix::zeros(16, 16)).unwrap();
        assert!((hs_distance(&a, &zero).unwrap() - 2.5).abs() < 1e-12);
        assert!((trace_distance(&a, &zero).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(hs_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn hs_never_exceeds_trace_norm(seed_a in 0u64..1000, seed_b in 0u64..1000, n in 1usize..5) {
            let g = Grid::new(1, 16, 2.0 * PI).unwrap();
            let a = random_projection(&g, n, seed_a).kernel();
            let b = random_projection(&g, n, seed_b + 5000).kernel();
            prop_assert!(hs_distance(&a, &b).unwrap() <= trace_distance(&a, &b).unwrap() * (1.0 + 1e-12));
        }
    }
}
