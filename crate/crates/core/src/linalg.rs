//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::C64;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// ascending order (ties broken by original column index).
pub fn hermitian_eigen(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().sum()
}

/// Nuclear norm of `P Q*` without forming the product: both factors are
/// reduced by thin QR so only a `k×k` singular-value problem remains.
pub fn low_rank_nuclear_norm(p: &DMatrix<C64>, q: &DMatrix<C64>) -> f64 {
    let rp = p.clone().qr().r();
    let rq = q.clone().qr().r();
    nuclear_norm(&(rp * rq.adjoint()))
}

/// Frobenius norm of `P Q*` from the Gram matrices of the factors.
pub fn low_rank_frobenius(p: &DMatrix<C64>, q: &DMatrix<C64>) -> f64 {
    let gp = p.adjoint() * p;
    let gq = q.adjoint() * q;
    (gp.component_mul(&gq.transpose()).iter().map(|z| z.re).sum::<f64>())
        .max(0.0)
        .sqrt()
}

/// Largest absolute entry of `M - I`.
pub fn identity_defect(m: &DMatrix<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((m[(r, c)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// `exp(-i τ H) v` for a small Hermitian `H` given by its eigen-decomposition.
pub fn expm_apply_eigen(values: &[f64], vectors: &DMatrix<C64>, tau: f64, v: &DVector<C64>) -> DVector<C64> {
    let coeffs = vectors.adjoint() * v;
    let phased = DVector::from_fn(coeffs.len(), |i, _| coeffs[i] * C64::from_polar(1.0, -tau * values[i]));
    vectors * phased
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.5, 0.0),
                C64::new(0.0, -1.0),
                C64::new(-1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.5, 0.0),
                C64::new(0.0, 0.0),
                C64::new(3.0, 0.0),
            ],
        );
        let (vals, vecs) = hermitian_eigen(&m).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(3, vals.iter().map(|&v| C64::new(v, 0.0))));
        let rec = &vecs * diag * vecs.adjoint();
        assert!((rec - m).norm() < 1e-12);
    }

    #[test]
    fn low_rank_norms_match_dense() {
        let p = DMatrix::from_fn(7, 2, |r, c| C64::new((r * 3 + c) as f64 * 0.1, (r as f64 - c as f64) * 0.2));
        let q = DMatrix::from_fn(7, 2, |r, c| C64::new(((r + c) % 3) as f64, 0.3 * c as f64));
        let dense = &p * q.adjoint();
        assert!((low_rank_nuclear_norm(&p, &q) - nuclear_norm(&dense)).abs() < 1e-12 * nuclear_norm(&dense));
        assert!((low_rank_frobenius(&p, &q) - dense.norm()).abs() < 1e-12 * dense.norm());
    }
}
