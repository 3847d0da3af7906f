//! Lanczos approximation of `exp(-iτH) v` for Hermitian `H` given only as a
//! matrix-vector product.
//!
//! The Krylov basis is fully re-orthogonalised. The a-posteriori estimate
//! `β₀ β_m |[exp(-iτT_m) e₁]_m|` controls the step: when it exceeds the
//! tolerance the time step is halved on the same basis, and the remaining
//! time is covered by fresh Krylov spaces.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::C64;

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    /// Maximum Krylov subspace dimension.
    pub dim: usize,
    /// Tolerance on the exponential residual estimate, relative to `‖v‖`.
    pub tol: f64,
    pub max_substeps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { dim: 8, tol: 1e-10, max_substeps: 4096 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KrylovStats {
    pub substeps: usize,
    pub matvecs: usize,
    pub error_estimate: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

struct LanczosBasis {
    vectors: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// `β_m` coupling out of the subspace; zero on exact breakdown.
    residual_beta: f64,
}

fn lanczos<F>(apply: &mut F, start: &[C64], dim: usize, stats: &mut KrylovStats) -> Result<LanczosBasis>
where
    F: FnMut(&[C64], &mut [C64]),
{
    let n = start.len();
    let beta0 = norm(start);
    let mut vectors = vec![start.iter().map(|z| z / beta0).collect::<Vec<_>>()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); n];
    let max_dim = dim.min(n).max(1);
    let mut residual_beta = 0.0;
    for j in 0..max_dim {
        apply(&vectors[j], &mut w);
        stats.matvecs += 1;
        let a = dot(&vectors[j], &w).re;
        if !a.is_finite() {
            return Err(Error::KrylovBreakdown("non-finite Rayleigh quotient".into()));
        }
        alpha.push(a);
        // two passes of Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for v in &vectors {
                let c = dot(v, &w);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = norm(&w);
        if !b.is_finite() {
            return Err(Error::KrylovBreakdown("non-finite Lanczos coefficient".into()));
        }
        let scale = a.abs().max(beta.last().copied().unwrap_or(0.0)).max(1.0);
        if b <= 1e-13 * scale {
            // invariant subspace: exact
            residual_beta = 0.0;
            break;
        }
        residual_beta = b;
        if j + 1 == max_dim {
            break;
        }
        beta.push(b);
        vectors.push(w.iter().map(|z| z / b).collect());
    }
    Ok(LanczosBasis { vectors, alpha, beta, residual_beta })
}

/// `exp(-iτH) v`.
pub fn expm_apply<F>(mut apply: F, v: &[C64], tau: f64, opts: KrylovOptions) -> Result<(Vec<C64>, KrylovStats)>
where
    F: FnMut(&[C64], &mut [C64]),
{
    if opts.dim < 1 {
        return Err(Error::InvalidParameter("Krylov dimension must be positive".into()));
    }
    let mut stats = KrylovStats::default();
    let v_norm = norm(v);
    if v_norm == 0.0 || tau == 0.0 {
        return Ok((v.to_vec(), stats));
    }
    let mut current = v.to_vec();
    let mut remaining = tau;
    let mut step = tau;
    while remaining != 0.0 {
        if stats.substeps >= opts.max_substeps {
            return Err(Error::KrylovBreakdown(format!(
                "exceeded {} substeps with {remaining:e} of {tau:e} left",
                opts.max_substeps
            )));
        }
        let beta0 = norm(&current);
        let basis = lanczos(&mut apply, &current, opts.dim, &mut stats)?;
        let k = basis.alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = basis.alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = basis.beta[i];
                t[(i + 1, i)] = basis.beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        if step.abs() > remaining.abs() {
            step = remaining;
        }
        let coeffs = loop {
            // y = exp(-i s T) e1
            let y: Vec<C64> = (0..k)
                .map(|r| {
                    (0..k)
                        .map(|c| {
                            let q = eig.eigenvectors[(r, c)] * eig.eigenvectors[(0, c)];
                            C64::from_polar(q, -step * eig.eigenvalues[c])
                        })
                        .sum()
                })
                .collect();
            let err = beta0 * basis.residual_beta * y[k - 1].norm();
            if err <= opts.tol * v_norm || basis.residual_beta == 0.0 {
                stats.error_estimate += err;
                break y;
            }
            step *= 0.5;
            if step.abs() < 1e-14 * tau.abs() {
                return Err(Error::KrylovBreakdown(format!("step collapsed with error estimate {err:e}")));
            }
        };
        let mut next = vec![C64::new(0.0, 0.0); current.len()];
        for (c, basis_vec) in coeffs.iter().zip(&basis.vectors) {
            let f = c * beta0;
            next.iter_mut().zip(basis_vec).for_each(|(x, b)| *x += f * b);
        }
        current = next;
        remaining -= step;
        if remaining.abs() <= 1e-15 * tau.abs() {
            remaining = 0.0;
        }
        stats.substeps += 1;
        // the step that worked is a good guess for the next space
        step = step.abs().max(0.0).copysign(tau) * 1.5;
    }
    Ok((current, stats))
}
