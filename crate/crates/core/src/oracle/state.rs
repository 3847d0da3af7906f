//! Many-body states: Slater embedding, exact propagation and the one-particle
//! reduced density.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, KernelOperator, C64};
use crate::krylov::{expm_apply, KrylovOptions};
use crate::oracle::basis::{hop, FockBasis};
use crate::oracle::hamiltonian::LatticeHamiltonian;
use crate::orbitals::OrbitalSet;

/// Amplitudes over a [`FockBasis`], indexed like its masks.
#[derive(Clone, Debug)]
pub struct FockState {
    pub basis: Arc<FockBasis>,
    pub amplitudes: Vec<C64>,
}

impl FockState {
    pub fn new(basis: Arc<FockBasis>, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::InvalidParameter(format!(
                "{} amplitudes for a basis of {} states",
                amplitudes.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &FockState) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }
}

/// `a*(f_1) … a*(f_N) Ω`: the amplitude of an occupation mask is the
/// determinant of the orbital rows on its occupied sites, in orthonormal
/// site coordinates.
pub fn slater_to_fock(state: &OrbitalSet, basis: Arc<FockBasis>) -> Result<FockState> {
    if state.grid.dim() != 1 || state.grid.points() != basis.sites() {
        return Err(Error::GridMismatch(format!(
            "orbitals on {}^{} points, basis has {} sites",
            state.grid.points(),
            state.grid.dim(),
            basis.sites()
        )));
    }
    if state.n() != basis.particles() {
        return Err(Error::InvalidParameter(format!(
            "{} orbitals for a {}-particle basis",
            state.n(),
            basis.particles()
        )));
    }
    let defect = state.orthonormality_defect();
    if defect > 1e-10 {
        return Err(Error::NotOrthonormal { defect });
    }
    let frame = state.coordinate_frame();
    let n = state.n();
    let amplitudes = basis
        .states()
        .par_iter()
        .map(|&mask| {
            let rows: Vec<usize> = FockBasis::occupied(mask).collect();
            DMatrix::from_fn(n, n, |i, j| frame[(rows[i], j)]).determinant()
        })
        .collect();
    FockState::new(basis, amplitudes)
}

/// Lanczos settings of the exact propagation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleKrylov {
    pub dim: usize,
    pub tol: f64,
}

impl Default for OracleKrylov {
    fn default() -> Self {
        Self { dim: 30, tol: 1e-12 }
    }
}

/// `exp(-i dt H / ε) psi`. A breakdown is retried once on a Krylov space
/// of a different dimension before giving up.
pub fn krylov_propagate(h: &LatticeHamiltonian, psi: &FockState, dt: f64, opts: OracleKrylov) -> Result<FockState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !Arc::ptr_eq(&h.basis, &psi.basis) && *h.basis != *psi.basis {
        return Err(Error::InvalidParameter("state and Hamiltonian use different bases".into()));
    }
    let tau = dt / h.scale.epsilon;
    let run = |dim: usize| {
        expm_apply(
            |x: &[C64], y: &mut [C64]| h.apply(x, y),
            &psi.amplitudes,
            tau,
            KrylovOptions { dim, tol: opts.tol, ..Default::default() },
        )
    };
    let (amplitudes, _) = match run(opts.dim) {
        Err(Error::KrylovBreakdown(first)) => {
            log::warn!("Lanczos breakdown ({first}); retrying with dimension {}", opts.dim + 3);
            run(opts.dim + 3)?
        }
        other => other?,
    };
    FockState::new(psi.basis.clone(), amplitudes)
}

/// `γ_rs = ⟨psi| a_s† a_r |psi⟩` as a kernel on `grid`, so that its operator
/// matrix is `γ` itself and its trace is `N`.
pub fn one_particle_density(psi: &FockState, grid: &Grid) -> Result<KernelOperator> {
    let basis = &psi.basis;
    let m = basis.sites();
    if grid.dim() != 1 || grid.points() != m {
        return Err(Error::GridMismatch(format!("grid has {} points, basis {m} sites", grid.points())));
    }
    // fixed chunks summed in order keep the result deterministic
    let chunk = basis.len().div_ceil(64).max(1);
    let partial: Vec<DMatrix<C64>> = (0..basis.len())
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|idx| {
            let mut g = DMatrix::<C64>::zeros(m, m);
            for &i in idx {
                let c = psi.amplitudes[i];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let mask = basis.mask(i);
                for r in FockBasis::occupied(mask) {
                    for s in 0..m {
                        // a_s† a_r |mask⟩ = sign |target⟩
                        if let Some((target, sign)) = hop(mask, s, r) {
                            let j = if target == mask { i } else { basis.index_of(target) };
                            g[(r, s)] += psi.amplitudes[j].conj() * c * sign;
                        }
                    }
                }
            }
            g
        })
        .collect();
    let mut gamma = DMatrix::<C64>::zeros(m, m);
    for g in &partial {
        gamma += g;
    }
    KernelOperator::new(grid, gamma / C64::new(grid.cell_volume(), 0.0))
}
