//! Second-quantised Hamiltonian on a one-dimensional lattice,
//! `H = Σ T_rs a_r† a_s + (1/N) Σ_{r<s} V(x_r - x_s) n_r n_s`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, PotentialSpec, ScaleParams, SpatialField, C64};
use crate::oracle::basis::{hop, FockBasis};

/// Implicit matrix of the many-body Hamiltonian on an [`FockBasis`].
///
/// The one-body part is the same spectral kinetic operator the mean-field
/// solver uses, written in orthonormal site coordinates, plus an optional
/// external potential on the diagonal.
#[derive(Clone, Debug)]
pub struct LatticeHamiltonian {
    pub grid: Grid,
    pub scale: ScaleParams,
    pub basis: Arc<FockBasis>,
    pub one_body: DMatrix<C64>,
    /// `V(x_r - x_s)` indexed by `(s - r) mod M`.
    pub pair: Vec<f64>,
    /// Interaction energy of each basis state.
    diagonal: Vec<f64>,
}

impl LatticeHamiltonian {
    pub fn new(
        grid: &Grid,
        potential: &PotentialSpec,
        scale: ScaleParams,
        basis: Arc<FockBasis>,
        v_ext: Option<&SpatialField>,
    ) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Unsupported("the many-body oracle is one-dimensional".into()));
        }
        if grid.points() != basis.sites() {
            return Err(Error::GridMismatch(format!(
                "basis has {} sites, grid has {} points",
                basis.sites(),
                grid.points()
            )));
        }
        if scale.n != basis.particles() || scale.dim != 1 {
            return Err(Error::InvalidParameter(format!(
                "scale is for N = {} in d = {}, basis holds {} particles",
                scale.n,
                scale.dim,
                basis.particles()
            )));
        }
        let mut one_body = grid.kinetic_matrix(scale.epsilon);
        if let Some(v) = v_ext {
            grid.check_same(&v.grid)?;
            for (r, e) in v.values.iter().enumerate() {
                one_body[(r, r)] += e;
            }
        }
        let pair = potential.samples(grid)?.values;
        let coupling = 1.0 / scale.n as f64;
        let m = grid.points();
        let diagonal = basis
            .states()
            .par_iter()
            .map(|&mask| {
                let occ: Vec<usize> = FockBasis::occupied(mask).collect();
                let mut e = 0.0;
                for (i, &r) in occ.iter().enumerate() {
                    for &s in &occ[i + 1..] {
                        e += pair[(s + m - r) % m];
                    }
                }
                coupling * e
            })
            .collect();
        Ok(Self { grid: grid.clone(), scale, basis, one_body, pair, diagonal })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `out = H psi`, gathered row by row.
    pub fn apply(&self, psi: &[C64], out: &mut [C64]) {
        assert_eq!(psi.len(), self.dim(), "state length does not match basis");
        let m = self.basis.sites();
        let t = &self.one_body;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mask = self.basis.mask(i);
            let mut acc = C64::new(self.diagonal[i], 0.0) * psi[i];
            for r in FockBasis::occupied(mask) {
                for s in 0..m {
                    // ⟨mask| a_r† a_s |source⟩ with source = mask - r + s
                    if let Some((source, sign)) = hop(mask, s, r) {
                        let j = if source == mask { i } else { self.basis.index_of(source) };
                        acc += t[(r, s)] * sign * psi[j];
                    }
                }
            }
            *o = acc;
        });
    }

    /// `⟨psi| H |psi⟩` for a normalised state.
    pub fn energy(&self, psi: &[C64]) -> f64 {
        let mut hpsi = vec![C64::new(0.0, 0.0); psi.len()];
        self.apply(psi, &mut hpsi);
        psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum()
    }
}
