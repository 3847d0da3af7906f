//! The one-body mean-field Hamiltonian `h[ω] = -ε²Δ + V*ρ - X (+ V_ext)`.
//!
//! `ω` is given as a weighted sum of orbital frames `Σ_k c_k F_k F_k*`, which
//! covers both a single state and the averaged densities used by the
//! integrator.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{convolve_with_hat, Grid, PotentialSpec, ScaleParams, SpatialField, C64};
use crate::init::scf::pair_potential;
use crate::orbitals::OrbitalSet;

/// Static ingredients shared by every mean field of one run.
pub struct MeanFieldContext {
    pub grid: Grid,
    pub scale: ScaleParams,
    vhat: Option<Arc<Vec<C64>>>,
    samples: Option<SpatialField>,
    vpair: OnceLock<DMatrix<f64>>,
    v_ext: Option<Vec<f64>>,
    exchange: Option<Arc<dyn ExchangeStrategy>>,
}

impl MeanFieldContext {
    /// `exchange = None` gives the Hartree mean field.
    pub fn new(
        grid: &Grid,
        scale: ScaleParams,
        potential: &PotentialSpec,
        v_ext: Option<&SpatialField>,
        exchange: Option<Arc<dyn ExchangeStrategy>>,
    ) -> Result<Self> {
        if scale.dim != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "scale dimension {} on a {}-dimensional grid",
                scale.dim,
                grid.dim()
            )));
        }
        if let Some(v) = v_ext {
            grid.check_same(&v.grid)?;
        }
        let (vhat, samples) = if potential.is_zero() {
            (None, None)
        } else {
            (Some(Arc::new(potential.transform_on(grid)?)), Some(potential.samples(grid)?))
        };
        Ok(Self {
            grid: grid.clone(),
            scale,
            vhat,
            samples,
            vpair: OnceLock::new(),
            v_ext: v_ext.map(|v| v.values.clone()),
            exchange,
        })
    }

    pub fn exchange_on(&self) -> bool {
        self.exchange.is_some()
    }

    /// `V(x - y)` on all grid pairs, built on first use.
    pub fn pair_potential(&self) -> Option<&DMatrix<f64>> {
        let samples = self.samples.as_ref()?;
        Some(self.vpair.get_or_init(|| pair_potential(&self.grid, samples)))
    }

    pub fn potential_hat(&self) -> Option<&Arc<Vec<C64>>> {
        self.vhat.as_ref()
    }

    /// Mean field of `ω = Σ_k c_k F_k F_k*`.
    pub fn build(&self, frames: &[(f64, &DMatrix<C64>)]) -> Result<MeanField<'_>> {
        let n_inv = 1.0 / self.scale.n as f64;
        let len = self.grid.len();
        for (_, f) in frames {
            if f.nrows() != len {
                return Err(Error::GridMismatch(format!("frame has {} rows, grid has {len} points", f.nrows())));
            }
        }
        let mut potential = self.v_ext.clone().unwrap_or_else(|| vec![0.0; len]);
        let mut exchange = None;
        if let Some(vhat) = &self.vhat {
            let mut rho = vec![C64::new(0.0, 0.0); len];
            for (c, f) in frames {
                for (x, row) in f.row_iter().enumerate() {
                    rho[x] += c * n_inv * row.iter().map(|z| z.norm_sqr()).sum::<f64>();
                }
            }
            convolve_with_hat(&self.grid, vhat, &mut rho);
            potential.iter_mut().zip(&rho).for_each(|(p, r)| *p += r.re);
            if let Some(strategy) = &self.exchange {
                exchange = Some(strategy.build(self, frames)?);
            }
        }
        Ok(MeanField { ctx: self, potential, exchange })
    }
}

/// `h[ω]` frozen for one application window.
pub struct MeanField<'a> {
    ctx: &'a MeanFieldContext,
    /// `V*ρ + V_ext` sampled on the grid.
    pub potential: Vec<f64>,
    exchange: Option<Box<dyn ExchangeOperator>>,
}

impl MeanField<'_> {
    /// `out = h f`.
    pub fn apply(&self, f: &[C64], out: &mut [C64]) {
        let kin = self.ctx.grid.kinetic(f, self.ctx.scale.epsilon);
        for ((o, k), (z, v)) in out.iter_mut().zip(kin).zip(f.iter().zip(&self.potential)) {
            *o = k + z * v;
        }
        if let Some(x) = &self.exchange {
            x.subtract(f, out);
        }
    }

    /// `X f` alone (zero for the Hartree mean field).
    pub fn exchange_apply(&self, f: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        if let Some(x) = &self.exchange {
            x.subtract(f, &mut out);
        }
        out.iter_mut().for_each(|z| *z = -*z);
        out
    }
}

/// The exchange operator `X` bound to a particular `ω`.
pub trait ExchangeOperator: Send + Sync {
    /// `out -= X f`.
    fn subtract(&self, f: &[C64], out: &mut [C64]);
}

/// A way of representing `(Xf)(x) = N^{-1} h^d Σ_y V(x-y) ω(x,y) f(y)`.
pub trait ExchangeStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn build(&self, ctx: &MeanFieldContext, frames: &[(f64, &DMatrix<C64>)]) -> Result<Box<dyn ExchangeOperator>>;
}

/// Assembles the kernel `h^d V(x-y) ω(x,y) / N` as a dense matrix.
pub struct DenseExchange;

struct DenseExchangeOp(DMatrix<C64>);

impl ExchangeOperator for DenseExchangeOp {
    fn subtract(&self, f: &[C64], out: &mut [C64]) {
        let v = &self.0 * DVector::from_column_slice(f);
        out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o -= x);
    }
}

impl ExchangeStrategy for DenseExchange {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn build(&self, ctx: &MeanFieldContext, frames: &[(f64, &DMatrix<C64>)]) -> Result<Box<dyn ExchangeOperator>> {
        let len = ctx.grid.len();
        crate::semiclassics::commutator::check_dense_guard(len)?;
        let Some(vpair) = ctx.pair_potential() else {
            return Ok(Box::new(DenseExchangeOp(DMatrix::zeros(len, len))));
        };
        let mut omega = DMatrix::<C64>::zeros(len, len);
        for (c, f) in frames {
            omega += (*f * f.adjoint()) * C64::new(*c, 0.0);
        }
        let w = ctx.grid.cell_volume() / ctx.scale.n as f64;
        omega.iter_mut().zip(vpair.iter()).for_each(|(o, v)| *o *= v * w);
        Ok(Box::new(DenseExchangeOp(omega)))
    }
}

/// `X f = N^{-1} Σ_k c_k Σ_j f_j · (V * (conj f_j f))`, spectral convolutions
/// only; never forms an `M^d × M^d` object.
pub struct FactoredExchange;

struct FactoredExchangeOp {
    grid: Grid,
    vhat: Arc<Vec<C64>>,
    /// `(c_k / N, F_k)`.
    frames: Vec<(f64, DMatrix<C64>)>,
}

impl ExchangeOperator for FactoredExchangeOp {
    fn subtract(&self, f: &[C64], out: &mut [C64]) {
        let mut pair = vec![C64::new(0.0, 0.0); f.len()];
        for (c, frame) in &self.frames {
            for col in frame.column_iter() {
                pair.iter_mut().zip(col.iter().zip(f)).for_each(|(p, (g, z))| *p = g.conj() * z);
                convolve_with_hat(&self.grid, &self.vhat, &mut pair);
                out.iter_mut().zip(col.iter().zip(&pair)).for_each(|(o, (g, p))| *o -= g * p * *c);
            }
        }
    }
}

impl ExchangeStrategy for FactoredExchange {
    fn name(&self) -> &'static str {
        "factored"
    }

    fn build(&self, ctx: &MeanFieldContext, frames: &[(f64, &DMatrix<C64>)]) -> Result<Box<dyn ExchangeOperator>> {
        let n_inv = 1.0 / ctx.scale.n as f64;
        let vhat = ctx.vhat.clone().unwrap_or_else(|| Arc::new(vec![C64::new(0.0, 0.0); ctx.grid.len()]));
        Ok(Box::new(FactoredExchangeOp {
            grid: ctx.grid.clone(),
            vhat,
            frames: frames.iter().map(|(c, f)| (c * n_inv, (*f).clone())).collect(),
        }))
    }
}

/// Dense on small grids, factored otherwise. The dense matvec costs `M^{2d}`
/// against roughly `N log(M^d)` transforms of length `M^d` for the factored
/// form.
pub struct AutoExchange;

impl AutoExchange {
    pub fn prefers_dense(grid: &Grid, orbitals: usize) -> bool {
        let len = grid.len();
        let log = (len as f64).log2();
        len <= crate::semiclassics::DENSE_POINT_LIMIT && (len as f64) <= 8.0 * orbitals as f64 * log
    }
}

impl ExchangeStrategy for AutoExchange {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn build(&self, ctx: &MeanFieldContext, frames: &[(f64, &DMatrix<C64>)]) -> Result<Box<dyn ExchangeOperator>> {
        let orbitals: usize = frames.iter().map(|(_, f)| f.ncols()).sum();
        if Self::prefers_dense(&ctx.grid, orbitals) {
            DenseExchange.build(ctx, frames)
        } else {
            FactoredExchange.build(ctx, frames)
        }
    }
}

pub fn exchange_strategies() -> Vec<Arc<dyn ExchangeStrategy>> {
    vec![Arc::new(AutoExchange), Arc::new(DenseExchange), Arc::new(FactoredExchange)]
}

pub fn exchange_strategy(name: &str) -> Result<Arc<dyn ExchangeStrategy>> {
    exchange_strategies().into_iter().find(|s| s.name() == name).ok_or_else(|| {
        Error::InvalidParameter(format!("unknown exchange strategy '{name}', expected auto, dense or factored"))
    })
}

/// `h f` for the mean field of `state`.
pub fn mean_field_apply(
    state: &OrbitalSet,
    f: &[C64],
    potential: &PotentialSpec,
    exchange_on: bool,
    v_ext: Option<&SpatialField>,
) -> Result<Vec<C64>> {
    if f.len() != state.grid.len() {
        return Err(Error::GridMismatch(format!(
            "orbital has {} samples, grid has {} points",
            f.len(),
            state.grid.len()
        )));
    }
    let exchange = if exchange_on { Some(Arc::new(AutoExchange) as Arc<dyn ExchangeStrategy>) } else { None };
    let ctx = MeanFieldContext::new(&state.grid, state.scale, potential, v_ext, exchange)?;
    let mf = ctx.build(&[(1.0, &state.orbitals)])?;
    let mut out = vec![C64::new(0.0, 0.0); f.len()];
    mf.apply(f, &mut out);
    Ok(out)
}
