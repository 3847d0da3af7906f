//! Exchange-term and commutator-growth diagnostics along trajectories.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::mean_field::{AutoExchange, ExchangeStrategy, MeanFieldContext};
use crate::error::{Error, Result};
use crate::grid::{PotentialSpec, C64};
use crate::linalg;
use crate::orbitals::OrbitalSet;

/// `‖[X, ω]‖_HS` for the exchange operator of `state`.
///
/// With `Φ` the orthonormal frame and `X` Hermitian, `[X,ω] = (XΦ)Φ* - Φ(XΦ)*`,
/// so the norm comes from `2N × 2N` Gram matrices.
pub fn exchange_commutator_hs(state: &OrbitalSet, potential: &PotentialSpec) -> Result<f64> {
    let ctx = MeanFieldContext::new(&state.grid, state.scale, potential, None, Some(std::sync::Arc::new(AutoExchange)))?;
    exchange_commutator_hs_with(&ctx, state)
}

pub(crate) fn exchange_commutator_hs_with(ctx: &MeanFieldContext, state: &OrbitalSet) -> Result<f64> {
    if ctx.potential_hat().is_none() {
        return Ok(0.0);
    }
    let exchange = AutoExchange.build(ctx, &[(1.0, &state.orbitals)])?;
    let n = state.n();
    let rows = state.grid.len();
    let phi = state.coordinate_frame();
    let mut p = DMatrix::zeros(rows, 2 * n);
    let mut q = DMatrix::zeros(rows, 2 * n);
    for j in 0..n {
        let col: Vec<C64> = phi.column(j).iter().copied().collect();
        let mut x_phi = vec![C64::new(0.0, 0.0); rows];
        exchange.subtract(&col, &mut x_phi);
        let x_phi = DVector::from_vec(x_phi) * C64::new(-1.0, 0.0);
        p.set_column(j, &x_phi);
        p.set_column(n + j, &phi.column(j));
        q.set_column(j, &phi.column(j));
        q.set_column(n + j, &(-x_phi));
    }
    Ok(linalg::low_rank_frobenius(&p, &q))
}

/// Least-squares fit of `values ≈ A · Nε · e^{c t}` in log space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthFit {
    pub amplitude: f64,
    pub rate: f64,
    pub r_squared: f64,
}

pub fn fit_exponential_growth(times: &[f64], values: &[f64], n_epsilon: f64) -> Result<GrowthFit> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::InvalidParameter("growth fit needs at least three matching samples".into()));
    }
    if values.iter().any(|&v| !(v > 0.0)) || !(n_epsilon > 0.0) {
        return Err(Error::InvalidParameter("growth fit needs positive values".into()));
    }
    let y: Vec<f64> = values.iter().map(|v| (v / n_epsilon).ln()).collect();
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::InvalidParameter("growth fit needs distinct times".into()));
    }
    let sty: f64 = times.iter().zip(&y).map(|(t, v)| (t - tm) * (v - ym)).sum();
    let rate = sty / stt;
    let intercept = ym - rate * tm;
    let ss_res: f64 = times.iter().zip(&y).map(|(t, v)| (v - intercept - rate * t).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(GrowthFit { amplitude: intercept.exp(), rate, r_squared })
}
