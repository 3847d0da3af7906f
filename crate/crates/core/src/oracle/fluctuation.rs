//! Fluctuation number `2 tr γ(1-ω)` and the bound `‖γ-ω‖²_HS ≤ 2 tr γ(1-ω)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::KernelOperator;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    /// `2 tr γ(1-ω)`.
    pub fluctuation_number: f64,
    pub hs_distance_sq: f64,
    /// `2 tr γ(1-ω) - ‖γ-ω‖²_HS`; non-negative when `0 ≤ γ ≤ 1`.
    pub slack: f64,
}

/// Compares a reduced density `γ` with a projection `ω` on the same grid.
pub fn fluctuation_number(gamma: &KernelOperator, omega: &KernelOperator) -> Result<FluctuationReport> {
    gamma.grid.check_same(&omega.grid)?;
    let trace = omega.trace().re;
    let defect = omega.projection_defect();
    if defect > 1e-8 * trace.abs().sqrt().max(1.0) {
        return Err(Error::NotProjection { defect });
    }
    let g = gamma.operator_matrix();
    let w = omega.operator_matrix();
    // tr(γω) without forming the product
    let overlap: f64 = g.iter().zip(w.transpose().iter()).map(|(a, b)| (a * b).re).sum();
    let fluctuation_number = 2.0 * (g.trace().re - overlap);
    let hs_distance_sq = (&g - &w).norm_squared();
    Ok(FluctuationReport { fluctuation_number, hs_distance_sq, slack: fluctuation_number - hs_distance_sq })
}
