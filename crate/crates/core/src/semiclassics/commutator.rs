//! Trace norms of commutators `[A, ω]` for `A ∈ {x_a, ε∂_a, e^{ip·x}}`.
//!
//! Position uses the grid coordinate `x_a ∈ [0, L)` as a multiplication
//! operator, so the commutator kernel is `(x_a - y_a) ω(x,y)` with the cut at
//! the box edge. States should sit away from the cut for the bound to be
//! meaningful.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::C64;
use crate::linalg;
use crate::orbitals::OrbitalSet;

/// Largest grid for which dense kernels and dense SVDs are allowed.
pub const DENSE_POINT_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommutatorKind {
    Position(usize),
    Gradient(usize),
    /// Multiplication by `e^{ip·x}` with `p = 2πk/L` for the integer vector `k`.
    Fourier([i64; 3]),
}

pub(crate) fn check_dense_guard(points: usize) -> Result<()> {
    if points > DENSE_POINT_LIMIT {
        return Err(Error::SizeGuard(format!(
            "dense kernel needs M^d ≤ {DENSE_POINT_LIMIT}, grid has {points} points"
        )));
    }
    Ok(())
}

fn check_kind(state: &OrbitalSet, kind: CommutatorKind) -> Result<()> {
    let d = state.grid.dim();
    match kind {
        CommutatorKind::Position(a) | CommutatorKind::Gradient(a) if a >= d => {
            Err(Error::InvalidParameter(format!("axis {a} on a {d}-dimensional grid")))
        }
        _ => Ok(()),
    }
}

/// Applies `A` (or `A*` when `adjoint`) to a sample vector.
fn apply_operator(state: &OrbitalSet, kind: CommutatorKind, f: &[C64], adjoint: bool) -> Vec<C64> {
    let grid = &state.grid;
    match kind {
        CommutatorKind::Position(a) => f.iter().enumerate().map(|(j, z)| z * grid.coordinate(j, a)).collect(),
        CommutatorKind::Gradient(a) => {
            let sign = if adjoint { -1.0 } else { 1.0 };
            let eps = state.scale.epsilon;
            grid.derivative(f, a).into_iter().map(|z| z * (sign * eps)).collect()
        }
        CommutatorKind::Fourier(k) => {
            let sign = if adjoint { -1.0 } else { 1.0 };
            f.iter()
                .enumerate()
                .map(|(j, z)| z * C64::from_polar(1.0, sign * fourier_phase(state, k, j)))
                .collect()
        }
    }
}

fn fourier_phase(state: &OrbitalSet, k: [i64; 3], j: usize) -> f64 {
    let grid = &state.grid;
    let dp = 2.0 * std::f64::consts::PI / grid.length();
    (0..grid.dim()).map(|a| dp * k[a] as f64 * grid.coordinate(j, a)).sum()
}

fn apply_columns(state: &OrbitalSet, kind: CommutatorKind, frame: &DMatrix<C64>, adjoint: bool) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(frame.nrows(), frame.ncols());
    for (c, col) in frame.column_iter().enumerate() {
        let v: Vec<C64> = col.iter().copied().collect();
        out.set_column(c, &nalgebra::DVector::from_vec(apply_operator(state, kind, &v, adjoint)));
    }
    out
}

/// A way of evaluating `tr|[A, ω]|`.
pub trait TraceNormMethod: Send + Sync {
    fn name(&self) -> &'static str;

    fn commutator(&self, state: &OrbitalSet, kind: CommutatorKind) -> Result<f64>;
}

/// `[A,ω] = (AΦ)Φ* - Φ(A*Φ)*` with `Φ` the orthonormal frame: a rank-`2N`
/// product whose nuclear norm reduces to a `2N × 2N` singular problem.
pub struct LowRank;

impl TraceNormMethod for LowRank {
    fn name(&self) -> &'static str {
        "low-rank"
    }

    fn commutator(&self, state: &OrbitalSet, kind: CommutatorKind) -> Result<f64> {
        check_kind(state, kind)?;
        let phi = state.coordinate_frame();
        let a_phi = apply_columns(state, kind, &phi, false);
        let adj_phi = apply_columns(state, kind, &phi, true);
        let n = phi.ncols();
        let rows = phi.nrows();
        let mut p = DMatrix::zeros(rows, 2 * n);
        let mut q = DMatrix::zeros(rows, 2 * n);
        p.columns_mut(0, n).copy_from(&a_phi);
        p.columns_mut(n, n).copy_from(&phi);
        q.columns_mut(0, n).copy_from(&phi);
        q.columns_mut(n, n).copy_from(&(-adj_phi));
        Ok(linalg::low_rank_nuclear_norm(&p, &q))
    }
}

/// Builds the commutator kernel entry by entry from `ω(x,y)` and takes a
/// full SVD. Guarded to small grids.
pub struct DenseSvd;

impl TraceNormMethod for DenseSvd {
    fn name(&self) -> &'static str {
        "dense-svd"
    }

    fn commutator(&self, state: &OrbitalSet, kind: CommutatorKind) -> Result<f64> {
        check_kind(state, kind)?;
        let grid = &state.grid;
        check_dense_guard(grid.len())?;
        let w = grid.cell_volume();
        let omega = state.kernel().entries;
        let n = grid.len();
        let comm = match kind {
            CommutatorKind::Position(a) => {
                DMatrix::from_fn(n, n, |r, c| omega[(r, c)] * (grid.coordinate(r, a) - grid.coordinate(c, a)))
            }
            CommutatorKind::Fourier(k) => DMatrix::from_fn(n, n, |r, c| {
                let er = C64::from_polar(1.0, fourier_phase(state, k, r));
                let ec = C64::from_polar(1.0, fourier_phase(state, k, c));
                omega[(r, c)] * (er - ec)
            }),
            CommutatorKind::Gradient(a) => {
                // ε(∂_x + ∂_y) ω(x,y): differentiate columns in x, rows in y
                let eps = state.scale.epsilon;
                let mut out = DMatrix::zeros(n, n);
                for c in 0..n {
                    let col: Vec<C64> = omega.column(c).iter().copied().collect();
                    for (r, z) in grid.derivative(&col, a).into_iter().enumerate() {
                        out[(r, c)] += z * eps;
                    }
                }
                for r in 0..n {
                    let row: Vec<C64> = omega.row(r).iter().copied().collect();
                    for (c, z) in grid.derivative(&row, a).into_iter().enumerate() {
                        out[(r, c)] += z * eps;
                    }
                }
                out
            }
        };
        Ok(linalg::nuclear_norm(&(comm * C64::new(w, 0.0))))
    }
}

pub fn trace_norm_methods() -> Vec<Box<dyn TraceNormMethod>> {
    vec![Box::new(LowRank), Box::new(DenseSvd)]
}

pub fn trace_norm_method(name: &str) -> Result<Box<dyn TraceNormMethod>> {
    trace_norm_methods()
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown trace-norm method '{name}'")))
}

/// `tr|[A, ω]|` by the low-rank method.
pub fn commutator_trace_norm(state: &OrbitalSet, kind: CommutatorKind) -> Result<f64> {
    LowRank.commutator(state, kind)
}

/// Per-axis position and gradient commutator trace norms.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorReport {
    pub position: Vec<f64>,
    pub gradient: Vec<f64>,
    pub n_epsilon: f64,
    pub method: &'static str,
}

impl CommutatorReport {
    pub fn position_ratios(&self) -> Vec<f64> {
        self.position.iter().map(|v| v / self.n_epsilon).collect()
    }

    pub fn gradient_ratios(&self) -> Vec<f64> {
        self.gradient.iter().map(|v| v / self.n_epsilon).collect()
    }

    pub fn max_position_ratio(&self) -> f64 {
        self.position_ratios().into_iter().fold(0.0, f64::max)
    }

    pub fn max_gradient_ratio(&self) -> f64 {
        self.gradient_ratios().into_iter().fold(0.0, f64::max)
    }

    /// `Σ_a tr|[x_a, ω]| / (Nε)`.
    pub fn summed_position_ratio(&self) -> f64 {
        self.position.iter().sum::<f64>() / self.n_epsilon
    }

    pub fn summed_gradient_ratio(&self) -> f64 {
        self.gradient.iter().sum::<f64>() / self.n_epsilon
    }
}

pub fn commutator_report(state: &OrbitalSet, method: &dyn TraceNormMethod) -> Result<CommutatorReport> {
    let d = state.grid.dim();
    let position = (0..d).map(|a| method.commutator(state, CommutatorKind::Position(a))).collect::<Result<_>>()?;
    let gradient = (0..d).map(|a| method.commutator(state, CommutatorKind::Gradient(a))).collect::<Result<_>>()?;
    Ok(CommutatorReport { position, gradient, n_epsilon: state.scale.n_epsilon(), method: method.name() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierEntry {
    pub wavevector: [i64; 3],
    /// `|p|` with `p = 2πk/L`.
    pub momentum: f64,
    pub trace_norm: f64,
    /// `(1 + |p|) Σ_a tr|[x_a, ω]|`.
    pub reference: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierReport {
    pub entries: Vec<FourierEntry>,
    pub max_ratio: f64,
}

/// Compares `tr|[e^{ip·x}, ω]|` with `(1+|p|) Σ_a tr|[x_a, ω]|` for each
/// wavevector in `wavevectors`.
pub fn fourier_commutator_check(state: &OrbitalSet, wavevectors: &[[i64; 3]]) -> Result<FourierReport> {
    let grid = &state.grid;
    let d = grid.dim();
    let position: f64 = (0..d)
        .map(|a| commutator_trace_norm(state, CommutatorKind::Position(a)))
        .sum::<Result<f64>>()?;
    let dp = 2.0 * std::f64::consts::PI / grid.length();
    let mut entries = Vec::with_capacity(wavevectors.len());
    for &k in wavevectors {
        let momentum = (0..d).map(|a| (dp * k[a] as f64).powi(2)).sum::<f64>().sqrt();
        // the identity commutes exactly; skip the rounding noise
        let trace_norm =
            if k[..d].iter().all(|&c| c == 0) { 0.0 } else { commutator_trace_norm(state, CommutatorKind::Fourier(k))? };
        let reference = (1.0 + momentum) * position;
        let ratio = if trace_norm == 0.0 { 0.0 } else { trace_norm / reference };
        entries.push(FourierEntry { wavevector: k, momentum, trace_norm, reference, ratio });
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(FourierReport { entries, max_ratio })
}
