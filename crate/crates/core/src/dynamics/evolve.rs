//! Time stepping of orbital sets under `iε∂_t ω = [h[ω], ω]`.
//!
//! One step of size `dt` applies `exp(-i (dt/ε) h_mid)` to every orbital. The
//! midpoint field comes from a predictor half step with `h[ω_n]`, then up to
//! two corrections with `h[(ω_n + ω_{n+1})/2]`, which makes the converged
//! step symmetric under `dt → -dt`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::diagnostics::exchange_commutator_hs_with;
use crate::dynamics::mean_field::{exchange_strategy, MeanField, MeanFieldContext};
use crate::error::{Error, Result};
use crate::grid::{PotentialSpec, SpatialField, C64};
use crate::init::energy::hf_energy_parts;
use crate::krylov::{expm_apply, KrylovOptions};
use crate::orbitals::OrbitalSet;
use crate::semiclassics::{commutator_trace_norm, CommutatorKind};

/// Re-orthonormalise once the Gram defect passes this.
pub const REORTHONORMALIZE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolveConfig {
    /// Final time; negative for backward runs.
    pub t_final: f64,
    /// Step, with the sign of `t_final`.
    pub dt: f64,
    pub exchange_on: bool,
    pub include_v_ext: bool,
    #[serde(skip)]
    pub v_ext: Option<SpatialField>,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    /// Fixed-point corrections of the midpoint field, at most 2.
    pub corrections: usize,
    /// Exchange strategy name: `auto`, `dense` or `factored`.
    pub exchange: String,
    pub snapshot_times: Vec<f64>,
    /// Record diagnostics every this many steps (and at the end).
    pub diagnostics_every: usize,
    /// Commutator and exchange diagnostics are the costly ones.
    pub commutator_diagnostics: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt: 1e-2,
            exchange_on: true,
            include_v_ext: false,
            v_ext: None,
            krylov_dim: 8,
            krylov_tol: 1e-10,
            corrections: 2,
            exchange: "auto".into(),
            snapshot_times: Vec::new(),
            diagnostics_every: 1,
            commutator_diagnostics: true,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !self.t_final.is_finite() || !self.dt.is_finite() || self.dt == 0.0 {
            return bad(format!("need finite t_final and non-zero dt, got {} and {}", self.t_final, self.dt));
        }
        if self.t_final != 0.0 && (self.dt.signum() != self.t_final.signum() || self.dt.abs() > self.t_final.abs()) {
            return bad(format!("dt = {} must share the sign of t_final = {} and not exceed it", self.dt, self.t_final));
        }
        if self.krylov_dim < 4 {
            return bad(format!("krylov_dim must be at least 4, got {}", self.krylov_dim));
        }
        if !(self.krylov_tol > 0.0) {
            return bad(format!("krylov_tol must be positive, got {}", self.krylov_tol));
        }
        if self.corrections > 2 {
            return bad(format!("at most 2 midpoint corrections, got {}", self.corrections));
        }
        if self.include_v_ext && self.v_ext.is_none() {
            return bad("include_v_ext is set but no external potential was given".into());
        }
        if self.diagnostics_every == 0 {
            return bad("diagnostics_every must be positive".into());
        }
        exchange_strategy(&self.exchange)?;
        Ok(())
    }

    /// Step count; the last step is shortened when `t_final/dt` is not whole.
    pub fn steps(&self) -> usize {
        if self.t_final == 0.0 {
            return 0;
        }
        let ratio = self.t_final / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.abs() {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }

    fn time_at(&self, step: usize) -> f64 {
        if step >= self.steps() {
            self.t_final
        } else {
            step as f64 * self.dt
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub energy: f64,
    pub trace: f64,
    pub orthonormality_defect: f64,
    pub projection_defect: f64,
    /// `tr|[x_a, ω_t]|` per axis; empty when commutator diagnostics are off.
    pub comm_x: Vec<f64>,
    /// `‖[X_t, ω_t]‖_HS`; `None` for Hartree runs or when diagnostics are off.
    pub exch_comm_hs: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub state: OrbitalSet,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    /// Stopped early; snapshots end with the last valid state.
    Aborted { time: f64, reason: String },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticRecord>,
    pub status: TrajectoryStatus,
    pub steps: usize,
    pub reorthonormalizations: usize,
    /// Three consecutive steps needed re-orthonormalisation.
    pub step_size_failure: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &OrbitalSet {
        &self.snapshots.last().expect("trajectory has an initial snapshot").state
    }

    pub fn is_complete(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// `exp(-iτh) F` column by column.
fn propagate(h: &MeanField<'_>, frame: &DMatrix<C64>, tau: f64, opts: KrylovOptions) -> Result<DMatrix<C64>> {
    let columns: Vec<Vec<C64>> = (0..frame.ncols())
        .into_par_iter()
        .map(|j| {
            let v: Vec<C64> = frame.column(j).iter().copied().collect();
            expm_apply(|x, y| h.apply(x, y), &v, tau, opts).map(|(out, _)| out)
        })
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(frame.nrows(), frame.ncols());
    for (j, col) in columns.into_iter().enumerate() {
        out.set_column(j, &DVector::from_vec(col));
    }
    Ok(out)
}

/// One midpoint step from `frame`.
pub(crate) fn step(
    ctx: &MeanFieldContext,
    frame: &DMatrix<C64>,
    dt: f64,
    corrections: usize,
    opts: KrylovOptions,
) -> Result<DMatrix<C64>> {
    let tau = dt / ctx.scale.epsilon;
    let h0 = ctx.build(&[(1.0, frame)])?;
    let half = propagate(&h0, frame, 0.5 * tau, opts)?;
    let h_mid = ctx.build(&[(1.0, &half)])?;
    let mut next = propagate(&h_mid, frame, tau, opts)?;
    let scale = ctx.grid.cell_volume().sqrt();
    for _ in 0..corrections {
        let h_avg = ctx.build(&[(0.5, frame), (0.5, &next)])?;
        let candidate = propagate(&h_avg, frame, tau, opts)?;
        let change = (&candidate - &next).iter().map(|z| z.norm()).fold(0.0, f64::max) * scale;
        next = candidate;
        if change < 1e-14 {
            break;
        }
    }
    Ok(next)
}

fn record(
    ctx: &MeanFieldContext,
    state: &OrbitalSet,
    t: f64,
    potential: &PotentialSpec,
    cfg: &EvolveConfig,
) -> Result<DiagnosticRecord> {
    let v_ext = if cfg.include_v_ext { cfg.v_ext.as_ref() } else { None };
    let parts = hf_energy_parts(state, v_ext, potential)?;
    let energy = if cfg.exchange_on { parts.total() } else { parts.kinetic + parts.external + parts.direct };
    let (comm_x, exch_comm_hs) = if cfg.commutator_diagnostics {
        let comm = (0..state.grid.dim())
            .map(|a| commutator_trace_norm(state, CommutatorKind::Position(a)))
            .collect::<Result<Vec<_>>>()?;
        let exch = if cfg.exchange_on { Some(exchange_commutator_hs_with(ctx, state)?) } else { None };
        (comm, exch)
    } else {
        (Vec::new(), None)
    };
    Ok(DiagnosticRecord {
        t,
        energy,
        trace: state.trace(),
        orthonormality_defect: state.orthonormality_defect(),
        projection_defect: state.projection_defect(),
        comm_x,
        exch_comm_hs,
    })
}

/// Evolves `initial` under the Hartree-Fock (or, with `exchange_on = false`,
/// the fermionic Hartree) equation.
///
/// Invalid input is an error. Failures during propagation end the run early
/// with [`TrajectoryStatus::Aborted`] and keep everything computed so far.
pub fn evolve(initial: &OrbitalSet, potential: &PotentialSpec, cfg: &EvolveConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let defect = initial.orthonormality_defect();
    if defect > crate::orbitals::ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { defect });
    }
    let v_ext = if cfg.include_v_ext { cfg.v_ext.as_ref() } else { None };
    let exchange = if cfg.exchange_on { Some(exchange_strategy(&cfg.exchange)?) } else { None };
    let ctx = MeanFieldContext::new(&initial.grid, initial.scale, potential, v_ext, exchange)?;
    evolve_with(&ctx, initial, potential, cfg)
}

fn evolve_with(ctx: &MeanFieldContext, initial: &OrbitalSet, potential: &PotentialSpec, cfg: &EvolveConfig) -> Result<Trajectory> {
    let steps = cfg.steps();
    let opts = KrylovOptions { dim: cfg.krylov_dim, tol: cfg.krylov_tol, ..KrylovOptions::default() };
    let mut snapshot_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|&t| {
            let k = (t / cfg.dt).round().clamp(0.0, steps as f64) as usize;
            if (cfg.time_at(k) - t).abs() > 1e-9 * t.abs().max(1.0) {
                log::warn!("snapshot time {t} is not on the step grid; using t = {}", cfg.time_at(k));
            }
            k
        })
        .collect();
    snapshot_steps.extend([0, steps]);
    snapshot_steps.sort_unstable();
    snapshot_steps.dedup();

    let mut traj = Trajectory {
        snapshots: vec![Snapshot { t: 0.0, state: initial.clone() }],
        diagnostics: vec![record(ctx, initial, 0.0, potential, cfg)?],
        status: TrajectoryStatus::Completed,
        steps: 0,
        reorthonormalizations: 0,
        step_size_failure: false,
    };
    let mut state = initial.clone();
    let mut consecutive = 0;
    for k in 1..=steps {
        let t_prev = cfg.time_at(k - 1);
        let t = cfg.time_at(k);
        let advanced = step(ctx, &state.orbitals, t - t_prev, cfg.corrections, opts).and_then(|frame| {
            if frame.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                Ok(frame)
            } else {
                Err(Error::Propagation { time: t, reason: "non-finite orbital values".into() })
            }
        });
        let frame = match advanced {
            Ok(f) => f,
            Err(e) => {
                log::error!("propagation stopped at t = {t_prev}: {e}");
                traj.status = TrajectoryStatus::Aborted { time: t_prev, reason: e.to_string() };
                if traj.snapshots.last().map(|s| s.t) != Some(t_prev) {
                    traj.snapshots.push(Snapshot { t: t_prev, state });
                }
                return Ok(traj);
            }
        };
        state.orbitals = frame;
        traj.steps = k;
        let defect = state.orthonormality_defect();
        if defect > REORTHONORMALIZE_TOL {
            log::info!("re-orthonormalising at t = {t} (defect {defect:.3e})");
            state.reorthonormalize()?;
            traj.reorthonormalizations += 1;
            consecutive += 1;
            if consecutive >= 3 && !traj.step_size_failure {
                log::warn!("orthonormality lost on {consecutive} consecutive steps; dt = {} is too large", cfg.dt);
                traj.step_size_failure = true;
            }
        } else {
            consecutive = 0;
        }
        if k % cfg.diagnostics_every == 0 || k == steps {
            traj.diagnostics.push(record(ctx, &state, t, potential, cfg)?);
        }
        if snapshot_steps.binary_search(&k).is_ok() {
            traj.snapshots.push(Snapshot { t, state: state.clone() });
        }
    }
    Ok(traj)
}

/// `‖ω^HF_t - ω^H_t‖_HS` at every snapshot time of `cfg`, from identical
/// initial data.
pub fn hartree_vs_hf_gap(initial: &OrbitalSet, potential: &PotentialSpec, cfg: &EvolveConfig) -> Result<Vec<(f64, f64)>> {
    let hf = evolve(initial, potential, &EvolveConfig { exchange_on: true, ..cfg.clone() })?;
    let hartree = evolve(initial, potential, &EvolveConfig { exchange_on: false, ..cfg.clone() })?;
    for traj in [&hf, &hartree] {
        if let TrajectoryStatus::Aborted { time, reason } = &traj.status {
            return Err(Error::Propagation { time: *time, reason: reason.clone() });
        }
    }
    hf.snapshots
        .iter()
        .zip(&hartree.snapshots)
        .map(|(a, b)| Ok((a.t, a.state.hs_distance(&b.state)?)))
        .collect()
}

/// Shared context for callers that evolve many states with one potential.
pub fn evolve_in(ctx: &MeanFieldContext, initial: &OrbitalSet, potential: &PotentialSpec, cfg: &EvolveConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if ctx.exchange_on() != cfg.exchange_on {
        return Err(Error::InvalidParameter("context and config disagree on the exchange term".into()));
    }
    initial.grid.check_same(&ctx.grid)?;
    evolve_with(ctx, initial, potential, cfg)
}

pub fn context_for(initial: &OrbitalSet, potential: &PotentialSpec, cfg: &EvolveConfig) -> Result<Arc<MeanFieldContext>> {
    let v_ext = if cfg.include_v_ext { cfg.v_ext.as_ref() } else { None };
    let exchange = if cfg.exchange_on { Some(exchange_strategy(&cfg.exchange)?) } else { None };
    Ok(Arc::new(MeanFieldContext::new(&initial.grid, initial.scale, potential, v_ext, exchange)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{cos_well, Grid, ScaleParams};
    use crate::init::free_sea::free_fermi_sea;
    use crate::init::scf::{scf_ground_state, ScfOptions};
    use crate::test_support::random_projection;
    use std::f64::consts::PI;

    fn trapped_state(n: usize, m: usize) -> (OrbitalSet, PotentialSpec) {
        let g = Grid::new(1, m, 2.0 * PI).unwrap();
        let scale = ScaleParams::new(n, 1).unwrap();
        let pot = PotentialSpec::gaussian(1.0, 0.5).unwrap();
        let well = cos_well(&g, 2.0);
        let res = scf_ground_state(Some(&well), &pot, &g, scale, ScfOptions { tol: 1e-9, ..Default::default() }).unwrap();
        (res.orbitals, pot)
    }

    #[test]
    fn free_sea_is_stationary() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let s = free_fermi_sea(&g, ScaleParams::new(5, 1).unwrap()).unwrap();
        let cfg = EvolveConfig { t_final: 0.2, dt: 1e-2, exchange_on: false, ..Default::default() };
        let traj = evolve(&s, &PotentialSpec::Zero, &cfg).unwrap();
        assert!(traj.is_complete());
        assert!(traj.final_state().hs_distance(&s).unwrap() < 1e-10);
        // each plane wave only picks up its phase e^{-iεp²t}
        let eps = s.scale.epsilon;
        let f = traj.final_state();
        for (j, k) in [0.0, -1.0, 1.0, -2.0, 2.0].iter().enumerate() {
            let expect = C64::from_polar(1.0, -eps * k * k * 0.2);
            let ratio = f.orbitals[(3, j)] / s.orbitals[(3, j)];
            assert!((ratio - expect).norm() < 1e-9, "mode {k}: {ratio} vs {expect}");
        }
    }

    /// Smooth moving Gaussian packets, orthonormalised.
    fn wavepackets(g: &Grid, n: usize) -> OrbitalSet {
        let l = g.length();
        let raw = DMatrix::from_fn(g.len(), n, |r, c| {
            let x = g.coordinate(r, 0) - l * (c as f64 + 1.0) / (n as f64 + 1.0);
            C64::from_polar((-x * x / 0.5).exp(), (c as f64 + 1.0) * g.coordinate(r, 0))
        });
        let mut s = OrbitalSet::new_unchecked(g, ScaleParams::new(n, 1).unwrap(), raw).unwrap();
        s.reorthonormalize().unwrap();
        s
    }

    #[test]
    fn single_particle_hf_is_free_motion() {
        // direct and exchange cancel exactly in the equation, so the only
        // difference left is the second-order splitting error
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let s = wavepackets(&g, 1);
        let pot = PotentialSpec::gaussian(5.0, 0.3).unwrap();
        let diffs: Vec<f64> = [1e-2, 5e-3]
            .iter()
            .map(|&dt| {
                let cfg = EvolveConfig { t_final: 0.1, dt, ..Default::default() };
                let with = evolve(&s, &pot, &cfg).unwrap();
                let without = evolve(&s, &PotentialSpec::Zero, &cfg).unwrap();
                with.final_state().hs_distance(without.final_state()).unwrap()
            })
            .collect();
        assert!(diffs[0] < 1e-3 && diffs[0] / diffs[1] >= 3.0, "{diffs:?}");
    }

    #[test]
    fn second_order_self_refinement() {
        let (s, pot) = trapped_state(4, 32);
        let finals: Vec<OrbitalSet> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| {
                let cfg = EvolveConfig { t_final: 0.5, dt, commutator_diagnostics: false, ..Default::default() };
                evolve(&s, &pot, &cfg).unwrap().final_state().clone()
            })
            .collect();
        let e1 = finals[0].hs_distance(&finals[1]).unwrap();
        let e2 = finals[1].hs_distance(&finals[2]).unwrap();
        assert!(e1 / e2 >= 3.0, "refinement ratio {} ({e1:e}, {e2:e})", e1 / e2);
    }

    #[test]
    fn unitarity_and_time_reversal() {
        let (s, pot) = trapped_state(4, 32);
        let fwd = EvolveConfig { t_final: 0.5, dt: 5e-3, commutator_diagnostics: false, ..Default::default() };
        let traj = evolve(&s, &pot, &fwd).unwrap();
        assert!(traj.steps >= 100);
        assert_eq!(traj.reorthonormalizations, 0);
        assert!(traj.diagnostics.iter().all(|d| d.orthonormality_defect < 1e-9));
        let back = EvolveConfig { t_final: -0.5, dt: -5e-3, ..fwd };
        let returned = evolve(traj.final_state(), &pot, &back).unwrap();
        let err = returned.final_state().hs_distance(&s).unwrap();
        assert!(err < 1e-6, "time reversal error {err:e}");
    }

    #[test]
    fn energy_is_conserved() {
        let (s, pot) = trapped_state(4, 32);
        let cfg = EvolveConfig { t_final: 0.3, dt: 1e-3, commutator_diagnostics: false, ..Default::default() };
        let traj = evolve(&s, &pot, &cfg).unwrap();
        let e0 = traj.diagnostics[0].energy;
        let drift = traj.diagnostics.iter().map(|d| ((d.energy - e0) / e0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift:e}");
    }

    #[test]
    fn snapshots_and_validation() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let s = free_fermi_sea(&g, ScaleParams::new(3, 1).unwrap()).unwrap();
        let cfg = EvolveConfig { t_final: 0.1, dt: 0.03, snapshot_times: vec![0.06], diagnostics_every: 2, ..Default::default() };
        let traj = evolve(&s, &PotentialSpec::Zero, &cfg).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 3);
        assert!((times[1] - 0.06).abs() < 1e-12 && times[2] == 0.1);
        assert_eq!(traj.diagnostics.len(), 3);
        for bad in [
            EvolveConfig { dt: 0.0, ..Default::default() },
            EvolveConfig { dt: -0.1, ..Default::default() },
            EvolveConfig { krylov_dim: 3, ..Default::default() },
            EvolveConfig { include_v_ext: true, ..Default::default() },
            EvolveConfig { exchange: "sparse".into(), ..Default::default() },
        ] {
            assert!(evolve(&s, &PotentialSpec::Zero, &bad).is_err());
        }
    }

    #[test]
    fn hartree_gap_vanishes_without_interaction() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let cfg = EvolveConfig { t_final: 0.1, dt: 1e-2, snapshot_times: vec![0.05], ..Default::default() };
        let pot = PotentialSpec::gaussian(2.0, 0.5).unwrap();
        let three = random_projection(&g, 3, 8);
        assert!(hartree_vs_hf_gap(&three, &PotentialSpec::Zero, &cfg).unwrap().iter().all(|(_, d)| *d < 1e-9));
        let gap = hartree_vs_hf_gap(&three, &pot, &cfg).unwrap();
        assert!(gap[0].1 < 1e-12);
        assert!(gap.last().unwrap().1 > 1e-8);
    }
}
