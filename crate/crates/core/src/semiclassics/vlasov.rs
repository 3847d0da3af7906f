//! Semi-Lagrangian solver for `∂_t W + 2v ∂_x W - ∂_x U ∂_v W = 0`,
//! `U = V*ρ (+ V_ext)`, in one dimension.
//!
//! Strang splitting: half a step of transport in `x` at speed `2v`, a full
//! step in `v` with acceleration `-∂_x U` evaluated on the updated density,
//! another half step in `x`. Each sub-step shifts rows or columns by a
//! constant amount and interpolates with cubic splines: periodic in `x`,
//! zero inflow in `v`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{convolve_with_hat, PotentialSpec, SpatialField, C64};
use crate::semiclassics::phase_space::PhaseSpaceDensity;

/// Largest mass drift tolerated before the run is declared unstable.
pub const MASS_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VlasovConfig {
    pub t_final: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct VlasovTrajectory {
    /// Initial density, requested snapshots and the final density, in time order.
    pub frames: Vec<PhaseSpaceDensity>,
    pub steps: usize,
}

impl VlasovTrajectory {
    pub fn final_frame(&self) -> &PhaseSpaceDensity {
        self.frames.last().expect("trajectory has an initial frame")
    }

    pub fn frame_at(&self, t: f64) -> Option<&PhaseSpaceDensity> {
        self.frames.iter().find(|f| (f.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// Centred cubic B-spline.
fn bspline(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

/// Shifts lines of a fixed length by cubic-spline interpolation, applied as
/// a Fourier multiplier. Open lines are zero-padded on both sides so that
/// nothing flows in and outflow is discarded.
struct SplineShifter {
    len: usize,
    pad: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // 1 / (n · Σ_m B(m) e^{-iθm}) and e^{-iθ}
    prefilter: Vec<f64>,
    phases: Vec<C64>,
}

impl SplineShifter {
    fn periodic(len: usize) -> Self {
        Self::build(len, 0)
    }

    fn open(len: usize, max_shift: f64) -> Self {
        Self::build(len, max_shift.abs().ceil() as usize + 32)
    }

    fn build(len: usize, pad: usize) -> Self {
        let n = len + 2 * pad;
        let mut planner = FftPlanner::new();
        let phases: Vec<C64> = (0..n).map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)).collect();
        let prefilter =
            phases.iter().map(|p| 1.0 / (n as f64 * (2.0 / 3.0 + p.re / 3.0))).collect();
        Self { len, pad, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n), prefilter, phases }
    }

    /// `out[i] = in(i - shift)`, `shift` in cells.
    fn shift(&self, input: &[f64], shift: f64, out: &mut [f64]) {
        let n = self.phases.len();
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for (b, &v) in buf[self.pad..self.pad + self.len].iter_mut().zip(input) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        let first = shift.floor() as i64 - 1;
        let taps: Vec<(i64, f64)> = (first..first + 4).map(|m| (m, bspline(m as f64 - shift))).collect();
        for (k, b) in buf.iter_mut().enumerate() {
            let mut g = C64::new(0.0, 0.0);
            for &(m, wm) in &taps {
                g += self.phases[(k as i64 * m).rem_euclid(n as i64) as usize] * wm;
            }
            *b *= g * self.prefilter[k];
        }
        self.inverse.process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf[self.pad..self.pad + self.len]) {
            *o = b.re;
        }
    }
}

fn advect_x(w: &mut PhaseSpaceDensity, shifter: &SplineShifter, dt: f64) {
    let (m, dx, v_max, dv) = (w.points, w.dx(), w.v_max, w.dv());
    w.values.par_chunks_mut(m).enumerate().for_each(|(k, row)| {
        let v = -v_max + k as f64 * dv;
        let mut out = vec![0.0; m];
        shifter.shift(row, 2.0 * v * dt / dx, &mut out);
        row.copy_from_slice(&out);
    });
}

fn advect_v(w: &mut PhaseSpaceDensity, shifter: &SplineShifter, accel: &[f64], dt: f64) {
    let (m, mv, dv) = (w.points, w.velocity_points, w.dv());
    let values = &w.values;
    let columns: Vec<Vec<f64>> = accel
        .par_iter()
        .enumerate()
        .map(|(x, a)| {
            let column: Vec<f64> = (0..mv).map(|k| values[k * m + x]).collect();
            let mut out = vec![0.0; mv];
            shifter.shift(&column, a * dt / dv, &mut out);
            out
        })
        .collect();
    for (x, column) in columns.iter().enumerate() {
        for (k, v) in column.iter().enumerate() {
            w.values[k * m + x] = *v;
        }
    }
}

/// Evolves `w0` to `cfg.t_final` under the mean-field force of `potential`
/// (and `v_ext` when given).
pub fn evolve_vlasov(
    w0: &PhaseSpaceDensity,
    potential: &PotentialSpec,
    v_ext: Option<&SpatialField>,
    cfg: &VlasovConfig,
) -> Result<VlasovTrajectory> {
    if !(cfg.dt > 0.0) || !(cfg.t_final >= 0.0) || !cfg.t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("need dt > 0 and t_final ≥ 0, got {} and {}", cfg.dt, cfg.t_final)));
    }
    let grid = w0.grid()?;
    if let Some(v) = v_ext {
        grid.check_same(&v.grid)?;
    }
    let x_shift = w0.v_max * cfg.dt;
    if x_shift > 0.25 * w0.length {
        return Err(Error::Cfl(format!(
            "transport over one step ({x_shift:.3e}) exceeds a quarter of the box; reduce dt"
        )));
    }
    let vhat = if potential.is_zero() { None } else { Some(potential.transform_on(&grid)?) };
    let steps = {
        let r = cfg.t_final / cfg.dt;
        if (r - r.round()).abs() <= 1e-9 * r.max(1.0) { r.round() as usize } else { r.ceil() as usize }
    };
    let mut snap_steps: Vec<usize> =
        cfg.snapshot_times.iter().map(|&t| (t / cfg.dt).round().clamp(0.0, steps as f64) as usize).collect();
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let x_shifter = SplineShifter::periodic(w0.points);
    let v_shifter = SplineShifter::open(w0.velocity_points, 0.125 * w0.velocity_points as f64);
    let mass0 = w0.mass();
    let mut w = w0.clone();
    w.grid = Some(grid.clone());
    let mut frames = vec![w.clone()];
    let mut t = w0.t;
    for k in 1..=steps {
        let h = if k == steps { w0.t + cfg.t_final - t } else { cfg.dt };
        advect_x(&mut w, &x_shifter, 0.5 * h);
        let rho = w.position_marginal();
        let mut u: Vec<C64> = rho.iter().map(|&r| C64::new(r, 0.0)).collect();
        match &vhat {
            Some(vh) => convolve_with_hat(&grid, vh, &mut u),
            None => u.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0)),
        }
        if let Some(v) = v_ext {
            u.iter_mut().zip(&v.values).for_each(|(z, e)| *z += e);
        }
        let accel: Vec<f64> = grid.derivative(&u, 0).into_iter().map(|z| -z.re).collect();
        let max_shift = accel.iter().fold(0.0f64, |m, a| m.max(a.abs())) * h;
        if max_shift > 0.25 * w.v_max {
            return Err(Error::Cfl(format!("velocity shift {max_shift:.3e} exceeds a quarter of v_max at t = {t}")));
        }
        advect_v(&mut w, &v_shifter, &accel, h);
        advect_x(&mut w, &x_shifter, 0.5 * h);
        t += h;
        w.t = t;
        let mass = w.mass();
        if !mass.is_finite() || (mass - mass0).abs() > MASS_DRIFT_LIMIT * mass0.abs().max(1.0) {
            return Err(Error::Propagation {
                time: t,
                reason: format!("Vlasov mass drifted from {mass0} to {mass}"),
            });
        }
        if k == steps || snap_steps.binary_search(&k).is_ok() {
            frames.push(w.clone());
        }
    }
    Ok(VlasovTrajectory { frames, steps })
}
