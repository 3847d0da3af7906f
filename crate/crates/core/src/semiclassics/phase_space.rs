//! Phase-space densities on a position × velocity grid and the Wigner
//! transform of orbital sets (one dimension).
//!
//! The transform is
//! `W(x,v) = (2π)^{-1} ∫_{|s| ≤ L/2} ω(x + s/2, x - s/2) e^{-ivs/ε} ds`,
//! with the displacement `s` restricted to its minimal periodic image. On the
//! torus the unrestricted integral would add a copy of the antipodal density
//! modulated by `(-1)^k` in velocity. Half-grid values come from exact
//! spectral interpolation of the orbitals, so the velocity spacing is
//! `πε/L` and `v_max = r·ε·π/h` for an interpolation factor `r`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, C64};
use crate::init::thomas_fermi::fermi_momentum_field;
use crate::orbitals::OrbitalSet;

/// `W(x,v)` sampled on `M` positions × `M_v` velocities
/// `v_k = -v_max + k Δv`, `Δv = 2 v_max / M_v`. Stored with `x` fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceDensity {
    #[serde(skip)]
    pub grid: Option<Grid>,
    pub points: usize,
    pub length: f64,
    pub velocity_points: usize,
    pub v_max: f64,
    pub t: f64,
    pub values: Vec<f64>,
}

impl PhaseSpaceDensity {
    pub fn new(grid: &Grid, velocity_points: usize, v_max: f64, values: Vec<f64>) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Unsupported("phase-space densities are implemented for d = 1 only".into()));
        }
        if velocity_points < 4 || velocity_points % 2 != 0 || !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need an even velocity count ≥ 4 and positive v_max, got {velocity_points} and {v_max}"
            )));
        }
        if values.len() != grid.len() * velocity_points {
            return Err(Error::GridMismatch(format!(
                "{} values for {} × {velocity_points} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: Some(grid.clone()),
            points: grid.points(),
            length: grid.length(),
            velocity_points,
            v_max,
            t: 0.0,
            values,
        })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: &Grid, velocity_points: usize, v_max: f64, f: F) -> Result<Self> {
        let dv = 2.0 * v_max / velocity_points as f64;
        let m = grid.points();
        let values = (0..velocity_points * m)
            .map(|i| f(grid.coordinate(i % m, 0), -v_max + (i / m) as f64 * dv))
            .collect();
        Self::new(grid, velocity_points, v_max, values)
    }

    pub fn grid(&self) -> Result<Grid> {
        match &self.grid {
            Some(g) => Ok(g.clone()),
            None => Grid::new(1, self.points, self.length),
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.velocity_points as f64
    }

    pub fn velocity(&self, k: usize) -> f64 {
        -self.v_max + k as f64 * self.dv()
    }

    pub fn at(&self, x: usize, k: usize) -> f64 {
        self.values[k * self.points + x]
    }

    /// `∫ W dx dv`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx() * self.dv()
    }

    /// `ρ(x) = ∫ W dv`.
    pub fn position_marginal(&self) -> Vec<f64> {
        let dv = self.dv();
        (0..self.points)
            .map(|x| (0..self.velocity_points).map(|k| self.at(x, k)).sum::<f64>() * dv)
            .collect()
    }

    /// `∫ W dx` on the velocity grid.
    pub fn velocity_marginal(&self) -> Vec<f64> {
        let dx = self.dx();
        self.values.chunks(self.points).map(|row| row.iter().sum::<f64>() * dx).collect()
    }

    pub fn same_layout(&self, other: &Self) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if self.points != other.points
            || self.velocity_points != other.velocity_points
            || !close(self.length, other.length)
            || !close(self.v_max, other.v_max)
        {
            return Err(Error::GridMismatch(format!(
                "phase-space grids differ: {}×{} (L={}, v_max={}) vs {}×{} (L={}, v_max={})",
                self.points,
                self.velocity_points,
                self.length,
                self.v_max,
                other.points,
                other.velocity_points,
                other.length,
                other.v_max
            )));
        }
        Ok(())
    }
}

/// Cell-weighted `∫ |W1 - W2| dx dv`.
pub fn phase_space_l1_distance(w1: &PhaseSpaceDensity, w2: &PhaseSpaceDensity) -> Result<f64> {
    w1.same_layout(w2)?;
    let sum: f64 = w1.values.iter().zip(&w2.values).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum * w1.dx() * w1.dv())
}

/// Window applied to the offset integral `|s| ≤ L/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WignerWindow {
    /// Sharp cut with half weights at the ends. Velocity marginals at the
    /// lattice momenta are exact, but `W` has `1/v` tails.
    #[default]
    Box,
    /// Equal to one for `|s| ≤ L/4` with a smooth roll-off to zero at `L/2`.
    /// Tails decay faster than any power of `v`, at the price of smoothing
    /// `W` in `v` over a few `Δv`; mass and the position marginal stay exact.
    Smooth,
}

impl WignerWindow {
    /// Weight at `|s| = fraction · L/2`.
    fn weight(self, fraction: f64) -> f64 {
        match self {
            Self::Box if fraction >= 1.0 => 0.5,
            Self::Box => 1.0,
            Self::Smooth => {
                let u = 2.0 * fraction - 1.0;
                if u <= 0.0 {
                    return 1.0;
                }
                if u >= 1.0 {
                    return 0.0;
                }
                let f = |t: f64| (-1.0 / t).exp();
                f(1.0 - u) / (f(1.0 - u) + f(u))
            }
        }
    }
}

/// Velocity grid of the Wigner transform: `M_v = 2qrM`, `v_max = rπεM/L`,
/// `Δv = πε/(qL)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WignerGrid {
    /// Spectral interpolation factor, a power of two.
    pub refinement: usize,
    #[serde(default)]
    pub window: WignerWindow,
    /// Zero-padding factor of the offset integral; refines `Δv` only.
    #[serde(default = "one")]
    pub oversampling: usize,
}

fn one() -> usize {
    1
}

impl WignerGrid {
    /// Box window, no oversampling.
    pub fn new(refinement: usize) -> Self {
        Self { refinement, window: WignerWindow::Box, oversampling: 1 }
    }

    pub fn v_max(&self, grid: &Grid, epsilon: f64) -> f64 {
        self.refinement as f64 * PI * epsilon * grid.points() as f64 / grid.length()
    }

    pub fn velocity_points(&self, grid: &Grid) -> usize {
        2 * self.oversampling * self.refinement * grid.points()
    }

    /// Smallest refinement with `v_max ≥ factor · max_x p_F(x)`.
    pub fn covering(state: &OrbitalSet, factor: f64) -> Result<Self> {
        let v_f = max_fermi_velocity(state)?;
        let base = Self::new(1).v_max(&state.grid, state.scale.epsilon);
        let mut refinement = 1;
        while (refinement as f64) * base < factor * v_f {
            refinement *= 2;
        }
        Ok(Self::new(refinement))
    }

    pub fn with_window(self, window: WignerWindow) -> Self {
        Self { window, ..self }
    }

    pub fn with_oversampling(self, oversampling: usize) -> Self {
        Self { oversampling, ..self }
    }
}

/// `max_x p_F(x)` of the local Fermi ball matching the state's density.
pub fn max_fermi_velocity(state: &OrbitalSet) -> Result<f64> {
    let pf = fermi_momentum_field(&state.density(), state.scale)?;
    Ok(pf.values.iter().copied().fold(0.0, f64::max))
}

/// Exact trigonometric interpolation of periodic samples onto a grid `factor`
/// times finer; the Nyquist coefficient is split evenly between `±M/2`.
fn refine(grid: &Grid, f: &[C64], factor: usize) -> Vec<C64> {
    let m = grid.points();
    let fine_len = m * factor;
    let mut coeffs = f.to_vec();
    grid.fft_forward(&mut coeffs);
    let mut fine = vec![C64::new(0.0, 0.0); fine_len];
    for k in 0..m {
        let signed = if k <= m / 2 { k as i64 } else { k as i64 - m as i64 };
        if k == m / 2 {
            fine[m / 2] += coeffs[k] * 0.5;
            fine[fine_len - m / 2] += coeffs[k] * 0.5;
        } else {
            fine[signed.rem_euclid(fine_len as i64) as usize] = coeffs[k];
        }
    }
    let fine_grid = Grid::new(1, fine_len, grid.length()).expect("refined grid is valid");
    fine_grid.fft_inverse(&mut fine);
    fine.iter_mut().for_each(|z| *z *= factor as f64);
    fine
}

/// Fraction of the orbitals' spectral power above two thirds of the Nyquist
/// momentum.
pub fn high_momentum_fraction(state: &OrbitalSet) -> f64 {
    let grid = &state.grid;
    let cutoff = (grid.points() / 3) as i64;
    let mut total = 0.0;
    let mut high = 0.0;
    for j in 0..state.n() {
        let mut f = state.orbital(j);
        grid.fft_forward(&mut f);
        for (i, z) in f.iter().enumerate() {
            let p = z.norm_sqr();
            total += p;
            if grid.wavevector(i)[..grid.dim()].iter().any(|k| k.abs() > cutoff) {
                high += p;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

/// Wigner transform of the projection onto `state` (d = 1).
///
/// The result is real, its position marginal equals `ρ` and its mass is 1,
/// both to rounding. A band-limited state has `W` supported in
/// `|v| ≤ ε p_Nyquist`, so the only resolution failure is a state whose
/// momenta crowd the Nyquist limit: more than `1e-6` of the spectral power
/// above two thirds of it is an error.
pub fn wigner_transform(state: &OrbitalSet, vgrid: WignerGrid) -> Result<PhaseSpaceDensity> {
    let grid = &state.grid;
    if grid.dim() != 1 {
        return Err(Error::Unsupported("the Wigner transform is implemented for d = 1 only".into()));
    }
    let high = high_momentum_fraction(state);
    if high > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "grid too coarse for the state: {high:.3e} of the spectral power lies above 2/3 of Nyquist"
        )));
    }
    let r = vgrid.refinement;
    if r == 0 || !r.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("refinement must be a power of two, got {r}")));
    }
    if vgrid.oversampling == 0 {
        return Err(Error::InvalidParameter("oversampling must be positive".into()));
    }
    let m = grid.points();
    let eps = state.scale.epsilon;
    let n = state.n();
    // interpolate by 2r so that x ± s/2 with s = m'h/r lands on grid points
    let fine_len = 2 * r * m;
    let fine: Vec<Vec<C64>> = (0..n).map(|j| refine(grid, &state.orbital(j), 2 * r)).collect();
    let mv = vgrid.velocity_points(grid);
    let half_window = (r * m / 2) as i64;
    let s_grid = Grid::new(1, mv, 1.0)?;
    let prefactor = grid.spacing() / (2.0 * PI * r as f64);
    let weights: Vec<f64> =
        (0..=half_window).map(|i| vgrid.window.weight(i as f64 / half_window as f64)).collect();

    let mut values = vec![0.0; m * mv];
    let mut g = vec![C64::new(0.0, 0.0); mv];
    let mut worst_imag: f64 = 0.0;
    for xj in 0..m {
        let centre = (2 * r * xj) as i64;
        g.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for mp in -half_window..=half_window {
            let plus = (centre + mp).rem_euclid(fine_len as i64) as usize;
            let minus = (centre - mp).rem_euclid(fine_len as i64) as usize;
            let weight = weights[mp.unsigned_abs() as usize];
            if weight == 0.0 {
                continue;
            }
            let acc: C64 = fine.iter().map(|u| u[plus] * u[minus].conj()).sum::<C64>() * weight;
            g[mp.rem_euclid(mv as i64) as usize] = acc;
        }
        s_grid.fft_forward(&mut g);
        // index k of the DFT is velocity (k - M_v/2)Δv after the shift
        for k in 0..mv {
            let z = g[(k + mv / 2) % mv] * prefactor;
            worst_imag = worst_imag.max(z.im.abs());
            values[k * m + xj] = z.re;
        }
    }
    let v_max = vgrid.v_max(grid, eps);
    let mut w = PhaseSpaceDensity::new(grid, mv, v_max, values)?;
    let scale = w.values.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if worst_imag > 1e-10 * scale.max(1.0) {
        return Err(Error::Format(format!("Wigner transform has imaginary residue {worst_imag:.3e}")));
    }
    w.t = 0.0;
    Ok(w)
}

/// Fraction of `∫|W|` carried by `|v| > 0.9 v_max`.
pub fn edge_fraction(w: &PhaseSpaceDensity) -> f64 {
    let mut total = 0.0;
    let mut edge = 0.0;
    for k in 0..w.velocity_points {
        let row: f64 = w.values[k * w.points..(k + 1) * w.points].iter().map(|v| v.abs()).sum();
        total += row;
        if w.velocity(k).abs() > 0.9 * w.v_max {
            edge += row;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        edge / total
    }
}
