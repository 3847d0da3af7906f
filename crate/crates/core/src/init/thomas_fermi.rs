//! Thomas-Fermi density with a unit-mass constraint.
//!
//! With `ε^d N = 1` the phase-space filling gives `ρ = v_d p_F^d / (2π)^d`, so
//! the kinetic energy density is `K_d ρ^{1+2/d}` with
//! `K_d = d/(d+2) · ((2π)^d / v_d)^{2/d}` and the Euler-Lagrange equation reads
//! `p_F(x)² = μ - V_ext(x) - (V*ρ)(x)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{convolve_periodic, PotentialSpec, ScaleParams, SpatialField};

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("dimension {dim} not supported"),
    }
}

/// Kinetic coefficient `K_d` of the Thomas-Fermi functional.
pub fn kinetic_coefficient(dim: usize) -> f64 {
    let d = dim as f64;
    d / (d + 2.0) * ((2.0 * PI).powi(dim as i32) / unit_ball_volume(dim)).powf(2.0 / d)
}

/// `ρ = c_d (μ - U)_+^{d/2}` with `c_d = v_d / (2π)^d`.
pub fn density_coefficient(dim: usize) -> f64 {
    unit_ball_volume(dim) / (2.0 * PI).powi(dim as i32)
}

/// Local Fermi momentum `p_F(x) = ((2π)^d ρ(x) / v_d)^{1/d}`.
pub fn fermi_momentum_field(rho: &SpatialField, scale: ScaleParams) -> Result<SpatialField> {
    let d = scale.dim;
    if d != rho.grid.dim() {
        return Err(Error::InvalidParameter("scale and grid dimension differ".into()));
    }
    let c = (2.0 * PI).powi(d as i32) / unit_ball_volume(d);
    let mut values = Vec::with_capacity(rho.values.len());
    for (i, &r) in rho.values.iter().enumerate() {
        if r < -1e-12 {
            return Err(Error::NegativeDensity { index: i, value: r });
        }
        values.push((c * r.max(0.0)).powf(1.0 / d as f64));
    }
    SpatialField::new(&rho.grid, values)
}

/// `E_TF(ρ) = K_d ∫ρ^{1+2/d} + ∫V_ext ρ + ½∬V(x-y)ρ(x)ρ(y)`.
pub fn tf_energy(rho: &SpatialField, v_ext: &SpatialField, potential: &PotentialSpec) -> Result<f64> {
    let grid = &rho.grid;
    grid.check_same(&v_ext.grid)?;
    let d = grid.dim();
    let w = grid.cell_volume();
    let expo = 1.0 + 2.0 / d as f64;
    let kinetic = kinetic_coefficient(d) * w * rho.values.iter().map(|r| r.max(0.0).powf(expo)).sum::<f64>();
    let external = w * rho.values.iter().zip(&v_ext.values).map(|(r, v)| r * v).sum::<f64>();
    let interaction = if potential.is_zero() {
        0.0
    } else {
        let conv = convolve_periodic(&potential.samples(grid)?, rho)?;
        0.5 * w * rho.values.iter().zip(&conv.values).map(|(r, u)| r * u).sum::<f64>()
    };
    Ok(kinetic + external + interaction)
}

#[derive(Clone, Debug)]
pub struct TfResult {
    pub rho: SpatialField,
    pub mu: f64,
    pub iterations: usize,
    /// Sup-norm of the last fixed-point update.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct TfOptions {
    pub tol: f64,
    pub mixing: f64,
    pub max_iter: usize,
}

impl Default for TfOptions {
    fn default() -> Self {
        Self { tol: 1e-10, mixing: 0.5, max_iter: 500 }
    }
}

/// Normalised `c_d (μ - U)_+^{d/2}` for the `μ` that gives unit mass.
pub(crate) fn fill_to_unit_mass(u: &[f64], grid_weight: f64, dim: usize) -> Result<(f64, Vec<f64>)> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoBracket("effective potential is not finite".into()));
    }
    let c = density_coefficient(dim);
    let half_d = dim as f64 / 2.0;
    let mass = |mu: f64| -> f64 {
        grid_weight * u.iter().map(|&v| c * (mu - v).max(0.0).powf(half_d)).sum::<f64>()
    };
    let lo0 = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = lo0;
    let mut step = 1.0;
    let mut hi = lo + step;
    let mut tries = 0;
    while mass(hi) < 1.0 {
        lo = hi;
        step *= 2.0;
        hi = lo0 + step;
        tries += 1;
        if tries > 200 || !hi.is_finite() {
            return Err(Error::NoBracket(format!("mass stays below 1 up to μ = {hi}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut rho: Vec<f64> = u.iter().map(|&v| c * (mu - v).max(0.0).powf(half_d)).collect();
    let total = grid_weight * rho.iter().sum::<f64>();
    rho.iter_mut().for_each(|r| *r /= total);
    Ok((mu, rho))
}

/// Damped fixed point of `ρ = c_d (μ - V_ext - V*ρ)_+^{d/2}` with `μ` chosen by
/// bisection so that `∫ρ = 1`.
pub fn thomas_fermi_density(
    v_ext: &SpatialField,
    potential: &PotentialSpec,
    scale: ScaleParams,
    opts: TfOptions,
) -> Result<TfResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::InvalidParameter(format!("mixing must lie in (0, 1], got {}", opts.mixing)));
    }
    let grid = &v_ext.grid;
    if scale.dim != grid.dim() {
        return Err(Error::InvalidParameter("scale and grid dimension differ".into()));
    }
    let w = grid.cell_volume();
    let vsamples = if potential.is_zero() { None } else { Some(potential.samples(grid)?) };
    let mut rho = SpatialField::constant(grid, 1.0 / grid.volume());
    let mut mu = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let u: Vec<f64> = match &vsamples {
            Some(v) => {
                let hartree = convolve_periodic(v, &rho)?;
                v_ext.values.iter().zip(&hartree.values).map(|(a, b)| a + b).collect()
            }
            None => v_ext.values.clone(),
        };
        let (m, fresh) = fill_to_unit_mass(&u, w, grid.dim())?;
        mu = m;
        residual = rho.values.iter().zip(&fresh).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()));
        if residual <= opts.tol {
            rho.values = fresh;
            break;
        }
        let a = opts.mixing;
        for (r, f) in rho.values.iter_mut().zip(&fresh) {
            *r = (1.0 - a) * *r + a * f;
        }
    }
    let converged = residual <= opts.tol;
    if !converged {
        log::warn!("Thomas-Fermi iteration stopped after {iterations} steps, residual {residual:.3e}");
    }
    Ok(TfResult { rho, mu, iterations, residual, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{cos_well, Grid};

    #[test]
    fn three_dimensional_coefficients() {
        // spinless filling, consistent with p_F = (6π²ρ)^{1/3}
        let k3 = kinetic_coefficient(3);
        assert!((k3 - 0.6 * (6.0 * PI * PI).powf(2.0 / 3.0)).abs() < 1e-12);
        assert!((density_coefficient(1) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn fermi_momentum_examples() {
        let g3 = Grid::new(3, 4, 2.0 * PI).unwrap();
        let rho = SpatialField::constant(&g3, 0.7);
        let pf = fermi_momentum_field(&rho, ScaleParams::new(8, 3).unwrap()).unwrap();
        let expect = (6.0 * PI * PI * 0.7f64).powf(1.0 / 3.0);
        assert!(pf.values.iter().all(|p| (p - expect).abs() < 1e-12));

        let g1 = Grid::new(1, 8, 2.0 * PI).unwrap();
        let zero = SpatialField::constant(&g1, 0.0);
        let s1 = ScaleParams::new(4, 1).unwrap();
        assert!(fermi_momentum_field(&zero, s1).unwrap().values.iter().all(|&p| p == 0.0));
        let pf1 = fermi_momentum_field(&SpatialField::constant(&g1, 0.3), s1).unwrap();
        assert!(pf1.values.iter().all(|p| (p - PI * 0.3).abs() < 1e-14));

        let mut neg = SpatialField::constant(&g1, 0.1);
        neg.values[2] = -0.1;
        assert!(matches!(fermi_momentum_field(&neg, s1), Err(Error::NegativeDensity { index: 2, .. })));
    }

    #[test]
    fn uniform_without_potentials() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let v_ext = SpatialField::constant(&g, 0.0);
        let res = thomas_fermi_density(&v_ext, &PotentialSpec::Zero, ScaleParams::new(8, 1).unwrap(), TfOptions::default())
            .unwrap();
        assert!(res.converged);
        assert!(res.residual < 1e-14);
        let expect = 1.0 / g.volume();
        assert!(res.rho.values.iter().all(|r| (r - expect).abs() < 1e-14));
    }

    #[test]
    fn cos_well_matches_scalar_root_find() {
        let g = Grid::new(1, 128, 2.0 * PI).unwrap();
        let v_ext = cos_well(&g, 8.0);
        let res = thomas_fermi_density(&v_ext, &PotentialSpec::Zero, ScaleParams::new(16, 1).unwrap(), TfOptions::default())
            .unwrap();
        // independent root find: secant on the mass function
        let h = g.spacing();
        let mass = |mu: f64| -> f64 {
            v_ext.values.iter().map(|&v| h * (mu - v).max(0.0).sqrt() / PI).sum::<f64>() - 1.0
        };
        let (mut a, mut b) = (1.0, 6.0);
        for _ in 0..100 {
            let (fa, fb) = (mass(a), mass(b));
            if (fb - fa).abs() < 1e-300 {
                break;
            }
            let c = b - fb * (b - a) / (fb - fa);
            a = b;
            b = c;
        }
        assert!((res.mu - b).abs() < 1e-8 * b.abs());
        for (r, v) in res.rho.values.iter().zip(&v_ext.values) {
            let expect = (b - v).max(0.0).sqrt() / PI;
            assert!((r - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn interacting_minimiser_beats_perturbations() {
        use rand::{Rng, SeedableRng};
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let v_ext = cos_well(&g, 4.0);
        let pot = PotentialSpec::gaussian(2.0, 0.5).unwrap();
        let opts = TfOptions { tol: 1e-13, ..TfOptions::default() };
        let res = thomas_fermi_density(&v_ext, &pot, ScaleParams::new(16, 1).unwrap(), opts).unwrap();
        assert!(res.converged);
        assert!((res.rho.integral() - 1.0).abs() < 1e-8);
        let e0 = tf_energy(&res.rho, &v_ext, &pot).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut p = res.rho.clone();
            for v in p.values.iter_mut() {
                *v = (*v + 0.02 * (rng.gen::<f64>() - 0.5)).max(0.0);
            }
            let total = p.integral();
            p.values.iter_mut().for_each(|v| *v /= total);
            assert!(tf_energy(&p, &v_ext, &pot).unwrap() >= e0);
        }
    }

    #[test]
    fn non_finite_potential_has_no_bracket() {
        let g = Grid::new(1, 8, 2.0 * PI).unwrap();
        let mut v_ext = SpatialField::constant(&g, 0.0);
        v_ext.values[0] = f64::NEG_INFINITY;
        let err = thomas_fermi_density(&v_ext, &PotentialSpec::Zero, ScaleParams::new(2, 1).unwrap(), TfOptions::default());
        assert!(matches!(err, Err(Error::NoBracket(_))));
    }
}
