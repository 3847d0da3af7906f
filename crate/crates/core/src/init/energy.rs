use crate::error::Result;
use crate::grid::{convolve_with_hat, PotentialSpec, SpatialField, C64};
use crate::orbitals::OrbitalSet;

/// Hartree-Fock energy split into its pieces; `total = kinetic + external +
/// direct - exchange`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub external: f64,
    pub direct: f64,
    pub exchange: f64,
}

impl EnergyParts {
    pub fn interaction(&self) -> f64 {
        self.direct - self.exchange
    }

    pub fn total(&self) -> f64 {
        self.kinetic + self.external + self.interaction()
    }
}

/// Hartree-Fock energy of the Slater determinant built from `orbitals`.
pub fn hf_energy(orbitals: &OrbitalSet, v_ext: Option<&SpatialField>, potential: &PotentialSpec) -> Result<f64> {
    Ok(hf_energy_parts(orbitals, v_ext, potential)?.total())
}

pub fn hf_energy_parts(
    orbitals: &OrbitalSet,
    v_ext: Option<&SpatialField>,
    potential: &PotentialSpec,
) -> Result<EnergyParts> {
    let grid = &orbitals.grid;
    let w = grid.cell_volume();
    let eps = orbitals.scale.epsilon;
    let n = orbitals.n();

    let mut kinetic = 0.0;
    for j in 0..n {
        let f = orbitals.orbital(j);
        let tf = grid.kinetic(&f, eps);
        kinetic += w * f.iter().zip(&tf).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
    }

    let diag = orbitals.diagonal();
    let external = match v_ext {
        Some(v) => {
            grid.check_same(&v.grid)?;
            w * v.values.iter().zip(&diag).map(|(a, b)| a * b).sum::<f64>()
        }
        None => 0.0,
    };

    if potential.is_zero() {
        return Ok(EnergyParts { kinetic, external, direct: 0.0, exchange: 0.0 });
    }

    let vhat = potential.transform_on(grid)?;
    let scale = 1.0 / (2.0 * n as f64);

    let mut conv: Vec<C64> = diag.iter().map(|&v| C64::new(v, 0.0)).collect();
    convolve_with_hat(grid, &vhat, &mut conv);
    let direct = scale * w * diag.iter().zip(&conv).map(|(a, b)| a * b.re).sum::<f64>();

    let mut exchange = 0.0;
    let mut pair = vec![C64::new(0.0, 0.0); grid.len()];
    for i in 0..n {
        for j in i..n {
            for (x, p) in pair.iter_mut().enumerate() {
                *p = orbitals.orbitals[(x, i)] * orbitals.orbitals[(x, j)].conj();
            }
            let q = pair.clone();
            convolve_with_hat(grid, &vhat, &mut pair);
            let term: f64 = q.iter().zip(&pair).map(|(a, b)| (a * b.conj()).re).sum();
            exchange += if i == j { term } else { 2.0 * term };
        }
    }
    exchange *= scale * w;

    Ok(EnergyParts { kinetic, external, direct, exchange })
}
