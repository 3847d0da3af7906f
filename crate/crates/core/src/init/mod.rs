//! Semiclassical initial data.
//!
//! Each constructor is also exposed as an [`InitialStateBuilder`] so that
//! experiment configs can pick one by name (`free-sea`, `weyl`, `scf`).

pub mod energy;
pub mod free_sea;
pub mod scf;
pub mod thomas_fermi;
pub mod weyl;

pub use energy::{hf_energy, hf_energy_parts, EnergyParts};
pub use free_sea::{closed_shell_fillings, free_fermi_sea, is_closed_shell};
pub use scf::{scf_ground_state, ScfOptions, ScfResult};
pub use thomas_fermi::{fermi_momentum_field, thomas_fermi_density, tf_energy, TfOptions, TfResult};
pub use weyl::{weyl_projection, WeylResult};

pub use crate::orbitals::OrbitalSet;

use crate::error::{Error, Result};
use crate::grid::{Grid, PotentialSpec, ScaleParams, SpatialField};

/// Everything an initial-state constructor may need.
#[derive(Clone, Debug)]
pub struct InitProblem {
    pub grid: Grid,
    pub scale: ScaleParams,
    pub potential: PotentialSpec,
    pub v_ext: Option<SpatialField>,
    pub scf: ScfOptions,
    pub tf: TfOptions,
}

/// A named way of producing a Slater determinant's orbitals.
pub trait InitialStateBuilder: Send + Sync {
    fn name(&self) -> &'static str;

    fn build(&self, problem: &InitProblem) -> Result<OrbitalSet>;
}

pub struct FreeSeaBuilder;

impl InitialStateBuilder for FreeSeaBuilder {
    fn name(&self) -> &'static str {
        "free-sea"
    }

    fn build(&self, problem: &InitProblem) -> Result<OrbitalSet> {
        free_fermi_sea(&problem.grid, problem.scale)
    }
}

/// Thomas-Fermi density, Weyl-quantised and projected to rank `N`.
pub struct WeylBuilder;

impl InitialStateBuilder for WeylBuilder {
    fn name(&self) -> &'static str {
        "weyl"
    }

    fn build(&self, problem: &InitProblem) -> Result<OrbitalSet> {
        let v_ext = problem
            .v_ext
            .clone()
            .unwrap_or_else(|| SpatialField::constant(&problem.grid, 0.0));
        let tf = thomas_fermi_density(&v_ext, &problem.potential, problem.scale, problem.tf)?;
        Ok(weyl_projection(&tf.rho, problem.scale)?.orbitals)
    }
}

pub struct ScfBuilder;

impl InitialStateBuilder for ScfBuilder {
    fn name(&self) -> &'static str {
        "scf"
    }

    fn build(&self, problem: &InitProblem) -> Result<OrbitalSet> {
        let res = scf_ground_state(
            problem.v_ext.as_ref(),
            &problem.potential,
            &problem.grid,
            problem.scale,
            problem.scf,
        )?;
        Ok(res.orbitals)
    }
}

pub fn builders() -> Vec<Box<dyn InitialStateBuilder>> {
    vec![Box::new(FreeSeaBuilder), Box::new(WeylBuilder), Box::new(ScfBuilder)]
}

pub fn builder(name: &str) -> Result<Box<dyn InitialStateBuilder>> {
    builders().into_iter().find(|b| b.name() == name).ok_or_else(|| {
        let known: Vec<&str> = builders().iter().map(|b| b.name()).collect();
        Error::InvalidParameter(format!("unknown initial state '{name}', expected one of {known:?}"))
    })
}
