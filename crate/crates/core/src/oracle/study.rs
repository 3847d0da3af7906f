//! Mean-field versus exact dynamics over a sweep of lattice sizes.
//!
//! Each `(M, N)` cell evolves the same Slater determinant with Hartree-Fock
//! and with the exact Hamiltonian and records distances at the requested
//! times. A cell is keyed by the SHA-256 of its canonical JSON, so an
//! interrupted sweep resumes from the finished cells.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, EvolveConfig};
use crate::error::{Error, Result};
use crate::grid::{cos_well, Grid, PotentialSpec, ScaleParams};
use crate::init::{builder, InitProblem, ScfOptions, TfOptions};
use crate::init::energy::hf_energy;
use crate::io;
use crate::oracle::basis::{check_basis_guard, FockBasis};
use crate::oracle::fluctuation::fluctuation_number;
use crate::oracle::hamiltonian::LatticeHamiltonian;
use crate::oracle::state::{krylov_propagate, one_particle_density, slater_to_fock, OracleKrylov};
use crate::semiclassics::{commutator_trace_norm, hs_distance, trace_distance, CommutatorKind};

/// Bump when the meaning of a cached cell changes.
const CELL_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub length: f64,
    pub sites: Vec<usize>,
    pub particles: Vec<usize>,
    pub potential: PotentialSpec,
    /// Initial-state builder: `free-sea`, `weyl` or `scf`.
    pub initial: String,
    /// Depth of the cosine well the initial state is prepared in; 0 for none.
    pub trap_depth: f64,
    /// Well kept during the evolution; `None` releases the trap.
    pub evolution_trap_depth: Option<f64>,
    pub times: Vec<f64>,
    /// Hartree-Fock step.
    pub dt: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            length: 2.0 * PI,
            sites: vec![12],
            particles: vec![3],
            potential: PotentialSpec::Zero,
            initial: "scf".into(),
            trap_depth: 1.0,
            evolution_trap_depth: None,
            times: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            dt: 1e-3,
            krylov_dim: 30,
            krylov_tol: 1e-12,
        }
    }
}

impl StudyConfig {
    /// `(M, N)` pairs of the sweep, `N ≤ M`, in order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &m in &self.sites {
            for &n in &self.particles {
                if n <= m {
                    out.push((m, n));
                }
            }
        }
        out
    }

    /// Problems that make the sweep pointless; per-cell guards are reported
    /// separately by [`StudyConfig::cell_violations`].
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidParameter(format!("length must be positive, got {}", self.length)));
        }
        if self.cells().is_empty() {
            return Err(Error::InvalidParameter("the sweep has no (M, N) cell with N ≤ M".into()));
        }
        if self.times.is_empty() || self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParameter("times must be a non-empty list of t ≥ 0".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("times must be strictly increasing".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.krylov_dim < 4 || !(self.krylov_tol > 0.0) {
            return Err(Error::InvalidParameter("Krylov dimension ≥ 4 and positive tolerance required".into()));
        }
        builder(&self.initial)?;
        Ok(())
    }

    /// Basis-guard and lattice violations, one message per offending cell.
    pub fn cell_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (m, n) in self.cells() {
            if let Err(e) = check_basis_guard(m, n) {
                out.push(format!("cell M={m} N={n}: {e}"));
            }
            if m % 2 != 0 {
                out.push(format!("cell M={m} N={n}: lattice needs an even number of sites"));
            }
        }
        out
    }
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: f64,
    pub t: f64,
    pub dt: f64,
    pub hs_dist: f64,
    pub trace_dist: f64,
    pub fluct_number: f64,
    pub comm_x_ratio: f64,
    pub energy_mf: f64,
    pub energy_exact: f64,
    pub cell_status: String,
    /// `2 tr γ(1-ω) - ‖γ-ω‖²_HS`.
    pub hs_bd_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub rows: Vec<ResultRow>,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        self.rows.iter().all(|r| r.cell_status == "ok")
    }
}

#[derive(Serialize)]
struct CellSpec<'a> {
    schema: u32,
    version: &'a str,
    m: usize,
    n: usize,
    config: &'a StudyConfig,
}

/// Hash of the canonical JSON of a cell: every input that changes its rows.
pub fn cell_key(cfg: &StudyConfig, m: usize, n: usize) -> String {
    let mut cfg = cfg.clone();
    // other cells of the sweep do not affect this one
    cfg.sites = vec![m];
    cfg.particles = vec![n];
    let spec = CellSpec { schema: CELL_SCHEMA, version: env!("CARGO_PKG_VERSION"), m, n, config: &cfg };
    io::sha256_hex(&serde_json::to_vec(&spec).expect("config serialises"))
}

fn failed_rows(cfg: &StudyConfig, m: usize, n: usize, reason: &str) -> Vec<ResultRow> {
    let nan = f64::NAN;
    cfg.times
        .iter()
        .map(|&t| ResultRow {
            d: 1,
            m,
            n,
            epsilon: 1.0 / n as f64,
            t,
            dt: cfg.dt,
            hs_dist: nan,
            trace_dist: nan,
            fluct_number: nan,
            comm_x_ratio: nan,
            energy_mf: nan,
            energy_exact: nan,
            cell_status: format!("failed: {reason}"),
            hs_bd_slack: nan,
        })
        .collect()
}

/// Runs one cell; errors become `failed: …` rows.
pub fn run_cell(cfg: &StudyConfig, m: usize, n: usize) -> CellResult {
    let key = cell_key(cfg, m, n);
    let rows = match compute_cell(cfg, m, n) {
        Ok(rows) => rows,
        Err(e) => {
            log::warn!("cell M={m} N={n} failed: {e}");
            failed_rows(cfg, m, n, &e.to_string())
        }
    };
    CellResult { key, m, n, rows }
}

fn compute_cell(cfg: &StudyConfig, m: usize, n: usize) -> Result<Vec<ResultRow>> {
    check_basis_guard(m, n)?;
    let grid = Grid::lattice(m, cfg.length)?;
    let scale = ScaleParams::new(n, 1)?;
    let trap = (cfg.trap_depth != 0.0).then(|| cos_well(&grid, cfg.trap_depth));
    let problem = InitProblem {
        grid: grid.clone(),
        scale,
        potential: cfg.potential.clone(),
        v_ext: trap,
        scf: ScfOptions::default(),
        tf: TfOptions::default(),
    };
    let initial = builder(&cfg.initial)?.build(&problem)?;
    let v_evo = cfg.evolution_trap_depth.map(|d| cos_well(&grid, d));

    let t_max = cfg.times.last().copied().unwrap_or(0.0);
    let trajectory = if t_max > 0.0 {
        let evo = EvolveConfig {
            t_final: t_max,
            dt: cfg.dt.min(t_max),
            include_v_ext: v_evo.is_some(),
            v_ext: v_evo.clone(),
            krylov_dim: 12,
            krylov_tol: 1e-12,
            snapshot_times: cfg.times.clone(),
            diagnostics_every: usize::MAX,
            commutator_diagnostics: false,
            ..Default::default()
        };
        let traj = evolve(&initial, &cfg.potential, &evo)?;
        if !traj.is_complete() {
            let time = traj.snapshots.last().map_or(0.0, |s| s.t);
            return Err(Error::Propagation { time, reason: "Hartree-Fock run aborted".into() });
        }
        Some(traj)
    } else {
        None
    };

    let basis = Arc::new(FockBasis::new(m, n)?);
    let h = LatticeHamiltonian::new(&grid, &cfg.potential, scale, basis.clone(), v_evo.as_ref())?;
    let krylov = OracleKrylov { dim: cfg.krylov_dim, tol: cfg.krylov_tol };
    let mut psi = slater_to_fock(&initial, basis)?;
    let mut t_now = 0.0;
    let mut rows = Vec::with_capacity(cfg.times.len());
    for &t in &cfg.times {
        if t > t_now {
            psi = krylov_propagate(&h, &psi, t - t_now, krylov)?;
            t_now = t;
        }
        let omega_state = if t == 0.0 {
            &initial
        } else {
            let traj = trajectory.as_ref().expect("trajectory exists for t > 0");
            &traj
                .snapshot_at(t)
                .ok_or_else(|| Error::Propagation { time: t, reason: "missing Hartree-Fock snapshot".into() })?
                .state
        };
        let omega = omega_state.kernel();
        let gamma = one_particle_density(&psi, &grid)?;
        let report = fluctuation_number(&gamma, &omega)?;
        rows.push(ResultRow {
            d: 1,
            m,
            n,
            epsilon: scale.epsilon,
            t,
            dt: cfg.dt,
            hs_dist: hs_distance(&gamma, &omega)?,
            trace_dist: trace_distance(&gamma, &omega)?,
            fluct_number: report.fluctuation_number,
            comm_x_ratio: commutator_trace_norm(omega_state, CommutatorKind::Position(0))? / scale.n_epsilon(),
            energy_mf: hf_energy(omega_state, v_evo.as_ref(), &cfg.potential)?,
            energy_exact: h.energy(&psi.amplitudes),
            cell_status: "ok".into(),
            hs_bd_slack: report.slack,
        });
    }
    Ok(rows)
}

/// Outcome of a sweep.
#[derive(Clone, Debug)]
pub struct StudyOutput {
    pub cells: Vec<CellResult>,
    /// Cells loaded from an earlier run instead of recomputed.
    pub reused: usize,
}

impl StudyOutput {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells.iter().flat_map(|c| c.rows.iter().cloned()).collect()
    }
}

/// Runs every cell, `jobs` at a time. With `out_dir`, finished cells are
/// cached under `cells/<key>.json` and reused on the next call, and
/// `results.csv` plus `manifest.json` are written.
pub fn convergence_study(cfg: &StudyConfig, out_dir: Option<&Path>, jobs: usize) -> Result<StudyOutput> {
    use rayon::prelude::*;

    cfg.validate()?;
    let cells = cfg.cells();
    let cached: Vec<Option<CellResult>> = cells
        .iter()
        .map(|&(m, n)| {
            let dir = out_dir?;
            let path = dir.join("cells").join(format!("{}.json", cell_key(cfg, m, n)));
            io::read_json::<CellResult>(&path).ok().filter(|c| c.is_ok())
        })
        .collect();
    let reused = cached.iter().filter(|c| c.is_some()).count();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<Result<CellResult>> = pool.install(|| {
        cells
            .par_iter()
            .zip(cached.into_par_iter())
            .map(|(&(m, n), cached)| {
                if let Some(c) = cached {
                    return Ok(c);
                }
                let cell = run_cell(cfg, m, n);
                if let Some(dir) = out_dir {
                    io::write_json(&dir.join("cells").join(format!("{}.json", cell.key)), &cell)?;
                }
                Ok(cell)
            })
            .collect()
    });
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    let out = StudyOutput { cells, reused };
    if let Some(dir) = out_dir {
        io::write_results_csv(&dir.join("results.csv"), &out.rows())?;
        let config = serde_json::to_value(cfg)?;
        let manifest = io::Manifest {
            tool: "fml".into(),
            version: io::version_string(),
            experiment: "oracle-compare".into(),
            config_hash: io::sha256_hex(&serde_json::to_vec(&config)?),
            config,
            artifacts: std::iter::once("results.csv".to_string())
                .chain(out.cells.iter().map(|c| format!("cells/{}.json", c.key)))
                .collect(),
            status: if out.cells.iter().all(CellResult::is_ok) { "ok".into() } else { "partial".into() },
        };
        io::write_json(&dir.join(io::Manifest::FILE), &manifest)?;
    }
    Ok(out)
}
