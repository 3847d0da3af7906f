//! Experiments the runner knows, looked up by name.

use std::path::Path;

use fml_core::dynamics::{evolve, exchange_commutator_hs, AutoExchange, DiagnosticRecord, EvolveConfig, TrajectoryStatus};
use fml_core::grid::cos_well;
use fml_core::init::{builder, hf_energy, hf_energy_parts, is_closed_shell, InitProblem, ScfOptions, TfOptions};
use fml_core::io::{self, fmt_f64, OrbitalSidecar, VlasovComparisonRow};
use fml_core::oracle::{binomial, convergence_study};
use fml_core::semiclassics::{
    commutator_report, commutator_trace_norm, evolve_vlasov, high_momentum_fraction, phase_space_l1_distance,
    trace_norm_method, wigner_transform, CommutatorKind, VlasovConfig, WignerGrid, DENSE_POINT_LIMIT,
};
use fml_core::{Grid, OrbitalSet, PotentialSpec, ScaleParams, SpatialField};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};

/// Krylov substeps allowed per propagation step before the solver gives up.
const KRYLOV_SUBSTEP_LIMIT: f64 = 4096.0;

/// Spectral power above 2/3 of Nyquist that marks a state as under-resolved.
const RESOLUTION_LIMIT: f64 = 1e-6;

pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    /// Directory relative paths in the config are resolved against.
    pub base: &'a Path,
    pub out_dir: &'a Path,
    pub jobs: usize,
}

/// A numerical failure after the run started, with whatever was written.
#[derive(Debug)]
pub struct Failure {
    pub message: String,
    pub artifacts: Vec<String>,
}

impl Failure {
    fn with(message: impl Into<String>, artifacts: Vec<String>) -> Self {
        Self { message: message.into(), artifacts }
    }
}

impl From<fml_core::Error> for Failure {
    fn from(e: fml_core::Error) -> Self {
        Self::with(e.to_string(), Vec::new())
    }
}

/// Outcome of checking a config without running it.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Check {
    pub violations: Vec<String>,
    pub memory_bytes: u64,
    pub cells: usize,
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    /// Guard violations and resource estimates.
    fn check(&self, cfg: &RunConfig, base: &Path) -> Check;

    /// Runs the experiment and returns the artifact paths it wrote, relative
    /// to the output directory.
    fn run(&self, ctx: &RunContext<'_>) -> Result<Vec<String>, Failure>;
}

pub fn experiments() -> Vec<Box<dyn Experiment>> {
    vec![
        Box::new(Init),
        Box::new(Evolve { exchange: true }),
        Box::new(Evolve { exchange: false }),
        Box::new(VlasovCompare),
        Box::new(OracleCompare),
        Box::new(SemiclassicalSweep),
        Box::new(Diagnostics),
    ]
}

pub fn experiment(name: &str) -> Result<Box<dyn Experiment>, ConfigError> {
    experiments().into_iter().find(|e| e.name() == name).ok_or_else(|| {
        let known: Vec<&str> = experiments().iter().map(|e| e.name()).collect();
        ConfigError(format!("schema error: unknown experiment '{name}', expected one of {known:?}"))
    })
}

fn potential_violations(potential: &PotentialSpec, out: &mut Vec<String>) {
    if let PotentialSpec::Gaussian { amplitude, width } = potential {
        if let Err(e) = PotentialSpec::gaussian(*amplitude, *width) {
            out.push(e.to_string());
        }
    }
}

/// Checks shared by every experiment that builds a state on `grid.*`.
fn state_violations(cfg: &RunConfig, base: &Path, out: &mut Vec<String>) -> Option<(Grid, ScaleParams)> {
    potential_violations(&cfg.potential, out);
    if !cfg.init.trap_depth.is_finite() {
        out.push(format!("init.trap_depth must be finite, got {}", cfg.init.trap_depth));
    }
    if let Some(path) = cfg.input_path(base) {
        let (bin, json) = io::array_paths(&path);
        if !bin.exists() || !json.exists() {
            out.push(format!("input file {} does not exist", path.display()));
        } else {
            match io::read_json::<OrbitalSidecar>(&json) {
                Ok(meta) if (meta.d, meta.m, meta.n) != (cfg.grid.d, cfg.grid.m, cfg.scale.n)
                    || (meta.l - cfg.grid.l).abs() > 1e-12 * cfg.grid.l =>
                {
                    out.push(format!(
                        "input file {} holds d={} M={} L={} N={}, config asks for d={} M={} L={} N={}",
                        path.display(),
                        meta.d,
                        meta.m,
                        meta.l,
                        meta.n,
                        cfg.grid.d,
                        cfg.grid.m,
                        cfg.grid.l,
                        cfg.scale.n
                    ))
                }
                Ok(_) => {}
                Err(e) => out.push(format!("input file {}: {e}", path.display())),
            }
        }
    } else if let Err(e) = builder(&cfg.init.builder) {
        out.push(e.to_string());
    }
    let grid = match Grid::from_params(cfg.grid.d, cfg.grid.m, cfg.grid.l) {
        Ok(g) => g,
        Err(e) => {
            out.push(e.to_string());
            return None;
        }
    };
    let scale = match ScaleParams::new(cfg.scale.n, cfg.grid.d) {
        Ok(s) => s,
        Err(e) => {
            out.push(e.to_string());
            return None;
        }
    };
    if scale.n > grid.len() {
        out.push(format!("cannot fill N = {} orbitals on {} grid points", scale.n, grid.len()));
        return None;
    }
    if let Err(e) = cfg.potential.samples(&grid) {
        out.push(e.to_string());
    }
    Some((grid, scale))
}

fn trap(grid: &Grid, depth: f64) -> Option<SpatialField> {
    (depth != 0.0).then(|| cos_well(grid, depth))
}

/// The initial orbitals: read from `init.input` or built on the config grid.
fn initial_state(cfg: &RunConfig, base: &Path, grid: &Grid, scale: ScaleParams) -> fml_core::Result<OrbitalSet> {
    if let Some(path) = cfg.input_path(base) {
        return Ok(io::read_orbitals(&path)?.0);
    }
    let problem = InitProblem {
        grid: grid.clone(),
        scale,
        potential: cfg.potential.clone(),
        v_ext: trap(grid, cfg.init.trap_depth),
        scf: ScfOptions::default(),
        tf: TfOptions::default(),
    };
    builder(&cfg.init.builder)?.build(&problem)
}

fn setup(cfg: &RunConfig, base: &Path) -> fml_core::Result<(Grid, ScaleParams, OrbitalSet)> {
    let grid = Grid::from_params(cfg.grid.d, cfg.grid.m, cfg.grid.l)?;
    let scale = ScaleParams::new(cfg.scale.n, cfg.grid.d)?;
    let state = initial_state(cfg, base, &grid, scale)?;
    Ok((grid, scale, state))
}

fn evolve_config(cfg: &RunConfig, grid: &Grid, exchange_on: bool) -> EvolveConfig {
    let e = &cfg.evolve;
    let v_ext = e.trap_depth.map(|d| cos_well(grid, d));
    EvolveConfig {
        t_final: e.t_final,
        dt: e.dt,
        exchange_on,
        include_v_ext: v_ext.is_some(),
        v_ext,
        krylov_dim: e.krylov_dim,
        krylov_tol: e.krylov_tol,
        corrections: e.corrections,
        exchange: e.exchange.clone(),
        snapshot_times: e.snapshot_times.clone(),
        diagnostics_every: e.diagnostics_every,
        commutator_diagnostics: e.commutator_diagnostics,
    }
}

/// Validity, step-size and exchange-memory checks of the `evolve` section.
fn evolve_violations(cfg: &RunConfig, grid: &Grid, scale: ScaleParams, out: &mut Vec<String>) -> u64 {
    let ecfg = evolve_config(cfg, grid, true);
    if let Err(e) = ecfg.validate() {
        out.push(e.to_string());
    }
    // spectral radius of the kinetic generator over one step, ε |k_max|² dt
    let k_max = std::f64::consts::PI * grid.points() as f64 / grid.length();
    let phase = scale.epsilon * k_max * k_max * grid.dim() as f64 * ecfg.dt.abs();
    if phase > KRYLOV_SUBSTEP_LIMIT * ecfg.krylov_dim as f64 {
        out.push(format!(
            "CFL: kinetic phase {phase:.3e} per step needs more than {KRYLOV_SUBSTEP_LIMIT} Krylov substeps; reduce evolve.dt"
        ));
    }
    let points = grid.len();
    let dense = match cfg.evolve.exchange.as_str() {
        "dense" => true,
        "auto" => AutoExchange::prefers_dense(grid, scale.n),
        _ => false,
    };
    if dense && points > DENSE_POINT_LIMIT {
        out.push(format!("dense-SVD guard: dense exchange needs M^d ≤ {DENSE_POINT_LIMIT}, grid has {points}"));
    }
    let frames = (cfg.evolve.snapshot_times.len() + 8) as u64;
    let orbitals = 16 * (points * scale.n) as u64 * frames;
    orbitals + if dense { 24 * (points * points) as u64 } else { 0 }
}

/// Diagnostics of a state at time `t` without running the propagator.
fn diagnostic_record(
    state: &OrbitalSet,
    t: f64,
    v_ext: Option<&SpatialField>,
    potential: &PotentialSpec,
) -> fml_core::Result<DiagnosticRecord> {
    let comm_x = (0..state.grid.dim())
        .map(|a| commutator_trace_norm(state, CommutatorKind::Position(a)))
        .collect::<fml_core::Result<Vec<_>>>()?;
    Ok(DiagnosticRecord {
        t,
        energy: hf_energy(state, v_ext, potential)?,
        trace: state.trace(),
        orthonormality_defect: state.orthonormality_defect(),
        projection_defect: state.projection_defect(),
        comm_x,
        exch_comm_hs: Some(exchange_commutator_hs(state, potential)?),
    })
}

fn orbital_bytes(cfg: &RunConfig) -> u64 {
    16 * (cfg.grid.m as u64).saturating_pow(cfg.grid.d as u32) * cfg.scale.n as u64
}

/// Builds an initial state and stores it with its diagnostics.
struct Init;

impl Experiment for Init {
    fn name(&self) -> &'static str {
        "init"
    }

    fn describe(&self) -> &'static str {
        "build an initial state; writes state.{bin,json} and results.csv"
    }

    fn check(&self, cfg: &RunConfig, base: &Path) -> Check {
        let mut violations = Vec::new();
        state_violations(cfg, base, &mut violations);
        Check { violations, memory_bytes: 8 * orbital_bytes(cfg), cells: 1 }
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<Vec<String>, Failure> {
        let cfg = ctx.config;
        let (grid, _, state) = setup(cfg, ctx.base)?;
        let params = json!({ "builder": cfg.init.builder, "trap_depth": cfg.init.trap_depth });
        io::write_orbitals(&ctx.out_dir.join("state"), &state, "init", params)?;
        let mut artifacts = vec!["state.bin".to_string(), "state.json".to_string()];
        let v_ext = trap(&grid, cfg.init.trap_depth);
        let record = diagnostic_record(&state, 0.0, v_ext.as_ref(), &cfg.potential)
            .map_err(|e| Failure::with(e.to_string(), artifacts.clone()))?;
        io::write_trajectory_csv(&ctx.out_dir.join("results.csv"), grid.dim(), &[record])
            .map_err(|e| Failure::with(e.to_string(), artifacts.clone()))?;
        artifacts.push("results.csv".into());
        Ok(artifacts)
    }
}

/// Hartree-Fock, or with `exchange = false` fermionic Hartree, propagation.
struct Evolve {
    exchange: bool,
}

impl Experiment for Evolve {
    fn name(&self) -> &'static str {
        if self.exchange {
            "evolve-hf"
        } else {
            "evolve-hartree"
        }
    }

    fn describe(&self) -> &'static str {
        if self.exchange {
            "time-dependent Hartree-Fock; writes results.csv, snapshots/ and final.{bin,json}"
        } else {
            "fermionic Hartree (no exchange); writes results.csv, snapshots/ and final.{bin,json}"
        }
    }

    fn check(&self, cfg: &RunConfig, base: &Path) -> Check {
        let mut violations = Vec::new();
        let memory_bytes = match state_violations(cfg, base, &mut violations) {
            Some((grid, scale)) => evolve_violations(cfg, &grid, scale, &mut violations),
            None => 0,
        };
        Check { violations, memory_bytes, cells: 1 }
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<Vec<String>, Failure> {
        let cfg = ctx.config;
        let (grid, _, state) = setup(cfg, ctx.base)?;
        let ecfg = evolve_config(cfg, &grid, self.exchange);
        let traj = evolve(&state, &cfg.potential, &ecfg)?;
        let mut artifacts = Vec::new();
        let save = |artifacts: &mut Vec<String>| -> fml_core::Result<()> {
            io::write_trajectory_csv(&ctx.out_dir.join("results.csv"), grid.dim(), &traj.diagnostics)?;
            artifacts.push("results.csv".into());
            for (k, snap) in traj.snapshots.iter().enumerate() {
                let name = format!("snapshots/{k:04}");
                io::write_orbitals(&ctx.out_dir.join(&name), &snap.state, self.name(), json!({ "t": snap.t }))?;
                artifacts.extend([format!("{name}.bin"), format!("{name}.json")]);
            }
            let last = traj.snapshots.last().expect("initial snapshot");
            io::write_orbitals(&ctx.out_dir.join("final"), &last.state, self.name(), json!({ "t": last.t }))?;
            artifacts.extend(["final.bin".to_string(), "final.json".to_string()]);
            Ok(())
        };
        if let Err(e) = save(&mut artifacts) {
            return Err(Failure::with(e.to_string(), artifacts));
        }
        if traj.step_size_failure {
            log::warn!("three consecutive steps needed re-orthonormalisation; consider a smaller dt");
        }
        match &traj.status {
            TrajectoryStatus::Completed => Ok(artifacts),
            TrajectoryStatus::Aborted { time, reason } => {
                Err(Failure::with(format!("propagation stopped at t = {time}: {reason}"), artifacts))
            }
        }
    }
}

/// Hartree-Fock Wigner transforms against Vlasov transport of the initial
/// Wigner function.
struct VlasovCompare;

impl VlasovCompare {
    fn times(cfg: &RunConfig) -> Vec<f64> {
        let mut times: Vec<f64> = std::iter::once(0.0)
            .chain(cfg.evolve.snapshot_times.iter().copied())
            .chain(std::iter::once(cfg.evolve.t_final))
            .filter(|t| (0.0..=cfg.evolve.t_final).contains(t))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        times
    }

    fn velocity_grid(cfg: &RunConfig, state: &OrbitalSet) -> fml_core::Result<WignerGrid> {
        Ok(WignerGrid::covering(state, cfg.vlasov.covering)?
            .with_window(cfg.vlasov.window)
            .with_oversampling(cfg.vlasov.oversampling))
    }
}

impl Experiment for VlasovCompare {
    fn name(&self) -> &'static str {
        "evolve-vlasov"
    }

    fn describe(&self) -> &'static str {
        "Wigner transform of Hartree-Fock against Vlasov transport (d = 1); writes results.csv, trajectory.csv, wigner/ and vlasov/"
    }

    fn check(&self, cfg: &RunConfig, base: &Path) -> Check {
        let mut violations = Vec::new();
        let Some((grid, scale)) = state_violations(cfg, base, &mut violations) else {
            return Check { violations, ..Default::default() };
        };
        let mut memory_bytes = evolve_violations(cfg, &grid, scale, &mut violations);
        if cfg.grid.d != 1 {
            violations.push("evolve-vlasov needs grid.d = 1".into());
        }
        if !(cfg.evolve.t_final >= 0.0) {
            violations.push("evolve-vlasov runs forward only; evolve.t_final must be ≥ 0".into());
        }
        if !(cfg.vlasov.dt > 0.0 && cfg.vlasov.dt.is_finite()) {
            violations.push(format!("vlasov.dt must be positive, got {}", cfg.vlasov.dt));
        }
        if cfg.vlasov.oversampling == 0 || !(cfg.vlasov.covering > 0.0) {
            violations.push("vlasov.oversampling and vlasov.covering must be positive".into());
        }
        if !violations.is_empty() {
            return Check { violations, memory_bytes, cells: 1 };
        }
        // the velocity range depends on the state, so build it
        match initial_state(cfg, base, &grid, scale).and_then(|s| Ok((Self::velocity_grid(cfg, &s)?, s))) {
            Ok((vgrid, state)) => {
                let v_max = vgrid.v_max(&grid, scale.epsilon);
                let shift = v_max * cfg.vlasov.dt;
                if shift > 0.25 * grid.length() {
                    violations.push(format!(
                        "CFL: Vlasov transport {shift:.3e} per step exceeds a quarter of the box; reduce vlasov.dt"
                    ));
                }
                let high = high_momentum_fraction(&state);
                if high > RESOLUTION_LIMIT {
                    violations.push(format!(
                        "grid too coarse for the Wigner transform: {high:.3e} of the spectral power lies above 2/3 of Nyquist"
                    ));
                }
                let frames = 2 * Self::times(cfg).len() as u64 + 4;
                memory_bytes += 8 * (vgrid.velocity_points(&grid) * grid.points()) as u64 * frames;
            }
            Err(e) => violations.push(format!("initial state: {e}")),
        }
        Check { violations, memory_bytes, cells: 1 }
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<Vec<String>, Failure> {
        let cfg = ctx.config;
        let (grid, _, state) = setup(cfg, ctx.base)?;
        let vgrid = Self::velocity_grid(cfg, &state)?;
        let times = Self::times(cfg);
        let mut ecfg = evolve_config(cfg, &grid, true);
        ecfg.snapshot_times = times.iter().copied().filter(|&t| t > 0.0).collect();
        let traj = evolve(&state, &cfg.potential, &ecfg)?;
        let mut artifacts = Vec::new();
        let fail = |e: fml_core::Error, artifacts: &Vec<String>| Failure::with(e.to_string(), artifacts.clone());
        io::write_trajectory_csv(&ctx.out_dir.join("trajectory.csv"), 1, &traj.diagnostics)
            .map_err(|e| fail(e, &artifacts))?;
        artifacts.push("trajectory.csv".into());

        let w0 = wigner_transform(&state, vgrid).map_err(|e| fail(e, &artifacts))?;
        let v_evo = ecfg.v_ext.clone();
        let vcfg = VlasovConfig { t_final: cfg.evolve.t_final, dt: cfg.vlasov.dt, snapshot_times: times.clone() };
        let vlasov = evolve_vlasov(&w0, &cfg.potential, v_evo.as_ref(), &vcfg).map_err(|e| fail(e, &artifacts))?;

        let mut rows = Vec::new();
        let mut result = Ok(());
        for (k, &t) in times.iter().enumerate() {
            let (Some(snap), Some(w_vl)) = (traj.snapshot_at(t), vlasov.frame_at(t)) else {
                result = Err(format!("no Hartree-Fock snapshot at t = {t}"));
                break;
            };
            let step = || -> fml_core::Result<VlasovComparisonRow> {
                let mut w_hf = wigner_transform(&snap.state, vgrid)?;
                w_hf.t = t;
                io::write_phase_space(&ctx.out_dir.join(format!("wigner/{k:04}")), &w_hf)?;
                io::write_phase_space(&ctx.out_dir.join(format!("vlasov/{k:04}")), w_vl)?;
                Ok(VlasovComparisonRow {
                    t,
                    l1_distance: phase_space_l1_distance(&w_hf, w_vl)?,
                    mass_w1: w_hf.mass(),
                    mass_w2: w_vl.mass(),
                })
            };
            match step() {
                Ok(row) => {
                    rows.push(row);
                    for dir in ["wigner", "vlasov"] {
                        artifacts.extend([format!("{dir}/{k:04}.bin"), format!("{dir}/{k:04}.json")]);
                    }
                }
                Err(e) => {
                    result = Err(e.to_string());
                    break;
                }
            }
        }
        io::write_vlasov_csv(&ctx.out_dir.join("results.csv"), &rows).map_err(|e| fail(e, &artifacts))?;
        artifacts.push("results.csv".into());
        if let TrajectoryStatus::Aborted { time, reason } = &traj.status {
            return Err(Failure::with(format!("Hartree-Fock stopped at t = {time}: {reason}"), artifacts));
        }
        result.map(|_| artifacts.clone()).map_err(|m| Failure::with(m, artifacts))
    }
}

/// Hartree-Fock against the exact many-body evolution on small lattices.
struct OracleCompare;

impl Experiment for OracleCompare {
    fn name(&self) -> &'static str {
        "oracle-compare"
    }

    fn describe(&self) -> &'static str {
        "mean-field versus exact dynamics over oracle.sites × oracle.particles; writes results.csv and cells/"
    }

    fn check(&self, cfg: &RunConfig, _base: &Path) -> Check {
        let mut violations = Vec::new();
        potential_violations(&cfg.potential, &mut violations);
        if cfg.grid.d != 1 {
            violations.push("oracle-compare needs grid.d = 1".into());
        }
        if cfg.init.input.is_some() {
            violations.push("oracle-compare builds its own states; init.input is not used".into());
        }
        let study = cfg.study();
        if let Err(e) = study.validate() {
            violations.push(e.to_string());
        }
        violations.extend(study.cell_violations());
        let krylov = study.krylov_dim as u64 + 4;
        let memory_bytes = study
            .cells()
            .iter()
            .map(|&(m, n)| binomial(m, n) as u64 * (16 * krylov + 16) + 48 * (m * m) as u64)
            .max()
            .unwrap_or(0);
        Check { violations, memory_bytes, cells: study.cells().len() }
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<Vec<String>, Failure> {
        let out = convergence_study(&ctx.config.study(), Some(ctx.out_dir), ctx.jobs)?;
        log::info!("{} of {} cells reused from an earlier run", out.reused, out.cells.len());
        let mut artifacts = vec!["results.csv".to_string()];
        artifacts.extend(out.cells.iter().map(|c| format!("cells/{}.json", c.key)));
        let failed: Vec<String> = out
            .cells
            .iter()
            .filter(|c| !c.is_ok())
            .map(|c| format!("M={} N={}: {}", c.m, c.n, c.rows.first().map_or("", |r| r.cell_status.as_str())))
            .collect();
        if failed.is_empty() {
            Ok(artifacts)
        } else {
            Err(Failure::with(format!("{} cell(s) failed: {}", failed.len(), failed.join("; ")), artifacts))
        }
    }
}

/// Commutator trace norms of initial states across an `N` sweep.
struct SemiclassicalSweep;

pub const SWEEP_COLUMNS: [&str; 8] =
    ["N", "M", "epsilon", "n_epsilon", "comm_x_ratio", "comm_grad_ratio", "closed_shell", "status"];

impl SemiclassicalSweep {
    /// Grid points per axis for `n` particles: `ppp · N^{1/d}`, even in
    /// d = 1 and a power of two otherwise.
    pub fn points(dim: usize, n: usize, per_particle: usize) -> usize {
        let per_axis = (n as f64).powf(1.0 / dim as f64).ceil() as usize;
        let m = (per_particle * per_axis).max(4);
        if dim == 1 {
            m + m % 2
        } else {
            m.next_power_of_two()
        }
    }

    fn cell(cfg: &RunConfig, n: usize) -> fml_core::Result<Vec<String>> {
        let d = cfg.grid.d;
        let m = Self::points(d, n, cfg.sweep.points_per_particle);
        let grid = Grid::from_params(d, m, cfg.grid.l)?;
        let scale = ScaleParams::new(n, d)?;
        let problem = InitProblem {
            grid: grid.clone(),
            scale,
            potential: cfg.potential.clone(),
            v_ext: trap(&grid, cfg.init.trap_depth),
            scf: ScfOptions::default(),
            tf: TfOptions::default(),
        };
        let state = builder(&cfg.init.builder)?.build(&problem)?;
        let method = trace_norm_method(&cfg.sweep.trace_norm)?;
        let report = commutator_report(&state, method.as_ref())?;
        Ok(vec![
            n.to_string(),
            m.to_string(),
            fmt_f64(scale.epsilon),
            fmt_f64(scale.n_epsilon()),
            fmt_f64(report.max_position_ratio()),
            fmt_f64(report.max_gradient_ratio()),
            is_closed_shell(&grid, n).to_string(),
            "ok".into(),
        ])
    }
}

impl Experiment for SemiclassicalSweep {
    fn name(&self) -> &'static str {
        "semiclassical-sweep"
    }

    fn describe(&self) -> &'static str {
        "commutator trace norms over sweep.particles; writes results.csv and summary.json"
    }

    fn check(&self, cfg: &RunConfig, _base: &Path) -> Check {
        let mut violations = Vec::new();
        potential_violations(&cfg.potential, &mut violations);
        if let Err(e) = builder(&cfg.init.builder) {
            violations.push(e.to_string());
        }
        if cfg.init.input.is_some() {
            violations.push("semiclassical-sweep builds its own states; init.input is not used".into());
        }
        let method = trace_norm_method(&cfg.sweep.trace_norm);
        if let Err(e) = &method {
            violations.push(e.to_string());
        }
        if cfg.sweep.particles.is_empty() || cfg.sweep.points_per_particle == 0 {
            violations.push("sweep.particles must be non-empty and sweep.points_per_particle positive".into());
        }
        let mut memory_bytes = 0;
        for &n in &cfg.sweep.particles {
            let m = Self::points(cfg.grid.d, n, cfg.sweep.points_per_particle);
            if let Err(e) = Grid::from_params(cfg.grid.d, m, cfg.grid.l).and(ScaleParams::new(n, cfg.grid.d)) {
                violations.push(format!("N = {n}: {e}"));
                continue;
            }
            let points = m.pow(cfg.grid.d as u32);
            let dense = matches!(&method, Ok(m) if m.name() == "dense-svd");
            if dense && points > DENSE_POINT_LIMIT {
                violations.push(format!("N = {n}: dense-SVD guard: M^d = {points} exceeds {DENSE_POINT_LIMIT}"));
            }
            let bytes = if dense { 48 * (points * points) as u64 } else { 16 * 8 * (points * n) as u64 };
            memory_bytes = memory_bytes.max(bytes);
        }
        Check { violations, memory_bytes, cells: cfg.sweep.particles.len() }
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<Vec<String>, Failure> {
        let cfg = ctx.config;
        let rows: Vec<Vec<String>> = cfg
            .sweep
            .particles
            .par_iter()
            .map(|&n| {
                Self::cell(cfg, n).unwrap_or_else(|e| {
                    log::warn!("sweep cell N = {n} failed: {e}");
                    let m = Self::points(cfg.grid.d, n, cfg.sweep.points_per_particle);
                    let mut row = vec![n.to_string(), m.to_string()];
                    row.extend(std::iter::repeat(fmt_f64(f64::NAN)).take(4));
                    row.extend(["false".to_string(), format!("failed: {e}")]);
                    row
                })
            })
            .collect();
        io::write_table(&ctx.out_dir.join("results.csv"), &SWEEP_COLUMNS, &rows)?;
        let mut artifacts = vec!["results.csv".to_string()];
        let ok: Vec<&Vec<String>> = rows.iter().filter(|r| r[7] == "ok").collect();
        let column = |i: usize| ok.iter().map(move |r| r[i].parse::<f64>().unwrap_or(f64::NAN));
        let (lo, hi) = column(4).fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
        let summary = json!({
            "trace_norm": cfg.sweep.trace_norm,
            "comm_x_ratio_min": lo,
            "comm_x_ratio_max": hi,
            "comm_x_band": hi / lo,
            "comm_grad_ratio_max": column(5).fold(0.0f64, f64::max),
        });
        io::write_json(&ctx.out_dir.join("summary.json"), &summary).map_err(|e| Failure::with(e.to_string(), artifacts.clone()))?;
        artifacts.push("summary.json".into());
        if ok.len() == rows.len() {
            Ok(artifacts)
        } else {
            Err(Failure::with(format!("{} of {} sweep cells failed", rows.len() - ok.len(), rows.len()), artifacts))
        }
    }
}

/// One-shot report on a stored or freshly built state.
struct Diagnostics;

pub const DIAGNOSTIC_COLUMNS: [&str; 2] = ["quantity", "value"];

impl Experiment for Diagnostics {
    fn name(&self) -> &'static str {
        "diagnostics"
    }

    fn describe(&self) -> &'static str {
        "energies, defects and commutator norms of a state; writes results.csv"
    }

    fn check(&self, cfg: &RunConfig, base: &Path) -> Check {
        let mut violations = Vec::new();
        if let Some((grid, _)) = state_violations(cfg, base, &mut violations) {
            match trace_norm_method(&cfg.sweep.trace_norm) {
                Ok(m) if m.name() == "dense-svd" && grid.len() > DENSE_POINT_LIMIT => violations.push(format!(
                    "dense-SVD guard: M^d = {} exceeds {DENSE_POINT_LIMIT}",
                    grid.len()
                )),
                Ok(_) => {}
                Err(e) => violations.push(e.to_string()),
            }
        }
        Check { violations, memory_bytes: 8 * orbital_bytes(cfg), cells: 1 }
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<Vec<String>, Failure> {
        let cfg = ctx.config;
        let (grid, scale, state) = setup(cfg, ctx.base)?;
        let v_ext = trap(&grid, cfg.init.trap_depth);
        let parts = hf_energy_parts(&state, v_ext.as_ref(), &cfg.potential)?;
        let method = trace_norm_method(&cfg.sweep.trace_norm)?;
        let report = commutator_report(&state, method.as_ref())?;
        let mut rows: Vec<(String, f64)> = vec![
            ("N".into(), scale.n as f64),
            ("epsilon".into(), scale.epsilon),
            ("trace".into(), state.trace()),
            ("orthonormality_defect".into(), state.orthonormality_defect()),
            ("projection_defect".into(), state.projection_defect()),
            ("energy_kinetic".into(), parts.kinetic),
            ("energy_external".into(), parts.external),
            ("energy_direct".into(), parts.direct),
            ("energy_exchange".into(), parts.exchange),
            ("energy_total".into(), parts.total()),
            ("sup_abs_potential".into(), cfg.potential.sup_abs(&grid)?),
            ("exch_comm_hs".into(), exchange_commutator_hs(&state, &cfg.potential)?),
            ("high_momentum_fraction".into(), high_momentum_fraction(&state)),
        ];
        for (a, (x, g)) in report.position_ratios().iter().zip(report.gradient_ratios()).enumerate() {
            rows.push((format!("comm_x_ratio_{}", a + 1), *x));
            rows.push((format!("comm_grad_ratio_{}", a + 1), g));
        }
        let table: Vec<Vec<String>> = rows.iter().map(|(k, v)| vec![k.clone(), fmt_f64(*v)]).collect();
        io::write_table(&ctx.out_dir.join("results.csv"), &DIAGNOSTIC_COLUMNS, &table)?;
        Ok(vec!["results.csv".into()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_resolvable() {
        let names: Vec<&str> = experiments().iter().map(|e| e.name()).collect();
        assert_eq!(
            names,
            ["init", "evolve-hf", "evolve-hartree", "evolve-vlasov", "oracle-compare", "semiclassical-sweep", "diagnostics"]
        );
        for n in names {
            assert_eq!(experiment(n).unwrap().name(), n);
        }
        assert!(experiment("nope").err().unwrap().0.contains("unknown experiment"));
    }

    #[test]
    fn sweep_points_are_valid_grids() {
        assert_eq!(SemiclassicalSweep::points(1, 9, 8), 72);
        assert_eq!(SemiclassicalSweep::points(1, 9, 3), 28);
        assert_eq!(SemiclassicalSweep::points(2, 9, 4), 16);
        for n in [1, 5, 9, 17, 33, 65] {
            let m = SemiclassicalSweep::points(1, n, 5);
            assert!(Grid::from_params(1, m, 1.0).is_ok(), "{m}");
        }
    }

    #[test]
    fn cfl_estimate_flags_huge_steps() {
        let mut cfg = RunConfig::parse("experiment = evolve-hf\ngrid.M = 512\nscale.N = 8\n").unwrap();
        let base = Path::new(".");
        assert!(experiment("evolve-hf").unwrap().check(&cfg, base).violations.is_empty());
        cfg.evolve.dt = 1e6;
        cfg.evolve.t_final = 1e6;
        let v = experiment("evolve-hf").unwrap().check(&cfg, base).violations;
        assert!(v.iter().any(|m| m.contains("CFL")), "{v:?}");
    }

    #[test]
    fn dense_exchange_guard() {
        let cfg = RunConfig::parse("experiment = evolve-hf\ngrid.d = 2\ngrid.M = 128\nevolve.exchange = dense\n").unwrap();
        let v = experiment("evolve-hf").unwrap().check(&cfg, Path::new(".")).violations;
        assert!(v.iter().any(|m| m.contains("dense-SVD guard")), "{v:?}");
    }
}
