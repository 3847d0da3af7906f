use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fml_cli::{FailureRecord, RunConfig};
use fml_core::io::{self, Manifest};

fn fml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fml")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const FREE_SEA: &str = "\
# five free fermions
experiment = init
output = out
grid.M = 32
scale.N = 5
potential.kind = zero
init.builder = free-sea
";

#[test]
fn free_sea_init_writes_state_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "init.cfg", FREE_SEA);
    let out = fml(&["run", &cfg, "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let art = dir.path().join("out");
    let (state, meta) = io::read_orbitals(&art.join("state")).unwrap();
    assert_eq!((meta.m, meta.n, meta.operation.as_str()), (32, 5, "init"));
    assert!((state.trace() - 5.0).abs() < 1e-12);

    let mut reader = csv::Reader::from_path(art.join("results.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "trace").unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert!((rows[0][col].parse::<f64>().unwrap() - 5.0).abs() < 1e-12);

    let manifest: Manifest = io::read_json(&art.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, "ok");
    assert!(manifest.artifacts.iter().all(|a| art.join(a).exists()));
    // the manifest alone reproduces the config
    let again: RunConfig = serde_json::from_value(manifest.config.clone()).unwrap();
    assert_eq!(again, RunConfig::parse(FREE_SEA).unwrap());
    assert_eq!(manifest.config_hash, again.hash());
}

#[test]
fn rerun_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "init.cfg", FREE_SEA);
    assert_eq!(fml(&["run", &cfg, "--jobs", "1"]).status.code(), Some(0));
    let second = fml(&["run", &cfg, "--jobs", "1"]);
    assert_eq!(second.status.code(), Some(2));
    assert!(stderr(&second).contains("output exists"), "{}", stderr(&second));
    let forced = fml(&["run", &cfg, "--force", "--jobs", "1"]);
    assert_eq!(forced.status.code(), Some(0), "{}", stderr(&forced));
}

#[test]
fn default_output_is_keyed_by_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let text = FREE_SEA.replace("output = out\n", "");
    let cfg = write_config(dir.path(), "init.cfg", &text);
    assert_eq!(fml(&["run", &cfg, "--jobs", "1"]).status.code(), Some(0));
    let hash = RunConfig::parse(&text).unwrap().hash();
    let art = dir.path().join("runs").join(format!("init-{}", &hash[..12]));
    let info = fml(&["info", art.to_str().unwrap()]);
    assert_eq!(info.status.code(), Some(0));
    assert!(stdout(&info).contains("status: ok"), "{}", stdout(&info));
}

#[test]
fn free_oracle_compare_matches_hartree_fock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "oracle.cfg",
        "experiment = oracle-compare\noutput = oracle\npotential.kind = zero\ninit.builder = scf\n\
         init.trap_depth = 1.0\noracle.sites = [8, 10]\noracle.particles = [2, 3]\n\
         oracle.times = [0.0, 0.1, 0.2]\noracle.dt = 0.002\n",
    );
    let out = fml(&["run", &cfg, "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = io::read_results_csv(&dir.path().join("oracle/results.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert_eq!(r.cell_status, "ok");
        assert!(r.hs_dist <= 1e-6, "{r:?}");
    }
    // released trap: the state moves
    assert!(rows.iter().any(|r| r.comm_x_ratio > 0.0 && r.t > 0.0));
}

#[test]
fn validate_reports_guards_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let big = write_config(
        dir.path(),
        "big.cfg",
        "experiment = oracle-compare\noracle.sites = [24]\noracle.particles = [12]\n",
    );
    let out = fml(&["validate", &big]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("basis guard"), "{}", stdout(&out));
    assert!(stdout(&out).contains("estimated memory"));
    // running it is a config error
    let run = fml(&["run", &big]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("basis guard"));

    let fine = write_config(dir.path(), "fine.cfg", FREE_SEA);
    let out = fml(&["validate", &fine]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("violations: none"), "{}", stdout(&out));

    let schema = write_config(
        dir.path(),
        "schema.cfg",
        "experiment = init\npotential.kind = gaussian\npotential.amplitude = 1.0\n",
    );
    let out = fml(&["validate", &schema]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("schema error") && stderr(&out).contains("width"), "{}", stderr(&out));
}

#[test]
fn missing_input_file_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "diag.cfg", "experiment = diagnostics\ninit.input = nowhere/state\n");
    let out = fml(&["validate", &cfg]);
    assert!(stdout(&out).contains("does not exist"), "{}", stdout(&out));
}

#[test]
fn diagnostics_reads_a_stored_state() {
    let dir = tempfile::tempdir().unwrap();
    let init = write_config(dir.path(), "init.cfg", FREE_SEA);
    assert_eq!(fml(&["run", &init, "--jobs", "1"]).status.code(), Some(0));
    let cfg = write_config(
        dir.path(),
        "diag.cfg",
        "experiment = diagnostics\noutput = diag\ngrid.M = 32\nscale.N = 5\npotential.kind = zero\n\
         init.input = out/state\n",
    );
    let out = fml(&["run", &cfg, "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("diag/results.csv")).unwrap();
    let trace: f64 = text.lines().find(|l| l.starts_with("trace,")).unwrap()[6..].parse().unwrap();
    assert!((trace - 5.0).abs() < 1e-12);
}

#[test]
fn numerical_failure_keeps_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // a steep well the Vlasov step cannot follow
    let cfg = write_config(
        dir.path(),
        "vlasov.cfg",
        "experiment = evolve-vlasov\noutput = vl\ngrid.M = 64\nscale.N = 8\npotential.kind = zero\n\
         init.builder = free-sea\nevolve.t_final = 0.1\nevolve.dt = 0.01\nevolve.trap_depth = 1000.0\n\
         evolve.krylov_dim = 16\nevolve.commutator_diagnostics = false\nvlasov.dt = 0.05\n",
    );
    let out = fml(&["run", &cfg, "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let art = dir.path().join("vl");
    let failure: FailureRecord = io::read_json(&art.join("failure.json")).unwrap();
    assert!(failure.message.contains("CFL"), "{}", failure.message);
    assert!(art.join("trajectory.csv").exists());
    let manifest: Manifest = io::read_json(&art.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, "failed");
    assert!(manifest.artifacts.contains(&"trajectory.csv".to_string()));
    assert!(stdout(&fml(&["info", art.to_str().unwrap()])).contains("failure:"));
}

#[test]
fn vlasov_comparison_writes_phase_space_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "vlasov.cfg",
        "experiment = evolve-vlasov\noutput = vl\ngrid.M = 128\nscale.N = 16\ninit.builder = scf\n\
         init.trap_depth = 2.0\nevolve.t_final = 0.2\nevolve.dt = 0.01\nevolve.trap_depth = 3.0\n\
         evolve.krylov_dim = 16\nevolve.snapshot_times = [0.1]\nevolve.commutator_diagnostics = false\n",
    );
    let out = fml(&["run", &cfg, "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let art = dir.path().join("vl");
    let mut reader = csv::Reader::from_path(art.join("results.csv")).unwrap();
    let rows: Vec<io::VlasovComparisonRow> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.iter().map(|r| r.t).collect::<Vec<_>>(), [0.0, 0.1, 0.2]);
    assert!(rows[0].l1_distance < 1e-12);
    for r in &rows {
        assert!((r.mass_w1 - 1.0).abs() < 1e-10 && (r.mass_w2 - 1.0).abs() < 1e-8, "{r:?}");
        assert!(r.l1_distance < 0.5);
    }
    let w = io::read_phase_space(&art.join("vlasov/0002")).unwrap();
    assert!((w.t - 0.2).abs() < 1e-12);
}

#[test]
fn sweep_and_evolve_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = write_config(
        dir.path(),
        "sweep.cfg",
        "experiment = semiclassical-sweep\noutput = sweep\npotential.kind = zero\nsweep.particles = [5, 9]\n",
    );
    let out = fml(&["run", &sweep, "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value = io::read_json(&dir.path().join("sweep/summary.json")).unwrap();
    assert!(summary["comm_x_band"].as_f64().unwrap() < 2.0);
    assert!(summary["comm_grad_ratio_max"].as_f64().unwrap() < 1e-10);

    let hartree = write_config(
        dir.path(),
        "hartree.cfg",
        "experiment = evolve-hartree\noutput = h\ngrid.M = 32\nscale.N = 4\nevolve.t_final = 0.05\n\
         evolve.dt = 0.01\nevolve.snapshot_times = [0.02]\n",
    );
    let out = fml(&["run", &hartree, "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (last, meta) = io::read_orbitals(&dir.path().join("h/final")).unwrap();
    assert_eq!(meta.operation, "evolve-hartree");
    assert!((meta.parameters["t"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert!(last.orthonormality_defect() < 1e-9);
    assert!(dir.path().join("h/snapshots/0001.bin").exists());
}
