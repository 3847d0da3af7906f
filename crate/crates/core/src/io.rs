//! On-disk formats.
//!
//! Arrays are raw little-endian `f64` files with a JSON sidecar next to
//! them (`<name>.bin` + `<name>.json`). CSV floats carry 17 significant
//! digits. Every file is written to a temporary name and renamed into
//! place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::DiagnosticRecord;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScaleParams, C64};
use crate::oracle::ResultRow;
use crate::orbitals::OrbitalSet;
use crate::semiclassics::PhaseSpaceDensity;

pub const ORBITAL_DTYPE: &str = "complex128-le";
pub const DENSITY_DTYPE: &str = "float64-le";

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `<stem>.bin` and `<stem>.json` for a path given with or without extension.
pub fn array_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("bin"), path.with_extension("json"))
}

fn f64_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * expected {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            8 * expected
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitalSidecar {
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: f64,
    pub dtype: String,
    pub layout: String,
    /// Name of the operation that produced the state.
    pub operation: String,
    #[serde(default)]
    pub parameters: serde_json::Value,
}

/// Saves orbitals as `(re, im)` pairs, column-major over (grid point, orbital).
pub fn write_orbitals(path: &Path, state: &OrbitalSet, operation: &str, parameters: serde_json::Value) -> Result<()> {
    let (bin, json) = array_paths(path);
    let bytes = f64_bytes(state.orbitals.iter().flat_map(|z| [z.re, z.im]));
    atomic_write(&bin, &bytes)?;
    let grid = &state.grid;
    write_json(
        &json,
        &OrbitalSidecar {
            d: grid.dim(),
            m: grid.points(),
            l: grid.length(),
            n: state.n(),
            epsilon: state.scale.epsilon,
            dtype: ORBITAL_DTYPE.into(),
            layout: "column-major (point, orbital)".into(),
            operation: operation.into(),
            parameters,
        },
    )
}

pub fn read_orbitals(path: &Path) -> Result<(OrbitalSet, OrbitalSidecar)> {
    let (bin, json) = array_paths(path);
    let meta: OrbitalSidecar = read_json(&json)?;
    if meta.dtype != ORBITAL_DTYPE {
        return Err(Error::Format(format!("unsupported orbital dtype '{}'", meta.dtype)));
    }
    let grid = Grid::from_params(meta.d, meta.m, meta.l)?;
    let scale = ScaleParams::new(meta.n, meta.d)?;
    if (scale.epsilon - meta.epsilon).abs() > 1e-12 * scale.epsilon {
        return Err(Error::Format(format!("sidecar ε = {} does not match N = {}", meta.epsilon, meta.n)));
    }
    let raw = read_f64s(&bin, 2 * grid.len() * meta.n)?;
    let values: Vec<C64> = raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
    let orbitals = DMatrix::from_vec(grid.len(), meta.n, values);
    Ok((OrbitalSet::new(&grid, scale, orbitals)?, meta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySidecar {
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "M_v")]
    pub m_v: usize,
    pub v_max: f64,
    pub t: f64,
    pub dtype: String,
    pub layout: String,
}

/// Saves `W(x, v)` with `x` fastest.
pub fn write_phase_space(path: &Path, w: &PhaseSpaceDensity) -> Result<()> {
    let (bin, json) = array_paths(path);
    atomic_write(&bin, &f64_bytes(w.values.iter().copied()))?;
    write_json(
        &json,
        &DensitySidecar {
            d: 1,
            m: w.points,
            l: w.length,
            m_v: w.velocity_points,
            v_max: w.v_max,
            t: w.t,
            dtype: DENSITY_DTYPE.into(),
            layout: "x fastest, v_k = -v_max + k dv".into(),
        },
    )
}

pub fn read_phase_space(path: &Path) -> Result<PhaseSpaceDensity> {
    let (bin, json) = array_paths(path);
    let meta: DensitySidecar = read_json(&json)?;
    if meta.d != 1 || meta.dtype != DENSITY_DTYPE {
        return Err(Error::Format(format!("unsupported phase-space file: d = {}, dtype '{}'", meta.d, meta.dtype)));
    }
    let grid = Grid::from_params(1, meta.m, meta.l)?;
    let values = read_f64s(&bin, meta.m * meta.m_v)?;
    let mut w = PhaseSpaceDensity::new(&grid, meta.m_v, meta.v_max, values)?;
    w.t = meta.t;
    Ok(w)
}

/// 17 significant digits; `NaN` for missing values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Writes an arbitrary table; callers format the cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    atomic_write(path, &csv_bytes(&header, rows)?)
}

pub fn trajectory_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "energy", "trace", "orthonormality_defect"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=dim).map(|a| format!("comm_x_{a}")));
    h.push("exch_comm_hs".into());
    h
}

pub fn write_trajectory_csv(path: &Path, dim: usize, records: &[DiagnosticRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![fmt_f64(r.t), fmt_f64(r.energy), fmt_f64(r.trace), fmt_f64(r.orthonormality_defect)];
            row.extend((0..dim).map(|a| fmt_f64(r.comm_x.get(a).copied().unwrap_or(f64::NAN))));
            row.push(fmt_f64(r.exch_comm_hs.unwrap_or(f64::NAN)));
            row
        })
        .collect();
    atomic_write(path, &csv_bytes(&trajectory_header(dim), &rows)?)
}

/// One line of a Wigner-versus-Vlasov comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VlasovComparisonRow {
    pub t: f64,
    pub l1_distance: f64,
    #[serde(rename = "mass_W1")]
    pub mass_w1: f64,
    #[serde(rename = "mass_W2")]
    pub mass_w2: f64,
}

pub const VLASOV_COLUMNS: [&str; 4] = ["t", "l1_distance", "mass_W1", "mass_W2"];

pub fn write_vlasov_csv(path: &Path, rows: &[VlasovComparisonRow]) -> Result<()> {
    let header: Vec<String> = VLASOV_COLUMNS.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> =
        rows.iter().map(|r| vec![fmt_f64(r.t), fmt_f64(r.l1_distance), fmt_f64(r.mass_w1), fmt_f64(r.mass_w2)]).collect();
    atomic_write(path, &csv_bytes(&header, &body)?)
}

pub const RESULT_COLUMNS: [&str; 14] = [
    "d",
    "M",
    "N",
    "epsilon",
    "t",
    "dt",
    "hs_dist",
    "trace_dist",
    "fluct_number",
    "comm_x_ratio",
    "energy_mf",
    "energy_exact",
    "cell_status",
    "hs_bd_slack",
];

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let header: Vec<String> = RESULT_COLUMNS.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.d.to_string(),
                r.m.to_string(),
                r.n.to_string(),
                fmt_f64(r.epsilon),
                fmt_f64(r.t),
                fmt_f64(r.dt),
                fmt_f64(r.hs_dist),
                fmt_f64(r.trace_dist),
                fmt_f64(r.fluct_number),
                fmt_f64(r.comm_x_ratio),
                fmt_f64(r.energy_mf),
                fmt_f64(r.energy_exact),
                r.cell_status.clone(),
                fmt_f64(r.hs_bd_slack),
            ]
        })
        .collect();
    atomic_write(path, &csv_bytes(&header, &body)?)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    for col in RESULT_COLUMNS {
        if !header.iter().any(|h| h == col) {
            return Err(Error::Format(format!("results file lacks column '{col}'")));
        }
    }
    Ok(reader.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

/// Everything needed to rerun an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub artifacts: Vec<String>,
    pub status: String,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn version_string() -> String {
    format!("fml-core {}", env!("CARGO_PKG_VERSION"))
}
