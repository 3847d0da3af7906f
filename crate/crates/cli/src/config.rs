//! Run configuration.
//!
//! The text form is one `key = value` per line with dotted keys
//! (`grid.M = 64`). Values are JSON literals; anything that does not parse
//! as JSON is taken as a bare string. `#` starts a comment outside quotes.
//! A file whose first non-blank character is `{` is read as JSON instead.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use fml_core::io;
use fml_core::oracle::StudyConfig;
use fml_core::semiclassics::WignerWindow;
use fml_core::PotentialSpec;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Unreadable, malformed or out-of-schema configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Registered experiment name, see `fml info --experiments`.
    pub experiment: String,
    /// Artifact directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub scale: ScaleSection,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub vlasov: VlasovSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::Gaussian { amplitude: 1.0, width: 0.5 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { d: 1, m: 64, l: 2.0 * PI }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSection {
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for ScaleSection {
    fn default() -> Self {
        Self { n: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    /// `free-sea`, `weyl` or `scf`.
    pub builder: String,
    /// Depth of the cosine well the state is prepared in; 0 for none.
    pub trap_depth: f64,
    /// Orbital file to start from instead of building a state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

impl Default for InitSection {
    fn default() -> Self {
        Self { builder: "free-sea".into(), trap_depth: 0.0, input: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    pub t_final: f64,
    pub dt: f64,
    /// `auto`, `dense` or `factored`.
    pub exchange: String,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub corrections: usize,
    pub snapshot_times: Vec<f64>,
    pub diagnostics_every: usize,
    pub commutator_diagnostics: bool,
    /// Cosine well kept during the evolution; absent releases the trap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trap_depth: Option<f64>,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt: 1e-3,
            exchange: "auto".into(),
            krylov_dim: 8,
            krylov_tol: 1e-10,
            corrections: 2,
            snapshot_times: Vec::new(),
            diagnostics_every: 10,
            commutator_diagnostics: true,
            trap_depth: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlasovSection {
    pub dt: f64,
    pub window: WignerWindow,
    pub oversampling: usize,
    /// Velocity range as a multiple of the largest local Fermi velocity.
    pub covering: f64,
}

impl Default for VlasovSection {
    fn default() -> Self {
        Self { dt: 1e-2, window: WignerWindow::Smooth, oversampling: 1, covering: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub sites: Vec<usize>,
    pub particles: Vec<usize>,
    pub times: Vec<f64>,
    pub dt: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        let study = StudyConfig::default();
        Self {
            sites: study.sites,
            particles: study.particles,
            times: study.times,
            dt: study.dt,
            krylov_dim: study.krylov_dim,
            krylov_tol: study.krylov_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub particles: Vec<usize>,
    /// Grid points per particle along each axis.
    pub points_per_particle: usize,
    /// `low-rank` or `dense-svd`.
    pub trace_norm: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { particles: vec![9, 17, 33, 65], points_per_particle: 8, trace_norm: "low-rank".into() }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| err(format!("invalid JSON config: {e}")))?
        } else {
            parse_flat(text)?
        };
        serde_json::from_value(value).map_err(|e| err(format!("schema error: {e}")))
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }

    /// Flat text form; [`RunConfig::parse`] reads it back to an equal value.
    pub fn to_flat(&self) -> String {
        let mut lines = Vec::new();
        flatten("", &self.to_json_value(), &mut lines);
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical JSON form (sorted keys, shortest floats).
    pub fn hash(&self) -> String {
        io::sha256_hex(&serde_json::to_vec(&self.to_json_value()).expect("config serialises"))
    }

    /// Output directory: `output` relative to `base`, or
    /// `runs/<experiment>-<hash prefix>` under `base`.
    pub fn output_dir(&self, base: &Path) -> PathBuf {
        match &self.output {
            Some(dir) => base.join(dir),
            None => base.join("runs").join(format!("{}-{}", self.experiment, &self.hash()[..12])),
        }
    }

    pub fn input_path(&self, base: &Path) -> Option<PathBuf> {
        self.init.input.as_ref().map(|p| base.join(p))
    }

    /// Oracle sweep assembled from the oracle section and the shared
    /// potential, box length and trap settings.
    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            length: self.grid.l,
            sites: self.oracle.sites.clone(),
            particles: self.oracle.particles.clone(),
            potential: self.potential.clone(),
            initial: self.init.builder.clone(),
            trap_depth: self.init.trap_depth,
            evolution_trap_depth: self.evolve.trap_depth,
            times: self.oracle.times.clone(),
            dt: self.oracle.dt,
            krylov_dim: self.oracle.krylov_dim,
            krylov_tol: self.oracle.krylov_tol,
        }
    }
}

/// Drops a trailing `#` comment that is not inside a double-quoted string.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if quoted => escaped = true,
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_flat(text: &str) -> Result<Value, ConfigError> {
    let mut root = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| err(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(err(format!("line {}: malformed key '{key}'", lineno + 1)));
        }
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        insert(&mut root, &parts, parsed).map_err(|m| err(format!("line {}: {m}", lineno + 1)))?;
    }
    Ok(Value::Object(root))
}

fn insert(map: &mut Map<String, Value>, path: &[&str], value: Value) -> Result<(), String> {
    let (head, rest) = path.split_first().expect("non-empty key");
    if rest.is_empty() {
        if map.contains_key(*head) {
            return Err(format!("'{head}' is set twice"));
        }
        map.insert(head.to_string(), value);
        return Ok(());
    }
    match map.entry(head.to_string()).or_insert_with(|| Value::Object(Map::new())) {
        Value::Object(inner) => insert(inner, rest, value),
        _ => Err(format!("'{head}' is both a value and a section")),
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), value.to_string())),
    }
}
