//! Config-driven runs. Each run owns one directory holding `manifest.json`,
//! its data files and `run.log`; sweeps add one sub-directory per value and a
//! merged `summary.csv`.
//!
//! Physical parameters have no defaults; numerical ones do.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fock::{self, XBranch};
use crate::lattice::{
    self, derive_params, fmt_f, DriveConfig, FockConfig, GridConfig, Hamiltonian, OverlapRow, TrapConfig,
};
use crate::phase_space::{self, GridMetadata, PhaseAxis, PhaseGrid, XStateSpec, ZeroSearch};
use crate::protocol::{self, GateMode, PhysicalGate, Qubit};
use crate::C64;

/// Version of every file layout written here; bumped on any column change.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    DeriveParams,
    SqueezeSim,
    CsqzFidelity,
    Xstate,
    Charfun,
    Zeros,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::DeriveParams => "derive-params",
            ScenarioKind::SqueezeSim => "squeeze-sim",
            ScenarioKind::CsqzFidelity => "csqz-fidelity",
            ScenarioKind::Xstate => "xstate",
            ScenarioKind::Charfun => "charfun",
            ScenarioKind::Zeros => "zeros",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    fn ext(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Drive as written in a config: the frequency is given either directly or
/// relative to the dressed trap frequency `ω_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    pub epsilon: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_d_over_omega_e: Option<f64>,
}

impl DriveSpec {
    pub fn resolve(&self, trap: &TrapConfig) -> Result<DriveConfig> {
        let resonant = DriveConfig::resonant(trap, self.epsilon, self.theta)?;
        match (self.omega_d, self.omega_d_over_omega_e) {
            (Some(w), None) => DriveConfig::new(self.epsilon, w, self.theta),
            (None, Some(k)) => DriveConfig::new(self.epsilon, 0.5 * k * resonant.omega_d, self.theta),
            (None, None) => Err(Error::Config("drive: set one of `omega_d` or `omega_d_over_omega_e`".into())),
            (Some(_), Some(_)) => {
                Err(Error::Config("drive: `omega_d` and `omega_d_over_omega_e` are mutually exclusive".into()))
            }
        }
    }

    /// Gates always run on parametric resonance; a frequency, if given, must
    /// say so.
    fn resolve_gate(&self, trap: &TrapConfig) -> Result<DriveConfig> {
        let resonant = DriveConfig::resonant(trap, self.epsilon, self.theta)?;
        if self.omega_d.is_none() && self.omega_d_over_omega_e.is_none() {
            return Ok(resonant);
        }
        let d = self.resolve(trap)?;
        if (d.omega_d - resonant.omega_d).abs() > 1e-12 * resonant.omega_d {
            return Err(Error::Config(format!(
                "drive: gates need omega_d = 2 omega_e = {}, got {}",
                resonant.omega_d, d.omega_d
            )));
        }
        Ok(resonant)
    }
}

/// How long `squeeze-sim` evolves; exactly one field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolution {
    /// Until the RWA squeezing `G t / 2` reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_periods: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Grid,
    Fock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    Ideal,
    IdealFramed,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CharMethod {
    #[default]
    ClosedForm,
    Numeric,
    /// Both paths, with their maximum deviation in the summary.
    Both,
}

/// Numerical knobs; every field has a default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
    /// Fock truncation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Basis size for dressed-frame projections of grid states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Highest phonon number written to population columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Probe states per block for gate fidelities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    /// Seeded Monte Carlo repetitions of the qubit measurement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_limit: Option<f64>,
}

pub const DEFAULT_AUDIT_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<PhaseAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<PhaseAxis>,
    #[serde(default)]
    pub method: CharMethod,
    #[serde(default)]
    pub wigner: bool,
}

/// One config field varied over an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Dotted path, e.g. `trap.phi` or `drive.omega_d_over_omega_e`.
    pub field: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parity: Option<XBranch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ProtocolMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<Evolution>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_space: Option<PhaseSpaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeros: Option<ZeroSearch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

fn missing(what: &str, kind: ScenarioKind) -> Error {
    Error::Config(format!("scenario `{}` requires `{what}`", kind.name()))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    /// Check everything a run would check before doing any numerics.
    pub fn validate(&self) -> Result<()> {
        match &self.sweep {
            Some(_) => self.expand()?.iter().try_for_each(|c| c.validate()),
            None => self.plan().map(|_| ()),
        }
    }

    fn trap(&self) -> Result<TrapConfig> {
        let t = self.trap.ok_or_else(|| missing("trap", self.scenario))?;
        t.validate()?;
        Ok(t)
    }

    fn drive(&self) -> Result<&DriveSpec> {
        self.drive.as_ref().ok_or_else(|| missing("drive", self.scenario))
    }

    fn r(&self) -> Result<f64> {
        let r = self.r.ok_or_else(|| missing("r", self.scenario))?;
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParameter { name: "r", value: r, reason: "must be finite and >= 0" });
        }
        Ok(r)
    }

    fn xspec(&self) -> Result<XStateSpec> {
        let parity = self.parity.ok_or_else(|| missing("parity", self.scenario))?;
        XStateSpec::new(parity, self.r()?)
    }

    fn audit_limit(&self) -> f64 {
        self.numerics.audit_limit.unwrap_or(DEFAULT_AUDIT_LIMIT)
    }

    /// Resolve the scenario into fully specified inputs.
    fn plan(&self) -> Result<Plan> {
        let n = &self.numerics;
        Ok(match self.scenario {
            ScenarioKind::DeriveParams => {
                let trap = self.trap()?;
                Plan::Derive { trap, drive: self.drive()?.resolve(&trap)?, r: self.r }
            }
            ScenarioKind::SqueezeSim => {
                let trap = self.trap()?;
                let drive = self.drive()?.resolve(&trap)?;
                let d = derive_params(&trap, &drive);
                let ev = self.evolution.ok_or_else(|| missing("evolution", self.scenario))?;
                let t_final = match (ev.r_target, ev.drive_periods, ev.t_final) {
                    (Some(r), None, None) => {
                        if d.g_rate <= 0.0 {
                            return Err(Error::Config("evolution.r_target needs epsilon > 0".into()));
                        }
                        d.time_for_squeeze(r)
                    }
                    (None, Some(k), None) => {
                        k * drive
                            .period()
                            .ok_or_else(|| Error::Config("evolution.drive_periods needs omega_d > 0".into()))?
                    }
                    (None, None, Some(t)) => t,
                    _ => {
                        return Err(Error::Config(
                            "evolution: set exactly one of r_target, drive_periods, t_final".into(),
                        ))
                    }
                };
                if !(t_final.is_finite() && t_final > 0.0) {
                    return Err(Error::InvalidParameter { name: "t_final", value: t_final, reason: "must be > 0" });
                }
                let r_max = 0.5 * d.g_rate * t_final;
                let grid = grid_config(n, &trap, &drive, r_max, t_final)?;
                let count = n.count.unwrap_or_else(|| fock::default_dim(r_max).max(96));
                let solver = n.solver.unwrap_or_default();
                let dim = n.dim.unwrap_or_else(|| (fock::default_dim(r_max) + 32).max(160));
                Plan::Squeeze { trap, drive, grid, solver, dim, count, n_max: n.n_max.unwrap_or(10) }
            }
            ScenarioKind::CsqzFidelity => {
                let trap = self.trap()?;
                let drive = self.drive()?.resolve_gate(&trap)?;
                let r = self.r()?;
                let gate = physical_gate(n, &trap, &drive, r)?;
                let probes = n.probes.unwrap_or(4);
                let dim = n.dim.unwrap_or(128);
                if probes == 0 || probes > dim {
                    return Err(Error::Config(format!("numerics.probes = {probes} must be in 1..=dim ({dim})")));
                }
                Plan::Gate { gate, r, theta: drive.theta, probes, dim }
            }
            ScenarioKind::Xstate => {
                let r = self.r()?;
                if r <= 0.0 {
                    return Err(Error::InvalidParameter { name: "r", value: r, reason: "xstate needs r > 0" });
                }
                let mode_kind = self.mode.ok_or_else(|| missing("mode", self.scenario))?;
                let dim = n.dim.unwrap_or_else(|| fock::default_dim(r).max(64));
                let mode = match mode_kind {
                    ProtocolMode::Ideal => GateMode::Ideal,
                    ProtocolMode::IdealFramed | ProtocolMode::Physical => {
                        let trap = self.trap()?;
                        let drive = self.drive()?.resolve_gate(&trap)?;
                        let gate = physical_gate(n, &trap, &drive, r)?;
                        if mode_kind == ProtocolMode::Physical {
                            GateMode::Physical(gate)
                        } else {
                            GateMode::IdealFramed(gate.frame_map(r)?)
                        }
                    }
                };
                Plan::Xstate { r, dim, mode, mode_kind, runs: n.runs.unwrap_or(0) }
            }
            ScenarioKind::Charfun => {
                let spec = self.xspec()?;
                let ps = self.phase_space.unwrap_or_default();
                let (half, count) = if spec.r >= 1.5 { (8.0, 801) } else { (4.0, 401) };
                let x = match ps.x {
                    Some(a) => a,
                    None => PhaseAxis::symmetric(half, count)?,
                };
                let p = match ps.p {
                    Some(a) => a,
                    None => PhaseAxis::symmetric(half, count)?,
                };
                x.validate()?;
                p.validate()?;
                let dim = n.dim.unwrap_or_else(|| fock::default_dim(spec.r).max(256));
                Plan::Charfun { spec, x, p, method: ps.method, wigner: ps.wigner, dim }
            }
            ScenarioKind::Zeros => {
                let search = self.zeros.unwrap_or_default();
                Plan::Zeros { spec: self.xspec()?, search }
            }
        })
    }

    /// One config per sweep value, with the sweep block removed.
    pub fn expand(&self) -> Result<Vec<ScenarioConfig>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        if sweep.values.is_empty() {
            return Err(Error::Config("sweep.values is empty".into()));
        }
        let mut base = self.clone();
        base.sweep = None;
        let tree = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        sweep
            .values
            .iter()
            .map(|v| {
                if !matches!(
                    v,
                    toml::Value::Float(_) | toml::Value::Integer(_) | toml::Value::String(_) | toml::Value::Boolean(_)
                ) {
                    return Err(Error::Config(format!("sweep.values: `{v}` is not a scalar")));
                }
                let mut t = tree.clone();
                set_path(&mut t, &sweep.field, v.clone())?;
                t.try_into().map_err(|e: toml::de::Error| Error::Config(format!("sweep {} = {v}: {e}", sweep.field)))
            })
            .collect()
    }
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) || keys[0] == "sweep" {
        return Err(Error::Config(format!("sweep.field `{path}` is not a config field")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("sweep.field `{path}`: `{key}` is not a table")))?;
        node = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table =
        node.as_table_mut().ok_or_else(|| Error::Config(format!("sweep.field `{path}` is not a config field")))?;
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn grid_config(n: &Numerics, trap: &TrapConfig, drive: &DriveConfig, r_max: f64, t_final: f64) -> Result<GridConfig> {
    let mut g = GridConfig::defaults_for(drive, trap, r_max, t_final);
    if let Some(p) = n.n_points {
        g.n_points = p;
    }
    if let Some(x) = n.x_max {
        g.x_max = x;
    }
    if let Some(k) = n.steps_per_period {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter { name: "steps_per_period", value: k, reason: "must be > 0" });
        }
        let period = drive.period().unwrap_or(std::f64::consts::TAU / trap.omega_t);
        g.dt = period / k;
    }
    g.snapshot_every = match n.snapshot_every {
        Some(s) => s,
        None => (((t_final / g.dt).ceil() as usize) / 400).max(1),
    };
    g.grid()?;
    Ok(g)
}

fn physical_gate(n: &Numerics, trap: &TrapConfig, drive: &DriveConfig, r: f64) -> Result<PhysicalGate> {
    let d = derive_params(trap, drive);
    if d.g_rate <= 0.0 {
        return Err(Error::Config("gate needs drive.epsilon > 0".into()));
    }
    let grid = grid_config(n, trap, drive, r, d.time_for_squeeze(r))?;
    Ok(PhysicalGate { trap: *trap, epsilon: drive.epsilon, grid })
}

enum Plan {
    Derive {
        trap: TrapConfig,
        drive: DriveConfig,
        r: Option<f64>,
    },
    Squeeze {
        trap: TrapConfig,
        drive: DriveConfig,
        grid: GridConfig,
        solver: Solver,
        dim: usize,
        count: usize,
        n_max: usize,
    },
    Gate {
        gate: PhysicalGate,
        r: f64,
        theta: f64,
        probes: usize,
        dim: usize,
    },
    Xstate {
        r: f64,
        dim: usize,
        mode: GateMode,
        mode_kind: ProtocolMode,
        runs: usize,
    },
    Charfun {
        spec: XStateSpec,
        x: PhaseAxis,
        p: PhaseAxis,
        method: CharMethod,
        wigner: bool,
        dim: usize,
    },
    Zeros {
        spec: XStateSpec,
        search: ZeroSearch,
    },
}

/// One recorded health check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl AuditRecord {
    fn new(name: &str, value: f64, limit: f64) -> Self {
        AuditRecord { name: name.into(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub field: String,
    pub values: Vec<toml::Value>,
    pub runs: Vec<String>,
    pub failed: usize,
}

/// Everything needed to audit and reuse a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub scenario: ScenarioKind,
    pub status: String,
    pub error: Option<String>,
    pub exit_code: i32,
    pub seed: u64,
    pub format: OutputFormat,
    pub config: serde_json::Value,
    /// Wall-clock seconds; the only field that differs between repeated runs.
    pub duration_s: f64,
    pub audits: Vec<AuditRecord>,
    pub outputs: Vec<OutputRecord>,
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub sweep: Option<SweepRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }
}

/// Exit code for an error: 1 input, 2 numerical health, 3 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        crate::ErrorKind::Input => 1,
        crate::ErrorKind::Numerical => 2,
        crate::ErrorKind::Io => 3,
    }
}

/// Data produced by one scenario, before anything touches the disk.
#[derive(Default)]
struct Products {
    files: Vec<(String, Vec<u8>)>,
    summary: BTreeMap<String, f64>,
    audits: Vec<AuditRecord>,
    warnings: Vec<String>,
    log: Vec<String>,
    /// Health failure detected after the data was produced; the data is kept.
    failure: Option<Error>,
}

impl Products {
    fn file(&mut self, name: String, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.summary.insert(key.into(), v);
    }

    fn audit(&mut self, rec: AuditRecord, err: impl FnOnce() -> Error) {
        if !rec.passed && self.failure.is_none() {
            self.failure = Some(err());
        }
        self.log.push(format!(
            "audit {}: {} (limit {}) {}",
            rec.name,
            fmt_f(rec.value),
            fmt_f(rec.limit),
            if rec.passed { "ok" } else { "FAILED" }
        ));
        self.audits.push(rec);
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| Error::io("serializing json", e.into()))?;
    b.push(b'\n');
    Ok(b)
}

fn csv_table(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(lattice::csv_err)?;
    for r in rows {
        w.write_record(r).map_err(lattice::csv_err)?;
    }
    w.into_inner().map_err(|e| Error::io("finishing csv", e.into_error()))
}

/// Header plus rows as either CSV or a JSON array of objects.
fn table(format: OutputFormat, header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => {
            let h: Vec<String> = header.iter().map(|s| s.to_string()).collect();
            let r: Vec<Vec<String>> = rows.iter().map(|row| row.iter().map(|&v| fmt_f(v)).collect()).collect();
            csv_table(&h, &r)
        }
        OutputFormat::Json => {
            let objs: Vec<BTreeMap<&str, f64>> =
                rows.iter().map(|row| header.iter().copied().zip(row.iter().copied()).collect()).collect();
            json_bytes(&serde_json::json!({ "columns": header, "rows": objs }))
        }
    }
}

fn execute(cfg: &ScenarioConfig) -> Result<Products> {
    let mut out = Products::default();
    let fmt = cfg.format;
    match cfg.plan()? {
        Plan::Derive { trap, drive, r } => {
            let d = derive_params(&trap, &drive);
            let mut header = vec![
                "omega_t",
                "eta_g",
                "epsilon",
                "omega_d",
                "omega_e",
                "eta_e",
                "g_rate",
                "sigma_ratio",
                "frame_squeeze",
            ];
            let mut row = vec![
                trap.omega_t,
                trap.eta_g,
                drive.epsilon,
                drive.omega_d,
                d.omega_e,
                d.eta_e,
                d.g_rate,
                d.sigma_ratio,
                d.frame_squeeze(&trap),
            ];
            if let (Some(r), true) = (r, d.g_rate > 0.0) {
                header.push("t_for_r");
                row.push(d.time_for_squeeze(r));
            }
            for (k, v) in header.iter().zip(&row) {
                out.metric(k, *v);
                out.log.push(format!("{k} = {v}"));
            }
            out.file(format!("derived.{}", fmt.ext()), table(fmt, &header, &[row])?);
        }
        Plan::Squeeze { trap, drive, grid, solver, dim, count, n_max } => {
            let h = Hamiltonian::excited(trap, drive);
            let audit_on = cfg.numerics.audit.unwrap_or(true);
            let rows: Vec<OverlapRow> = match solver {
                Solver::Grid => {
                    let psi0 = lattice::dressed_vacuum_grid(&trap, &drive, grid.grid()?)?;
                    let traj = lattice::propagate_grid(&psi0, &h, &grid)?;
                    out.log.push(format!("grid solver: {} steps of dt = {}", traj.steps, fmt_f(traj.dt)));
                    if audit_on {
                        let a = lattice::audit_grid(&psi0, &h, &grid, cfg.audit_limit())?;
                        out.audit(AuditRecord::new("step_halving_deficit", a.deficit, a.limit), || Error::StepSize {
                            deficit: a.deficit,
                            limit: a.limit,
                        });
                    }
                    lattice::overlap_series(&traj, &trap, &drive, count, n_max)?
                }
                Solver::Fock => {
                    let fc =
                        FockConfig { dim, dt: grid.dt, t_final: grid.t_final, snapshot_every: grid.snapshot_every };
                    let psi0 = lattice::dressed_vacuum(&trap, &drive, dim)?;
                    let traj = lattice::propagate_fock(&psi0, &h, &fc)?;
                    out.log.push(format!("fock solver: dim {dim}, {} steps of dt = {}", traj.steps, fmt_f(traj.dt)));
                    if audit_on {
                        let a = lattice::audit_fock(&psi0, &h, &fc, cfg.audit_limit())?;
                        out.audit(AuditRecord::new("step_halving_deficit", a.deficit, a.limit), || Error::StepSize {
                            deficit: a.deficit,
                            limit: a.limit,
                        });
                    }
                    lattice::overlap_series_fock(&traj, &trap, &drive, n_max)?
                }
            };
            let leak = rows.iter().map(|r| r.boundary_leak).fold(0.0, f64::max);
            let norm = rows.iter().map(|r| r.norm_defect.abs()).fold(0.0, f64::max);
            out.audit(AuditRecord::new("boundary_leak", leak, lattice::BOUNDARY_LIMIT), || Error::BoundaryLeak {
                leak,
                t: grid.t_final,
                limit: lattice::BOUNDARY_LIMIT,
            });
            out.audits.push(AuditRecord::new("norm_defect", norm, 1e-8));
            let min_f = rows.iter().map(|r| r.fidelity).fold(1.0, f64::min);
            let last = rows.last().expect("trajectory has endpoints");
            let d = derive_params(&trap, &drive);
            out.metric("t_final", grid.t_final);
            out.metric("r_final", 0.5 * d.g_rate * grid.t_final);
            out.metric("min_fidelity", min_f);
            out.metric("final_fidelity", last.fidelity);
            out.metric("worst_boundary_leak", leak);
            out.metric("max_norm_defect", norm);

            let mut buf = Vec::new();
            match fmt {
                OutputFormat::Csv => lattice::write_overlap_csv(&rows, n_max, &mut buf)?,
                OutputFormat::Json => buf = json_bytes(&rows)?,
            }
            out.file(format!("overlap.{}", fmt.ext()), buf);

            let xi = lattice::rwa_squeeze_param(d.g_rate, grid.t_final, drive.theta)?;
            let ideal = fock::squeezed_state_analytic(xi, count.max(n_max + 1))?.populations();
            let pops: Vec<Vec<f64>> = (0..=n_max)
                .map(|n| {
                    vec![
                        n as f64,
                        last.populations.get(n).copied().unwrap_or(0.0),
                        ideal.get(n).copied().unwrap_or(0.0),
                    ]
                })
                .collect();
            out.file(format!("populations.{}", fmt.ext()), table(fmt, &["n", "p_sim", "p_ideal"], &pops)?);
        }
        Plan::Gate { gate, r, theta, probes, dim } => {
            let rep = protocol::csqz_physical(&gate, r, theta, probes, dim)?;
            out.audit(AuditRecord::new("projection_leak", rep.worst_leak, lattice::PROJECTION_LIMIT), || {
                Error::BasisConversion { lost: rep.worst_leak, limit: lattice::PROJECTION_LIMIT }
            });
            let header = [
                "r",
                "theta",
                "duration",
                "probes",
                "fidelity_raw",
                "fidelity_optimized",
                "best_rotation",
                "worst_leak",
            ];
            let row = vec![
                r,
                theta,
                rep.duration,
                probes as f64,
                rep.fidelity_raw,
                rep.fidelity_optimized,
                rep.best_rotation,
                rep.worst_leak,
            ];
            for (k, v) in header.iter().zip(&row) {
                out.metric(k, *v);
            }
            out.file(format!("gate.{}", fmt.ext()), table(fmt, &header, &[row])?);
        }
        Plan::Xstate { r, dim, mode, mode_kind, runs } => {
            let run = protocol::run_protocol(r, dim, &mode)?;
            let mode_name = serde_json::to_value(mode_kind).expect("enum").as_str().unwrap_or_default().to_string();
            let mut rows = Vec::new();
            for o in run.outcomes()?.into_iter().flatten() {
                let (f, fo) = protocol::xstate_fidelity(&o, r)?;
                let parity = protocol::heralded(o.branch);
                let analytic = protocol::branch_probability(parity, r);
                let vac = o.post_state.amplitudes()[0].norm_sqr();
                let b = o.branch.name();
                out.metric(&format!("probability_{b}"), o.probability);
                out.metric(&format!("fidelity_{b}"), f);
                out.metric(&format!("fidelity_rotation_optimized_{b}"), fo);
                out.metric(&format!("vacuum_population_{b}"), vac);
                rows.push(vec![
                    if o.branch == Qubit::G { 0.0 } else { 1.0 },
                    if parity == XBranch::Even { 1.0 } else { -1.0 },
                    o.probability,
                    analytic,
                    f,
                    fo,
                    vac,
                ]);
            }
            let header = [
                "branch_e",
                "parity_sign",
                "probability",
                "analytic_probability",
                "fidelity",
                "fidelity_rotation_optimized",
                "vacuum_population",
            ];
            out.file(format!("branches.{}", fmt.ext()), table(fmt, &header, &rows)?);
            let outcome = run.measure(&mut protocol::rng_for(cfg.seed, 0))?;
            let tr = protocol::Transcript::new(&run, &outcome, &mode_name, cfg.seed)?;
            out.log.push(format!("measured {} with probability {}", outcome.branch.name(), outcome.probability));
            out.file("transcript.json".into(), json_bytes(&tr)?);
            if runs > 0 {
                let (n_g, n_e) = protocol::sample_branches(&run, runs, cfg.seed)?;
                out.metric("monte_carlo_runs", runs as f64);
                out.metric("monte_carlo_g", n_g as f64);
                out.metric("monte_carlo_e", n_e as f64);
            }
        }
        Plan::Charfun { spec, x, p, method, wigner, dim } => {
            let closed = matches!(method, CharMethod::ClosedForm | CharMethod::Both);
            let numeric = matches!(method, CharMethod::Numeric | CharMethod::Both);
            let meta = |quantity: &str, method: &str, warnings: &[String]| GridMetadata {
                quantity: quantity.into(),
                method: method.into(),
                spec: Some(spec),
                dim: (method == "numeric").then_some(dim),
                x_axis: x,
                p_axis: p,
                convention: if quantity == "wigner" {
                    phase_space::CONVENTION_WIGNER
                } else {
                    phase_space::CONVENTION_CHARFUN
                }
                .into(),
                warnings: warnings.to_vec(),
            };
            let cf = if closed { Some(phase_space::char_function_closed_form(&spec, &x, &p)?) } else { None };
            let num = if numeric {
                let state = spec.state(dim)?;
                Some(phase_space::char_function_numeric(&state, &x, &p)?)
            } else {
                None
            };
            if let Some(g) = &cf {
                write_grid(&mut out, fmt, "charfun", g, None, &meta("charfun", "closed-form", &[]))?;
                out.metric("c_origin", phase_space::char_function_closed_form_point(&spec, 0.0, 0.0));
                out.metric("c_min", g.values.iter().cloned().fold(f64::MAX, f64::min));
            }
            if let Some(g) = &num {
                let name = if closed { "charfun_numeric" } else { "charfun" };
                let re = g.real_part();
                let im = g.values.mapv(|c| c.im);
                out.warnings.extend(g.warnings.iter().cloned());
                write_grid(&mut out, fmt, name, &re, Some(&im), &meta("charfun", "numeric", &g.warnings))?;
                out.metric("numeric_max_imag", im.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
            if let (Some(a), Some(b)) = (&cf, &num) {
                let dev = a
                    .values
                    .iter()
                    .zip(b.values.iter())
                    .map(|(u, v)| (v - C64::new(*u, 0.0)).norm())
                    .fold(0.0, f64::max);
                out.metric("max_deviation", dev);
            }
            if wigner {
                let w = if numeric {
                    phase_space::wigner_from_parity(&spec.state(dim)?, &x, &p)?
                } else {
                    phase_space::wigner_closed_form(&spec, &x, &p)?
                };
                let m = if numeric { "numeric" } else { "closed-form" };
                write_grid(&mut out, fmt, "wigner", &w, None, &meta("wigner", m, &w.warnings))?;
            }
        }
        Plan::Zeros { spec, search } => {
            let zs = phase_space::diagonal_zeros(&spec, &search)?;
            let rows: Vec<Vec<f64>> = zs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    vec![
                        i as f64,
                        x,
                        x * x,
                        phase_space::diagonal_residual(&spec, x * x),
                        phase_space::char_function_closed_form_point(&spec, x, x),
                    ]
                })
                .collect();
            out.file(format!("zeros.{}", fmt.ext()), table(fmt, &["index", "x", "u", "residual", "c_value"], &rows)?);
            out.metric("zero_count", zs.len() as f64);
            if let Some(&x0) = zs.first() {
                out.metric("first_zero_u", x0 * x0);
                if spec.r > 0.0 {
                    out.metric("first_zero_ratio", x0 * x0 / (spec.r * (-2.0 * spec.r).exp()));
                }
            }
            let prof = phase_space::quadrature_decay_profile(&spec, phase_space::Quadrature::X, 1.0)?;
            if let Some(v) = prof.half_max {
                out.metric("half_max_x", v);
            }
            if let Some(v) = prof.midpoint {
                out.metric("midpoint_x", v);
            }
            out.metric("plateau", prof.plateau);
            out.metric("plateau_variation", prof.plateau_variation);
        }
    }
    Ok(out)
}

fn write_grid(
    out: &mut Products,
    fmt: OutputFormat,
    name: &str,
    grid: &PhaseGrid<f64>,
    imag: Option<&ndarray::Array2<f64>>,
    meta: &GridMetadata,
) -> Result<()> {
    match fmt {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            phase_space::write_grid_csv(grid, &mut buf)?;
            out.file(format!("{name}.csv"), buf);
            if let Some(im) = imag {
                let g = PhaseGrid { x: grid.x.clone(), p: grid.p.clone(), values: im.clone(), warnings: vec![] };
                let mut buf = Vec::new();
                phase_space::write_grid_csv(&g, &mut buf)?;
                out.file(format!("{name}_imag.csv"), buf);
            }
            out.file(format!("{name}.meta.json"), json_bytes(meta)?);
        }
        OutputFormat::Json => {
            let mut buf = Vec::new();
            phase_space::write_grid_json(grid, imag, meta, &mut buf)?;
            out.file(format!("{name}.json"), buf);
        }
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputRecord> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(OutputRecord { path: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() })
}

fn config_echo(cfg: &ScenarioConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

/// Settings that come from the command line rather than the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<OutputFormat>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
    }
}

/// Run a config into `dir`. The manifest is written even when the run fails;
/// the error is returned afterwards.
pub fn run(cfg: &ScenarioConfig, dir: &Path, workers: Option<usize>) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    match &cfg.sweep {
        Some(_) => run_sweep(cfg, dir, workers),
        None => run_single(cfg, dir),
    }
}

fn run_single(cfg: &ScenarioConfig, dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let result = execute(cfg);
    let mut manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool: "ionsqz".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: cfg.scenario,
        status: "ok".into(),
        error: None,
        exit_code: 0,
        seed: cfg.seed,
        format: cfg.format,
        config: config_echo(cfg),
        duration_s: 0.0,
        audits: vec![],
        outputs: vec![],
        summary: BTreeMap::new(),
        warnings: vec![],
        sweep: None,
    };
    let mut log = format!("scenario {}\nseed {}\n", cfg.scenario.name(), cfg.seed);
    let failure = match result {
        Ok(p) => {
            for (name, bytes) in &p.files {
                let rec = write_file(dir, name, bytes)?;
                let _ = writeln!(log, "wrote {} ({} bytes, sha256 {})", rec.path, rec.bytes, rec.sha256);
                manifest.outputs.push(rec);
            }
            for line in &p.log {
                let _ = writeln!(log, "{line}");
            }
            for w in &p.warnings {
                let _ = writeln!(log, "warning: {w}");
            }
            manifest.audits = p.audits;
            manifest.summary = p.summary;
            manifest.warnings = p.warnings;
            p.failure
        }
        Err(e) => Some(e),
    };
    if let Some(e) = &failure {
        manifest.status = "failed".into();
        manifest.error = Some(e.to_string());
        manifest.exit_code = exit_code(e);
        let _ = writeln!(log, "error: {e}");
    }
    let _ = writeln!(log, "status {}", manifest.status);
    write_file(dir, "run.log", log.as_bytes())?;
    manifest.duration_s = start.elapsed().as_secs_f64();
    write_file(dir, "manifest.json", &json_bytes(&manifest)?)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::Float(f) => fmt_f(*f),
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn run_sweep(cfg: &ScenarioConfig, dir: &Path, workers: Option<usize>) -> Result<RunManifest> {
    let start = Instant::now();
    let sweep = cfg.sweep.clone().expect("sweep block");
    let subs = cfg.expand()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let names: Vec<String> = (0..subs.len()).map(|i| format!("sweep/{i:03}")).collect();
    let results: Vec<Result<RunManifest>> =
        pool.install(|| subs.par_iter().zip(&names).map(|(c, n)| run_single(c, &dir.join(n))).collect());

    let mut metric_keys: Vec<String> = Vec::new();
    let mut sub_manifests = Vec::new();
    for name in &names {
        // failed runs still leave a manifest behind
        let m = RunManifest::load(&dir.join(name))?;
        for k in m.summary.keys() {
            if !metric_keys.contains(k) {
                metric_keys.push(k.clone());
            }
        }
        sub_manifests.push(m);
    }
    metric_keys.sort();
    let mut header = vec!["index".to_string(), sweep.field.clone(), "status".to_string()];
    header.extend(metric_keys.iter().cloned());
    header.push("error".into());
    let rows: Vec<Vec<String>> = sub_manifests
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut row = vec![i.to_string(), value_label(&sweep.values[i]), m.status.clone()];
            row.extend(metric_keys.iter().map(|k| m.summary.get(k).map(|v| fmt_f(*v)).unwrap_or_default()));
            row.push(m.error.clone().unwrap_or_default());
            row
        })
        .collect();

    let mut outputs = vec![write_file(dir, "summary.csv", &csv_table(&header, &rows)?)?];
    for (name, m) in names.iter().zip(&sub_manifests) {
        for o in &m.outputs {
            outputs.push(OutputRecord { path: format!("{name}/{}", o.path), ..o.clone() });
        }
    }
    let failed = results.iter().filter(|r| r.is_err()).count();
    let first_err = results.into_iter().find_map(|r| r.err());
    let mut log = format!("scenario {}\nsweep {} over {} values\n", cfg.scenario.name(), sweep.field, subs.len());
    for (i, m) in sub_manifests.iter().enumerate() {
        let _ = writeln!(log, "{} {} = {}: {}", names[i], sweep.field, value_label(&sweep.values[i]), m.status);
    }
    write_file(dir, "run.log", log.as_bytes())?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool: "ionsqz".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: cfg.scenario,
        status: if failed == 0 { "ok".into() } else { "failed".into() },
        error: first_err.as_ref().map(|e| e.to_string()),
        exit_code: first_err.as_ref().map_or(0, exit_code),
        seed: cfg.seed,
        format: cfg.format,
        config: config_echo(cfg),
        duration_s: start.elapsed().as_secs_f64(),
        audits: sub_manifests.iter().flat_map(|m| m.audits.clone()).collect(),
        outputs,
        summary: BTreeMap::from([("runs".to_string(), subs.len() as f64), ("failed".to_string(), failed as f64)]),
        warnings: sub_manifests.iter().flat_map(|m| m.warnings.clone()).collect(),
        sweep: Some(SweepRecord { field: sweep.field, values: sweep.values, runs: names, failed }),
    };
    write_file(dir, "manifest.json", &json_bytes(&manifest)?)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Load, apply command-line overrides, and run.
pub fn run_path(config: &Path, out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let mut cfg = ScenarioConfig::load(config)?;
    opts.apply(&mut cfg);
    cfg.validate()?;
    run(&cfg, out, opts.workers)
}

/// Default output directory for a config: `runs/<file stem>`.
pub fn default_out_dir(config: &Path) -> PathBuf {
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    PathBuf::from("runs").join(stem)
}

/// Derived-quantities line printed by `derive-params`.
pub fn describe(manifest: &RunManifest) -> String {
    manifest.summary.iter().map(|(k, v)| format!("{k} = {v}")).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    const DERIVE: &str = r#"
scenario = "derive-params"
[trap]
omega_t = 1.0
eta_g = 0.02
phi = 0.0
[drive]
epsilon = 1.0
theta = 0.0
omega_d_over_omega_e = 2.0
"#;

    #[test]
    fn strict_parsing_rejects_unknown_keys() {
        assert!(ScenarioConfig::from_toml_str(DERIVE).is_ok());
        let bad = DERIVE.replace("phi = 0.0", "phi = 0.0\nphase = 1.0");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("phase"));
    }

    #[test]
    fn physics_has_no_defaults() {
        let cfg = ScenarioConfig::from_toml_str("scenario = \"derive-params\"").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("trap"), "{err}");
        let cfg = ScenarioConfig::from_toml_str("scenario = \"zeros\"\nr = 1.0").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("parity"));
    }

    #[test]
    fn drive_frequency_must_be_unambiguous() {
        let both = DERIVE.replace("omega_d_over_omega_e = 2.0", "omega_d_over_omega_e = 2.0\nomega_d = 2.0");
        assert!(ScenarioConfig::from_toml_str(&both).unwrap().validate().is_err());
        let none = DERIVE.replace("omega_d_over_omega_e = 2.0", "");
        assert!(ScenarioConfig::from_toml_str(&none).unwrap().validate().is_err());
    }

    #[test]
    fn derive_params_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::from_toml_str(DERIVE).unwrap();
        let m = run(&cfg, dir.path(), None).unwrap();
        assert!((m.summary["omega_e"] - 1.019804).abs() < 1e-6);
        assert_eq!(m.outputs[0].path, "derived.csv");
        let text = fs::read_to_string(dir.path().join("derived.csv")).unwrap();
        assert!(text.starts_with("omega_t,eta_g,epsilon,omega_d,omega_e,"));
        let back = RunManifest::load(dir.path()).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
        assert!(dir.path().join("run.log").exists());
    }

    #[test]
    fn sweep_expands_and_rejects_bad_fields() {
        let mut cfg = ScenarioConfig::from_toml_str(DERIVE).unwrap();
        cfg.sweep =
            Some(Sweep { field: "trap.eta_g".into(), values: vec![toml::Value::Float(0.01), toml::Value::Integer(0)] });
        let subs = cfg.expand().unwrap();
        assert_eq!(subs[0].trap.unwrap().eta_g, 0.01);
        assert_eq!(subs[1].trap.unwrap().eta_g, 0.0);
        assert!(subs.iter().all(|s| s.sweep.is_none()));
        cfg.sweep = Some(Sweep { field: "trap.bogus".into(), values: vec![toml::Value::Float(1.0)] });
        assert!(cfg.expand().is_err());
    }

    #[test]
    fn sweep_keeps_partial_results() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ScenarioConfig::from_toml_str(DERIVE).unwrap();
        // the second value is invalid and must show up as a failure marker
        cfg.sweep = Some(Sweep {
            field: "trap.eta_g".into(),
            values: vec![toml::Value::Float(0.02), toml::Value::Float(-1.0)],
        });
        let err = run(&cfg, dir.path(), Some(2)).unwrap_err();
        assert_eq!(exit_code(&err), 1);
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert!(lines[0].starts_with("index,trap.eta_g,status,"));
        assert!(lines[1].contains(",ok,"));
        assert!(lines[2].contains(",failed,"));
        let m = RunManifest::load(dir.path()).unwrap();
        assert_eq!(m.sweep.unwrap().failed, 1);
    }

    #[test]
    fn zeros_and_charfun_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::from_toml_str("scenario = \"zeros\"\nr = 0.5\nparity = \"odd\"").unwrap();
        let m = run(&cfg, dir.path(), None).unwrap();
        assert!(m.summary["zero_count"] >= 1.0);
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::from_toml_str(
            "scenario = \"charfun\"\nr = 0.5\nparity = \"odd\"\nformat = \"json\"\n[phase_space]\nmethod = \"both\"\nx = { start = -2.0, stop = 2.0, count = 21 }\np = { start = -2.0, stop = 2.0, count = 21 }",
        )
        .unwrap();
        let m = run(&cfg, dir.path(), None).unwrap();
        assert!(m.summary["max_deviation"] < 1e-9);
        assert!((m.summary["c_origin"] - 1.0).abs() < 1e-12);
        assert!(dir.path().join("charfun.json").exists() && dir.path().join("charfun_numeric.json").exists());
    }

    #[test]
    fn xstate_run_reports_both_branches() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::from_toml_str(
            "scenario = \"xstate\"\nr = 1.0\nmode = \"ideal\"\nseed = 3\n[numerics]\nruns = 200",
        )
        .unwrap();
        let m = run(&cfg, dir.path(), None).unwrap();
        let total = m.summary["probability_g"] + m.summary["probability_e"];
        assert!((total - 1.0).abs() < 1e-10);
        assert!(m.summary["vacuum_population_g"] < 1e-20);
        assert_eq!(m.summary["monte_carlo_g"] + m.summary["monte_carlo_e"], 200.0);
        let tr: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("transcript.json")).unwrap()).unwrap();
        assert_eq!(tr["frame"], "interaction picture of H_e0");
    }

    #[test]
    fn gate_needs_resonance() {
        let text = DERIVE
            .replace("derive-params", "csqz-fidelity")
            .replace("omega_d_over_omega_e = 2.0", "omega_d_over_omega_e = 1.9")
            + "r = 1.0\n";
        // `r` after a table header belongs to the table, so it is rejected
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
        let text = format!("r = 1.0\n{}", DERIVE.replace("derive-params", "csqz-fidelity").replace("= 2.0", "= 1.9"));
        let err = ScenarioConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("2 omega_e"), "{err}");
    }
}
