//! Driver behind the `gexpect` binary: resolves a run configuration, keys
//! the run directory by the configuration hash and writes reports.

pub mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use gexpect::choquet::choquet_with;
use gexpect::error::Error;
use gexpect::expectation::{BackendKind, BackendSpec, Engine, EventSpec};
use gexpect::pde::solve_semilinear_pde;
use gexpect::sde::{simulate_paths, terminal_moments};
use gexpect::verify::{default_matrix, run_scenario_matrix, verify_representation, ScenarioSpec};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::{parse_config, ConfigError, RunConfig};

/// Exit status for invalid configuration, input or domain errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status for numerical failures inside a solver.
pub const EXIT_NUMERICAL: i32 = 2;
/// Exit status when a verdict disagrees with its expectation.
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Expectation,
    Capacity,
    Choquet,
    Verify,
    Matrix,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Expectation => "expectation",
            Command::Capacity => "capacity",
            Command::Choquet => "choquet",
            Command::Verify => "verify",
            Command::Matrix => "matrix",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => f.write_str(m),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Command-line overrides applied before hashing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.backend.lsmc.seed = seed;
        }
        if let Some(kind) = self.backend {
            cfg.backend.kind = kind;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub run_dir: PathBuf,
    pub cached: bool,
    /// 0 or [`EXIT_MISMATCH`].
    pub exit_code: i32,
}

/// Hex SHA-256 of the command and its resolved configuration.
pub fn config_hash(command: Command, cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("configuration serialises");
    let mut h = Sha256::new();
    h.update(command.name().as_bytes());
    h.update(b"\n");
    h.update(canonical.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory of a run under `out_root`.
pub fn run_dir(out_root: &Path, command: Command, cfg: &RunConfig) -> PathBuf {
    out_root.join(format!("{}-{}", command.name(), &config_hash(command, cfg)[..16]))
}

/// Runs `command`, or reuses the stored report when the same resolved
/// configuration already ran and `force` is off.
pub fn execute(command: Command, cfg: &RunConfig, out_root: &Path, force: bool) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let dir = run_dir(out_root, command, cfg);
    let report_path = dir.join("report.json");
    if !force && report_path.exists() {
        let report: Value = serde_json::from_str(&fs::read_to_string(&report_path)?)?;
        let summary = report["summary"].as_str().unwrap_or_default().to_string();
        let exit_code = if report["status"] == "mismatch" { EXIT_MISMATCH } else { 0 };
        return Ok(Outcome { summary, run_dir: dir, cached: true, exit_code });
    }
    fs::create_dir_all(&dir)?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let out = match command {
        Command::Simulate => simulate(cfg, &dir)?,
        Command::Expectation => expectation(cfg, &dir)?,
        Command::Capacity => capacity(cfg)?,
        Command::Choquet => choquet(cfg, &dir)?,
        Command::Verify => verify(cfg)?,
        Command::Matrix => matrix(cfg, &dir)?,
    };
    let status = if out.mismatch { "mismatch" } else { "ok" };
    let report = json!({
        "command": command.name(),
        "config_hash": config_hash(command, cfg),
        "config": cfg,
        "status": status,
        "summary": out.summary,
        "result": out.result,
    });
    write_json(&report_path, &report)?;
    let metadata = json!({
        "command": command.name(),
        "started_unix": started_unix,
        "runtime_seconds": started.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&dir.join("metadata.json"), &metadata)?;
    Ok(Outcome {
        summary: out.summary,
        run_dir: dir,
        cached: false,
        exit_code: if out.mismatch { EXIT_MISMATCH } else { 0 },
    })
}

struct CommandOutput {
    summary: String,
    result: Value,
    mismatch: bool,
}

impl CommandOutput {
    fn ok(summary: String, result: Value) -> Self {
        Self { summary, result, mismatch: false }
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn create(path: PathBuf) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn engine(cfg: &RunConfig) -> Result<Engine<f64>, CliError> {
    Ok(Engine::new(cfg.model()?, cfg.backend.spec()))
}

fn backend_label(spec: BackendSpec) -> String {
    spec.id()
}

fn simulate(cfg: &RunConfig, dir: &Path) -> Result<CommandOutput, CliError> {
    let model = cfg.model()?;
    let l = cfg.backend.lsmc;
    let ens = simulate_paths(&model.coeff, &model.x0, model.grid, l.n_paths, l.seed)?;
    let mut w = create(dir.join("paths.bin"))?;
    ens.write_binary(&mut w)?;
    w.flush()?;
    let moments: Vec<(f64, f64)> = (0..ens.n).map(|c| terminal_moments(&ens, c)).collect();
    let mut csv = create(dir.join("terminal_moments.csv"))?;
    writeln!(csv, "component,mean,variance")?;
    for (c, (m, v)) in moments.iter().enumerate() {
        writeln!(csv, "{c},{m},{v}")?;
    }
    csv.flush()?;
    let summary = format!(
        "simulate: {} paths, {} steps, seed {}; E[X_T] = {:.6}, Var[X_T] = {:.6}",
        l.n_paths, model.grid.steps, l.seed, moments[0].0, moments[0].1
    );
    let result = json!({
        "n_paths": l.n_paths,
        "seed": l.seed,
        "steps": model.grid.steps,
        "terminal_mean": moments.iter().map(|m| m.0).collect::<Vec<_>>(),
        "terminal_variance": moments.iter().map(|m| m.1).collect::<Vec<_>>(),
        "paths_file": "paths.bin",
    });
    Ok(CommandOutput::ok(summary, result))
}

fn expectation(cfg: &RunConfig, dir: &Path) -> Result<CommandOutput, CliError> {
    let (g, claim) = (cfg.generator()?, cfg.claim()?);
    let engine = engine(cfg)?;
    let r = engine.g_expectation(&g, &claim)?;
    let mut tables = Vec::new();
    for (i, &t) in cfg.expectation.conditional_times.iter().enumerate() {
        let table = engine.conditional(&g, &claim, t)?;
        let name = format!("conditional_{i}.csv");
        let mut w = create(dir.join(&name))?;
        writeln!(w, "t,x,value")?;
        for (x, v) in table.states.iter().zip(&table.values) {
            writeln!(w, "{t},{x},{v}")?;
        }
        w.flush()?;
        tables.push(json!({ "t": t, "file": name, "rows": table.values.len() }));
    }
    let mut surface = Value::Null;
    if cfg.expectation.surface {
        if cfg.backend.kind != BackendKind::Pde {
            return Err(CliError::Config("config error at `expectation.surface`: needs the pde backend".into()));
        }
        let grid = engine.pde_grid(&g)?;
        let s = solve_semilinear_pde(&engine.model.coeff, &g, &claim, &grid)?;
        let mut w = create(dir.join("surface.csv"))?;
        s.write_csv(&mut w)?;
        w.flush()?;
        surface = json!("surface.csv");
    }
    let summary = format!(
        "E_g[{}] = {} ± {:.3e} ({}, {})",
        r.claim_id,
        r.value,
        r.error_estimate,
        g.name(),
        backend_label(engine.backend)
    );
    let result = json!({ "expectation": r, "conditional": tables, "surface": surface });
    Ok(CommandOutput::ok(summary, result))
}

fn capacity(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let (g, claim) = (cfg.generator()?, cfg.claim()?);
    let engine = engine(cfg)?;
    let event = EventSpec::new(claim, cfg.capacity.threshold);
    let r = engine.capacity(&g, &event)?;
    let summary = format!(
        "V_g({}) = {} ± {:.3e} ({}, {})",
        event.id(),
        r.value,
        r.error_estimate,
        g.name(),
        backend_label(engine.backend)
    );
    Ok(CommandOutput::ok(summary, json!({ "event": event.id(), "capacity": r })))
}

fn choquet(cfg: &RunConfig, dir: &Path) -> Result<CommandOutput, CliError> {
    let (g, claim) = (cfg.generator()?, cfg.claim()?);
    let engine = engine(cfg)?;
    let r = choquet_with(&engine, &g, &claim, cfg.quadrature)?;
    let mut w = create(dir.join("capacity_curve.csv"))?;
    r.write_csv(&mut w)?;
    w.flush()?;
    let summary = format!(
        "C_g[{}] = {} ± {:.3e} ({}, {}, {} thresholds)",
        r.claim_id,
        r.value,
        r.quadrature_error,
        g.name(),
        backend_label(engine.backend),
        r.capacity_curve.len()
    );
    Ok(CommandOutput::ok(summary, json!({ "choquet": r, "curve_file": "capacity_curve.csv" })))
}

fn scenario(cfg: &RunConfig) -> Result<ScenarioSpec<f64>, CliError> {
    let mut s = ScenarioSpec::derived("config", cfg.generator()?, cfg.claim()?, cfg.model()?, cfg.backend.spec());
    s.quadrature = cfg.quadrature;
    if let Some(t) = cfg.verify.tolerances {
        s.tolerances = t;
    }
    if let Some(e) = cfg.verify.expected {
        s.expected = e;
    }
    Ok(s)
}

fn verify(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let r = verify_representation(&scenario(cfg)?)?;
    let summary = format!(
        "verify {}: E_g = {} ± {:.3e}, C_g = {} ± {:.3e}, |Δ| = {:.3e} -> {:?} (expected {:?}, {})",
        r.scenario_hash,
        r.e_g,
        r.e_err,
        r.c_g,
        r.c_err,
        r.discrepancy,
        r.verdict,
        r.expected,
        if r.matches { "match" } else { "MISMATCH" }
    );
    let mismatch = !r.matches;
    Ok(CommandOutput { summary, result: serde_json::to_value(&r)?, mismatch })
}

fn matrix(cfg: &RunConfig, dir: &Path) -> Result<CommandOutput, CliError> {
    let mut cells = if cfg.matrix.include_default { default_matrix() } else { Vec::new() };
    cells.extend(cfg.matrix.scenarios.iter().cloned());
    if cells.is_empty() {
        return Err(CliError::Config("config error at `matrix`: no scenarios to run".into()));
    }
    let (summary, reports) = run_scenario_matrix(&cells)?;
    let mut w = create(dir.join("summary.csv"))?;
    summary.write_csv(&mut w)?;
    w.flush()?;
    let line = format!(
        "matrix: {} cells, {} mismatches, {} flagged inconclusive",
        summary.rows.len(),
        summary.mismatches,
        summary.flagged_inconclusive
    );
    let mismatch = !summary.all_match();
    let result = json!({ "summary": summary, "reports": reports, "summary_file": "summary.csv" });
    Ok(CommandOutput { summary: line, result, mismatch })
}
