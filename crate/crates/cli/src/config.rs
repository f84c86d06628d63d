//! Run configuration: JSON with unknown keys rejected and every default
//! written back into the resolved document.

use std::fmt;

use gexpect::choquet::QuadratureRule;
use gexpect::claims::TerminalClaim;
use gexpect::expectation::{BackendKind, BackendSpec, LsmcBackend, Model, PdeBackend};
use gexpect::generators::{GeneratorKind, GeneratorSpec};
use gexpect::sde::{CoefficientField, Diffusion, Drift, TimeGrid};
use gexpect::verify::{ExpectedVerdict, ScenarioSpec, Tolerances};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: &str = "1";

/// A configuration problem, located by its JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { path: path.into(), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default)]
    pub model: ModelConfig,
    /// Driver preset; its dimension is the model's Brownian dimension.
    #[serde(default)]
    pub generator: Option<GeneratorKind<f64>>,
    #[serde(default)]
    pub claim: Option<TerminalClaim<f64>>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub quadrature: QuadratureRule,
    #[serde(default)]
    pub capacity: CapacityConfig,
    #[serde(default)]
    pub expectation: ExpectationConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub matrix: MatrixConfig,
}

fn default_version() -> String {
    CONFIG_VERSION.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub drift: Drift<f64>,
    pub diffusion: Diffusion<f64>,
    pub n: usize,
    pub d: usize,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            drift: Drift::Zero,
            diffusion: Diffusion::Constant { matrix: vec![1.0] },
            n: 1,
            d: 1,
            x0: vec![0.0],
            horizon: 1.0,
            steps: 100,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model<f64>, ConfigError> {
        if self.steps == 0 {
            return Err(ConfigError::new("model.steps", "must be >= 1"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ConfigError::new("model.horizon", format!("must be finite and > 0, got {}", self.horizon)));
        }
        let coeff = CoefficientField::new(self.drift.clone(), self.diffusion.clone(), self.n, self.d)
            .map_err(|e| ConfigError::new("model", e))?;
        let grid = TimeGrid::new(self.horizon, self.steps).map_err(|e| ConfigError::new("model.steps", e))?;
        Model::new(coeff, self.x0.clone(), grid).map_err(|e| ConfigError::new("model.x0", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub pde: PdeBackend,
    pub lsmc: LsmcBackend,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { kind: BackendKind::Pde, pde: PdeBackend::default(), lsmc: LsmcBackend::default() }
    }
}

impl BackendConfig {
    pub fn spec(&self) -> BackendSpec {
        match self.kind {
            BackendKind::Pde => BackendSpec::Pde(self.pde),
            BackendKind::Lsmc => BackendSpec::Lsmc(self.lsmc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityConfig {
    /// The event is `{Φ(X_T) ≥ threshold}`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectationConfig {
    /// Grid times at which conditional values are tabulated.
    pub conditional_times: Vec<f64>,
    /// Write the full PDE value surface.
    pub surface: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Overrides the verdict derived from the theorem and frozen margins.
    pub expected: Option<ExpectedVerdict>,
    pub tolerances: Option<Tolerances>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixConfig {
    /// Include the built-in five-driver by six-claim matrix.
    pub include_default: bool,
    pub scenarios: Vec<ScenarioSpec<f64>>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self { include_default: true, scenarios: vec![] }
    }
}

impl RunConfig {
    pub fn model(&self) -> Result<Model<f64>, ConfigError> {
        self.model.build()
    }

    pub fn generator(&self) -> Result<GeneratorSpec<f64>, ConfigError> {
        let kind = self.generator.clone().ok_or_else(|| ConfigError::new("generator", "section is required"))?;
        GeneratorSpec::new(kind, self.model.d).map_err(|e| ConfigError::new("generator", e))
    }

    pub fn claim(&self) -> Result<TerminalClaim<f64>, ConfigError> {
        let claim = self.claim.clone().ok_or_else(|| ConfigError::new("claim", "section is required"))?;
        claim.validate().map_err(|e| ConfigError::new("claim", e))?;
        Ok(claim)
    }

    /// Checks everything that is present; sections a command needs but the
    /// document lacks are reported when the command asks for them.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::new(
                "version",
                format!("unsupported version {:?}, expected {CONFIG_VERSION:?}", self.version),
            ));
        }
        self.model()?;
        if self.generator.is_some() {
            self.generator()?;
        }
        if self.claim.is_some() {
            self.claim()?;
        }
        if self.backend.pde.nx < 3 {
            return Err(ConfigError::new("backend.pde.nx", format!("must be >= 3, got {}", self.backend.pde.nx)));
        }
        if self.backend.lsmc.n_paths < 2 {
            return Err(ConfigError::new(
                "backend.lsmc.n_paths",
                format!("must be >= 2, got {}", self.backend.lsmc.n_paths),
            ));
        }
        match self.quadrature {
            QuadratureRule::Uniform { count } | QuadratureRule::Auto { count } if count < 3 => {
                return Err(ConfigError::new("quadrature.count", format!("must be >= 3, got {count}")));
            }
            QuadratureRule::Spacing { h } if !(h > 0.0) => {
                return Err(ConfigError::new("quadrature.h", format!("must be > 0, got {h}")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(path, e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}
