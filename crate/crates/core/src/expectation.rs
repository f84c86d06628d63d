//! `E_g`, conditional `E_g` and the capacity `V_g(A) = E_g[1_A]`, dispatched
//! to the PDE or the LSMC backend.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::claims::{ClassTag, EventIndicator, Interval, Payoff, SmoothedClaim, TerminalClaim};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::lsmc::{lsmc_y0, solve_bsde_lsmc, RegressionBasis};
use crate::pde::{march, solve_value_at, PdeSettings, SpaceTimeGrid};
use crate::scalar::Real;
use crate::sde::{simulate_paths, CoefficientField, PathEnsemble, TimeGrid};

/// Forward model: coefficients, initial state and time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model<T> {
    pub coeff: CoefficientField<T>,
    pub x0: Vec<T>,
    pub grid: TimeGrid<T>,
}

impl<T: Real> Model<T> {
    pub fn new(coeff: CoefficientField<T>, x0: Vec<T>, grid: TimeGrid<T>) -> Result<Self> {
        if x0.len() != coeff.n {
            return Err(Error::Input(format!("x0 has length {}, state dimension is {}", x0.len(), coeff.n)));
        }
        Ok(Self { coeff, x0, grid })
    }

    /// Standard Brownian motion from 0 with `steps` steps on `[0, T]`.
    pub fn brownian(horizon: T, steps: usize) -> Result<Self> {
        Self::new(CoefficientField::brownian(T::one()), vec![T::zero()], TimeGrid::new(horizon, steps)?)
    }

    pub fn id(&self) -> String {
        let x0: Vec<String> = self.x0.iter().map(|v| v.to_string()).collect();
        format!("{};x0=[{}];T={};steps={}", self.coeff.id(), x0.join(","), self.grid.horizon, self.grid.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeBackend {
    pub nx: usize,
    pub width: f64,
    pub safety: f64,
    /// Mollification radius for jumps; `None` means two space steps.
    pub eps: Option<f64>,
}

impl Default for PdeBackend {
    fn default() -> Self {
        let s = PdeSettings::default();
        Self { nx: s.nx, width: s.width, safety: s.safety, eps: None }
    }
}

impl PdeBackend {
    pub fn settings(&self) -> PdeSettings {
        PdeSettings { nx: self.nx, width: self.width, safety: self.safety }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsmcBackend {
    pub n_paths: usize,
    pub seed: u64,
    pub basis: RegressionBasis,
}

impl Default for LsmcBackend {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 0, basis: RegressionBasis::Auto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Pde(PdeBackend),
    Lsmc(LsmcBackend),
}

impl BackendSpec {
    pub fn kind(&self) -> BackendKind {
        match self {
            BackendSpec::Pde(_) => BackendKind::Pde,
            BackendSpec::Lsmc(_) => BackendKind::Lsmc,
        }
    }

    pub fn id(&self) -> String {
        match self {
            BackendSpec::Pde(p) => format!("pde(nx={},width={},safety={},eps={:?})", p.nx, p.width, p.safety, p.eps),
            BackendSpec::Lsmc(l) => format!("lsmc(n={},seed={},basis={:?})", l.n_paths, l.seed, l.basis),
        }
    }
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Pde(PdeBackend::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Pde,
    Lsmc,
}

/// The event `{Φ(X_T) ≥ t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct EventSpec<T> {
    pub claim: TerminalClaim<T>,
    pub threshold: T,
}

impl<T: Real> EventSpec<T> {
    pub fn new(claim: TerminalClaim<T>, threshold: T) -> Self {
        Self { claim, threshold }
    }

    pub fn id(&self) -> String {
        format!("{{{} >= {}}}", self.claim.id(), self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult<T> {
    pub value: T,
    /// Bracket half-width or Richardson estimate (PDE), 3·stderr (LSMC).
    pub error_estimate: T,
    pub backend: BackendKind,
    pub scenario_hash: String,
    pub generator_id: String,
    pub claim_id: String,
    pub model_id: String,
}

/// 64-bit FNV-1a of `s`, as 16 hex digits.
pub fn fnv_hash(s: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Conditional values at one grid time, tabulated on states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable<T> {
    pub t: T,
    /// Space nodes (PDE) or first state component of each path (LSMC).
    pub states: Vec<T>,
    pub values: Vec<T>,
}

/// One model and backend with the path ensemble simulated on first use and
/// shared by every later evaluation. Capacities are memoised by driver and
/// event, so repeated level sets cost one solve.
#[derive(Debug)]
pub struct Engine<T: Real> {
    pub model: Model<T>,
    pub backend: BackendSpec,
    ensemble: OnceLock<PathEnsemble<T>>,
    capacities: Mutex<HashMap<String, (T, T)>>,
}

impl<T: Real> Engine<T> {
    pub fn new(model: Model<T>, backend: BackendSpec) -> Self {
        Self { model, backend, ensemble: OnceLock::new(), capacities: Mutex::new(HashMap::new()) }
    }

    pub fn ensemble(&self) -> Result<&PathEnsemble<T>> {
        let BackendSpec::Lsmc(l) = self.backend else {
            return Err(Error::Input("the PDE backend has no path ensemble".into()));
        };
        if let Some(e) = self.ensemble.get() {
            return Ok(e);
        }
        let e = simulate_paths(&self.model.coeff, &self.model.x0, self.model.grid, l.n_paths, l.seed)?;
        Ok(self.ensemble.get_or_init(|| e))
    }

    fn result(&self, g: &GeneratorSpec<T>, claim_id: String, value: T, err: T) -> ExpectationResult<T> {
        let model_id = self.model.id();
        let key = format!("{model_id}|{}|{claim_id}|{}", g.name(), self.backend.id());
        ExpectationResult {
            value,
            error_estimate: err,
            backend: self.backend.kind(),
            scenario_hash: fnv_hash(&key),
            generator_id: g.name(),
            claim_id,
            model_id,
        }
    }

    fn check_driver(&self, g: &GeneratorSpec<T>) -> Result<()> {
        g.check_vanishes_at_zero(64)?;
        if g.dimension != self.model.coeff.d {
            return Err(Error::Input(format!(
                "driver dimension {} does not match Brownian dimension {}",
                g.dimension, self.model.coeff.d
            )));
        }
        Ok(())
    }

    fn pde_backend(&self) -> Result<PdeBackend> {
        match self.backend {
            BackendSpec::Pde(p) => {
                if self.model.coeff.n != 1 || self.model.coeff.d != 1 {
                    return Err(Error::Unsupported(format!(
                        "the PDE backend needs n = d = 1, got n = {}, d = {}",
                        self.model.coeff.n, self.model.coeff.d
                    )));
                }
                Ok(p)
            }
            BackendSpec::Lsmc(_) => unreachable!("called only for the PDE backend"),
        }
    }

    /// The PDE grid used for driver `g`.
    pub fn pde_grid(&self, g: &GeneratorSpec<T>) -> Result<SpaceTimeGrid<T>> {
        let p = self.pde_backend()?;
        SpaceTimeGrid::for_model(&self.model.coeff, g, self.model.x0[0], self.model.grid, &p.settings())
    }

    /// Mollification radius for jumps on `grid`.
    pub fn pde_eps(&self, grid: &SpaceTimeGrid<T>) -> Result<T> {
        let p = self.pde_backend()?;
        Ok(p.eps.map(T::lit).unwrap_or_else(|| T::lit(2.0) * grid.dx()))
    }

    /// `(value, error)` of the PDE solve, bracketing any jumps.
    fn pde_claim(&self, g: &GeneratorSpec<T>, claim: &TerminalClaim<T>) -> Result<(T, T)> {
        let grid = self.pde_grid(g)?;
        let x0 = self.model.x0[0];
        let coeff = &self.model.coeff;
        if claim.is_continuous() {
            let fine = solve_value_at(coeff, g, claim, &grid, x0)?;
            let p = self.pde_backend()?;
            let coarse_settings = PdeSettings { nx: (p.nx - 1) / 2 + 1, ..p.settings() };
            if coarse_settings.nx < 3 {
                return Ok((fine, T::zero()));
            }
            let coarse_grid = SpaceTimeGrid::for_model(coeff, g, x0, self.model.grid, &coarse_settings)?;
            let coarse = solve_value_at(coeff, g, claim, &coarse_grid, x0)?;
            // second-order scheme: error of the fine solve ≈ |fine − coarse| / 3
            return Ok((fine, (fine - coarse).abs() / T::lit(3.0)));
        }
        let eps = self.pde_eps(&grid)?;
        let (up, lo) = SmoothedClaim::bracket(claim, eps);
        self.pde_bracket(g, &grid, &up, &lo)
    }

    fn pde_bracket<P: Payoff<T>>(&self, g: &GeneratorSpec<T>, grid: &SpaceTimeGrid<T>, up: &P, lo: &P) -> Result<(T, T)> {
        let x0 = self.model.x0[0];
        let a = solve_value_at(&self.model.coeff, g, up, grid, x0)?;
        let b = solve_value_at(&self.model.coeff, g, lo, grid, x0)?;
        let half = T::lit(0.5);
        Ok(((a + b) * half, (a - b).abs() * half))
    }

    pub fn g_expectation(&self, g: &GeneratorSpec<T>, claim: &TerminalClaim<T>) -> Result<ExpectationResult<T>> {
        self.check_driver(g)?;
        claim.validate()?;
        let (value, err) = match self.backend {
            BackendSpec::Pde(_) => self.pde_claim(g, claim)?,
            BackendSpec::Lsmc(l) => {
                let ens = self.ensemble()?;
                let (v, se) = lsmc_y0(ens, &self.model.coeff, g, claim, l.basis.for_claim(claim))?;
                (v, T::lit(3.0) * se)
            }
        };
        Ok(self.result(g, claim.id(), value, err))
    }

    /// `V_g(Φ ≥ t)`. Events that are certain or impossible on the claim's
    /// range are answered exactly.
    pub fn capacity(&self, g: &GeneratorSpec<T>, event: &EventSpec<T>) -> Result<ExpectationResult<T>> {
        self.check_driver(g)?;
        let (inf, sup) = event.claim.range();
        let id = event.id();
        if event.threshold <= inf {
            return Ok(self.result(g, id, T::one(), T::zero()));
        }
        if event.threshold > sup {
            return Ok(self.result(g, id, T::zero(), T::zero()));
        }
        let (value, err) = match self.backend {
            BackendSpec::Pde(_) => {
                let grid = self.pde_grid(g)?;
                let pieces = event.claim.level_set(event.threshold, grid.x_min, grid.x_max);
                if pieces.is_empty() {
                    (T::zero(), T::zero())
                } else if pieces.len() == 1 && pieces[0].is_whole_line() {
                    (T::one(), T::zero())
                } else {
                    let key = format!("{g:?}|{}", interval_key(&pieces));
                    self.memo(key, || {
                        let set = TerminalClaim::LevelSet { intervals: pieces.clone() };
                        let eps = self.pde_eps(&grid)?;
                        let (up, lo) = SmoothedClaim::bracket(&set, eps);
                        self.pde_bracket(g, &grid, &up, &lo)
                    })?
                }
            }
            BackendSpec::Lsmc(l) => {
                let key = format!("{g:?}|{}", event.id());
                self.memo(key, || {
                    let ens = self.ensemble()?;
                    let basis = match l.basis {
                        RegressionBasis::Auto => RegressionBasis::Bins { count: 32 },
                        other => other,
                    };
                    let payoff = EventIndicator { claim: &event.claim, threshold: event.threshold };
                    let (v, se) = lsmc_y0(ens, &self.model.coeff, g, &payoff, basis)?;
                    Ok((v, T::lit(3.0) * se))
                })?
            }
        };
        Ok(self.result(g, id, value, err))
    }

    fn memo(&self, key: String, solve: impl FnOnce() -> Result<(T, T)>) -> Result<(T, T)> {
        if let Some(hit) = self.capacities.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let out = solve()?;
        self.capacities.lock().unwrap().insert(key, out);
        Ok(out)
    }

    /// Conditional values at grid time `t`.
    pub fn conditional(&self, g: &GeneratorSpec<T>, claim: &TerminalClaim<T>, t: T) -> Result<ConditionalTable<T>> {
        self.check_driver(g)?;
        claim.validate()?;
        let m = self
            .model
            .grid
            .index_of(t)
            .ok_or_else(|| Error::Input(format!("t = {t} is not a node of the time grid")))?;
        match self.backend {
            BackendSpec::Pde(_) => {
                let grid = self.pde_grid(g)?;
                let coeff = &self.model.coeff;
                let capture = |p: &dyn Payoff<T>| -> Result<Vec<T>> {
                    let mut out = Vec::new();
                    march(coeff, g, p, &grid, |k, layer| {
                        if k == m {
                            out = layer.to_vec();
                        }
                    })?;
                    Ok(out)
                };
                let values = if claim.is_continuous() || m == self.model.grid.steps {
                    capture(claim)?
                } else {
                    let eps = self.pde_eps(&grid)?;
                    let (up, lo) = SmoothedClaim::bracket(claim, eps);
                    let (a, b) = (capture(&up)?, capture(&lo)?);
                    a.iter().zip(&b).map(|(x, y)| (*x + *y) * T::lit(0.5)).collect()
                };
                Ok(ConditionalTable { t, states: grid.xs(), values })
            }
            BackendSpec::Lsmc(l) => {
                let ens = self.ensemble()?;
                let sol = solve_bsde_lsmc(ens, &self.model.coeff, g, claim, l.basis)?;
                Ok(ConditionalTable {
                    t,
                    states: ens.first_component_at(m),
                    values: (0..ens.n_paths).map(|p| sol.y_at(p, m)).collect(),
                })
            }
        }
    }
}

pub fn g_expectation<T: Real>(
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    model: &Model<T>,
    backend: BackendSpec,
) -> Result<ExpectationResult<T>> {
    Engine::new(model.clone(), backend).g_expectation(g, claim)
}

pub fn conditional_g_expectation<T: Real>(
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    model: &Model<T>,
    backend: BackendSpec,
    t: T,
) -> Result<ConditionalTable<T>> {
    Engine::new(model.clone(), backend).conditional(g, claim, t)
}

pub fn capacity<T: Real>(
    g: &GeneratorSpec<T>,
    event: &EventSpec<T>,
    model: &Model<T>,
    backend: BackendSpec,
) -> Result<ExpectationResult<T>> {
    Engine::new(model.clone(), backend).capacity(g, event)
}

fn interval_key<T: Real>(pieces: &[Interval<T>]) -> String {
    let end = |v: Option<T>| v.map(|x| format!("{:x}", x.to_f64_lossy().to_bits())).unwrap_or_default();
    pieces.iter().map(|iv| format!("[{},{}]", end(iv.lo), end(iv.hi))).collect::<Vec<_>>().join("")
}

/// Whether the claim's class tag is monotone nondecreasing.
pub fn is_nondecreasing<T: Real>(claim: &TerminalClaim<T>) -> bool {
    claim.class_tag() == ClassTag::MonotoneNondecreasing
}
