//! The representation harness: compares `E_g` with `C_g` on scenario cells,
//! checks additivity of `E_g` on nondecreasing claims, and runs the two
//! counterexample families for the necessity directions.

mod margins;

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choquet::{choquet_with, QuadratureRule};
use crate::claims::{make_step_approximation, ClassTag, Side, TerminalClaim};
use crate::error::{Error, Result};
use crate::expectation::{fnv_hash, BackendSpec, Engine, Model, PdeBackend};
use crate::generators::{classify_generator, GeneratorProperties, GeneratorSpec};
use crate::scalar::Real;
use crate::sde::{CoefficientField, TimeGrid};

pub use margins::FROZEN_MARGINS;

/// A separation margin measured once by the high-resolution oracle
/// (`examples/oracle_margins.rs`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenMargin {
    pub generator: &'static str,
    pub claim: &'static str,
    pub model: &'static str,
    /// `|E_g − C_g| − combined error` of the oracle run, when positive.
    pub margin: Option<f64>,
    pub oracle_e: f64,
    pub oracle_c: f64,
    pub oracle_combined_err: f64,
    /// Oracle grid and quadrature settings.
    pub oracle: &'static str,
}

/// The frozen oracle entry for a cell, if one was recorded.
pub fn frozen_margin(generator: &str, claim: &str, model: &str) -> Option<&'static FrozenMargin> {
    FROZEN_MARGINS.iter().find(|m| m.generator == generator && m.claim == claim && m.model == model)
}

/// Sample budget and tolerance of the driver classification.
const CLASSIFY_BUDGET: usize = 2048;
const CLASSIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedVerdict {
    Equal,
    Unequal,
    Informational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Equal,
    Unequal,
    Inconclusive,
}

impl ExpectedVerdict {
    pub fn matches(self, v: Verdict) -> bool {
        match self {
            ExpectedVerdict::Equal => v == Verdict::Equal,
            ExpectedVerdict::Unequal => v == Verdict::Unequal,
            ExpectedVerdict::Informational => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Absolute floor of `tol_equal`.
    pub abs_equal: f64,
    /// `tol_equal = error_factor · combined + abs_equal`.
    pub error_factor: f64,
    /// Separation required for UNEQUAL; usually a frozen oracle margin.
    pub margin_unequal: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs_equal: 1e-3, error_factor: 2.0, margin_unequal: None }
    }
}

/// EQUAL when `discrepancy ≤ combined + tol_equal`, UNEQUAL when
/// `discrepancy ≥ margin > combined`, otherwise INCONCLUSIVE. A certified
/// separation wins when both hold.
pub fn decide(discrepancy: f64, combined: f64, tol: &Tolerances) -> Verdict {
    if let Some(m) = tol.margin_unequal {
        if discrepancy >= m && m > combined {
            return Verdict::Unequal;
        }
    }
    let tol_equal = tol.error_factor * combined + tol.abs_equal;
    if discrepancy <= combined + tol_equal {
        Verdict::Equal
    } else {
        Verdict::Inconclusive
    }
}

/// What the representation theorem asserts for a driver and claim class.
pub fn theorem_predicts_equal(props: &GeneratorProperties, class: ClassTag) -> bool {
    props.fully_homogeneous || (props.independent_of_y && props.positively_homogeneous && class.is_monotone())
}

/// Whether the claim is `c·1_A` for some set `A` and `c ≥ 0`, for which `C_g`
/// and `E_g` coincide by definition when `g` is positively homogeneous.
fn is_scaled_indicator<T: Real>(claim: &TerminalClaim<T>) -> bool {
    match claim.levels() {
        Some(l) => l.len() == 2 && l[0] == T::zero(),
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize")
)]
pub struct ScenarioSpec<T> {
    pub name: String,
    pub generator: GeneratorSpec<T>,
    pub claim: TerminalClaim<T>,
    pub model: Model<T>,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub quadrature: QuadratureRule,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub expected: ExpectedVerdict,
}

impl<T: Real> ScenarioSpec<T> {
    /// A scenario with the expected verdict derived from the theorem and
    /// the frozen margins: EQUAL where the theorem asserts it, UNEQUAL where
    /// the oracle certified a gap, informational otherwise.
    pub fn derived(
        name: impl Into<String>,
        generator: GeneratorSpec<T>,
        claim: TerminalClaim<T>,
        model: Model<T>,
        backend: BackendSpec,
    ) -> Self {
        let props = classify_generator(&generator, CLASSIFY_BUDGET, CLASSIFY_TOL);
        let margin = frozen_margin(&generator.name(), &claim.id(), &model.id()).and_then(|m| m.margin);
        let expected = if theorem_predicts_equal(&props, claim.class_tag()) {
            ExpectedVerdict::Equal
        } else if margin.is_some() {
            ExpectedVerdict::Unequal
        } else {
            ExpectedVerdict::Informational
        };
        Self {
            name: name.into(),
            generator,
            claim,
            model,
            backend,
            quadrature: QuadratureRule::default(),
            tolerances: Tolerances { margin_unequal: margin, ..Default::default() },
            expected,
        }
    }

    pub fn id(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.generator.name(),
            self.claim.id(),
            self.model.id(),
            self.backend.id(),
            self.quadrature.id()
        )
    }

    pub fn hash(&self) -> String {
        fnv_hash(&self.id())
    }

    /// Checks that every component is well formed and that the expected
    /// verdict does not contradict the theorem.
    pub fn validate(&self) -> Result<()> {
        let g = GeneratorSpec::new(self.generator.kind.clone(), self.generator.dimension)?;
        self.claim.validate()?;
        if self.model.x0.len() != self.model.coeff.n {
            return Err(Error::Input(format!(
                "x0 has length {}, state dimension is {}",
                self.model.x0.len(),
                self.model.coeff.n
            )));
        }
        if g.dimension != self.model.coeff.d {
            return Err(Error::Input(format!(
                "driver dimension {} does not match Brownian dimension {}",
                g.dimension, self.model.coeff.d
            )));
        }
        let props = classify_generator(&g, CLASSIFY_BUDGET, CLASSIFY_TOL);
        let predicted = theorem_predicts_equal(&props, self.claim.class_tag());
        let homogeneous = props.independent_of_y && props.positively_homogeneous;
        match self.expected {
            ExpectedVerdict::Equal if !predicted && !(homogeneous && is_scaled_indicator(&self.claim)) => {
                Err(Error::Specification(format!(
                    "scenario {}: EQUAL expected but {} on a {:?} claim is outside the theorem's hypotheses",
                    self.name,
                    g.name(),
                    self.claim.class_tag()
                )))
            }
            ExpectedVerdict::Unequal if predicted => Err(Error::Specification(format!(
                "scenario {}: UNEQUAL expected but the theorem asserts equality for {} on this claim",
                self.name,
                g.name()
            ))),
            ExpectedVerdict::Unequal if self.tolerances.margin_unequal.is_none() => Err(Error::Configuration(format!(
                "scenario {}: UNEQUAL cells need an oracle margin",
                self.name
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport<T> {
    pub scenario: String,
    pub scenario_hash: String,
    pub generator_id: String,
    pub claim_id: String,
    pub model_id: String,
    pub backend_id: String,
    pub e_g: T,
    pub e_err: T,
    pub c_g: T,
    pub c_err: T,
    pub discrepancy: T,
    pub combined_err: T,
    pub tol_equal: T,
    pub margin_unequal: Option<f64>,
    pub verdict: Verdict,
    pub expected: ExpectedVerdict,
    #[serde(rename = "match")]
    pub matches: bool,
    /// Wall time; kept out of serialised reports so they stay reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

/// `E_g` and `C_g` of one cell on a shared engine.
pub fn verify_representation<T: Real>(s: &ScenarioSpec<T>) -> Result<VerificationReport<T>> {
    let hash = s.hash();
    s.validate().map_err(|e| e.context(&format!("scenario {hash}")))?;
    let started = Instant::now();
    let engine = Engine::new(s.model.clone(), s.backend);
    let run = || -> Result<_> {
        let e = engine.g_expectation(&s.generator, &s.claim)?;
        let c = choquet_with(&engine, &s.generator, &s.claim, s.quadrature)?;
        Ok((e, c))
    };
    let (e, c) = run().map_err(|e| e.context(&format!("scenario {hash}")))?;
    let discrepancy = (e.value - c.value).abs();
    let combined = e.error_estimate + c.quadrature_error;
    let verdict = decide(discrepancy.to_f64_lossy(), combined.to_f64_lossy(), &s.tolerances);
    let tol_equal = T::lit(s.tolerances.error_factor) * combined + T::lit(s.tolerances.abs_equal);
    Ok(VerificationReport {
        scenario: s.name.clone(),
        scenario_hash: hash,
        generator_id: s.generator.name(),
        claim_id: s.claim.id(),
        model_id: s.model.id(),
        backend_id: s.backend.id(),
        e_g: e.value,
        e_err: e.error_estimate,
        c_g: c.value,
        c_err: c.quadrature_error,
        discrepancy,
        combined_err: combined,
        tol_equal,
        margin_unequal: s.tolerances.margin_unequal,
        verdict,
        expected: s.expected,
        matches: s.expected.matches(verdict),
        runtime: started.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport<T> {
    pub generator_id: String,
    pub claim_ids: Vec<String>,
    /// `E_g[Σφᵢ]`.
    pub sum_value: T,
    /// `E_g[φᵢ]` per claim.
    pub parts: Vec<T>,
    /// `|E_g[Σφᵢ] − ΣE_g[φᵢ]|`.
    pub defect: T,
    /// `tol` plus every solver error.
    pub bound: T,
    pub pass: bool,
    /// `|E_g[Σφᵢ] − n·E_g[φ₁]|` when all claims coincide.
    pub homogeneity_defect: Option<T>,
}

/// The additivity defect of `E_g` over `claims`, without precondition
/// checks; for drivers outside the hypotheses the defect is informational.
pub fn measure_additivity<T: Real>(
    engine: &Engine<T>,
    g: &GeneratorSpec<T>,
    claims: &[TerminalClaim<T>],
    tol: T,
) -> Result<AdditivityReport<T>> {
    if claims.is_empty() {
        return Err(Error::Input("additivity needs at least one claim".into()));
    }
    let mut parts = Vec::with_capacity(claims.len());
    let mut bound = tol;
    for c in claims {
        let r = engine.g_expectation(g, c)?;
        bound = bound + r.error_estimate;
        parts.push(r.value);
    }
    let sum_claim = claims[1..].iter().fold(claims[0].clone(), |acc, c| acc.plus(c.clone()));
    let total = engine.g_expectation(g, &sum_claim)?;
    bound = bound + total.error_estimate;
    let defect = (total.value - parts.iter().copied().sum::<T>()).abs();
    let homogeneity_defect = claims
        .iter()
        .all(|c| *c == claims[0])
        .then(|| (total.value - T::from_usize_lossy(claims.len()) * parts[0]).abs());
    Ok(AdditivityReport {
        generator_id: g.name(),
        claim_ids: claims.iter().map(|c| c.id()).collect(),
        sum_value: total.value,
        parts,
        defect,
        bound,
        pass: defect <= bound,
        homogeneity_defect,
    })
}

/// `E_g[Σφᵢ] = ΣE_g[φᵢ]` for a y-independent positively homogeneous driver
/// and continuous nondecreasing claims.
pub fn verify_additivity<T: Real>(
    engine: &Engine<T>,
    g: &GeneratorSpec<T>,
    claims: &[TerminalClaim<T>],
    tol: T,
) -> Result<AdditivityReport<T>> {
    let props = classify_generator(g, CLASSIFY_BUDGET, CLASSIFY_TOL);
    if !(props.independent_of_y && props.positively_homogeneous) {
        return Err(Error::Configuration(format!(
            "additivity needs a y-independent positively homogeneous driver, {} is not",
            g.name()
        )));
    }
    for c in claims {
        if c.class_tag() != ClassTag::MonotoneNondecreasing || !c.is_continuous() {
            return Err(Error::Configuration(format!(
                "additivity needs continuous nondecreasing claims, {} is not",
                c.id()
            )));
        }
    }
    measure_additivity(engine, g, claims, tol)
}

/// Parameters of the Brownian-window family `ξ = y + z(W_{t+ε} − W_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrownianProbe {
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub t: f64,
    pub eps: f64,
    pub horizon: f64,
    pub steps: usize,
    pub nx: usize,
    /// Threshold rule for `C_g` of each base claim; `None` skips it.
    pub quadrature: Option<QuadratureRule>,
}

impl Default for BrownianProbe {
    fn default() -> Self {
        Self {
            ys: vec![0.0, 0.5],
            zs: vec![1.0],
            lambdas: vec![0.5, 1.0, 2.0],
            t: 0.25,
            eps: 0.5,
            horizon: 1.0,
            steps: 20,
            nx: 401,
            quadrature: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianProbeRow<T> {
    pub y: f64,
    pub z: f64,
    pub lambda: f64,
    /// `E_g[ξ]`.
    pub e_base: T,
    /// `|E_g[ξ] − E_g[ξ − y] − y|`.
    pub translation_defect: T,
    /// `|E_g[λξ] − λE_g[ξ]|`.
    pub scaling_defect: T,
    /// `C_g[ξ]` when requested.
    pub c_base: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianProbeReport<T> {
    pub generator_id: String,
    pub rows: Vec<BrownianProbeRow<T>>,
    pub max_translation_defect: T,
    pub max_scaling_defect: T,
    pub tol: T,
    pub pass: bool,
}

/// Measures the translation and positive-scaling identities of `E_g` on
/// `ξ = y + z(W_{t+ε} − W_t)`, which must hold when `E_g = C_g` on
/// monotone claims. The state is `X = ∫ z·1_{[t, t+ε)} dW` started at 0.
pub fn necessity_probe_brownian<T: Real>(
    g: &GeneratorSpec<T>,
    p: &BrownianProbe,
    tol: T,
) -> Result<BrownianProbeReport<T>> {
    if g.dimension != 1 {
        return Err(Error::Unsupported("the Brownian-window probe is one-dimensional".into()));
    }
    if !(p.eps > 0.0) || p.t < 0.0 || p.t + p.eps > p.horizon + 1e-12 {
        return Err(Error::Input(format!(
            "window [{}, {}] must lie inside [0, {}]",
            p.t,
            p.t + p.eps,
            p.horizon
        )));
    }
    let grid = TimeGrid::new(T::lit(p.horizon), p.steps)?;
    for edge in [p.t, p.t + p.eps] {
        if grid.index_of(T::lit(edge)).is_none() {
            return Err(Error::Input(format!("window edge {edge} is not a node of the time grid")));
        }
    }
    let backend = BackendSpec::Pde(PdeBackend { nx: p.nx, ..Default::default() });
    let mut rows = Vec::new();
    for &z in &p.zs {
        let coeff = CoefficientField::brownian_window(T::lit(z), T::lit(p.t), T::lit(p.eps));
        let model = Model::new(coeff, vec![T::zero()], grid)?;
        let engine = Engine::new(model, backend);
        // beyond the PDE domain, so the clip never binds on the grid
        let clip = T::lit(8.0 * z.abs() * p.eps.sqrt() + 1.0);
        let noise = TerminalClaim::identity_clipped(clip);
        let e_noise = engine.g_expectation(g, &noise)?.value;
        for &y in &p.ys {
            let y_t = T::lit(y);
            let base = noise.clone().shifted(y_t);
            let e_base = engine.g_expectation(g, &base)?.value;
            let translation_defect = (e_base - e_noise - y_t).abs();
            let c_base = match p.quadrature {
                Some(rule) => {
                    let bound = clip + y_t.abs();
                    let clipped = base.clone().clipped(-bound, bound);
                    Some(choquet_with(&engine, g, &clipped, rule)?.value)
                }
                None => None,
            };
            for &lambda in &p.lambdas {
                if lambda < 0.0 {
                    return Err(Error::Input(format!("scaling factor must be >= 0, got {lambda}")));
                }
                let l = T::lit(lambda);
                let scaled = engine.g_expectation(g, &base.clone().scaled(l))?.value;
                rows.push(BrownianProbeRow {
                    y,
                    z,
                    lambda,
                    e_base,
                    translation_defect,
                    scaling_defect: (scaled - l * e_base).abs(),
                    c_base,
                });
            }
        }
    }
    let max = |f: fn(&BrownianProbeRow<T>) -> T| rows.iter().map(f).fold(T::zero(), T::max);
    let max_translation_defect = max(|r| r.translation_defect);
    let max_scaling_defect = max(|r| r.scaling_defect);
    Ok(BrownianProbeReport {
        generator_id: g.name(),
        pass: max_translation_defect <= tol && max_scaling_defect <= tol,
        max_translation_defect,
        max_scaling_defect,
        tol,
        rows,
    })
}

/// Parameters of the family `l₁·1{W_T − W_t ≥ a} + l₂·1{a ≤ W_T − W_t ≤ b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndicatorProbe {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub l1: f64,
    pub l2: f64,
    pub horizon: f64,
    pub steps: usize,
    pub backend: BackendSpec,
    pub tolerances: Tolerances,
}

impl Default for IndicatorProbe {
    fn default() -> Self {
        Self {
            t: 0.0,
            a: 0.0,
            b: 0.5,
            l1: 0.5,
            l2: 0.5,
            horizon: 1.0,
            steps: 100,
            backend: BackendSpec::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl IndicatorProbe {
    /// The model of `W_T − W_t` started at 0.
    pub fn model<T: Real>(&self) -> Result<Model<T>> {
        let grid = TimeGrid::new(T::lit(self.horizon), self.steps)?;
        let coeff = if self.t == 0.0 {
            CoefficientField::brownian(T::one())
        } else {
            if grid.index_of(T::lit(self.t)).is_none() {
                return Err(Error::Input(format!("t = {} is not a node of the time grid", self.t)));
            }
            CoefficientField::brownian_window(T::one(), T::lit(self.t), T::lit(self.horizon - self.t))
        };
        Model::new(coeff, vec![T::zero()], grid)
    }

    pub fn claim<T: Real>(&self, l1: f64, l2: f64) -> TerminalClaim<T> {
        let step = TerminalClaim::indicator(T::lit(self.a)).scaled(T::lit(l1));
        let bump = TerminalClaim::interval_indicator(T::lit(self.a), T::lit(self.b)).scaled(T::lit(l2));
        step.plus(bump)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorProbeRow<T> {
    pub l1: f64,
    pub l2: f64,
    pub class_tag: ClassTag,
    pub e_g: T,
    pub e_err: T,
    pub c_g: T,
    pub c_err: T,
    pub discrepancy: T,
    pub verdict: Verdict,
    /// The theorem's assertion for a driver with these flags.
    pub predicted_equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorProbeReport<T> {
    pub generator_id: String,
    pub rows: Vec<IndicatorProbeRow<T>>,
}

/// `E_g` against `C_g` over the four sign patterns of `(l₁, l₂)`. Rows whose
/// claim has a frozen oracle margin may be certified UNEQUAL.
pub fn necessity_probe_indicators<T: Real>(
    g: &GeneratorSpec<T>,
    p: &IndicatorProbe,
) -> Result<IndicatorProbeReport<T>> {
    if g.dimension != 1 {
        return Err(Error::Unsupported("the indicator probe is one-dimensional".into()));
    }
    if !(p.a < p.b) {
        return Err(Error::Input(format!("need a < b, got a = {}, b = {}", p.a, p.b)));
    }
    let model = p.model::<T>()?;
    let engine = Engine::new(model.clone(), p.backend);
    let props = classify_generator(g, CLASSIFY_BUDGET, CLASSIFY_TOL);
    let (l1, l2) = (p.l1.abs(), p.l2.abs());
    let mut patterns = vec![(l1, l2), (l1, -l2), (-l1, l2), (-l1, -l2)];
    patterns.dedup();
    let mut rows = Vec::new();
    for (s1, s2) in patterns {
        let claim = p.claim::<T>(s1, s2);
        let e = engine.g_expectation(g, &claim)?;
        let c = choquet_with(&engine, g, &claim, QuadratureRule::default())?;
        let discrepancy = (e.value - c.value).abs();
        let combined = e.error_estimate + c.quadrature_error;
        let mut tol = p.tolerances;
        if tol.margin_unequal.is_none() {
            tol.margin_unequal = frozen_margin(&g.name(), &claim.id(), &model.id()).and_then(|m| m.margin);
        }
        let class_tag = claim.class_tag();
        rows.push(IndicatorProbeRow {
            l1: s1,
            l2: s2,
            class_tag,
            e_g: e.value,
            e_err: e.error_estimate,
            c_g: c.value,
            c_err: c.quadrature_error,
            discrepancy,
            verdict: decide(discrepancy.to_f64_lossy(), combined.to_f64_lossy(), &tol),
            predicted_equal: theorem_predicts_equal(&props, class_tag)
                || (props.independent_of_y && props.positively_homogeneous && is_scaled_indicator(&claim)),
        });
    }
    Ok(IndicatorProbeReport { generator_id: g.name(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow<T> {
    pub scenario_hash: String,
    pub scenario: String,
    pub generator: String,
    pub claim: String,
    pub e_g: T,
    pub e_err: T,
    pub c_g: T,
    pub c_err: T,
    pub discrepancy: T,
    pub verdict: Verdict,
    pub expected: ExpectedVerdict,
    #[serde(rename = "match")]
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary<T> {
    pub rows: Vec<MatrixRow<T>>,
    pub mismatches: usize,
    /// INCONCLUSIVE cells where a verdict was expected.
    pub flagged_inconclusive: usize,
}

impl<T: Real> MatrixSummary<T> {
    pub fn all_match(&self) -> bool {
        self.mismatches == 0
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "scenario_hash,generator,claim,E_g,C_g,discrepancy,verdict,expected,match")?;
        for r in &self.rows {
            let verdict = match r.verdict {
                Verdict::Equal => "EQUAL",
                Verdict::Unequal => "UNEQUAL",
                Verdict::Inconclusive => "INCONCLUSIVE",
            };
            let expected = match r.expected {
                ExpectedVerdict::Equal => "equal",
                ExpectedVerdict::Unequal => "unequal",
                ExpectedVerdict::Informational => "informational",
            };
            writeln!(
                w,
                "{},\"{}\",\"{}\",{},{},{},{verdict},{expected},{}",
                r.scenario_hash, r.generator, r.claim, r.e_g, r.c_g, r.discrepancy, r.matches
            )?;
        }
        Ok(())
    }
}

/// Runs every cell and aggregates in scenario-hash order.
pub fn run_scenario_matrix<T: Real>(matrix: &[ScenarioSpec<T>]) -> Result<(MatrixSummary<T>, Vec<VerificationReport<T>>)> {
    for s in matrix {
        s.validate().map_err(|e| e.context(&format!("scenario {}", s.hash())))?;
    }
    let mut reports: Vec<VerificationReport<T>> =
        matrix.par_iter().map(verify_representation).collect::<Result<_>>()?;
    reports.sort_by(|a, b| a.scenario_hash.cmp(&b.scenario_hash).then_with(|| a.scenario.cmp(&b.scenario)));
    let rows: Vec<MatrixRow<T>> = reports
        .iter()
        .map(|r| MatrixRow {
            scenario_hash: r.scenario_hash.clone(),
            scenario: r.scenario.clone(),
            generator: r.generator_id.clone(),
            claim: r.claim_id.clone(),
            e_g: r.e_g,
            e_err: r.e_err,
            c_g: r.c_g,
            c_err: r.c_err,
            discrepancy: r.discrepancy,
            verdict: r.verdict,
            expected: r.expected,
            matches: r.matches,
        })
        .collect();
    let mismatches = rows.iter().filter(|r| !r.matches).count();
    let flagged_inconclusive = rows
        .iter()
        .filter(|r| r.verdict == Verdict::Inconclusive && r.expected != ExpectedVerdict::Informational)
        .count();
    Ok((MatrixSummary { rows, mismatches, flagged_inconclusive }, reports))
}

/// The driver presets of the default matrix.
pub fn default_generators() -> Vec<GeneratorSpec<f64>> {
    vec![
        GeneratorSpec::zero(1),
        GeneratorSpec::linear(vec![0.3]).expect("valid preset"),
        GeneratorSpec::abs(0.5).expect("valid preset"),
        GeneratorSpec::pos_part(0.5).expect("valid preset"),
        GeneratorSpec::smooth_nonhom(1.0).expect("valid preset"),
    ]
}

/// The claims of the default matrix: three monotone claims from the
/// sufficiency direction, the clipped identity, and two non-monotone claims.
pub fn default_claims() -> Vec<TerminalClaim<f64>> {
    vec![
        TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0),
        step_claim(8),
        TerminalClaim::mollified_indicator(0.0, 0.05, Side::Center),
        TerminalClaim::identity_clipped(6.0),
        TerminalClaim::abs_value_clipped(6.0),
        TerminalClaim::two_bump_default(),
    ]
}

/// `Φ_N` of the shifted tanh claim `1 + tanh(x)` with `M = 2`.
pub fn step_claim(n: usize) -> TerminalClaim<f64> {
    make_step_approximation(&TerminalClaim::tanh(1.0, 0.0, 1.0, 1.0), n, Some(2.0))
        .and_then(|s| s.to_claim((-10.0, 10.0)))
        .expect("nondecreasing bounded source")
}

/// Standard Brownian motion on `[0, 1]` with 100 steps.
pub fn default_model() -> Model<f64> {
    Model::brownian(1.0, 100).expect("valid model")
}

/// PDE settings for claims with jumps in the matrix: a finer grid and a
/// one-cell mollification, so the bracket is narrower than the gaps the
/// oracle certified.
pub fn jump_backend(model: &Model<f64>) -> BackendSpec {
    let nx = 4801;
    let probe = Engine::new(model.clone(), BackendSpec::Pde(PdeBackend { nx, ..Default::default() }));
    let dx = probe.pde_grid(&GeneratorSpec::zero(1)).map(|g| g.dx()).unwrap_or(0.0);
    BackendSpec::Pde(PdeBackend { nx, eps: (dx > 0.0).then_some(dx), ..Default::default() })
}

/// Five drivers × six claims on standard Brownian motion.
pub fn default_matrix() -> Vec<ScenarioSpec<f64>> {
    let model = default_model();
    let mut out = Vec::new();
    for g in default_generators() {
        for claim in default_claims() {
            let backend = match claim {
                TerminalClaim::TwoBump { .. } => jump_backend(&model),
                _ => BackendSpec::default(),
            };
            let name = format!("{} / {}", g.name(), claim.id());
            out.push(ScenarioSpec::derived(name, g.clone(), claim, model.clone(), backend));
        }
    }
    out
}

#[cfg(test)]
mod tests;
