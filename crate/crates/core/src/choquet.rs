//! Choquet integrals against the capacity `V_g` by threshold quadrature:
//!
//! `C_g[ξ] = ∫_{−∞}^0 (V_g(ξ ≥ t) − 1) dt + ∫_0^∞ V_g(ξ ≥ t) dt`.
//!
//! Claims must be bounded, so both integrals run over the claim's range.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::TerminalClaim;
use crate::error::{Error, Result};
use crate::expectation::{fnv_hash, BackendKind, BackendSpec, Engine, EventSpec, Model};
use crate::generators::GeneratorSpec;
use crate::scalar::Real;

/// Default number of cells of the uniform rule.
pub const DEFAULT_THRESHOLDS: usize = 201;

/// How thresholds are placed over the claim's range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadratureRule {
    /// `count` equal-width midpoint cells, split at 0 in proportion to the
    /// two sides of the range.
    Uniform { count: usize },
    /// Cells between consecutive levels of a piecewise-constant claim. The
    /// capacity curve is constant on each cell so the rule is exact.
    LevelAdapted,
    /// Cell edges on the multiples of `h`, so that claims sharing a range
    /// also share thresholds.
    Spacing { h: f64 },
    /// `LevelAdapted` for step claims, otherwise `Uniform` with `count`
    /// cells.
    Auto {
        #[serde(default = "default_count")]
        count: usize,
    },
}

fn default_count() -> usize {
    DEFAULT_THRESHOLDS
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::Auto { count: DEFAULT_THRESHOLDS }
    }
}

impl QuadratureRule {
    pub fn id(&self) -> String {
        match self {
            QuadratureRule::Uniform { count } => format!("uniform({count})"),
            QuadratureRule::LevelAdapted => "level_adapted".into(),
            QuadratureRule::Spacing { h } => format!("spacing({h})"),
            QuadratureRule::Auto { count } => format!("auto({count})"),
        }
    }
}

/// Midpoint cells `[edges[i], edges[i+1]]` covering `[min(inf ξ, 0), max(sup ξ, 0)]`;
/// 0 is always an edge when it lies inside the span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdQuadrature<T> {
    /// The rule after resolving `Auto`.
    pub rule: QuadratureRule,
    pub edges: Vec<T>,
}

impl<T: Real> ThresholdQuadrature<T> {
    pub fn build(rule: QuadratureRule, claim: &TerminalClaim<T>) -> Result<Self> {
        if !claim.is_bounded() {
            return Err(Error::Domain(format!(
                "Choquet integral needs a bounded claim, {} is unbounded; clip it first (e.g. identity_clipped with m)",
                claim.id()
            )));
        }
        let (inf, sup) = claim.range();
        let (lo, hi) = (inf.min(T::zero()), sup.max(T::zero()));
        let rule = match rule {
            QuadratureRule::Auto { .. } if claim.is_piecewise_constant() => QuadratureRule::LevelAdapted,
            QuadratureRule::Auto { count } => QuadratureRule::Uniform { count },
            other => other,
        };
        if lo == hi {
            return Ok(Self { rule, edges: vec![] });
        }
        let mut edges = match rule {
            QuadratureRule::Uniform { count } => {
                if count < 3 {
                    return Err(Error::Configuration(format!("need at least 3 thresholds, got {count}")));
                }
                uniform_edges(lo, hi, count)
            }
            QuadratureRule::LevelAdapted => {
                let levels = claim.levels().ok_or_else(|| {
                    Error::Configuration(format!("level-adapted thresholds need a step claim, got {}", claim.id()))
                })?;
                let mut e = levels;
                e.extend([lo, hi, T::zero()]);
                e
            }
            QuadratureRule::Spacing { h } => {
                if !(h > 0.0) || !h.is_finite() {
                    return Err(Error::Configuration(format!("threshold spacing must be positive, got {h}")));
                }
                let h = T::lit(h);
                let first = (lo / h).ceil().to_i64().unwrap_or(0);
                let last = (hi / h).floor().to_i64().unwrap_or(0);
                let mut e: Vec<T> = (first..=last).map(|k| T::lit(k as f64) * h).collect();
                e.extend([lo, hi, T::zero()]);
                e
            }
            QuadratureRule::Auto { .. } => unreachable!("resolved above"),
        };
        edges.retain(|&e| e >= lo && e <= hi);
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup();
        Ok(Self { rule, edges })
    }

    /// Number of cells, one threshold each.
    pub fn len(&self) -> usize {
        self.edges.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn thresholds(&self) -> Vec<T> {
        self.edges.windows(2).map(|w| T::lit(0.5) * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<T> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn uniform_edges<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    let span = hi - lo;
    let mut neg = if lo < T::zero() {
        (T::from_usize_lossy(count) * (-lo) / span).round().to_usize().unwrap_or(0)
    } else {
        0
    };
    if lo < T::zero() && hi > T::zero() {
        neg = neg.clamp(1, count - 1);
    }
    let pos = count - neg;
    let mut e = Vec::with_capacity(count + 1);
    for k in 0..neg {
        e.push(lo + (-lo) * T::from_usize_lossy(k) / T::from_usize_lossy(neg));
    }
    for k in 0..=pos {
        let start = if neg > 0 { T::zero() } else { lo };
        e.push(start + (hi - start) * T::from_usize_lossy(k) / T::from_usize_lossy(pos));
    }
    e
}

/// One threshold of the capacity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint<T> {
    pub t: T,
    pub v: T,
    pub err: T,
    pub width: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoquetResult<T> {
    pub value: T,
    /// `Σ err·width` plus `discretization_error`.
    pub quadrature_error: T,
    /// Midpoint-rule estimate `Σ width³·|V''|/24`; zero for the exact rule.
    pub discretization_error: T,
    pub negative_part: T,
    pub positive_part: T,
    pub capacity_curve: Vec<CapacityPoint<T>>,
    pub rule: QuadratureRule,
    pub backend: BackendKind,
    pub generator_id: String,
    pub claim_id: String,
    pub scenario_hash: String,
}

impl<T: Real> ChoquetResult<T> {
    /// Whether `V` is nonincreasing in `t` up to the error bars.
    pub fn is_nonincreasing_within_errors(&self) -> bool {
        self.capacity_curve.windows(2).all(|w| w[1].v <= w[0].v + w[0].err + w[1].err + T::lit(1e-12))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,V,err")?;
        for p in &self.capacity_curve {
            writeln!(w, "{},{},{}", p.t, p.v, p.err)?;
        }
        Ok(())
    }
}

/// `C_g[Φ(X_T)]` with one capacity solve per threshold on the engine's
/// grid or path ensemble.
pub fn choquet_with<T: Real>(
    engine: &Engine<T>,
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    rule: QuadratureRule,
) -> Result<ChoquetResult<T>> {
    claim.validate()?;
    let quad = ThresholdQuadrature::build(rule, claim)?;
    if matches!(engine.backend, BackendSpec::Lsmc(_)) {
        engine.ensemble()?;
    }
    let ts = quad.thresholds();
    let widths = quad.widths();
    let caps: Vec<(T, T)> = ts
        .par_iter()
        .map(|&t| {
            engine
                .capacity(g, &EventSpec::new(claim.clone(), t))
                .map(|r| (r.value, r.error_estimate))
        })
        .collect::<Result<_>>()?;

    let (mut neg, mut pos, mut bars) = (T::zero(), T::zero(), T::zero());
    let mut curve = Vec::with_capacity(ts.len());
    for ((&t, &w), &(v, err)) in ts.iter().zip(&widths).zip(&caps) {
        if t < T::zero() {
            neg = neg + (v - T::one()) * w;
        } else {
            pos = pos + v * w;
        }
        bars = bars + err * w;
        curve.push(CapacityPoint { t, v, err, width: w });
    }
    let disc = match quad.rule {
        QuadratureRule::LevelAdapted => T::zero(),
        _ => midpoint_error(&curve),
    };
    let key = format!("{}|{}|{}|{}|{}", engine.model.id(), g.name(), claim.id(), engine.backend.id(), quad.rule.id());
    Ok(ChoquetResult {
        value: neg + pos,
        quadrature_error: bars + disc,
        discretization_error: disc,
        negative_part: neg,
        positive_part: pos,
        capacity_curve: curve,
        rule: quad.rule,
        backend: engine.backend.kind(),
        generator_id: g.name(),
        claim_id: claim.id(),
        scenario_hash: fnv_hash(&key),
    })
}

pub fn choquet_integral<T: Real>(
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    model: &Model<T>,
    rule: QuadratureRule,
    backend: BackendSpec,
) -> Result<ChoquetResult<T>> {
    choquet_with(&Engine::new(model.clone(), backend), g, claim, rule)
}

fn midpoint_error<T: Real>(curve: &[CapacityPoint<T>]) -> T {
    let n = curve.len();
    if n < 3 {
        return T::zero();
    }
    let second = |i: usize| {
        let (a, b, c) = (&curve[i - 1], &curve[i], &curve[i + 1]);
        let left = (b.v - a.v) / (b.t - a.t);
        let right = (c.v - b.v) / (c.t - b.t);
        (T::lit(2.0) * (right - left) / (c.t - a.t)).abs()
    };
    (0..n)
        .map(|i| {
            let d2 = second(i.clamp(1, n - 2));
            let w = curve[i].width;
            w * w * w * d2 / T::lit(24.0)
        })
        .sum()
}

/// Sample points for pairwise comparisons: a uniform scan of both natural
/// windows plus each breakpoint and its immediate neighbours.
fn sample_points<T: Real>(a: &TerminalClaim<T>, b: &TerminalClaim<T>, count: usize) -> Vec<T> {
    let (la, ha) = a.natural_window();
    let (lb, hb) = b.natural_window();
    let (lo, hi) = (la.min(lb), ha.max(hb));
    let count = count.max(2);
    let mut xs: Vec<T> = (0..count)
        .map(|k| lo + (hi - lo) * T::from_usize_lossy(k) / T::from_usize_lossy(count - 1))
        .collect();
    for bp in a.breakpoints().into_iter().chain(b.breakpoints()) {
        let d = T::lit(1e-7) * T::one().max(bp.abs());
        xs.extend([bp - d, bp, bp + d]);
    }
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xs.dedup();
    xs
}

/// Whether `(Φ_A(x) − Φ_A(x′))(Φ_B(x) − Φ_B(x′)) ≥ 0` on all sampled pairs.
pub fn comonotonic_check<T: Real>(a: &TerminalClaim<T>, b: &TerminalClaim<T>, sample_count: usize) -> bool {
    let xs = sample_points(a, b, sample_count);
    let va: Vec<T> = xs.iter().map(|&x| a.value_at(x)).collect();
    let vb: Vec<T> = xs.iter().map(|&x| b.value_at(x)).collect();
    let tol = T::lit(1e-12);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if (va[i] - va[j]) * (vb[i] - vb[j]) < -tol {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport<T> {
    pub sum: T,
    pub first: T,
    pub second: T,
    /// `|C[A+B] − C[A] − C[B]|`.
    pub defect: T,
    /// `tol` plus the three quadrature errors.
    pub bound: T,
    pub pass: bool,
}

/// `C_g[Φ_A + Φ_B] = C_g[Φ_A] + C_g[Φ_B]` for a comonotone pair.
pub fn comonotonic_additivity_test<T: Real>(
    engine: &Engine<T>,
    g: &GeneratorSpec<T>,
    a: &TerminalClaim<T>,
    b: &TerminalClaim<T>,
    rule: QuadratureRule,
    tol: T,
) -> Result<AdditivityReport<T>> {
    if !comonotonic_check(a, b, 400) {
        return Err(Error::Precondition(format!("{} and {} are not comonotone", a.id(), b.id())));
    }
    let ca = choquet_with(engine, g, a, rule)?;
    let cb = choquet_with(engine, g, b, rule)?;
    let cs = choquet_with(engine, g, &a.clone().plus(b.clone()), rule)?;
    let defect = (cs.value - ca.value - cb.value).abs();
    let bound = tol + ca.quadrature_error + cb.quadrature_error + cs.quadrature_error;
    Ok(AdditivityReport { sum: cs.value, first: ca.value, second: cb.value, defect, bound, pass: defect <= bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSeries<T> {
    pub levels: Vec<T>,
    /// `|C_g[(ξ∧N)∨(−N)] − C_g[ξ_ref]|` per level.
    pub errors: Vec<T>,
    /// Sum of the two quadrature errors per level.
    pub error_bars: Vec<T>,
    pub reference: T,
    pub reference_clip: T,
}

impl<T: Real> TruncationSeries<T> {
    /// Nonincreasing up to the error bars of neighbouring entries.
    pub fn is_nonincreasing(&self) -> bool {
        self.errors
            .windows(2)
            .zip(self.error_bars.windows(2))
            .all(|(e, b)| e[1] <= e[0] + b[0] + b[1])
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|e| e[1] < e[0])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "N,error,error_bar")?;
        for ((n, e), b) in self.levels.iter().zip(&self.errors).zip(&self.error_bars) {
            writeln!(w, "{n},{e},{b}")?;
        }
        Ok(())
    }
}

/// Errors of the clipped claims against the reference clip `m_ref`. The
/// thresholds sit on multiples of `spacing`, so every level reuses the
/// reference's capacities.
pub fn truncation_convergence<T: Real>(
    engine: &Engine<T>,
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    levels: &[T],
    m_ref: T,
    spacing: f64,
) -> Result<TruncationSeries<T>> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("truncation levels must be increasing".into()));
    }
    if levels.iter().any(|&n| !(n > T::zero()) || n >= m_ref) {
        return Err(Error::Input(format!("truncation levels must lie in (0, {m_ref})")));
    }
    let rule = QuadratureRule::Spacing { h: spacing };
    let clip = |n: T| claim.clone().clipped(-n, n);
    let reference = choquet_with(engine, g, &clip(m_ref), rule)?;
    let mut errors = Vec::with_capacity(levels.len());
    let mut bars = Vec::with_capacity(levels.len());
    for &n in levels {
        let c = choquet_with(engine, g, &clip(n), rule)?;
        errors.push((c.value - reference.value).abs());
        bars.push(c.quadrature_error + reference.quadrature_error);
    }
    Ok(TruncationSeries {
        levels: levels.to_vec(),
        errors,
        error_bars: bars,
        reference: reference.value,
        reference_clip: m_ref,
    })
}

/// One of the Choquet properties checked by [`property_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck<T> {
    pub name: String,
    pub lhs: T,
    pub rhs: T,
    /// Signed violation; the property holds when `defect ≤ bound`.
    pub defect: T,
    pub bound: T,
    pub pass: bool,
}

fn check<T: Real>(name: String, lhs: T, rhs: T, defect: T, bound: T) -> PropertyCheck<T> {
    PropertyCheck { name, lhs, rhs, defect, bound, pass: defect <= bound }
}

/// Monotonicity against `Φ + ½·1{x ≥ 0}`, translation by ±1, positive
/// homogeneity for λ ∈ {0, ½, 2} and additivity on the nested indicators
/// `1{x ≥ −½}`, `1{x ≥ ½}`.
pub fn property_suite<T: Real>(
    engine: &Engine<T>,
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    rule: QuadratureRule,
) -> Result<Vec<PropertyCheck<T>>> {
    let half = T::lit(0.5);
    let c = |phi: &TerminalClaim<T>| choquet_with(engine, g, phi, rule);
    let base = c(claim)?;
    let mut out = Vec::new();

    let upper = claim.clone().plus(TerminalClaim::indicator(T::zero()).scaled(half));
    let cu = c(&upper)?;
    out.push(check(
        "monotonicity".into(),
        base.value,
        cu.value,
        base.value - cu.value,
        base.quadrature_error + cu.quadrature_error,
    ));

    for shift in [-1.0, 1.0] {
        let s = T::lit(shift);
        let cs = c(&claim.clone().shifted(s))?;
        out.push(check(
            format!("translation({shift})"),
            cs.value,
            base.value + s,
            (cs.value - base.value - s).abs(),
            cs.quadrature_error + base.quadrature_error,
        ));
    }

    for lambda in [0.0, 0.5, 2.0] {
        let l = T::lit(lambda);
        let cl = c(&claim.clone().scaled(l))?;
        out.push(check(
            format!("homogeneity({lambda})"),
            cl.value,
            l * base.value,
            (cl.value - l * base.value).abs(),
            cl.quadrature_error + l * base.quadrature_error,
        ));
    }

    let a = TerminalClaim::indicator(-half);
    let b = TerminalClaim::indicator(half);
    let add = comonotonic_additivity_test(engine, g, &a, &b, rule, T::zero())?;
    out.push(check("comonotonic_additivity".into(), add.sum, add.first + add.second, add.defect, add.bound));
    Ok(out)
}
