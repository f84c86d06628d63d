//! Terminal claims `Φ(X_T)`.
//!
//! Claims are functions of the first state component. Every form is bounded
//! unless built with an explicit `None` clip. Besides pointwise evaluation a
//! claim exposes the structure the solvers need: its range, the points where
//! its monotonicity may change or where it jumps, and the level sets
//! `{Φ ≥ t}` as unions of intervals.

mod mollify;
mod step;

pub use mollify::{kernel_cdf, mollify_indicator, MollifiedIndicator, Side, SmoothedClaim};
pub use step::{make_step_approximation, StepApproximation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Anything that maps a terminal state to a payoff.
pub trait Payoff<T: Real>: Sync {
    fn value(&self, x: T) -> T;

    /// Evaluates on a state vector through its first component.
    fn eval(&self, x: &[T]) -> T {
        self.value(x[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `1{x ≥ a}`
    #[default]
    Geq,
    /// `1{x ≤ a}`
    Leq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    MonotoneNondecreasing,
    MonotoneNonincreasing,
    MeasurableNonmonotone,
}

impl ClassTag {
    pub fn is_monotone(self) -> bool {
        !matches!(self, ClassTag::MeasurableNonmonotone)
    }
}

/// Closed interval; `None` ends are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval<T> {
    pub lo: Option<T>,
    pub hi: Option<T>,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        let wrap = |v: T| if v.is_finite() { Some(v) } else { None };
        Self { lo: wrap(lo), hi: wrap(hi) }
    }

    pub fn lo_or_neg_inf(&self) -> T {
        self.lo.unwrap_or_else(T::neg_infinity)
    }

    pub fn hi_or_inf(&self) -> T {
        self.hi.unwrap_or_else(T::infinity)
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo_or_neg_inf() && x <= self.hi_or_inf()
    }

    pub fn is_whole_line(&self) -> bool {
        self.lo.is_none() && self.hi.is_none()
    }
}

/// A discontinuity of a claim: `Φ(a+) − Φ(a−) = size`. With `closed_right`
/// the value at `a` equals the right limit, so the jump is `size·1{x ≥ a}`,
/// otherwise `size·1{x > a}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump<T> {
    pub at: T,
    pub size: T,
    pub closed_right: bool,
}

impl<T: Real> Jump<T> {
    #[inline]
    pub fn heaviside(&self, x: T) -> T {
        let on = if self.closed_right { x >= self.at } else { x > self.at };
        if on {
            T::one()
        } else {
            T::zero()
        }
    }
}

fn default_two_bump_a<T: Real>() -> T {
    T::zero()
}
fn default_two_bump_b<T: Real>() -> T {
    lit(0.5)
}
fn default_two_bump_c<T: Real>() -> T {
    lit(1.5)
}
fn default_one<T: Real>() -> T {
    T::one()
}
fn default_half<T: Real>() -> T {
    lit(0.5)
}
fn default_zero<T: Real>() -> T {
    T::zero()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "form",
    rename_all = "snake_case",
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize")
)]
pub enum TerminalClaim<T> {
    Constant {
        value: T,
    },
    /// `x` clipped to `[−M, M]`; unbounded when `M` is absent.
    IdentityClipped {
        #[serde(rename = "M", default)]
        m: Option<T>,
    },
    /// `offset + amplitude·tanh((x − center)/width)`.
    SmoothMonotone {
        amplitude: T,
        #[serde(default = "default_zero")]
        center: T,
        #[serde(default = "default_one")]
        width: T,
        #[serde(default = "default_zero")]
        offset: T,
    },
    Indicator {
        threshold: T,
        #[serde(default)]
        orientation: Orientation,
    },
    /// `Σ levels[i]·1{x ≥ thresholds[i]}`.
    Step {
        levels: Vec<T>,
        thresholds: Vec<T>,
    },
    /// `min(|x|, M)`; unbounded when `M` is absent.
    AbsValueClipped {
        #[serde(rename = "M", default)]
        m: Option<T>,
    },
    /// `inner_level` on `[a, b]`, `tail_level` on `[c, ∞)`, zero elsewhere.
    TwoBump {
        #[serde(default = "default_two_bump_a")]
        a: T,
        #[serde(default = "default_two_bump_b")]
        b: T,
        #[serde(default = "default_two_bump_c")]
        c: T,
        #[serde(default = "default_one")]
        inner_level: T,
        #[serde(default = "default_half")]
        tail_level: T,
    },
    MollifiedIndicator {
        threshold: T,
        eps: T,
        #[serde(default)]
        side: Side,
    },
    /// Indicator of a union of closed intervals.
    LevelSet {
        intervals: Vec<Interval<T>>,
    },
    /// `scale·inner + shift`.
    Affine {
        inner: Box<TerminalClaim<T>>,
        #[serde(default = "default_one")]
        scale: T,
        #[serde(default = "default_zero")]
        shift: T,
    },
    /// `inner` clipped to `[lo, hi]`.
    Clipped {
        inner: Box<TerminalClaim<T>>,
        lo: T,
        hi: T,
    },
    Sum {
        terms: Vec<TerminalClaim<T>>,
    },
}

impl<T: Real> TerminalClaim<T> {
    pub fn constant(value: T) -> Self {
        TerminalClaim::Constant { value }
    }

    pub fn identity_clipped(m: T) -> Self {
        TerminalClaim::IdentityClipped { m: Some(m) }
    }

    pub fn identity() -> Self {
        TerminalClaim::IdentityClipped { m: None }
    }

    pub fn abs_value_clipped(m: T) -> Self {
        TerminalClaim::AbsValueClipped { m: Some(m) }
    }

    pub fn indicator(threshold: T) -> Self {
        TerminalClaim::Indicator { threshold, orientation: Orientation::Geq }
    }

    pub fn tanh(amplitude: T, center: T, width: T, offset: T) -> Self {
        TerminalClaim::SmoothMonotone { amplitude, center, width, offset }
    }

    pub fn two_bump_default() -> Self {
        TerminalClaim::TwoBump {
            a: T::zero(),
            b: lit(0.5),
            c: lit(1.5),
            inner_level: T::one(),
            tail_level: lit(0.5),
        }
    }

    pub fn mollified_indicator(threshold: T, eps: T, side: Side) -> Self {
        TerminalClaim::MollifiedIndicator { threshold, eps, side }
    }

    pub fn interval_indicator(lo: T, hi: T) -> Self {
        TerminalClaim::LevelSet { intervals: vec![Interval::new(lo, hi)] }
    }

    pub fn scaled(self, scale: T) -> Self {
        TerminalClaim::Affine { inner: Box::new(self), scale, shift: T::zero() }
    }

    pub fn shifted(self, shift: T) -> Self {
        TerminalClaim::Affine { inner: Box::new(self), scale: T::one(), shift }
    }

    pub fn clipped(self, lo: T, hi: T) -> Self {
        TerminalClaim::Clipped { inner: Box::new(self), lo, hi }
    }

    pub fn plus(self, other: Self) -> Self {
        match self {
            TerminalClaim::Sum { mut terms } => {
                terms.push(other);
                TerminalClaim::Sum { terms }
            }
            first => TerminalClaim::Sum { terms: vec![first, other] },
        }
    }

    /// Checks parameter domains.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: T, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{what} must be finite")))
            }
        };
        match self {
            TerminalClaim::Constant { value } => finite(*value, "constant value"),
            TerminalClaim::IdentityClipped { m } | TerminalClaim::AbsValueClipped { m } => match m {
                Some(m) if !(*m > T::zero()) || !m.is_finite() => {
                    Err(Error::Domain(format!("clip bound M must be finite and > 0, got {m}")))
                }
                _ => Ok(()),
            },
            TerminalClaim::SmoothMonotone { amplitude, center, width, offset } => {
                finite(*amplitude, "amplitude")?;
                finite(*center, "center")?;
                finite(*offset, "offset")?;
                if !(*width > T::zero()) || !width.is_finite() {
                    return Err(Error::Domain(format!("tanh width must be > 0, got {width}")));
                }
                Ok(())
            }
            TerminalClaim::Indicator { threshold, .. } => finite(*threshold, "indicator threshold"),
            TerminalClaim::Step { levels, thresholds } => {
                if levels.len() != thresholds.len() {
                    return Err(Error::Domain(format!(
                        "step claim has {} levels but {} thresholds",
                        levels.len(),
                        thresholds.len()
                    )));
                }
                for (&l, &a) in levels.iter().zip(thresholds) {
                    finite(l, "step level")?;
                    finite(a, "step threshold")?;
                }
                Ok(())
            }
            TerminalClaim::TwoBump { a, b, c, inner_level, tail_level } => {
                for v in [*a, *b, *c, *inner_level, *tail_level] {
                    finite(v, "two_bump parameter")?;
                }
                if !(*a < *b && *b < *c) {
                    return Err(Error::Domain(format!("two_bump requires a < b < c, got ({a}, {b}, {c})")));
                }
                Ok(())
            }
            TerminalClaim::MollifiedIndicator { threshold, eps, .. } => {
                finite(*threshold, "threshold")?;
                if !(*eps > T::zero()) || !eps.is_finite() {
                    return Err(Error::Domain(format!("mollification radius must be > 0, got {eps}")));
                }
                Ok(())
            }
            TerminalClaim::LevelSet { intervals } => {
                for iv in intervals {
                    if iv.lo_or_neg_inf() > iv.hi_or_inf() {
                        return Err(Error::Domain("interval with lo > hi".into()));
                    }
                }
                Ok(())
            }
            TerminalClaim::Affine { inner, scale, shift } => {
                finite(*scale, "scale")?;
                finite(*shift, "shift")?;
                inner.validate()
            }
            TerminalClaim::Clipped { inner, lo, hi } => {
                if !(*lo <= *hi) {
                    return Err(Error::Domain(format!("clip range [{lo}, {hi}] is empty")));
                }
                inner.validate()
            }
            TerminalClaim::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::Domain("sum of zero claims".into()));
                }
                terms.iter().try_for_each(|t| t.validate())
            }
        }
    }

    /// Pointwise value `Φ(x)`.
    pub fn value_at(&self, x: T) -> T {
        let one = T::one();
        let zero = T::zero();
        match self {
            TerminalClaim::Constant { value } => *value,
            TerminalClaim::IdentityClipped { m } => match m {
                Some(m) => x.max(-*m).min(*m),
                None => x,
            },
            TerminalClaim::SmoothMonotone { amplitude, center, width, offset } => {
                *offset + *amplitude * ((x - *center) / *width).tanh()
            }
            TerminalClaim::Indicator { threshold, orientation } => {
                let on = match orientation {
                    Orientation::Geq => x >= *threshold,
                    Orientation::Leq => x <= *threshold,
                };
                if on {
                    one
                } else {
                    zero
                }
            }
            TerminalClaim::Step { levels, thresholds } => levels
                .iter()
                .zip(thresholds)
                .fold(zero, |acc, (&l, &a)| if x >= a { acc + l } else { acc }),
            TerminalClaim::AbsValueClipped { m } => match m {
                Some(m) => x.abs().min(*m),
                None => x.abs(),
            },
            TerminalClaim::TwoBump { a, b, c, inner_level, tail_level } => {
                if x >= *a && x <= *b {
                    *inner_level
                } else if x >= *c {
                    *tail_level
                } else {
                    zero
                }
            }
            TerminalClaim::MollifiedIndicator { threshold, eps, side } => {
                MollifiedIndicator { a: *threshold, eps: *eps, side: *side }.value(x)
            }
            TerminalClaim::LevelSet { intervals } => {
                if intervals.iter().any(|iv| iv.contains(x)) {
                    one
                } else {
                    zero
                }
            }
            TerminalClaim::Affine { inner, scale, shift } => *scale * inner.value_at(x) + *shift,
            TerminalClaim::Clipped { inner, lo, hi } => inner.value_at(x).max(*lo).min(*hi),
            TerminalClaim::Sum { terms } => terms.iter().fold(zero, |acc, t| acc + t.value_at(x)),
        }
    }

    /// `(inf Φ, sup Φ)`, possibly infinite. For sums the bounds add, so the
    /// interval may be wider than the true range but never narrower.
    pub fn range(&self) -> (T, T) {
        let zero = T::zero();
        let one = T::one();
        match self {
            TerminalClaim::Constant { value } => (*value, *value),
            TerminalClaim::IdentityClipped { m } => match m {
                Some(m) => (-*m, *m),
                None => (T::neg_infinity(), T::infinity()),
            },
            TerminalClaim::SmoothMonotone { amplitude, offset, .. } => {
                let a = amplitude.abs();
                (*offset - a, *offset + a)
            }
            TerminalClaim::Indicator { .. }
            | TerminalClaim::MollifiedIndicator { .. }
            | TerminalClaim::LevelSet { .. } => (zero, one),
            TerminalClaim::Step { levels, .. } => {
                // partial sums in threshold order
                let mut idx: Vec<usize> = (0..levels.len()).collect();
                if let TerminalClaim::Step { thresholds, .. } = self {
                    idx.sort_by(|&i, &j| thresholds[i].partial_cmp(&thresholds[j]).unwrap());
                }
                let mut acc = zero;
                let (mut lo, mut hi) = (zero, zero);
                for i in idx {
                    acc = acc + levels[i];
                    lo = lo.min(acc);
                    hi = hi.max(acc);
                }
                (lo, hi)
            }
            TerminalClaim::AbsValueClipped { m } => (zero, m.unwrap_or_else(T::infinity)),
            TerminalClaim::TwoBump { inner_level, tail_level, .. } => {
                let lo = zero.min(*inner_level).min(*tail_level);
                let hi = zero.max(*inner_level).max(*tail_level);
                (lo, hi)
            }
            TerminalClaim::Affine { inner, scale, shift } => {
                let (a, b) = inner.range();
                if *scale == zero {
                    return (*shift, *shift);
                }
                let (p, q) = (*scale * a + *shift, *scale * b + *shift);
                (p.min(q), p.max(q))
            }
            TerminalClaim::Clipped { inner, lo, hi } => {
                let (a, b) = inner.range();
                (a.max(*lo).min(*hi), b.min(*hi).max(*lo))
            }
            TerminalClaim::Sum { terms } => terms.iter().fold((zero, zero), |(lo, hi), t| {
                let (a, b) = t.range();
                (lo + a, hi + b)
            }),
        }
    }

    pub fn is_bounded(&self) -> bool {
        let (lo, hi) = self.range();
        lo.is_finite() && hi.is_finite()
    }

    /// `max(|inf Φ|, |sup Φ|)`.
    pub fn bound(&self) -> T {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    /// Points where the claim may jump or change monotonicity. Between
    /// consecutive breakpoints every form except non-comonotone sums is
    /// monotone.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = match self {
            TerminalClaim::Constant { .. } | TerminalClaim::SmoothMonotone { .. } => vec![],
            TerminalClaim::IdentityClipped { m } => m.map(|m| vec![-m, m]).unwrap_or_default(),
            TerminalClaim::Indicator { threshold, .. } => vec![*threshold],
            TerminalClaim::Step { thresholds, .. } => thresholds.clone(),
            TerminalClaim::AbsValueClipped { m } => {
                let mut v = vec![T::zero()];
                if let Some(m) = m {
                    v.extend([-*m, *m]);
                }
                v
            }
            TerminalClaim::TwoBump { a, b, c, .. } => vec![*a, *b, *c],
            TerminalClaim::MollifiedIndicator { threshold, eps, side } => {
                let two = lit::<T>(2.0);
                match side {
                    Side::Lower => vec![*threshold - two * *eps, *threshold],
                    Side::Upper => vec![*threshold, *threshold + two * *eps],
                    Side::Center => vec![*threshold - *eps, *threshold + *eps],
                }
            }
            TerminalClaim::LevelSet { intervals } => {
                intervals.iter().flat_map(|iv| [iv.lo, iv.hi]).flatten().collect()
            }
            TerminalClaim::Affine { inner, .. } => inner.breakpoints(),
            TerminalClaim::Clipped { inner, .. } => inner.breakpoints(),
            TerminalClaim::Sum { terms } => terms.iter().flat_map(|t| t.breakpoints()).collect(),
        };
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    /// Whether the claim takes finitely many values (step functions).
    pub fn is_piecewise_constant(&self) -> bool {
        match self {
            TerminalClaim::Constant { .. }
            | TerminalClaim::Indicator { .. }
            | TerminalClaim::Step { .. }
            | TerminalClaim::TwoBump { .. }
            | TerminalClaim::LevelSet { .. } => true,
            TerminalClaim::Affine { inner, .. } | TerminalClaim::Clipped { inner, .. } => {
                inner.is_piecewise_constant()
            }
            TerminalClaim::Sum { terms } => terms.iter().all(|t| t.is_piecewise_constant()),
            _ => false,
        }
    }

    /// Distinct values of a piecewise-constant claim, ascending.
    pub fn levels(&self) -> Option<Vec<T>> {
        if !self.is_piecewise_constant() {
            return None;
        }
        let bps = self.breakpoints();
        let mut pts = Vec::with_capacity(2 * bps.len() + 2);
        let one = T::one();
        match (bps.first(), bps.last()) {
            (Some(&first), Some(&last)) => {
                pts.push(first - one);
                pts.push(last + one);
                for w in bps.windows(2) {
                    pts.push(lit::<T>(0.5) * (w[0] + w[1]));
                }
                pts.extend(bps.iter().copied());
            }
            _ => pts.push(T::zero()),
        }
        let mut vals: Vec<T> = pts.into_iter().map(|x| self.value_at(x)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        Some(vals)
    }

    /// Discontinuities located at breakpoints, detected by one-sided limits.
    pub fn jumps(&self) -> Vec<Jump<T>> {
        let mut out = Vec::new();
        for b in self.breakpoints() {
            let delta = lit::<T>(1e-10) * T::one().max(b.abs());
            let left = self.value_at(b - delta);
            let right = self.value_at(b + delta);
            let at = self.value_at(b);
            let size = right - left;
            let scale = T::one() + left.abs().max(right.abs());
            if size.abs() > lit::<T>(1e-7) * scale {
                out.push(Jump { at: b, size, closed_right: (at - right).abs() <= (at - left).abs() });
            }
        }
        out
    }

    pub fn is_continuous(&self) -> bool {
        self.jumps().is_empty()
    }

    /// Class tag from the form, falling back to the monotonicity probe for
    /// composite claims.
    pub fn class_tag(&self) -> ClassTag {
        match self {
            TerminalClaim::Constant { .. }
            | TerminalClaim::IdentityClipped { .. }
            | TerminalClaim::MollifiedIndicator { .. } => ClassTag::MonotoneNondecreasing,
            TerminalClaim::SmoothMonotone { amplitude, .. } => {
                if *amplitude >= T::zero() {
                    ClassTag::MonotoneNondecreasing
                } else {
                    ClassTag::MonotoneNonincreasing
                }
            }
            TerminalClaim::Indicator { orientation, .. } => match orientation {
                Orientation::Geq => ClassTag::MonotoneNondecreasing,
                Orientation::Leq => ClassTag::MonotoneNonincreasing,
            },
            TerminalClaim::AbsValueClipped { .. } => ClassTag::MeasurableNonmonotone,
            _ => monotonicity_probe(self, 1000).class_tag(),
        }
    }

    /// Default sampling window: the breakpoints padded by 5, at least [−10, 10].
    pub fn natural_window(&self) -> (T, T) {
        let bps = self.breakpoints();
        let pad = lit::<T>(5.0);
        let lo = bps.first().map(|&b| b - pad).unwrap_or_else(T::zero).min(lit(-10.0));
        let hi = bps.last().map(|&b| b + pad).unwrap_or_else(T::zero).max(lit(10.0));
        (lo, hi)
    }

    /// `{x ∈ [lo, hi] : Φ(x) ≥ t}` as disjoint closed intervals; ends that
    /// touch the window are reported as unbounded.
    pub fn level_set(&self, t: T, lo: T, hi: T) -> Vec<Interval<T>> {
        level_set(self, t, lo, hi)
    }

    /// Short identifier used in scenario ids and reports.
    pub fn id(&self) -> String {
        match self {
            TerminalClaim::Constant { value } => format!("const({value})"),
            TerminalClaim::IdentityClipped { m } => match m {
                Some(m) => format!("identity_clipped({m})"),
                None => "identity".into(),
            },
            TerminalClaim::SmoothMonotone { amplitude, center, width, offset } => {
                format!("tanh({amplitude},{center},{width},{offset})")
            }
            TerminalClaim::Indicator { threshold, orientation } => match orientation {
                Orientation::Geq => format!("ind(x>={threshold})"),
                Orientation::Leq => format!("ind(x<={threshold})"),
            },
            TerminalClaim::Step { levels, thresholds } => format!("step({} jumps)", levels.len().min(thresholds.len())),
            TerminalClaim::AbsValueClipped { m } => match m {
                Some(m) => format!("abs_clipped({m})"),
                None => "abs".into(),
            },
            TerminalClaim::TwoBump { a, b, c, inner_level, tail_level } => {
                format!("two_bump({a},{b},{c};{inner_level},{tail_level})")
            }
            TerminalClaim::MollifiedIndicator { threshold, eps, side } => {
                format!("mollified_{}({threshold},{eps})", side.name())
            }
            TerminalClaim::LevelSet { intervals } => format!("level_set({} intervals)", intervals.len()),
            TerminalClaim::Affine { inner, scale, shift } => format!("{scale}*{}+{shift}", inner.id()),
            TerminalClaim::Clipped { inner, lo, hi } => format!("clip({},{lo},{hi})", inner.id()),
            TerminalClaim::Sum { terms } => {
                let parts: Vec<String> = terms.iter().map(|t| t.id()).collect();
                format!("sum({})", parts.join(","))
            }
        }
    }
}

impl<T: Real> Payoff<T> for TerminalClaim<T> {
    #[inline]
    fn value(&self, x: T) -> T {
        self.value_at(x)
    }
}

/// `1{Φ(x) ≥ t}`: the event payoff used by Monte Carlo capacity estimates.
#[derive(Debug, Clone)]
pub struct EventIndicator<'a, T> {
    pub claim: &'a TerminalClaim<T>,
    pub threshold: T,
}

impl<T: Real> Payoff<T> for EventIndicator<'_, T> {
    fn value(&self, x: T) -> T {
        if self.claim.value_at(x) >= self.threshold {
            T::one()
        } else {
            T::zero()
        }
    }
}

fn level_set<T: Real>(claim: &TerminalClaim<T>, t: T, lo: T, hi: T) -> Vec<Interval<T>> {
    assert!(lo < hi, "empty window");
    const SCAN: usize = 2048;
    let mut pts: Vec<T> = (0..=SCAN)
        .map(|k| lo + (hi - lo) * T::from_usize_lossy(k) / T::from_usize_lossy(SCAN))
        .collect();
    pts.extend(claim.breakpoints().into_iter().filter(|&b| b > lo && b < hi));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();

    let inside = |x: T| claim.value_at(x) >= t;
    let mut pieces: Vec<(T, T)> = Vec::new();
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let delta = (q - p) * lit(1e-9);
        let (pl, ql) = (p + delta, q - delta);
        let (a, b) = (inside(pl), inside(ql));
        let piece = match (a, b) {
            (true, true) => Some((p, q)),
            (false, false) => {
                // a narrow excursion can only be caught at the midpoint
                let m = lit::<T>(0.5) * (p + q);
                if inside(m) {
                    Some((bisect(&inside, pl, m, false), bisect(&inside, m, ql, true)))
                } else {
                    None
                }
            }
            (false, true) => Some((bisect(&inside, pl, ql, false), q)),
            (true, false) => Some((p, bisect(&inside, pl, ql, true))),
        };
        if let Some(pc) = piece {
            match pieces.last_mut() {
                Some(last) if pc.0 <= last.1 + lit::<T>(4.0) * delta => last.1 = pc.1,
                _ => pieces.push(pc),
            }
        }
    }
    pieces
        .into_iter()
        .map(|(a, b)| {
            let lo_end = if a <= lo { None } else { Some(a) };
            let hi_end = if b >= hi { None } else { Some(b) };
            Interval { lo: lo_end, hi: hi_end }
        })
        .collect()
}

/// Locates the switch of a predicate between `a` and `b`. With
/// `true_left` the predicate holds at `a` and fails at `b`; returns the last
/// point where it holds. Otherwise returns the first point where it holds.
fn bisect<T: Real>(pred: &impl Fn(T) -> bool, mut a: T, mut b: T, true_left: bool) -> T {
    for _ in 0..200 {
        let m = lit::<T>(0.5) * (a + b);
        if m <= a || m >= b {
            break;
        }
        if pred(m) == true_left {
            a = m;
        } else {
            b = m;
        }
    }
    if true_left {
        a
    } else {
        b
    }
}

/// Outcome of [`monotonicity_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
    Neither,
}

impl Monotonicity {
    pub fn class_tag(self) -> ClassTag {
        match self {
            Monotonicity::Nondecreasing => ClassTag::MonotoneNondecreasing,
            Monotonicity::Nonincreasing => ClassTag::MonotoneNonincreasing,
            Monotonicity::Neither => ClassTag::MeasurableNonmonotone,
        }
    }
}

/// Evaluates the claim on `sample_count` sorted points of its natural window
/// plus both sides of every breakpoint. A constant claim reports
/// nondecreasing.
pub fn monotonicity_probe<T: Real>(claim: &TerminalClaim<T>, sample_count: usize) -> Monotonicity {
    let n = sample_count.max(2);
    let (lo, hi) = claim.natural_window();
    let mut xs: Vec<T> = (0..n)
        .map(|k| lo + (hi - lo) * T::from_usize_lossy(k) / T::from_usize_lossy(n - 1))
        .collect();
    for b in claim.breakpoints() {
        let d = lit::<T>(1e-7) * T::one().max(b.abs());
        xs.extend([b - d, b, b + d]);
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let vals: Vec<T> = xs.iter().map(|&x| claim.value_at(x)).collect();
    let scale = vals.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let tol = lit::<T>(1e-12) * scale;
    let mut up = true;
    let mut down = true;
    for w in vals.windows(2) {
        if w[1] < w[0] - tol {
            up = false;
        }
        if w[1] > w[0] + tol {
            down = false;
        }
    }
    match (up, down) {
        (true, _) => Monotonicity::Nondecreasing,
        (false, true) => Monotonicity::Nonincreasing,
        _ => Monotonicity::Neither,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_examples() {
        assert_eq!(TerminalClaim::indicator(0.0).value_at(0.5), 1.0);
        assert_eq!(TerminalClaim::identity_clipped(3.0).value_at(7.0), 3.0);
        assert_eq!(TerminalClaim::abs_value_clipped(4.0).value_at(-2.0), 2.0);
        let tb = TerminalClaim::<f64>::two_bump_default();
        assert_eq!(tb.value_at(0.25), 1.0);
        assert_eq!(tb.value_at(1.0), 0.0);
        assert_eq!(tb.value_at(2.0), 0.5);
        let le = TerminalClaim::Indicator { threshold: 1.0, orientation: Orientation::Leq };
        assert_eq!(le.value_at(1.0), 1.0);
        assert_eq!(le.value_at(1.1), 0.0);
    }

    #[test]
    fn monotonicity_examples() {
        assert_eq!(monotonicity_probe(&TerminalClaim::identity_clipped(6.0), 100), Monotonicity::Nondecreasing);
        assert_eq!(monotonicity_probe(&TerminalClaim::abs_value_clipped(6.0), 100), Monotonicity::Neither);
        assert_eq!(monotonicity_probe(&TerminalClaim::<f64>::two_bump_default(), 100), Monotonicity::Neither);
        let dec = TerminalClaim::tanh(-1.0, 0.0, 1.0, 0.0);
        assert_eq!(monotonicity_probe(&dec, 100), Monotonicity::Nonincreasing);
        assert_eq!(monotonicity_probe(&TerminalClaim::constant(2.0), 10), Monotonicity::Nondecreasing);
    }

    #[test]
    fn class_tags_agree_with_probe() {
        let claims: Vec<TerminalClaim<f64>> = vec![
            TerminalClaim::constant(1.0),
            TerminalClaim::identity_clipped(6.0),
            TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0),
            TerminalClaim::tanh(-2.0, 1.0, 0.5, 0.0),
            TerminalClaim::indicator(0.3),
            TerminalClaim::Indicator { threshold: 0.3, orientation: Orientation::Leq },
            TerminalClaim::Step { levels: vec![0.5, 0.25], thresholds: vec![0.0, 1.0] },
            TerminalClaim::Step { levels: vec![0.5, -0.25], thresholds: vec![0.0, 1.0] },
            TerminalClaim::abs_value_clipped(6.0),
            TerminalClaim::two_bump_default(),
            TerminalClaim::mollified_indicator(0.0, 0.1, Side::Lower),
            TerminalClaim::interval_indicator(0.0, 1.0),
        ];
        for c in &claims {
            assert_eq!(c.class_tag(), monotonicity_probe(c, 1000).class_tag(), "{}", c.id());
        }
    }

    #[test]
    fn bounds_hold_on_samples() {
        let claims: Vec<TerminalClaim<f64>> = vec![
            TerminalClaim::identity_clipped(6.0),
            TerminalClaim::tanh(0.5, 0.0, 1.0, 0.5),
            TerminalClaim::abs_value_clipped(4.0),
            TerminalClaim::two_bump_default(),
            TerminalClaim::Step { levels: vec![1.0, -2.0, 0.5], thresholds: vec![0.0, 1.0, 2.0] },
        ];
        for c in &claims {
            let (lo, hi) = c.range();
            for k in 0..=2000 {
                let x = -20.0 + 40.0 * k as f64 / 2000.0;
                let v = c.value_at(x);
                assert!(v >= lo - 1e-15 && v <= hi + 1e-15, "{} at {x}", c.id());
            }
        }
        assert!(!TerminalClaim::<f64>::identity().is_bounded());
        assert!(TerminalClaim::<f64>::identity_clipped(6.0).is_bounded());
    }

    #[test]
    fn level_sets_of_basic_forms() {
        let id = TerminalClaim::<f64>::identity_clipped(6.0);
        let ls = id.level_set(0.7, -8.0, 8.0);
        assert_eq!(ls.len(), 1);
        assert!((ls[0].lo.unwrap() - 0.7).abs() < 1e-12);
        assert!(ls[0].hi.is_none());

        let ab = TerminalClaim::<f64>::abs_value_clipped(6.0);
        let ls = ab.level_set(1.5, -8.0, 8.0);
        assert_eq!(ls.len(), 2);
        assert!(ls[0].lo.is_none() && (ls[0].hi.unwrap() + 1.5).abs() < 1e-12);
        assert!((ls[1].lo.unwrap() - 1.5).abs() < 1e-12 && ls[1].hi.is_none());

        let tb = TerminalClaim::<f64>::two_bump_default();
        let ls = tb.level_set(0.25, -8.0, 8.0);
        assert_eq!(ls.len(), 2);
        assert!((ls[0].lo.unwrap()).abs() < 1e-12 && (ls[0].hi.unwrap() - 0.5).abs() < 1e-12);
        assert!((ls[1].lo.unwrap() - 1.5).abs() < 1e-12);
        let ls = tb.level_set(0.75, -8.0, 8.0);
        assert_eq!(ls.len(), 1);

        assert!(id.level_set(7.0, -8.0, 8.0).is_empty());
        let all = id.level_set(-7.0, -8.0, 8.0);
        assert_eq!(all.len(), 1);
        assert!(all[0].is_whole_line());
    }

    #[test]
    fn jumps_of_two_bump() {
        let j = TerminalClaim::<f64>::two_bump_default().jumps();
        assert_eq!(j.len(), 3);
        assert!((j[0].size - 1.0).abs() < 1e-12 && j[0].closed_right);
        assert!((j[1].size + 1.0).abs() < 1e-12 && !j[1].closed_right);
        assert!((j[2].size - 0.5).abs() < 1e-12 && j[2].closed_right);
        assert!(TerminalClaim::<f64>::identity_clipped(6.0).jumps().is_empty());
        assert!(TerminalClaim::<f64>::abs_value_clipped(6.0).is_continuous());
    }

    #[test]
    fn levels_of_step_claims() {
        let s = TerminalClaim::Step { levels: vec![0.5, 0.25], thresholds: vec![0.0, 1.0] };
        assert_eq!(s.levels().unwrap(), vec![0.0, 0.5, 0.75]);
        let sum = TerminalClaim::indicator(0.0).plus(TerminalClaim::indicator(1.0));
        assert_eq!(sum.levels().unwrap(), vec![0.0, 1.0, 2.0]);
        assert!(TerminalClaim::<f64>::identity_clipped(1.0).levels().is_none());
    }

    #[test]
    fn validation() {
        assert!(TerminalClaim::<f64>::identity_clipped(-1.0).validate().is_err());
        assert!(TerminalClaim::mollified_indicator(0.0, 0.0, Side::Lower).validate().is_err());
        let bad = TerminalClaim::TwoBump { a: 1.0, b: 0.5, c: 2.0, inner_level: 1.0, tail_level: 0.5 };
        assert!(bad.validate().is_err());
        assert!(TerminalClaim::Step { levels: vec![1.0], thresholds: vec![] }.validate().is_err());
    }

    #[test]
    fn json_forms() {
        let c: TerminalClaim<f64> = serde_json::from_str(r#"{"form":"identity_clipped","M":6}"#).unwrap();
        assert_eq!(c, TerminalClaim::identity_clipped(6.0));
        let tb: TerminalClaim<f64> = serde_json::from_str(r#"{"form":"two_bump"}"#).unwrap();
        assert_eq!(tb, TerminalClaim::two_bump_default());
        let ls: TerminalClaim<f64> =
            serde_json::from_str(r#"{"form":"level_set","intervals":[{"lo":0,"hi":null}]}"#).unwrap();
        assert_eq!(ls.value_at(3.0), 1.0);
    }
}
