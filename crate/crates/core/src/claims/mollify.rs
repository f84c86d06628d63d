use serde::{Deserialize, Serialize};

use super::{Jump, Payoff, TerminalClaim};
use crate::error::{Error, Result};
use crate::quadrature::integrate_64;
use crate::scalar::Real;

/// Which side of the indicator the smoothing band lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Built from `1_{[a−ε, ∞)}`: equals 1 on `[a, ∞)`, dominates the indicator.
    Lower,
    /// Built from `1_{(a+ε, ∞)}`: equals 0 on `(−∞, a]`, dominated by the indicator.
    Upper,
    /// `1_{[a,∞)}` convolved without shift: the band is `[a−ε, a+ε]` and the
    /// value at `a` is ½.
    #[default]
    Center,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
            Side::Center => "center",
        }
    }
}

fn bump(v: f64) -> f64 {
    if v.abs() < 1.0 {
        (-1.0 / (1.0 - v * v)).exp()
    } else {
        0.0
    }
}

fn bump_mass() -> f64 {
    use std::sync::OnceLock;
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| integrate_64(-1.0, 0.0, bump) * 2.0)
}

/// Distribution function of the normalised bump kernel
/// `exp(−1/(1−v²))·1{|v|<1}`, by 64-point Gauss–Legendre on the shorter tail.
pub fn kernel_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    if s > 0.0 {
        return 1.0 - kernel_cdf(-s);
    }
    integrate_64(-1.0, s, bump) / bump_mass()
}

/// Smooth monotone approximation of `1_{[a,∞)}` by convolution with the
/// rescaled bump kernel of radius `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifiedIndicator<T> {
    pub a: T,
    pub eps: T,
    pub side: Side,
}

impl<T: Real> MollifiedIndicator<T> {
    pub fn new(a: T, eps: T, side: Side) -> Result<Self> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::Domain(format!("mollification radius must be > 0, got {eps}")));
        }
        if !a.is_finite() {
            return Err(Error::Domain("threshold must be finite".into()));
        }
        Ok(Self { a, eps, side })
    }

    pub fn as_claim(&self) -> TerminalClaim<T> {
        TerminalClaim::MollifiedIndicator { threshold: self.a, eps: self.eps, side: self.side }
    }
}

/// Builds `ψ¹` (lower side) or `ψ²` (upper side) around threshold `a`.
pub fn mollify_indicator<T: Real>(a: T, eps: T, side: Side) -> Result<MollifiedIndicator<T>> {
    MollifiedIndicator::new(a, eps, side)
}

impl<T: Real> Payoff<T> for MollifiedIndicator<T> {
    fn value(&self, x: T) -> T {
        // ψ¹(x) = K((x − a + ε)/ε), ψ²(x) = K((x − a − ε)/ε)
        let shift = match self.side {
            Side::Lower => self.eps,
            Side::Upper => -self.eps,
            Side::Center => T::zero(),
        };
        let s = ((x - self.a + shift) / self.eps).to_f64_lossy();
        T::lit(kernel_cdf(s))
    }
}

/// A discontinuous claim with every jump replaced by a mollified step so
/// that the result dominates (`upper`) or is dominated by (`!upper`) the
/// original pointwise.
#[derive(Debug, Clone)]
pub struct SmoothedClaim<'a, T> {
    claim: &'a TerminalClaim<T>,
    jumps: Vec<Jump<T>>,
    eps: T,
    upper: bool,
}

impl<'a, T: Real> SmoothedClaim<'a, T> {
    pub fn new(claim: &'a TerminalClaim<T>, eps: T, upper: bool) -> Self {
        Self { claim, jumps: claim.jumps(), eps, upper }
    }

    /// `(upper, lower)` pair bracketing the claim.
    pub fn bracket(claim: &'a TerminalClaim<T>, eps: T) -> (Self, Self) {
        let jumps = claim.jumps();
        (
            Self { claim, jumps: jumps.clone(), eps, upper: true },
            Self { claim, jumps, eps, upper: false },
        )
    }

    pub fn has_jumps(&self) -> bool {
        !self.jumps.is_empty()
    }
}

impl<T: Real> Payoff<T> for SmoothedClaim<'_, T> {
    fn value(&self, x: T) -> T {
        let mut v = self.claim.value_at(x);
        for j in &self.jumps {
            // a positive jump is raised by ψ¹ and lowered by ψ²
            let side = if (j.size > T::zero()) == self.upper { Side::Lower } else { Side::Upper };
            let psi = MollifiedIndicator { a: j.at, eps: self.eps, side }.value(x);
            v = v - j.size * j.heaviside(x) + j.size * psi;
        }
        v
    }
}
