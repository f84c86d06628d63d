use super::{monotonicity_probe, Monotonicity, Payoff, TerminalClaim};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `Φ_N(x) = Σ_{i=1}^{N} (M/N)·1{Φ(x) ≥ iM/N}` for a claim with `0 ≤ Φ ≤ M`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepApproximation<T> {
    pub source: TerminalClaim<T>,
    pub n: usize,
    pub m: T,
}

/// Builds `Φ_N`. `m` defaults to `sup Φ`; the claim must satisfy
/// `0 ≤ Φ ≤ M` (shift or clip it first otherwise).
pub fn make_step_approximation<T: Real>(
    claim: &TerminalClaim<T>,
    n: usize,
    m: Option<T>,
) -> Result<StepApproximation<T>> {
    if n == 0 {
        return Err(Error::Domain("step approximation needs N >= 1".into()));
    }
    claim.validate()?;
    let (lo, hi) = claim.range();
    let m = m.unwrap_or(hi);
    if !(lo >= T::zero()) || !(hi <= m) || !m.is_finite() || !(m > T::zero()) {
        return Err(Error::Domain(format!(
            "step approximation requires 0 <= Φ <= M with finite M > 0; claim range is [{lo}, {hi}], M = {m}"
        )));
    }
    Ok(StepApproximation { source: claim.clone(), n, m })
}

impl<T: Real> StepApproximation<T> {
    pub fn level(&self, i: usize) -> T {
        T::from_usize_lossy(i) * self.m / T::from_usize_lossy(self.n)
    }

    /// Value of `Φ_N` given `Φ(x)`.
    pub fn apply(&self, phi: T) -> T {
        let w = self.m / T::from_usize_lossy(self.n);
        let mut acc = T::zero();
        for i in 1..=self.n {
            if phi >= self.level(i) {
                acc = acc + w;
            }
        }
        acc
    }

    /// Explicit step claim `Σ (M/N)·1{x ≥ a_i}` for a nondecreasing source,
    /// with thresholds located inside `window`. Levels the source never
    /// reaches inside the window are dropped; levels reached on the whole
    /// window become a constant term.
    pub fn to_claim(&self, window: (T, T)) -> Result<TerminalClaim<T>> {
        if monotonicity_probe(&self.source, 1000) != Monotonicity::Nondecreasing {
            return Err(Error::Domain(
                "explicit step representation needs a nondecreasing source claim".into(),
            ));
        }
        let w = self.m / T::from_usize_lossy(self.n);
        let mut levels = Vec::new();
        let mut thresholds = Vec::new();
        let mut constant = T::zero();
        for i in 1..=self.n {
            let set = self.source.level_set(self.level(i), window.0, window.1);
            match set.first() {
                None => {}
                Some(iv) => match iv.lo {
                    None => constant = constant + w,
                    Some(a) => {
                        levels.push(w);
                        thresholds.push(a);
                    }
                },
            }
        }
        let step = TerminalClaim::Step { levels, thresholds };
        Ok(if constant > T::zero() { step.shifted(constant) } else { step })
    }
}

impl<T: Real> Payoff<T> for StepApproximation<T> {
    fn value(&self, x: T) -> T {
        self.apply(self.source.value_at(x))
    }
}
