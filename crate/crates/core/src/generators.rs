//! BSDE drivers `g(t, y, z)` and numerical probes of their structure.
//!
//! Every preset satisfies `g(t, y, 0) = 0` and is Lipschitz in `(y, z)`;
//! the catalogue is chosen so that each combination of the structural
//! properties (y-independence, positive homogeneity, full homogeneity in `z`)
//! is realised by at least one preset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::Halton;
use crate::scalar::{lit, Real};

/// Half-width of the `y` and `z` ranges of the classification box.
pub const BOX_YZ: f64 = 5.0;
/// Half-width of the `λ` range of the classification box.
pub const BOX_LAMBDA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorKind<T> {
    /// `g ≡ 0`: the linear expectation.
    Zero,
    /// `g = μ·z`.
    Linear { mu: Vec<T> },
    /// `g = κ|z|`.
    Abs { kappa: T },
    /// `g = κ|z⁺|`, positive parts taken componentwise.
    PosPart { kappa: T },
    /// `g = sqrt(κ² + |z|²) − κ`; neither homogeneous nor linear.
    SmoothNonhom { kappa: T },
    /// `g = base(z)·(1 + ½ sin(βy)) / 1.5`.
    YModulated {
        base: Box<GeneratorKind<T>>,
        beta: T,
    },
}

impl<T: Real> GeneratorKind<T> {
    /// Lipschitz constant of the `z`-dependence.
    fn z_lipschitz(&self) -> T {
        match self {
            GeneratorKind::Zero => T::zero(),
            GeneratorKind::Linear { mu } => norm(mu),
            GeneratorKind::Abs { kappa } | GeneratorKind::PosPart { kappa } => kappa.abs(),
            GeneratorKind::SmoothNonhom { .. } => T::one(),
            GeneratorKind::YModulated { base, .. } => base.z_lipschitz(),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            GeneratorKind::Zero => Ok(()),
            GeneratorKind::Linear { mu } => {
                if mu.len() != d {
                    return Err(Error::Input(format!(
                        "linear driver has {} coefficients, Brownian dimension is {d}",
                        mu.len()
                    )));
                }
                if mu.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Domain("linear driver coefficients must be finite".into()));
                }
                Ok(())
            }
            GeneratorKind::Abs { kappa } | GeneratorKind::PosPart { kappa } => {
                if !(*kappa >= T::zero()) || !kappa.is_finite() {
                    return Err(Error::Domain(format!("kappa must be finite and >= 0, got {kappa}")));
                }
                Ok(())
            }
            GeneratorKind::SmoothNonhom { kappa } => {
                if !(*kappa > T::zero()) || !kappa.is_finite() {
                    return Err(Error::Domain(format!("kappa must be finite and > 0, got {kappa}")));
                }
                Ok(())
            }
            GeneratorKind::YModulated { base, beta } => {
                if matches!(**base, GeneratorKind::YModulated { .. }) {
                    return Err(Error::Domain("y_modulated base must not itself be y_modulated".into()));
                }
                if !beta.is_finite() {
                    return Err(Error::Domain("beta must be finite".into()));
                }
                base.validate(d)
            }
        }
    }

    #[inline]
    fn eval(&self, y: T, z: &[T]) -> T {
        match self {
            GeneratorKind::Zero => T::zero(),
            GeneratorKind::Linear { mu } => mu.iter().zip(z).fold(T::zero(), |acc, (&m, &zi)| acc + m * zi),
            GeneratorKind::Abs { kappa } => *kappa * norm(z),
            GeneratorKind::PosPart { kappa } if z.len() == 1 => *kappa * z[0].max(T::zero()),
            GeneratorKind::PosPart { kappa } => {
                let sq = z.iter().fold(T::zero(), |acc, &zi| {
                    let p = zi.max(T::zero());
                    acc + p * p
                });
                *kappa * sq.sqrt()
            }
            GeneratorKind::SmoothNonhom { kappa } => {
                let n = norm(z);
                // √(κ²+|z|²) − κ rewritten to avoid cancellation for small |z|
                n * n / ((*kappa * *kappa + n * n).sqrt() + *kappa)
            }
            GeneratorKind::YModulated { base, beta } => {
                let half = lit::<T>(0.5);
                base.eval(y, z) * (T::one() + half * (*beta * y).sin()) / lit(1.5)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            GeneratorKind::Zero => "zero".into(),
            GeneratorKind::Linear { mu } => format!("linear{mu:?}"),
            GeneratorKind::Abs { kappa } => format!("abs({kappa})"),
            GeneratorKind::PosPart { kappa } => format!("pos_part({kappa})"),
            GeneratorKind::SmoothNonhom { kappa } => format!("smooth_nonhom({kappa})"),
            GeneratorKind::YModulated { base, beta } => format!("y_modulated({},{beta})", base.name()),
        }
    }
}

#[inline]
fn norm<T: Real>(z: &[T]) -> T {
    if z.len() == 1 {
        return z[0].abs();
    }
    z.iter().fold(T::zero(), |acc, &zi| acc + zi * zi).sqrt()
}

/// A driver preset together with its declared Lipschitz constant and the
/// Brownian dimension it acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec<T> {
    pub kind: GeneratorKind<T>,
    pub lipschitz_k2: T,
    pub dimension: usize,
}

impl<T: Real> GeneratorSpec<T> {
    /// Builds a preset with its exact declared Lipschitz constant.
    ///
    /// For `y_modulated` the `y`-Lipschitz constant grows with `|z|`, so the
    /// declared constant is the one valid on the classification box.
    pub fn new(kind: GeneratorKind<T>, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Input("Brownian dimension must be >= 1".into()));
        }
        kind.validate(dimension)?;
        let k2 = match &kind {
            GeneratorKind::YModulated { base, beta } => {
                let zmax = lit::<T>(BOX_YZ) * T::from_usize_lossy(dimension).sqrt();
                base.z_lipschitz() * T::one().max(beta.abs() * zmax / lit(3.0))
            }
            other => other.z_lipschitz(),
        };
        Ok(Self { kind, lipschitz_k2: k2, dimension })
    }

    pub fn zero(dimension: usize) -> Self {
        Self::new(GeneratorKind::Zero, dimension).expect("zero driver is valid")
    }

    pub fn linear(mu: Vec<T>) -> Result<Self> {
        let d = mu.len();
        Self::new(GeneratorKind::Linear { mu }, d)
    }

    pub fn abs(kappa: T) -> Result<Self> {
        Self::new(GeneratorKind::Abs { kappa }, 1)
    }

    pub fn pos_part(kappa: T) -> Result<Self> {
        Self::new(GeneratorKind::PosPart { kappa }, 1)
    }

    pub fn smooth_nonhom(kappa: T) -> Result<Self> {
        Self::new(GeneratorKind::SmoothNonhom { kappa }, 1)
    }

    pub fn y_modulated(base: GeneratorKind<T>, beta: T) -> Result<Self> {
        Self::new(GeneratorKind::YModulated { base: Box::new(base), beta }, 1)
    }

    /// Overrides the declared Lipschitz constant (checked by [`lipschitz_probe`]).
    pub fn with_declared_lipschitz(mut self, k2: T) -> Self {
        self.lipschitz_k2 = k2;
        self
    }

    /// `g(t, y, z)`; the time argument is accepted for interface parity,
    /// every preset is autonomous.
    pub fn eval(&self, t: T, y: T, z: &[T]) -> Result<T> {
        if z.len() != self.dimension {
            return Err(Error::Input(format!(
                "z has length {}, driver dimension is {}",
                z.len(),
                self.dimension
            )));
        }
        Ok(self.eval_unchecked(t, y, z))
    }

    /// `g(t, y, z)` without the length check; for solver inner loops.
    #[inline]
    pub fn eval_unchecked(&self, _t: T, y: T, z: &[T]) -> T {
        self.kind.eval(y, z)
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }

    /// Checks `g(t, y, 0) = 0` on a deterministic sample.
    pub fn check_vanishes_at_zero(&self, samples: usize) -> Result<()> {
        let zero = vec![T::zero(); self.dimension];
        let mut h = Halton::new(2);
        for _ in 0..samples.max(1) {
            let p = h.next_point();
            let t = lit::<T>(p[0]);
            let y = lit::<T>(BOX_YZ * (2.0 * p[1] - 1.0));
            let v = self.eval_unchecked(t, y, &zero);
            if v != T::zero() {
                return Err(Error::Precondition(format!(
                    "driver {} violates g(t,y,0)=0 at (t={t}, y={y}): {v}",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

/// Structural properties of a driver detected by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProperties {
    pub independent_of_y: bool,
    pub positively_homogeneous: bool,
    pub fully_homogeneous: bool,
    /// Largest raw defect over all three probes.
    pub max_violation: f64,
    pub y_dependence_defect: f64,
    pub positive_homogeneity_defect: f64,
    pub full_homogeneity_defect: f64,
}

/// Sampling box for [`classify_generator_in`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationBox {
    pub horizon: f64,
    pub y_half_width: f64,
    pub z_half_width: f64,
    pub lambda_half_width: f64,
}

impl Default for ClassificationBox {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            y_half_width: BOX_YZ,
            z_half_width: BOX_YZ,
            lambda_half_width: BOX_LAMBDA,
        }
    }
}

pub fn classify_generator<T: Real>(g: &GeneratorSpec<T>, sample_budget: usize, tol: f64) -> GeneratorProperties {
    classify_generator_in(g, sample_budget, tol, &ClassificationBox::default())
}

/// Samples `(t, y, y', z, λ)` from a Halton sequence over the box and measures
/// the homogeneity and y-dependence defects of `g`.
pub fn classify_generator_in<T: Real>(
    g: &GeneratorSpec<T>,
    sample_budget: usize,
    tol: f64,
    bx: &ClassificationBox,
) -> GeneratorProperties {
    let d = g.dimension;
    let mut h = Halton::new(3 + d + 1);
    let mut z = vec![T::zero(); d];
    let mut lz = vec![T::zero(); d];

    let mut y_defect = 0.0_f64;
    let mut pos_defect = 0.0_f64;
    let mut full_defect = 0.0_f64;
    let mut y_ok = true;
    let mut pos_ok = true;
    let mut full_ok = true;

    let mut check = |t: f64, y: f64, y2: f64, zv: &[f64], lambda: f64| {
        for (zi, &v) in z.iter_mut().zip(zv) {
            *zi = lit(v);
        }
        let (tt, yy, yy2) = (lit::<T>(t), lit::<T>(y), lit::<T>(y2));
        let base = g.eval_unchecked(tt, yy, &z);
        let other_y = g.eval_unchecked(tt, yy2, &z);
        let dy = (base - other_y).abs().to_f64_lossy();
        y_defect = y_defect.max(dy);
        if dy > tol {
            y_ok = false;
        }

        let zn = zv.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (sign_lambda, is_pos) in [(lambda.abs(), true), (lambda, false)] {
            let lam = lit::<T>(sign_lambda);
            for (lzi, &zi) in lz.iter_mut().zip(z.iter()) {
                *lzi = lam * zi;
            }
            let defect = (g.eval_unchecked(tt, yy, &lz) - lam * base).abs().to_f64_lossy();
            let allowed = tol * (1.0 + sign_lambda.abs() * zn);
            if is_pos {
                pos_defect = pos_defect.max(defect);
                if defect > allowed {
                    pos_ok = false;
                }
            } else {
                full_defect = full_defect.max(defect);
                if defect > allowed {
                    full_ok = false;
                }
            }
        }
    };

    // Structured witnesses first: unit directions with λ = −1, 2.
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        check(0.0, 0.0, 1.0, &e, -1.0);
        check(0.0, 0.0, 1.0, &e, 2.0);
        e[j] = -1.0;
        check(0.0, 0.0, 1.0, &e, 2.0);
    }

    let mut zv = vec![0.0; d];
    for _ in 0..sample_budget {
        let p = h.next_point();
        let t = bx.horizon * p[0];
        let y = bx.y_half_width * (2.0 * p[1] - 1.0);
        let y2 = bx.y_half_width * (2.0 * p[2] - 1.0);
        for j in 0..d {
            zv[j] = bx.z_half_width * (2.0 * p[3 + j] - 1.0);
        }
        let lambda = bx.lambda_half_width * (2.0 * p[3 + d] - 1.0);
        check(t, y, y2, &zv, lambda);
    }

    let positively_homogeneous = pos_ok;
    GeneratorProperties {
        independent_of_y: y_ok,
        positively_homogeneous,
        fully_homogeneous: positively_homogeneous && full_ok,
        max_violation: y_defect.max(pos_defect).max(full_defect),
        y_dependence_defect: y_defect,
        positive_homogeneity_defect: pos_defect,
        full_homogeneity_defect: full_defect,
    }
}

/// Empirical Lipschitz quotient `|Δg| / (|Δy| + |Δz|)` over sampled pairs.
///
/// Half of the pairs are local perturbations (relative size 1e-4) so the
/// maximum approaches the supremum of the derivative; the other half are
/// unconstrained pairs across the box. Fails when the quotient exceeds the
/// declared constant by more than 1%.
pub fn lipschitz_probe<T: Real>(g: &GeneratorSpec<T>, sample_budget: usize) -> Result<f64> {
    let d = g.dimension;
    let mut h = Halton::new(2 * (1 + d) + 1);
    let mut z1 = vec![T::zero(); d];
    let mut z2 = vec![T::zero(); d];
    let mut best = 0.0_f64;
    for k in 0..sample_budget {
        let p = h.next_point();
        let t = lit::<T>(p[0]);
        let local = k % 2 == 0;
        let y1 = BOX_YZ * (2.0 * p[1] - 1.0);
        let mut y2 = BOX_YZ * (2.0 * p[2 + d] - 1.0);
        if local {
            y2 = y1 + 1e-4 * (2.0 * p[2 + d] - 1.0);
        }
        let mut dz = 0.0;
        for j in 0..d {
            let a = BOX_YZ * (2.0 * p[2 + j] - 1.0);
            let mut b = BOX_YZ * (2.0 * p[3 + d + j] - 1.0);
            if local {
                b = a + 1e-4 * (2.0 * p[3 + d + j] - 1.0);
            }
            z1[j] = lit(a);
            z2[j] = lit(b);
            dz += (a - b) * (a - b);
        }
        let denom = (y1 - y2).abs() + dz.sqrt();
        if denom <= 1e-12 {
            continue;
        }
        let num = (g.eval_unchecked(t, lit(y1), &z1) - g.eval_unchecked(t, lit(y2), &z2))
            .abs()
            .to_f64_lossy();
        best = best.max(num / denom);
    }
    let declared = g.lipschitz_k2.to_f64_lossy();
    if best > declared * 1.01 + 1e-12 {
        return Err(Error::Specification(format!(
            "driver {} has empirical Lipschitz quotient {best:.6} above declared K2 = {declared}",
            g.name()
        )));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn presets() -> Vec<GeneratorSpec<f64>> {
        vec![
            GeneratorSpec::zero(1),
            GeneratorSpec::linear(vec![0.3]).unwrap(),
            GeneratorSpec::abs(0.5).unwrap(),
            GeneratorSpec::pos_part(0.5).unwrap(),
            GeneratorSpec::smooth_nonhom(1.0).unwrap(),
            GeneratorSpec::y_modulated(GeneratorKind::Abs { kappa: 1.0 }, 1.0).unwrap(),
        ]
    }

    #[test]
    fn closed_form_values() {
        let g = GeneratorSpec::abs(0.5).unwrap();
        assert_eq!(g.eval(0.3, 7.0, &[-2.0]).unwrap(), 1.0);
        let z = GeneratorSpec::<f64>::zero(1);
        assert_eq!(z.eval(0.9, -3.0, &[11.0]).unwrap(), 0.0);
        let s = GeneratorSpec::smooth_nonhom(1.0).unwrap();
        assert_abs_diff_eq!(s.eval(0.0, 0.0, &[1.0]).unwrap(), 2f64.sqrt() - 1.0, epsilon = 1e-15);
        let p = GeneratorSpec::pos_part(2.0).unwrap();
        assert_eq!(p.eval(0.0, 0.0, &[-1.0]).unwrap(), 0.0);
        assert_eq!(p.eval(0.0, 0.0, &[1.5]).unwrap(), 3.0);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let g = GeneratorSpec::abs(0.5).unwrap();
        assert!(matches!(g.eval(0.0, 0.0, &[1.0, 2.0]), Err(Error::Input(_))));
        assert!(matches!(GeneratorSpec::<f64>::linear(vec![]), Err(Error::Input(_))));
        assert!(matches!(GeneratorSpec::abs(-1.0), Err(Error::Domain(_))));
        assert!(matches!(GeneratorSpec::smooth_nonhom(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn every_preset_vanishes_at_zero() {
        for g in presets() {
            g.check_vanishes_at_zero(500).unwrap();
        }
    }

    #[test]
    fn classification_flags() {
        let abs = classify_generator(&GeneratorSpec::abs(1.0).unwrap(), 1000, 1e-8);
        assert!(abs.positively_homogeneous && !abs.fully_homogeneous && abs.independent_of_y);
        assert!(abs.max_violation >= 2.0);
        assert_eq!(abs.positive_homogeneity_defect, 0.0);

        let lin = classify_generator(&GeneratorSpec::linear(vec![0.3]).unwrap(), 1000, 1e-12);
        assert!(lin.positively_homogeneous && lin.fully_homogeneous && lin.independent_of_y);
        let zero = classify_generator(&GeneratorSpec::<f64>::zero(1), 1000, 1e-12);
        assert!(zero.positively_homogeneous && zero.fully_homogeneous && zero.independent_of_y);

        let pp = classify_generator(&GeneratorSpec::pos_part(0.5).unwrap(), 1000, 1e-8);
        assert!(pp.positively_homogeneous && !pp.fully_homogeneous);
        assert_eq!(pp.positive_homogeneity_defect, 0.0);

        let ym = classify_generator(
            &GeneratorSpec::y_modulated(GeneratorKind::Abs { kappa: 1.0 }, 1.0).unwrap(),
            1000,
            1e-8,
        );
        assert!(!ym.independent_of_y);
    }

    #[test]
    fn smooth_nonhom_defect_on_small_box_exceeds_tenth() {
        // dense grid oracle over |z| <= 2, 0 <= λ <= 2
        let g = GeneratorSpec::smooth_nonhom(1.0).unwrap();
        let mut oracle = 0.0_f64;
        for i in 0..=200 {
            let z = -2.0 + 4.0 * i as f64 / 200.0;
            for j in 0..=200 {
                let l = 2.0 * j as f64 / 200.0;
                let d = (g.eval(0.0, 0.0, &[l * z]).unwrap() - l * g.eval(0.0, 0.0, &[z]).unwrap()).abs();
                oracle = oracle.max(d);
            }
        }
        assert!(oracle >= 0.1);
        let bx = ClassificationBox { z_half_width: 2.0, lambda_half_width: 2.0, ..Default::default() };
        let props = classify_generator_in(&g, 2000, 1e-8, &bx);
        assert!(!props.positively_homogeneous);
        assert!(props.max_violation >= 0.1);
        assert!(props.positive_homogeneity_defect <= oracle + 1e-12);
    }

    #[test]
    fn lipschitz_probe_respects_declared_constants() {
        let q = lipschitz_probe(&GeneratorSpec::abs(0.5).unwrap(), 2000).unwrap();
        assert!(q <= 0.5 * (1.0 + 1e-12));
        assert!(q > 0.45);
        assert_eq!(lipschitz_probe(&GeneratorSpec::<f64>::zero(1), 500).unwrap(), 0.0);

        let ym = GeneratorSpec::y_modulated(GeneratorKind::Abs { kappa: 1.0 }, 1.0).unwrap();
        let q = lipschitz_probe(&ym, 4000).unwrap();
        assert!(q <= 2.0);
        // dense-grid maximisation of |∂g/∂y| on the box: max |z|·β/3
        assert!(q > 1.5, "quotient {q}");
    }

    #[test]
    fn misdeclared_lipschitz_is_specification_error() {
        let g = GeneratorSpec::abs(1.0).unwrap().with_declared_lipschitz(0.5);
        assert!(matches!(lipschitz_probe(&g, 500), Err(Error::Specification(_))));
    }

    #[test]
    fn vector_drivers() {
        let g = GeneratorSpec::linear(vec![0.1, -0.2]).unwrap();
        assert_abs_diff_eq!(g.eval(0.0, 0.0, &[1.0, 1.0]).unwrap(), -0.1, epsilon = 1e-15);
        let a = GeneratorSpec::new(GeneratorKind::Abs { kappa: 1.0 }, 2).unwrap();
        assert_abs_diff_eq!(a.eval(0.0, 0.0, &[3.0, 4.0]).unwrap(), 5.0, epsilon = 1e-15);
        let props = classify_generator(&a, 500, 1e-8);
        assert!(props.positively_homogeneous && !props.fully_homogeneous);
    }

    #[test]
    fn json_shape() {
        let k: GeneratorKind<f64> = serde_json::from_str(r#"{"kind":"abs","kappa":0.5}"#).unwrap();
        assert_eq!(k, GeneratorKind::Abs { kappa: 0.5 });
        let y: GeneratorKind<f64> =
            serde_json::from_str(r#"{"kind":"y_modulated","base":{"kind":"abs","kappa":1},"beta":1}"#).unwrap();
        assert!(matches!(y, GeneratorKind::YModulated { .. }));
        assert!(serde_json::from_str::<GeneratorKind<f64>>(r#"{"kind":"abs","kapa":0.5}"#).is_err());
    }
}
