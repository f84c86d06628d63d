//! Backend A: explicit finite differences for the terminal-value problem
//!
//! ```text
//! ∂ₜu + ½σ²∂ₓₓu + b∂ₓu + g(t, u, σ∂ₓu) = 0,   u(T, x) = Φ(x)
//! ```
//!
//! on a truncated interval, one state and one Brownian dimension.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::{ClassTag, Payoff, TerminalClaim};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::scalar::Real;
use crate::sde::{diffusion_scale, CoefficientField, TimeGrid};

/// Space sweeps below this width run serially; rayon overhead dominates.
const PAR_MIN_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSettings {
    pub nx: usize,
    /// Half-width of the domain in units of `sqrt(∫σ²dt)`.
    pub width: f64,
    /// Fraction of the admissible time step actually used.
    pub safety: f64,
}

impl Default for PdeSettings {
    fn default() -> Self {
        Self { nx: 801, width: 6.0, safety: 0.9 }
    }
}

/// Record of the explicit-scheme stability check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CflCertificate {
    pub dx: f64,
    pub sigma_max: f64,
    pub drift_max: f64,
    pub k2: f64,
    /// Largest `Δt_used / Δt_admissible` over all steps; ≤ 1 when certified.
    pub worst_ratio: f64,
    /// Smallest admissible step over the horizon.
    pub dt_admissible: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid<T> {
    pub x_min: T,
    pub x_max: T,
    pub nx: usize,
    /// Model time grid; every node is also a PDE node.
    pub time: TimeGrid<T>,
    /// PDE substeps inside each model step.
    pub substeps: Vec<usize>,
    pub cfl: Option<CflCertificate>,
}

impl<T: Real> SpaceTimeGrid<T> {
    /// Uniform grid with `substeps` PDE steps per model step. Not certified
    /// until [`SpaceTimeGrid::certify`] is called.
    pub fn uniform(x_min: T, x_max: T, nx: usize, time: TimeGrid<T>, substeps: usize) -> Result<Self> {
        if nx < 3 {
            return Err(Error::Input(format!("nx must be >= 3, got {nx}")));
        }
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Input(format!("bad space domain [{x_min}, {x_max}]")));
        }
        if substeps == 0 {
            return Err(Error::Input("substeps must be >= 1".into()));
        }
        Ok(Self { x_min, x_max, nx, time, substeps: vec![substeps; time.steps], cfl: None })
    }

    /// Default grid for a model: `x₀ ± width·sqrt(∫σ²)` (plus drift
    /// transport), and per model step the fewest substeps satisfying the CFL
    /// bound scaled by `safety`.
    pub fn for_model(
        coeff: &CoefficientField<T>,
        g: &GeneratorSpec<T>,
        x0: T,
        time: TimeGrid<T>,
        settings: &PdeSettings,
    ) -> Result<Self> {
        if !(settings.safety > 0.0 && settings.safety <= 1.0) {
            return Err(Error::Configuration(format!("CFL safety must be in (0, 1], got {}", settings.safety)));
        }
        let (x_min, x_max) = default_domain(coeff, x0, time.horizon, settings.width);
        let mut grid = Self::uniform(x_min, x_max, settings.nx, time, 1)?;
        for m in 0..time.steps {
            let adm = grid.admissible_dt(coeff, g, m);
            let h = time.dt().to_f64_lossy();
            grid.substeps[m] = if adm.is_finite() { (h / (settings.safety * adm)).ceil().max(1.0) as usize } else { 1 };
        }
        grid.certify(coeff, g)?;
        Ok(grid)
    }

    #[inline]
    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::from_usize_lossy(self.nx - 1)
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        if i == self.nx - 1 {
            return self.x_max;
        }
        self.x_min + self.dx() * T::from_usize_lossy(i)
    }

    pub fn xs(&self) -> Vec<T> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn total_steps(&self) -> usize {
        self.substeps.iter().sum()
    }

    /// Sup of `|σ|` and `|b|` over the domain on model step `m`, sampling the
    /// left endpoint and any coefficient break inside the step.
    fn coefficient_bounds(&self, coeff: &CoefficientField<T>, m: usize) -> (f64, f64) {
        let (t0, t1) = (self.time.node(m), self.time.node(m + 1));
        let mut times = vec![t0];
        times.extend(coeff.time_breaks().into_iter().filter(|&s| s > t0 && s < t1));
        let probes = 17;
        let mut smax = 0.0f64;
        let mut bmax = 0.0f64;
        for &t in &times {
            for k in 0..probes {
                let x = self.x_min + (self.x_max - self.x_min) * T::from_usize_lossy(k) / T::from_usize_lossy(probes - 1);
                let (b, s) = coeff.scalar(t, x);
                smax = smax.max(s.to_f64_lossy().abs());
                bmax = bmax.max(b.to_f64_lossy().abs());
            }
        }
        (smax, bmax)
    }

    /// `Δx² / (σ² + (K₂σ + |b|)Δx + K₂Δx²)` on model step `m`.
    fn admissible_dt(&self, coeff: &CoefficientField<T>, g: &GeneratorSpec<T>, m: usize) -> f64 {
        let dx = self.dx().to_f64_lossy();
        let k2 = g.lipschitz_k2.to_f64_lossy();
        let (s, b) = self.coefficient_bounds(coeff, m);
        let denom = s * s + (k2 * s + b) * dx + k2 * dx * dx;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            dx * dx / denom
        }
    }

    /// Checks every step against the CFL bound and records the certificate.
    pub fn certify(&mut self, coeff: &CoefficientField<T>, g: &GeneratorSpec<T>) -> Result<CflCertificate> {
        if self.substeps.len() != self.time.steps {
            return Err(Error::Input("substep table does not match the time grid".into()));
        }
        let h = self.time.dt().to_f64_lossy();
        let mut cert = CflCertificate {
            dx: self.dx().to_f64_lossy(),
            sigma_max: 0.0,
            drift_max: 0.0,
            k2: g.lipschitz_k2.to_f64_lossy(),
            worst_ratio: 0.0,
            dt_admissible: f64::INFINITY,
        };
        for m in 0..self.time.steps {
            let (s, b) = self.coefficient_bounds(coeff, m);
            cert.sigma_max = cert.sigma_max.max(s);
            cert.drift_max = cert.drift_max.max(b);
            let adm = self.admissible_dt(coeff, g, m);
            let used = h / self.substeps[m] as f64;
            cert.dt_admissible = cert.dt_admissible.min(adm);
            let ratio = used / adm;
            cert.worst_ratio = cert.worst_ratio.max(ratio);
            if ratio > 1.0 + 1e-12 {
                return Err(Error::Configuration(format!(
                    "CFL violated on model step {m}: dt = {used:.3e} exceeds admissible {adm:.3e}; use at least {} substeps",
                    (h / adm).ceil()
                )));
            }
        }
        self.cfl = Some(cert);
        Ok(cert)
    }
}

/// `x₀ ± (width·sqrt(∫σ²) + |b(x₀)|T)`, falling back to half-width 1 for a
/// degenerate diffusion.
pub fn default_domain<T: Real>(coeff: &CoefficientField<T>, x0: T, horizon: T, width: f64) -> (T, T) {
    let scale = diffusion_scale(coeff, &[x0], horizon, 4096);
    let (b, _) = coeff.scalar(T::zero(), x0);
    let mut half = T::lit(width) * scale + b.abs() * horizon;
    if !(half > T::zero()) {
        half = T::one();
    }
    (x0 - half, x0 + half)
}

/// Nodal values and gradients on the model time nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSurface<T> {
    pub grid: SpaceTimeGrid<T>,
    pub times: Vec<T>,
    pub xs: Vec<T>,
    /// `u[m][i]` at model node `m`, space node `i`.
    pub u: Vec<Vec<T>>,
    pub du: Vec<Vec<T>>,
    pub coeff_id: String,
    pub generator_id: String,
    pub claim_id: String,
    pub claim_class: ClassTag,
}

impl<T: Real> ValueSurface<T> {
    /// `u(t_m, x)` by linear interpolation, clamped to the domain.
    pub fn value_at(&self, m: usize, x: T) -> T {
        interpolate(&self.grid, &self.u[m], x)
    }

    /// Writes `t,x,u,du` rows after a `#`-prefixed metadata line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# coeff={}; generator={}; claim={}", self.coeff_id, self.generator_id, self.claim_id)?;
        writeln!(w, "t,x,u,du")?;
        for (m, t) in self.times.iter().enumerate() {
            for i in 0..self.xs.len() {
                writeln!(w, "{},{},{},{}", t, self.xs[i], self.u[m][i], self.du[m][i])?;
            }
        }
        Ok(())
    }
}

/// Linear interpolation of a nodal layer, clamped to the domain.
pub fn interpolate<T: Real>(grid: &SpaceTimeGrid<T>, layer: &[T], x: T) -> T {
    let pos = ((x - grid.x_min) / grid.dx()).to_f64_lossy();
    if pos <= 0.0 {
        return layer[0];
    }
    if pos >= (grid.nx - 1) as f64 {
        return layer[grid.nx - 1];
    }
    let i = pos.floor() as usize;
    let w = T::lit(pos - i as f64);
    if w == T::zero() {
        return layer[i];
    }
    layer[i] + (layer[i + 1] - layer[i]) * w
}

/// Central differences inside, one-sided at the ends.
pub fn gradient<T: Real>(layer: &[T], dx: T) -> Vec<T> {
    let n = layer.len();
    let mut out = vec![T::zero(); n];
    let two = T::lit(2.0);
    for i in 1..n - 1 {
        out[i] = (layer[i + 1] - layer[i - 1]) / (two * dx);
    }
    out[0] = (layer[1] - layer[0]) / dx;
    out[n - 1] = (layer[n - 1] - layer[n - 2]) / dx;
    out
}

fn check_inputs<T: Real>(coeff: &CoefficientField<T>, g: &GeneratorSpec<T>, grid: &SpaceTimeGrid<T>) -> Result<()> {
    if coeff.n != 1 || coeff.d != 1 {
        return Err(Error::Unsupported(format!(
            "the PDE backend needs n = d = 1, got n = {}, d = {}",
            coeff.n, coeff.d
        )));
    }
    if g.dimension != 1 {
        return Err(Error::Input(format!("driver dimension {} does not match d = 1", g.dimension)));
    }
    if grid.substeps.len() != grid.time.steps {
        return Err(Error::Input("substep table does not match the time grid".into()));
    }
    let mut probe = grid.clone();
    probe.certify(coeff, g)?;
    Ok(())
}

/// Marches backward from `Φ` on the nodes, calling `visit(m, layer)` at every
/// model node from `steps` down to 0.
pub fn march<T: Real, P: Payoff<T> + ?Sized>(
    coeff: &CoefficientField<T>,
    g: &GeneratorSpec<T>,
    payoff: &P,
    grid: &SpaceTimeGrid<T>,
    mut visit: impl FnMut(usize, &[T]),
) -> Result<()> {
    check_inputs(coeff, g, grid)?;
    let nx = grid.nx;
    let xs = grid.xs();
    let mut cur: Vec<T> = xs.iter().map(|&x| payoff.value(x)).collect();
    if let Some(i) = cur.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("terminal payoff is not finite at x = {}", xs[i])));
    }
    let mut next = vec![T::zero(); nx];
    visit(grid.time.steps, &cur);

    let dx = grid.dx();
    let ops = Stencil { inv_dx: dx.recip(), inv_2dx: (T::lit(2.0) * dx).recip(), inv_dx2: (dx * dx).recip() };
    // ½σ², b and σ on the nodes; presets change in time only at their breaks
    let mut hs2 = vec![T::zero(); nx];
    let mut drift = vec![T::zero(); nx];
    let mut sig = vec![T::zero(); nx];
    let fill = |t: T, hs2: &mut [T], drift: &mut [T], sig: &mut [T]| {
        for i in 0..nx {
            let (b, s) = coeff.scalar(t, xs[i]);
            hs2[i] = T::lit(0.5) * s * s;
            drift[i] = b;
            sig[i] = s;
        }
    };
    let breaks = coeff.time_breaks();

    for m in (0..grid.time.steps).rev() {
        let (t0, t1) = (grid.time.node(m), grid.time.node(m + 1));
        let k = grid.substeps[m];
        let dt = (t1 - t0) / T::from_usize_lossy(k);
        let varying = breaks.iter().any(|&b| b > t0 && b < t1);
        if !varying {
            fill(t0, &mut hs2, &mut drift, &mut sig);
        }
        for s in (0..k).rev() {
            let t = t0 + dt * T::from_usize_lossy(s);
            if varying {
                fill(t, &mut hs2, &mut drift, &mut sig);
            }
            let coef = Coefficients { hs2: &hs2, drift: &drift, sig: &sig };
            explicit_step(&cur, &mut next, &coef, &ops, g, t, dt);
            std::mem::swap(&mut cur, &mut next);
        }
        if let Some(i) = cur.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at t = {t0}, x = {} (space node {i})",
                xs[i]
            )));
        }
        visit(m, &cur);
    }
    Ok(())
}

struct Stencil<T> {
    inv_dx: T,
    inv_2dx: T,
    inv_dx2: T,
}

struct Coefficients<'a, T> {
    hs2: &'a [T],
    drift: &'a [T],
    sig: &'a [T],
}

/// One backward step `out = u + Δt[½σ²D₂u + bD₁u + g(t, u, σD₁u)]`.
fn explicit_step<T: Real>(u: &[T], out: &mut [T], c: &Coefficients<T>, s: &Stencil<T>, g: &GeneratorSpec<T>, t: T, dt: T) {
    let nx = u.len();
    let two = T::lit(2.0);
    let node = |i: usize, d1: T, dd: T| -> T {
        let z = c.sig[i] * d1;
        u[i] + dt * (c.hs2[i] * dd + c.drift[i] * d1 + g.eval_unchecked(t, u[i], std::slice::from_ref(&z)))
    };
    let d2 = |i: usize| (u[i + 1] - two * u[i] + u[i - 1]) * s.inv_dx2;
    let interior = |i: usize| node(i, (u[i + 1] - u[i - 1]) * s.inv_2dx, d2(i));
    let inner = &mut out[1..nx - 1];
    if nx >= PAR_MIN_NODES {
        inner.par_iter_mut().enumerate().with_min_len(1024).for_each(|(k, v)| *v = interior(k + 1));
    } else {
        for (k, v) in inner.iter_mut().enumerate() {
            *v = interior(k + 1);
        }
    }
    // Linearity closure: u_xx = 0 at the ends. Extrapolating u_xx from the
    // interior instead is unstable under drift.
    out[0] = node(0, (u[1] - u[0]) * s.inv_dx, T::zero());
    out[nx - 1] = node(nx - 1, (u[nx - 1] - u[nx - 2]) * s.inv_dx, T::zero());
}

/// Full surface for a general payoff, with ids supplied by the caller.
pub fn solve_payoff<T: Real, P: Payoff<T> + ?Sized>(
    coeff: &CoefficientField<T>,
    g: &GeneratorSpec<T>,
    payoff: &P,
    grid: &SpaceTimeGrid<T>,
    claim_id: String,
    claim_class: ClassTag,
) -> Result<ValueSurface<T>> {
    let steps = grid.time.steps;
    let mut u = vec![Vec::new(); steps + 1];
    march(coeff, g, payoff, grid, |m, layer| u[m] = layer.to_vec())?;
    let dx = grid.dx();
    let du = u.iter().map(|l| gradient(l, dx)).collect();
    let mut cert_grid = grid.clone();
    cert_grid.certify(coeff, g)?;
    Ok(ValueSurface {
        times: (0..=steps).map(|m| grid.time.node(m)).collect(),
        xs: grid.xs(),
        grid: cert_grid,
        u,
        du,
        coeff_id: coeff.id(),
        generator_id: g.name(),
        claim_id,
        claim_class,
    })
}

/// Solves the terminal-value problem for `claim` and returns the surface on
/// the model nodes. Discontinuous claims are taken at face value here; see
/// the expectation layer for the bracketing treatment.
pub fn solve_semilinear_pde<T: Real>(
    coeff: &CoefficientField<T>,
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<ValueSurface<T>> {
    claim.validate()?;
    solve_payoff(coeff, g, claim, grid, claim.id(), claim.class_tag())
}

/// `u(0, x₀)` without keeping the surface.
pub fn solve_value_at<T: Real, P: Payoff<T> + ?Sized>(
    coeff: &CoefficientField<T>,
    g: &GeneratorSpec<T>,
    payoff: &P,
    grid: &SpaceTimeGrid<T>,
    x0: T,
) -> Result<T> {
    let mut out = T::nan();
    march(coeff, g, payoff, grid, |m, layer| {
        if m == 0 {
            out = interpolate(grid, layer, x0);
        }
    })?;
    Ok(out)
}

/// `z(t,x) = σ(t,x)·∂ₓu(t,x)` on the model nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZSurface<T> {
    pub times: Vec<T>,
    pub xs: Vec<T>,
    pub z: Vec<Vec<T>>,
    /// Smallest `∂ₓu` over the surface, reported for monotone nondecreasing claims.
    pub min_gradient: Option<T>,
}

pub fn extract_z_surface<T: Real>(surface: &ValueSurface<T>, coeff: &CoefficientField<T>) -> ZSurface<T> {
    let z = surface
        .times
        .iter()
        .zip(&surface.du)
        .map(|(&t, du)| {
            surface.xs.iter().zip(du).map(|(&x, &d)| coeff.scalar(t, x).1 * d).collect()
        })
        .collect();
    let min_gradient = (surface.claim_class == ClassTag::MonotoneNondecreasing)
        .then(|| gradient_sign_check(surface, 0.0).min_gradient);
    ZSurface { times: surface.times.clone(), xs: surface.xs.clone(), z, min_gradient }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientReport<T> {
    pub min_gradient: T,
    pub at_time: T,
    pub at_x: T,
    pub pass: bool,
    /// Whether the surface's claim is tagged monotone nondecreasing.
    pub precondition_met: bool,
}

/// Pass iff `min ∂ₓu ≥ −tol` over the whole surface.
pub fn gradient_sign_check<T: Real>(surface: &ValueSurface<T>, tol: f64) -> GradientReport<T> {
    let mut best = (T::infinity(), T::zero(), T::zero());
    for (m, row) in surface.du.iter().enumerate() {
        for (i, &d) in row.iter().enumerate() {
            if d < best.0 {
                best = (d, surface.times[m], surface.xs[i]);
            }
        }
    }
    GradientReport {
        min_gradient: best.0,
        at_time: best.1,
        at_x: best.2,
        pass: best.0.to_f64_lossy() >= -tol,
        precondition_met: surface.claim_class == ClassTag::MonotoneNondecreasing,
    }
}
