//! Forward diffusion `dX = b(t,X)dt + σ(t,X)dW` and its Euler–Maruyama
//! simulation.
//!
//! Randomness is counter based: path `p` draws from ChaCha stream `p` of the
//! run seed, so an ensemble is bit-identical however the paths are scheduled.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift<T> {
    Zero,
    Constant { c: Vec<T> },
    /// `b(x) = A·x + c` with `A` row-major `n×n`.
    Affine { a: Vec<T>, c: Vec<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diffusion<T> {
    /// Constant `n×d` matrix, row-major.
    Constant { matrix: Vec<T> },
    /// `scale·1_{[start, end)}(t)` on the diagonal. The window is half-open
    /// so that left-point time stepping integrates exactly `end − start`.
    TimeWindow { scale: T, start: T, end: T },
    /// `a·x_i + c` on the diagonal.
    AffineScalar { a: T, c: T },
}

/// Drift and diffusion presets of the forward SDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField<T> {
    pub drift: Drift<T>,
    pub diffusion: Diffusion<T>,
    pub n: usize,
    pub d: usize,
    pub lipschitz_k1: T,
}

impl<T: Real> CoefficientField<T> {
    pub fn new(drift: Drift<T>, diffusion: Diffusion<T>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Input("state and Brownian dimensions must be >= 1".into()));
        }
        let k_drift = match &drift {
            Drift::Zero => T::zero(),
            Drift::Constant { c } => {
                check_len(c.len(), n, "constant drift")?;
                T::zero()
            }
            Drift::Affine { a, c } => {
                check_len(a.len(), n * n, "affine drift matrix")?;
                check_len(c.len(), n, "affine drift offset")?;
                a.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
            }
        };
        let k_diff = match &diffusion {
            Diffusion::Constant { matrix } => {
                check_len(matrix.len(), n * d, "diffusion matrix")?;
                T::zero()
            }
            Diffusion::TimeWindow { start, end, .. } => {
                if !(start <= end) {
                    return Err(Error::Input(format!("time window [{start}, {end}) is reversed")));
                }
                T::zero()
            }
            Diffusion::AffineScalar { a, .. } => a.abs(),
        };
        if !matches!(diffusion, Diffusion::Constant { .. }) && n != d {
            return Err(Error::Input(format!(
                "diagonal diffusion presets need n == d, got n = {n}, d = {d}"
            )));
        }
        Ok(Self { drift, diffusion, n, d, lipschitz_k1: k_drift.max(k_diff) })
    }

    /// One-dimensional Brownian motion `X = x₀ + σW`.
    pub fn brownian(sigma: T) -> Self {
        Self::new(Drift::Zero, Diffusion::Constant { matrix: vec![sigma] }, 1, 1).expect("valid preset")
    }

    /// `σ(s) = z·1_{[t, t+ε)}(s)`, zero drift.
    pub fn brownian_window(z: T, start: T, len: T) -> Self {
        Self::new(Drift::Zero, Diffusion::TimeWindow { scale: z, start, end: start + len }, 1, 1)
            .expect("valid preset")
    }

    /// Geometric Brownian motion `dX = μX dt + sX dW`.
    pub fn geometric(mu: T, s: T) -> Self {
        Self::new(
            Drift::Affine { a: vec![mu], c: vec![T::zero()] },
            Diffusion::AffineScalar { a: s, c: T::zero() },
            1,
            1,
        )
        .expect("valid preset")
    }

    pub fn id(&self) -> String {
        format!("n={};d={};b={:?};sigma={:?}", self.n, self.d, self.drift, self.diffusion)
    }

    /// Writes `b(t,x)` into `out` (length n).
    #[inline]
    pub fn drift_into(&self, _t: T, x: &[T], out: &mut [T]) {
        match &self.drift {
            Drift::Zero => out.iter_mut().for_each(|v| *v = T::zero()),
            Drift::Constant { c } => out.copy_from_slice(c),
            Drift::Affine { a, c } => {
                let n = self.n;
                for i in 0..n {
                    let row = &a[i * n..(i + 1) * n];
                    out[i] = row.iter().zip(x).fold(c[i], |acc, (&aij, &xj)| acc + aij * xj);
                }
            }
        }
    }

    /// Writes `σ(t,x)` into `out` (length n·d, row-major).
    #[inline]
    pub fn diffusion_into(&self, t: T, x: &[T], out: &mut [T]) {
        match &self.diffusion {
            Diffusion::Constant { matrix } => out.copy_from_slice(matrix),
            Diffusion::TimeWindow { scale, start, end } => {
                out.iter_mut().for_each(|v| *v = T::zero());
                if t >= *start && t < *end {
                    for i in 0..self.n {
                        out[i * self.d + i] = *scale;
                    }
                }
            }
            Diffusion::AffineScalar { a, c } => {
                out.iter_mut().for_each(|v| *v = T::zero());
                for i in 0..self.n {
                    out[i * self.d + i] = *a * x[i] + *c;
                }
            }
        }
    }

    /// Scalar coefficients for `n = d = 1`.
    #[inline]
    pub fn scalar(&self, t: T, x: T) -> (T, T) {
        let b = match &self.drift {
            Drift::Zero => T::zero(),
            Drift::Constant { c } => c[0],
            Drift::Affine { a, c } => a[0] * x + c[0],
        };
        let s = match &self.diffusion {
            Diffusion::Constant { matrix } => matrix[0],
            Diffusion::TimeWindow { scale, start, end } => {
                if t >= *start && t < *end {
                    *scale
                } else {
                    T::zero()
                }
            }
            Diffusion::AffineScalar { a, c } => *a * x + *c,
        };
        (b, s)
    }

    /// Whether `σ` depends on `x`.
    pub fn state_dependent_diffusion(&self) -> bool {
        matches!(self.diffusion, Diffusion::AffineScalar { .. })
    }

    /// Time points where the coefficients change discontinuously.
    pub fn time_breaks(&self) -> Vec<T> {
        match &self.diffusion {
            Diffusion::TimeWindow { start, end, .. } => vec![*start, *end],
            _ => vec![],
        }
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::Input(format!("{what} has {got} entries, expected {want}")));
    }
    Ok(())
}

/// `(b(t,x), σ(t,x))`.
pub fn eval_coefficients<T: Real>(coeff: &CoefficientField<T>, t: T, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    check_len(x.len(), coeff.n, "state")?;
    let mut b = vec![T::zero(); coeff.n];
    let mut s = vec![T::zero(); coeff.n * coeff.d];
    coeff.drift_into(t, x, &mut b);
    coeff.diffusion_into(t, x, &mut s);
    Ok((b, s))
}

/// Uniform grid `t_m = mT/steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    pub horizon: T,
    pub steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Input("time grid needs at least one step".into()));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::Input(format!("horizon must be finite and > 0, got {horizon}")));
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn node(&self, m: usize) -> T {
        if m == self.steps {
            return self.horizon;
        }
        T::from_usize_lossy(m) * self.horizon / T::from_usize_lossy(self.steps)
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.steps)
    }

    /// Index of the node equal to `t` (relative tolerance 1e-9).
    pub fn index_of(&self, t: T) -> Option<usize> {
        let pos = (t / self.dt()).to_f64_lossy();
        let m = pos.round();
        if m < 0.0 || m > self.steps as f64 || (pos - m).abs() > 1e-9 * (1.0 + m) {
            return None;
        }
        Some(m as usize)
    }
}

/// Simulated states `X[p][m]` and increments `ΔW[p][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<T> {
    pub n: usize,
    pub d: usize,
    pub grid: TimeGrid<T>,
    pub n_paths: usize,
    pub seed: u64,
    /// Identifier of the coefficient field the paths were simulated under.
    pub coeff_id: String,
    states: Vec<T>,
    increments: Vec<T>,
}

impl<T: Real> PathEnsemble<T> {
    #[inline]
    pub fn state(&self, p: usize, m: usize) -> &[T] {
        let stride = (self.grid.steps + 1) * self.n;
        let off = p * stride + m * self.n;
        &self.states[off..off + self.n]
    }

    #[inline]
    pub fn increment(&self, p: usize, m: usize) -> &[T] {
        let stride = self.grid.steps * self.d;
        let off = p * stride + m * self.d;
        &self.increments[off..off + self.d]
    }

    /// First state component of every path at node `m`.
    pub fn first_component_at(&self, m: usize) -> Vec<T> {
        (0..self.n_paths).map(|p| self.state(p, m)[0]).collect()
    }

    pub fn terminal(&self, p: usize) -> &[T] {
        self.state(p, self.grid.steps)
    }

    /// Little-endian dump: `n, d, steps, n_paths, seed` as u64, `T` as f64,
    /// then states `[path][node][n]` and increments `[path][step][d]` as f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in [self.n as u64, self.d as u64, self.grid.steps as u64, self.n_paths as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.grid.horizon.to_f64_lossy().to_le_bytes())?;
        for v in self.states.iter().chain(&self.increments) {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Input(format!("ensemble dump: {e}"));
        let mut word = [0u8; 8];
        let mut header = [0u64; 5];
        for h in header.iter_mut() {
            r.read_exact(&mut word).map_err(io)?;
            *h = u64::from_le_bytes(word);
        }
        r.read_exact(&mut word).map_err(io)?;
        let horizon = f64::from_le_bytes(word);
        let [n, d, steps, n_paths, seed] = header;
        let (n, d, steps, n_paths) = (n as usize, d as usize, steps as usize, n_paths as usize);
        let n_states = n_paths
            .checked_mul((steps + 1) * n)
            .ok_or_else(|| Error::Input("ensemble dump header overflows".into()))?;
        let n_incr = n_paths * steps * d;
        let mut read_vec = |len: usize| -> Result<Vec<T>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut word).map_err(io)?;
                out.push(T::lit(f64::from_le_bytes(word)));
            }
            Ok(out)
        };
        let states = read_vec(n_states)?;
        let increments = read_vec(n_incr)?;
        Ok(Self {
            n,
            d,
            grid: TimeGrid::new(T::lit(horizon), steps)?,
            n_paths,
            seed,
            coeff_id: String::new(),
            states,
            increments,
        })
    }
}

/// Paths per parallel work item.
const PATH_BLOCK: usize = 256;

/// Euler–Maruyama: `X_{m+1} = X_m + b(t_m, X_m)Δt + σ(t_m, X_m)ΔW_m`.
pub fn simulate_paths<T: Real>(
    coeff: &CoefficientField<T>,
    x0: &[T],
    grid: TimeGrid<T>,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble<T>> {
    if n_paths == 0 {
        return Err(Error::Input("n_paths must be >= 1".into()));
    }
    check_len(x0.len(), coeff.n, "initial state")?;
    let (n, d, steps) = (coeff.n, coeff.d, grid.steps);
    let state_stride = (steps + 1) * n;
    let incr_stride = steps * d;
    let mut states = vec![T::zero(); n_paths * state_stride];
    let mut increments = vec![T::zero(); n_paths * incr_stride];
    let dt = grid.dt();
    let sqdt = dt.sqrt();

    let failures: Vec<Option<(usize, usize)>> = states
        .par_chunks_mut(state_stride * PATH_BLOCK)
        .zip(increments.par_chunks_mut(incr_stride * PATH_BLOCK))
        .enumerate()
        .map(|(block, (st, inc))| {
            let mut b = vec![T::zero(); n];
            let mut s = vec![T::zero(); n * d];
            let mut first_bad = None;
            for (k, (xs, dws)) in st.chunks_mut(state_stride).zip(inc.chunks_mut(incr_stride)).enumerate() {
                let p = block * PATH_BLOCK + k;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                xs[..n].copy_from_slice(x0);
                for m in 0..steps {
                    let t = grid.node(m);
                    let (cur, next) = xs[m * n..(m + 2) * n].split_at_mut(n);
                    coeff.drift_into(t, cur, &mut b);
                    coeff.diffusion_into(t, cur, &mut s);
                    let dw = &mut dws[m * d..(m + 1) * d];
                    for v in dw.iter_mut() {
                        *v = T::standard_normal(&mut rng) * sqdt;
                    }
                    let mut ok = true;
                    for i in 0..n {
                        let noise = (0..d).fold(T::zero(), |acc, j| acc + s[i * d + j] * dw[j]);
                        next[i] = cur[i] + b[i] * dt + noise;
                        ok &= next[i].is_finite();
                    }
                    if !ok && first_bad.is_none() {
                        first_bad = Some((p, m));
                    }
                }
            }
            first_bad
        })
        .collect();

    if let Some((p, m)) = failures.into_iter().flatten().min() {
        return Err(Error::Numerical(format!("non-finite state on path {p} at step {m}")));
    }

    Ok(PathEnsemble {
        n,
        d,
        grid,
        n_paths,
        seed,
        coeff_id: coeff.id(),
        states,
        increments,
    })
}

/// `sqrt(∫₀ᵀ |σ(t, x)|² dt)` at a fixed state, by the left-point rule on
/// `samples` subintervals.
pub fn diffusion_scale<T: Real>(coeff: &CoefficientField<T>, x: &[T], horizon: T, samples: usize) -> T {
    let grid = TimeGrid { horizon, steps: samples.max(1) };
    let mut s = vec![T::zero(); coeff.n * coeff.d];
    let mut acc = T::zero();
    for m in 0..grid.steps {
        coeff.diffusion_into(grid.node(m), x, &mut s);
        acc = acc + s.iter().fold(T::zero(), |a, &v| a + v * v) * grid.dt();
    }
    acc.sqrt()
}

/// Largest sampled Lipschitz quotient of `b` and `σ` in `x` over
/// `[0,T]×[−r,r]ⁿ`. Returns a specification error when it exceeds the
/// declared `K₁` by more than 1%.
pub fn coefficient_lipschitz_probe<T: Real>(coeff: &CoefficientField<T>, horizon: T, radius: T, budget: usize) -> Result<f64> {
    let (n, d) = (coeff.n, coeff.d);
    let mut halton = crate::sampling::Halton::new((2 * n + 1).min(16));
    let (mut b1, mut b2) = (vec![T::zero(); n], vec![T::zero(); n]);
    let (mut s1, mut s2) = (vec![T::zero(); n * d], vec![T::zero(); n * d]);
    let mut worst = 0.0f64;
    for _ in 0..budget {
        let u = halton.next_point();
        let at = |k: usize| T::lit(2.0 * u[k % u.len()] - 1.0) * radius;
        let t = T::lit(u[0]) * horizon;
        let x: Vec<T> = (0..n).map(|i| at(1 + i)).collect();
        let y: Vec<T> = (0..n).map(|i| at(1 + n + i)).collect();
        let dist = x.iter().zip(&y).map(|(a, b)| (*a - *b).to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        if dist < 1e-12 {
            continue;
        }
        coeff.drift_into(t, &x, &mut b1);
        coeff.drift_into(t, &y, &mut b2);
        coeff.diffusion_into(t, &x, &mut s1);
        coeff.diffusion_into(t, &y, &mut s2);
        let norm = |a: &[T], b: &[T]| a.iter().zip(b).map(|(p, q)| (*p - *q).to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        worst = worst.max(norm(&b1, &b2) / dist).max(norm(&s1, &s2) / dist);
    }
    if worst > 1.01 * coeff.lipschitz_k1.to_f64_lossy() + 1e-12 {
        return Err(Error::Specification(format!(
            "sampled Lipschitz quotient {worst} exceeds declared K1 = {}",
            coeff.lipschitz_k1
        )));
    }
    Ok(worst)
}

/// Sample mean and variance of one coordinate of the terminal states.
pub fn terminal_moments<T: Real>(ens: &PathEnsemble<T>, component: usize) -> (f64, f64) {
    let xs: Vec<f64> = (0..ens.n_paths).map(|p| ens.terminal(p)[component].to_f64_lossy()).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_examples() {
        let c = CoefficientField::<f64>::brownian(1.0);
        let (_, s) = eval_coefficients(&c, 0.7, &[123.0]).unwrap();
        assert_eq!(s, vec![1.0]);
        let aff = CoefficientField::new(
            Drift::Affine { a: vec![2.0], c: vec![1.0] },
            Diffusion::Constant { matrix: vec![0.0] },
            1,
            1,
        )
        .unwrap();
        assert_eq!(eval_coefficients(&aff, 0.0, &[3.0]).unwrap().0, vec![7.0]);
        let w = CoefficientField::brownian_window(2.0, 0.25, 0.25);
        assert_eq!(eval_coefficients(&w, 0.1, &[0.0]).unwrap().1, vec![0.0]);
        assert_eq!(eval_coefficients(&w, 0.3, &[0.0]).unwrap().1, vec![2.0]);
        assert_eq!(eval_coefficients(&w, 0.5, &[0.0]).unwrap().1, vec![0.0]);
        assert!(matches!(eval_coefficients(&w, 0.5, &[0.0, 1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn degenerate_diffusion_stays_put() {
        let c = CoefficientField::<f64>::brownian(0.0);
        let e = simulate_paths(&c, &[3.0], TimeGrid::new(1.0, 20).unwrap(), 50, 9).unwrap();
        for p in 0..50 {
            for m in 0..=20 {
                assert_eq!(e.state(p, m), &[3.0]);
            }
        }
    }

    #[test]
    fn brownian_terminal_mean_is_zero() {
        let c = CoefficientField::<f64>::brownian(1.0);
        let n = 20_000;
        let e = simulate_paths(&c, &[0.0], TimeGrid::new(1.0, 10).unwrap(), n, 1).unwrap();
        let (mean, var) = terminal_moments(&e, 0);
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn window_diffusion_variance() {
        // Var(X_T) = z²ε = 4·0.25
        let c = CoefficientField::<f64>::brownian_window(2.0, 0.25, 0.25);
        let n = 40_000;
        let e = simulate_paths(&c, &[0.0], TimeGrid::new(1.0, 100).unwrap(), n, 2).unwrap();
        let (_, var) = terminal_moments(&e, 0);
        let se = 1.0 * (2.0 / n as f64).sqrt();
        assert!((var - 1.0).abs() < 5.0 * se, "var {var}");
    }

    #[test]
    fn increments_have_right_moments() {
        let c = CoefficientField::<f64>::brownian(1.0);
        let n = 20_000;
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let e = simulate_paths(&c, &[0.0], grid, n, 5).unwrap();
        for m in 0..4 {
            let v: Vec<f64> = (0..n).map(|p| e.increment(p, m)[0]).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let dt = 0.25;
            assert!(mean.abs() < 5.0 * (dt / n as f64).sqrt());
            assert!((var - dt).abs() < 5.0 * dt * (2.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = CoefficientField::<f64>::geometric(0.05, 0.2);
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let a = simulate_paths(&c, &[1.0], grid, 1000, 77).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate_paths(&c, &[1.0], grid, 1000, 77).unwrap());
        assert_eq!(a, b);
        let c2 = simulate_paths(&c, &[1.0], grid, 1000, 78).unwrap();
        assert_ne!(a, c2);
        // path p does not depend on how many paths are simulated
        let small = simulate_paths(&c, &[1.0], grid, 10, 77).unwrap();
        for p in 0..10 {
            assert_eq!(small.state(p, 16), a.state(p, 16));
        }
    }

    #[test]
    fn overflow_names_path_and_step() {
        let c = CoefficientField::new(
            Drift::Affine { a: vec![1e300], c: vec![0.0] },
            Diffusion::Constant { matrix: vec![0.0] },
            1,
            1,
        )
        .unwrap();
        let err = simulate_paths(&c, &[1.0], TimeGrid::new(1.0, 10).unwrap(), 4, 0).unwrap_err();
        match err {
            Error::Numerical(m) => assert!(m.contains("path 0") && m.contains("step")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binary_dump_round_trip() {
        let c = CoefficientField::<f64>::brownian(1.0);
        let e = simulate_paths(&c, &[0.5], TimeGrid::new(2.0, 3).unwrap(), 5, 11).unwrap();
        let mut buf = Vec::new();
        e.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 8 * (5 * 4 + 5 * 3));
        assert_eq!(&buf[0..8], &1u64.to_le_bytes());
        assert_eq!(&buf[40..48], &2.0f64.to_le_bytes());
        let back = PathEnsemble::<f64>::read_binary(&buf[..]).unwrap();
        assert_eq!(back.state(4, 3), e.state(4, 3));
        assert_eq!(back.increment(2, 1), e.increment(2, 1));
    }

    #[test]
    fn f32_simulation_runs() {
        let c = CoefficientField::<f32>::brownian(1.0);
        let e = simulate_paths(&c, &[0.0f32], TimeGrid::new(1.0f32, 8).unwrap(), 100, 3).unwrap();
        assert!(e.terminal(99)[0].is_finite());
    }

    #[test]
    fn time_grid_nodes() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(4), 1.0);
        assert_eq!(g.index_of(0.5), Some(2));
        assert_eq!(g.index_of(0.3), None);
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
    #[test]
    fn gbm_strong_order_half() {
        let (mu, s, x0) = (0.05, 0.8, 1.0);
        let c = CoefficientField::<f64>::geometric(mu, s);
        let n = 10_000;
        let err = |steps: usize| {
            let e = simulate_paths(&c, &[x0], TimeGrid::new(1.0, steps).unwrap(), n, 21).unwrap();
            (0..n)
                .map(|p| {
                    let w: f64 = (0..steps).map(|m| e.increment(p, m)[0]).sum();
                    let exact = x0 * ((mu - 0.5 * s * s) + s * w).exp();
                    (e.terminal(p)[0] - exact).abs()
                })
                .sum::<f64>()
                / n as f64
        };
        let errs: Vec<f64> = [16, 32, 64, 128].iter().map(|&k| err(k)).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 1.2 && ratio < 1.75, "ratio {ratio}, errors {errs:?}");
        }
    }

    #[test]
    fn declared_k1_holds_for_presets() {
        let presets = [
            CoefficientField::<f64>::brownian(1.3),
            CoefficientField::brownian_window(2.0, 0.25, 0.25),
            CoefficientField::geometric(0.1, 0.4),
            CoefficientField::new(
                Drift::Affine { a: vec![0.5, -1.0, 0.2, 0.3], c: vec![1.0, 2.0] },
                Diffusion::Constant { matrix: vec![1.0, 0.0, 0.5, 1.0] },
                2,
                2,
            )
            .unwrap(),
        ];
        for c in &presets {
            coefficient_lipschitz_probe(c, 1.0, 5.0, 2000).unwrap();
        }
        let mut bad = CoefficientField::<f64>::geometric(0.1, 0.4);
        bad.lipschitz_k1 = 0.01;
        assert!(matches!(coefficient_lipschitz_probe(&bad, 1.0, 5.0, 500), Err(Error::Specification(_))));
    }
}
