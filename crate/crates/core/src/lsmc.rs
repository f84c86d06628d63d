//! Backend B: least-squares Monte Carlo backward induction on simulated paths.
//!
//! On each step the conditional expectations are projections onto a basis in
//! the standardised state:
//!
//! ```text
//! Ŷ_m = Reg(Y_{m+1} | X_m)
//! Z_m = Reg((Y_{m+1} − Ŷ_m)·ΔW_m | X_m) / Δt
//! Y_m = Reg(Y_{m+1} + g(t_m, Y_{m+1}, Z_m)Δt | X_m)
//! ```

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::{Payoff, TerminalClaim};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::linalg::SpdFactor;
use crate::scalar::Real;
use crate::sde::{CoefficientField, PathEnsemble};

/// Paths per Gram block; blocks are summed pairwise for a fixed reduction order.
const GRAM_BLOCK: usize = 1024;
/// Standardised half-range covered by the hat functions.
const BIN_RANGE: f64 = 4.0;
const BOOTSTRAP_REPLICATES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressionBasis {
    /// Monomials of total degree ≤ `degree` in the standardised state.
    Polynomial { degree: usize },
    /// Piecewise-linear hat functions on `count` bins per coordinate, over the
    /// sampled standardised range capped at `[−4, 4]`.
    Bins { count: usize },
    /// Bins for indicator-like claims, degree-4 polynomials otherwise.
    #[default]
    Auto,
}

impl RegressionBasis {
    pub fn for_claim<T: Real>(self, claim: &TerminalClaim<T>) -> Self {
        match self {
            RegressionBasis::Auto => {
                let indicator_like = claim.is_piecewise_constant()
                    || !claim.is_continuous()
                    || matches!(claim, TerminalClaim::MollifiedIndicator { .. });
                if indicator_like {
                    RegressionBasis::Bins { count: 32 }
                } else {
                    RegressionBasis::Polynomial { degree: 4 }
                }
            }
            other => other,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            RegressionBasis::Polynomial { degree } if degree > 12 => {
                Err(Error::Configuration(format!("polynomial degree {degree} is too large")))
            }
            RegressionBasis::Bins { count: 0 } => Err(Error::Configuration("bin count must be >= 1".into())),
            RegressionBasis::Auto => Err(Error::Configuration("basis must be resolved before solving".into())),
            _ => Ok(()),
        }
    }
}

/// Per-step regression diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub columns: usize,
    pub condition: f64,
    pub ridge: f64,
}

/// Sparse design matrix: `nnz` (column, value) pairs per path.
struct Design {
    p: usize,
    nnz: usize,
    idx: Vec<u32>,
    val: Vec<f64>,
}

fn exponents(dims: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; dims]];
    for total in 1..=degree {
        let mut cur = vec![0u32; dims];
        fill_exponents(&mut out, &mut cur, 0, total as u32);
    }
    out
}

fn fill_exponents(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, k: usize, left: u32) {
    if k == cur.len() - 1 {
        cur[k] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[k] = e;
        fill_exponents(out, cur, k + 1, left - e);
    }
}

fn build_design<T: Real>(ens: &PathEnsemble<T>, m: usize, basis: RegressionBasis) -> Design {
    let n = ens.n;
    let np = ens.n_paths;
    let mut mean = vec![0.0; n];
    let mut sd = vec![0.0; n];
    for i in 0..n {
        let xs: Vec<f64> = (0..np).map(|p| ens.state(p, m)[i].to_f64_lossy()).collect();
        let mu = xs.iter().sum::<f64>() / np as f64;
        let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / np as f64;
        mean[i] = mu;
        sd[i] = var.sqrt();
    }
    let active: Vec<usize> = (0..n).filter(|&i| sd[i] > 1e-12 * (1.0 + mean[i].abs())).collect();
    if active.is_empty() {
        return Design { p: 1, nnz: 1, idx: vec![0; np], val: vec![1.0; np] };
    }
    let std_state = |p: usize, out: &mut Vec<f64>| {
        out.clear();
        let x = ens.state(p, m);
        out.extend(active.iter().map(|&i| (x[i].to_f64_lossy() - mean[i]) / sd[i]));
    };
    match basis {
        RegressionBasis::Polynomial { degree } => {
            let exps = exponents(active.len(), degree);
            let p = exps.len();
            let mut idx = Vec::with_capacity(np * p);
            let mut val = Vec::with_capacity(np * p);
            let mut s = Vec::with_capacity(active.len());
            for path in 0..np {
                std_state(path, &mut s);
                for (c, e) in exps.iter().enumerate() {
                    idx.push(c as u32);
                    val.push(e.iter().zip(&s).map(|(&k, &v)| v.powi(k as i32)).product());
                }
            }
            Design { p, nnz: p, idx, val }
        }
        RegressionBasis::Bins { count } => {
            // the first active coordinate keeps all count+1 hats (they sum to
            // one); the others drop their first hat. Hats span the sampled
            // range, capped at ±4, so the end nodes carry mass.
            let mut s = Vec::with_capacity(active.len());
            let mut span = vec![(f64::INFINITY, f64::NEG_INFINITY); active.len()];
            for path in 0..np {
                std_state(path, &mut s);
                for (k, &v) in s.iter().enumerate() {
                    span[k] = (span[k].0.min(v), span[k].1.max(v));
                }
            }
            let span: Vec<(f64, f64)> = span.iter().map(|&(a, b)| (a.max(-BIN_RANGE), b.min(BIN_RANGE))).collect();
            let p = (count + 1) + (active.len() - 1) * count;
            let nnz = 2 * active.len();
            let mut idx = Vec::with_capacity(np * nnz);
            let mut val = Vec::with_capacity(np * nnz);
            for path in 0..np {
                std_state(path, &mut s);
                let mut offset = 0usize;
                for (k, &v) in s.iter().enumerate() {
                    let (lo, hi) = span[k];
                    let h = (hi - lo) / count as f64;
                    let pos = ((v.clamp(lo, hi) - lo) / h).min(count as f64);
                    let j = (pos.floor() as usize).min(count - 1);
                    let w = pos - j as f64;
                    let col = |node: usize| -> (u32, bool) {
                        if k == 0 {
                            ((offset + node) as u32, true)
                        } else if node == 0 {
                            (0, false)
                        } else {
                            ((offset + node - 1) as u32, true)
                        }
                    };
                    for (node, weight) in [(j, 1.0 - w), (j + 1, w)] {
                        let (c, keep) = col(node);
                        idx.push(c);
                        val.push(if keep { weight } else { 0.0 });
                    }
                    offset += if k == 0 { count + 1 } else { count };
                }
            }
            Design { p, nnz, idx, val }
        }
        RegressionBasis::Auto => unreachable!("resolved before design assembly"),
    }
}

/// Sums per-block vectors of length `len` pairwise in block order.
fn block_reduce(n_paths: usize, len: usize, fill: impl Fn(std::ops::Range<usize>, &mut [f64]) + Sync) -> Vec<f64> {
    let blocks = n_paths.div_ceil(GRAM_BLOCK);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; len];
            fill(b * GRAM_BLOCK..((b + 1) * GRAM_BLOCK).min(n_paths), &mut acc);
            acc
        })
        .collect();
    pairwise_vec_sum(parts, len)
}

fn pairwise_vec_sum(mut parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    if parts.is_empty() {
        return vec![0.0; len];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}

impl Design {
    fn row(&self, path: usize) -> (&[u32], &[f64]) {
        let r = path * self.nnz..(path + 1) * self.nnz;
        (&self.idx[r.clone()], &self.val[r])
    }

    fn n_paths(&self) -> usize {
        self.idx.len() / self.nnz
    }

    fn gram(&self) -> Vec<f64> {
        let p = self.p;
        let mut g = block_reduce(self.n_paths(), p * p, |range, acc| {
            for path in range {
                let (ix, vx) = self.row(path);
                for a in 0..self.nnz {
                    let (ca, va) = (ix[a] as usize, vx[a]);
                    if va == 0.0 {
                        continue;
                    }
                    for b in 0..self.nnz {
                        let cb = ix[b] as usize;
                        if cb >= ca {
                            acc[ca * p + cb] += va * vx[b];
                        }
                    }
                }
            }
        });
        for a in 0..p {
            for b in 0..a {
                g[a * p + b] = g[b * p + a];
            }
        }
        g
    }

    fn rhs(&self, target: &[f64]) -> Vec<f64> {
        block_reduce(self.n_paths(), self.p, |range, acc| {
            for path in range {
                let (ix, vx) = self.row(path);
                for (c, v) in ix.iter().zip(vx) {
                    acc[*c as usize] += v * target[path];
                }
            }
        })
    }

    fn fitted(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_paths())
            .into_par_iter()
            .with_min_len(GRAM_BLOCK)
            .map(|path| {
                let (ix, vx) = self.row(path);
                ix.iter().zip(vx).map(|(c, v)| beta[*c as usize] * v).sum()
            })
            .collect()
    }
}

/// Normal equations restricted to the columns some path actually loads;
/// dropped columns get a zero coefficient.
struct Projection {
    factor: SpdFactor,
    keep: Vec<usize>,
    p: usize,
}

impl Projection {
    fn new(design: &Design) -> Result<Self> {
        let p = design.p;
        let gram = design.gram();
        let max_diag = (0..p).map(|i| gram[i * p + i]).fold(0.0, f64::max);
        let keep: Vec<usize> = (0..p).filter(|&i| gram[i * p + i] > 1e-12 * max_diag).collect();
        let q = keep.len();
        let mut reduced = vec![0.0; q * q];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                reduced[a * q + b] = gram[i * p + j];
            }
        }
        Ok(Self { factor: SpdFactor::new(&reduced, q)?, keep, p })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.keep.iter().map(|&i| rhs[i]).collect();
        let x = self.factor.solve(&r);
        let mut beta = vec![0.0; self.p];
        for (k, &i) in self.keep.iter().enumerate() {
            beta[i] = x[k];
        }
        beta
    }

    /// Fitted values of `target`. Every basis spans the constants, so the
    /// mean is taken out first and the ridge only shrinks the fluctuation.
    fn fit(&self, design: &Design, target: &[f64]) -> Vec<f64> {
        let mean = target.iter().sum::<f64>() / target.len() as f64;
        let centred: Vec<f64> = target.iter().map(|v| v - mean).collect();
        let mut y = design.fitted(&self.solve(&design.rhs(&centred)));
        y.iter_mut().for_each(|v| *v += mean);
        y
    }
}

/// Solution pair on the paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsdePathSolution<T> {
    pub n_paths: usize,
    pub steps: usize,
    pub d: usize,
    /// `Y[path][node]`, flat; empty for the lean solver.
    pub y: Vec<T>,
    /// `Z[path][step][d]`, flat; empty for the lean solver.
    pub z: Vec<T>,
    pub y0: T,
    pub stderr_y0: T,
    pub basis: RegressionBasis,
    pub diagnostics: Vec<StepDiagnostic>,
}

impl<T: Real> BsdePathSolution<T> {
    pub fn is_full(&self) -> bool {
        !self.y.is_empty()
    }

    pub fn y_at(&self, path: usize, m: usize) -> T {
        self.y[path * (self.steps + 1) + m]
    }

    pub fn z_at(&self, path: usize, m: usize) -> &[T] {
        let off = (path * self.steps + m) * self.d;
        &self.z[off..off + self.d]
    }

    /// Rows of `node, t, mean_y, sd_y, mean_z1, …` with a header line.
    pub fn write_csv<W: Write>(&self, ens: &PathEnsemble<T>, mut w: W) -> Result<()> {
        if !self.is_full() {
            return Err(Error::Input("the lean solution keeps no path data to export".into()));
        }
        let io = |e: std::io::Error| Error::Input(format!("csv export: {e}"));
        let zcols: Vec<String> = (1..=self.d).map(|j| format!("mean_z{j}")).collect();
        writeln!(w, "node,t,mean_y,sd_y,{}", zcols.join(",")).map_err(io)?;
        let np = self.n_paths as f64;
        for m in 0..=self.steps {
            let ys: Vec<f64> = (0..self.n_paths).map(|p| self.y_at(p, m).to_f64_lossy()).collect();
            let mean = ys.iter().sum::<f64>() / np;
            let sd = (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / np).sqrt();
            let mut line = format!("{m},{},{mean},{sd}", ens.grid.node(m));
            for j in 0..self.d {
                let mz = if m < self.steps {
                    (0..self.n_paths).map(|p| self.z_at(p, m)[j].to_f64_lossy()).sum::<f64>() / np
                } else {
                    f64::NAN
                };
                line.push_str(&format!(",{mz}"));
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        Ok(())
    }
}

fn check_inputs<T: Real>(ens: &PathEnsemble<T>, coeff: &CoefficientField<T>, g: &GeneratorSpec<T>) -> Result<()> {
    if !ens.coeff_id.is_empty() && ens.coeff_id != coeff.id() {
        return Err(Error::Input(format!(
            "ensemble was simulated under {} but the solve uses {}",
            ens.coeff_id,
            coeff.id()
        )));
    }
    if ens.n != coeff.n || ens.d != coeff.d {
        return Err(Error::Input("ensemble dimensions do not match the coefficients".into()));
    }
    if g.dimension != ens.d {
        return Err(Error::Input(format!(
            "driver dimension {} does not match Brownian dimension {}",
            g.dimension, ens.d
        )));
    }
    Ok(())
}

/// Backward induction for a general payoff with an explicit basis.
pub fn solve_payoff_lsmc<T: Real, P: Payoff<T> + ?Sized>(
    ens: &PathEnsemble<T>,
    coeff: &CoefficientField<T>,
    g: &GeneratorSpec<T>,
    payoff: &P,
    basis: RegressionBasis,
    keep_paths: bool,
) -> Result<BsdePathSolution<T>> {
    check_inputs(ens, coeff, g)?;
    basis.validate()?;
    let (np, steps, d) = (ens.n_paths, ens.grid.steps, ens.d);
    let dt = ens.grid.dt().to_f64_lossy();

    let terminal: Vec<T> = (0..np).into_par_iter().with_min_len(GRAM_BLOCK).map(|p| payoff.eval(ens.terminal(p))).collect();
    if let Some(p) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("payoff is not finite on path {p}")));
    }
    let mut y_store = if keep_paths { vec![T::zero(); np * (steps + 1)] } else { Vec::new() };
    let mut z_store = if keep_paths { vec![T::zero(); np * steps * d] } else { Vec::new() };
    if keep_paths {
        for p in 0..np {
            y_store[p * (steps + 1) + steps] = terminal[p];
        }
    }
    let mut y_next: Vec<f64> = terminal.iter().map(|v| v.to_f64_lossy()).collect();
    let mut diagnostics = vec![StepDiagnostic { columns: 0, condition: 0.0, ridge: 0.0 }; steps];
    let mut pathwise = y_next.clone();

    for m in (0..steps).rev() {
        let t = ens.grid.node(m);
        let design = build_design(ens, m, basis);
        let factor = Projection::new(&design).map_err(|e| e.context(&format!("step {m}")))?;
        diagnostics[m] = StepDiagnostic {
            columns: factor.keep.len(),
            condition: factor.factor.condition,
            ridge: factor.factor.ridge,
        };

        let y_hat = factor.fit(&design, &y_next);
        let mut z = vec![0.0; np * d];
        for j in 0..d {
            let target: Vec<f64> = (0..np).map(|p| (y_next[p] - y_hat[p]) * ens.increment(p, m)[j].to_f64_lossy()).collect();
            let fit = factor.fit(&design, &target);
            for p in 0..np {
                z[p * d + j] = fit[p] / dt;
            }
        }
        let target: Vec<f64> = (0..np)
            .into_par_iter()
            .with_min_len(GRAM_BLOCK)
            .map_init(
                || vec![T::zero(); d],
                |zt, p| {
                    for j in 0..d {
                        zt[j] = T::lit(z[p * d + j]);
                    }
                    let gv = g.eval_unchecked(t, T::lit(y_next[p]), zt).to_f64_lossy();
                    y_next[p] + gv * dt
                },
            )
            .collect();
        if let Some(p) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite regression target on path {p} at step {m}")));
        }
        let y = factor.fit(&design, &target);
        for p in 0..np {
            pathwise[p] += target[p] - y_next[p];
        }
        if keep_paths {
            for p in 0..np {
                y_store[p * (steps + 1) + m] = T::lit(y[p]);
                for j in 0..d {
                    z_store[(p * steps + m) * d + j] = T::lit(z[p * d + j]);
                }
            }
        }
        y_next = y;
    }

    let stderr = bootstrap_stderr(&pathwise, ens.seed);
    Ok(BsdePathSolution {
        n_paths: np,
        steps,
        d,
        y: y_store,
        z: z_store,
        y0: T::lit(y_next[0]),
        stderr_y0: T::lit(stderr),
        basis,
        diagnostics,
    })
}

/// Bootstrap standard error of `Y₀`. Every basis spans the constants, so the
/// projections preserve sample means and `Y₀` equals the path average of
/// `Φ(X_T) + Σ g(t_m, Y_{m+1}, Z_m)Δt`; that average is resampled with the
/// fitted functions held fixed.
fn bootstrap_stderr(pathwise: &[f64], seed: u64) -> f64 {
    let np = pathwise.len();
    let reps: Vec<f64> = (0..BOOTSTRAP_REPLICATES)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b007);
            rng.set_stream(r as u64);
            (0..np).map(|_| pathwise[rng.gen_range(0..np)]).sum::<f64>() / np as f64
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    (reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
}

/// Full path solution for a terminal claim; `Auto` picks the basis from the claim.
pub fn solve_bsde_lsmc<T: Real>(
    ens: &PathEnsemble<T>,
    coeff: &CoefficientField<T>,
    g: &GeneratorSpec<T>,
    claim: &TerminalClaim<T>,
    basis: RegressionBasis,
) -> Result<BsdePathSolution<T>> {
    claim.validate()?;
    solve_payoff_lsmc(ens, coeff, g, claim, basis.for_claim(claim), true)
}

/// `(Y₀, stderr)` without storing paths.
pub fn lsmc_y0<T: Real, P: Payoff<T> + ?Sized>(
    ens: &PathEnsemble<T>,
    coeff: &CoefficientField<T>,
    g: &GeneratorSpec<T>,
    payoff: &P,
    basis: RegressionBasis,
) -> Result<(T, T)> {
    let s = solve_payoff_lsmc(ens, coeff, g, payoff, basis, false)?;
    Ok((s.y0, s.stderr_y0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZStructureReport {
    /// Fraction of (path, step) cells with `|σ|` above the threshold.
    pub usable_fraction: f64,
    /// Fraction of usable cells with `D < −tol`.
    pub negative_fraction: f64,
    pub min_d: f64,
    pub status: ProbeStatus,
}

/// `|σ|` below this is treated as a degenerate cell.
pub const SIGMA_THRESHOLD: f64 = 1e-10;

/// Checks `D_t = Z_t / σ(t, X_t) ≥ 0` on every path and step.
pub fn z_structure_probe<T: Real>(
    sol: &BsdePathSolution<T>,
    ens: &PathEnsemble<T>,
    coeff: &CoefficientField<T>,
    tol: f64,
) -> Result<ZStructureReport> {
    if !sol.is_full() {
        return Err(Error::Input("z_structure_probe needs a full path solution".into()));
    }
    if coeff.d != 1 {
        return Err(Error::Unsupported(format!("z structure probe needs d = 1, got {}", coeff.d)));
    }
    let mut s = vec![T::zero(); coeff.n];
    let (mut usable, mut negative, mut min_d) = (0usize, 0usize, f64::INFINITY);
    for p in 0..sol.n_paths {
        for m in 0..sol.steps {
            coeff.diffusion_into(ens.grid.node(m), ens.state(p, m), &mut s);
            let sig = s[0].to_f64_lossy();
            if sig.abs() <= SIGMA_THRESHOLD {
                continue;
            }
            usable += 1;
            let dv = sol.z_at(p, m)[0].to_f64_lossy() / sig;
            min_d = min_d.min(dv);
            if dv < -tol {
                negative += 1;
            }
        }
    }
    let cells = (sol.n_paths * sol.steps) as f64;
    let usable_fraction = usable as f64 / cells;
    let negative_fraction = if usable > 0 { negative as f64 / usable as f64 } else { 0.0 };
    let status = if usable_fraction < 0.5 {
        ProbeStatus::Inconclusive
    } else if negative_fraction <= 0.01 {
        ProbeStatus::Pass
    } else {
        ProbeStatus::Fail
    };
    Ok(ZStructureReport { usable_fraction, negative_fraction, min_d, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::Side;
    use crate::sde::{simulate_paths, TimeGrid};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn bm(n_paths: usize, steps: usize, seed: u64) -> (CoefficientField<f64>, PathEnsemble<f64>) {
        let c = CoefficientField::brownian(1.0);
        let e = simulate_paths(&c, &[0.0], TimeGrid::new(1.0, steps).unwrap(), n_paths, seed).unwrap();
        (c, e)
    }

    #[test]
    fn exponent_table_sizes() {
        assert_eq!(exponents(1, 4).len(), 5);
        assert_eq!(exponents(2, 4).len(), 15);
        assert_eq!(exponents(3, 2).len(), 10);
    }

    #[test]
    fn martingale_claim_has_zero_value() {
        let (c, e) = bm(20_000, 20, 1);
        let s = solve_bsde_lsmc(&e, &c, &GeneratorSpec::zero(1), &TerminalClaim::identity_clipped(6.0), RegressionBasis::Auto).unwrap();
        assert!(s.y0.abs() <= 3.0 * s.stderr_y0, "{} ± {}", s.y0, s.stderr_y0);
        // terminal consistency
        for p in 0..e.n_paths {
            assert_eq!(s.y_at(p, 20), e.terminal(p)[0].clamp(-6.0, 6.0));
        }
        // Y0 path independent
        for p in 0..100 {
            assert_eq!(s.y_at(p, 0), s.y0);
        }
    }

    #[test]
    fn linear_driver_matches_girsanov() {
        let (c, e) = bm(40_000, 25, 2);
        let g = GeneratorSpec::linear(vec![0.3]).unwrap();
        let claim = TerminalClaim::mollified_indicator(0.0, 0.05, Side::Lower);
        let s = solve_bsde_lsmc(&e, &c, &g, &claim, RegressionBasis::Auto).unwrap();
        assert_eq!(s.basis, RegressionBasis::Bins { count: 32 });
        // the mollified step shifts the level by at most the band width
        let n = Normal::new(0.0, 1.0).unwrap();
        let (lo, hi) = (n.cdf(0.3), n.cdf(0.35));
        assert!(s.y0 >= lo - 3.0 * s.stderr_y0 - 5e-3 && s.y0 <= hi + 3.0 * s.stderr_y0 + 5e-3, "{} ± {}", s.y0, s.stderr_y0);
    }

    #[test]
    fn worst_case_drift_for_clipped_identity() {
        let (c, e) = bm(40_000, 25, 3);
        let g = GeneratorSpec::abs(0.5).unwrap();
        let s = solve_bsde_lsmc(&e, &c, &g, &TerminalClaim::identity_clipped(6.0), RegressionBasis::Auto).unwrap();
        let tol = (3.0 * s.stderr_y0).max(0.02 * 0.5);
        assert!((s.y0 - 0.5).abs() <= tol, "{} ± {}", s.y0, s.stderr_y0);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (c, e) = bm(5_000, 10, 4);
        let g = GeneratorSpec::abs(0.5).unwrap();
        let claim = TerminalClaim::tanh(1.0, 0.0, 0.5, 0.0);
        let a = solve_bsde_lsmc(&e, &c, &g, &claim, RegressionBasis::Auto).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| solve_bsde_lsmc(&e, &c, &g, &claim, RegressionBasis::Auto).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn z_probe_examples() {
        let (c, e) = bm(5_000, 10, 5);
        let g = GeneratorSpec::abs(0.5).unwrap();
        let mono = solve_bsde_lsmc(&e, &c, &g, &TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0), RegressionBasis::Auto).unwrap();
        assert_eq!(z_structure_probe(&mono, &e, &c, 1e-3).unwrap().status, ProbeStatus::Pass);
        let v = solve_bsde_lsmc(&e, &c, &g, &TerminalClaim::abs_value_clipped(3.0), RegressionBasis::Auto).unwrap();
        let r = z_structure_probe(&v, &e, &c, 1e-3).unwrap();
        assert_eq!(r.status, ProbeStatus::Fail);
        assert!(r.min_d < 0.0);

        let w = CoefficientField::brownian_window(1.0, 0.0, 0.2);
        let ew = simulate_paths(&w, &[0.0], TimeGrid::new(1.0, 10).unwrap(), 2_000, 6).unwrap();
        let sw = solve_bsde_lsmc(&ew, &w, &g, &TerminalClaim::tanh(1.0, 0.0, 1.0, 0.0), RegressionBasis::Auto).unwrap();
        assert_eq!(z_structure_probe(&sw, &ew, &w, 1e-3).unwrap().status, ProbeStatus::Inconclusive);
    }

    #[test]
    fn mismatched_ensemble_is_input_error() {
        let (_, e) = bm(100, 4, 7);
        let other = CoefficientField::brownian(2.0);
        let err = solve_bsde_lsmc(&e, &other, &GeneratorSpec::zero(1), &TerminalClaim::identity(), RegressionBasis::Auto).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn csv_export_has_one_row_per_node() {
        let (c, e) = bm(500, 4, 8);
        let s = solve_bsde_lsmc(&e, &c, &GeneratorSpec::zero(1), &TerminalClaim::identity(), RegressionBasis::Auto).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5);
        assert!(text.starts_with("node,t,mean_y,sd_y,mean_z1"));
    }

    #[test]
    fn two_dimensional_state_runs() {
        use crate::sde::{Diffusion, Drift};
        let c = CoefficientField::<f64>::new(
            Drift::Affine { a: vec![0.0, 0.5, 0.0, 0.0], c: vec![0.0, 0.0] },
            Diffusion::Constant { matrix: vec![1.0, 0.0, 0.0, 1.0] },
            2,
            2,
        )
        .unwrap();
        let e = simulate_paths(&c, &[0.0, 0.0], TimeGrid::new(1.0, 10).unwrap(), 10_000, 9).unwrap();
        let g = GeneratorSpec::zero(2);
        let s = solve_bsde_lsmc(&e, &c, &g, &TerminalClaim::identity(), RegressionBasis::Polynomial { degree: 2 }).unwrap();
        // X¹_T = W¹_T + 0.5∫W² ds has mean zero
        assert!(s.y0.abs() < 4.0 * s.stderr_y0 + 1e-3);
        assert_eq!(s.diagnostics[5].columns, 6);
    }
    struct Perturbed {
        base: TerminalClaim<f64>,
        delta: f64,
    }
    impl Payoff<f64> for Perturbed {
        fn value(&self, x: f64) -> f64 {
            self.base.value_at(x) + self.delta * (3.0 * x).sin()
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn y0_is_lipschitz_in_the_claim(delta in 0.005f64..0.2) {
            let (c, e) = bm(4_000, 10, 10);
            let g = GeneratorSpec::abs(0.5).unwrap();
            let base = TerminalClaim::tanh(1.0, 0.0, 0.7, 0.0);
            let basis = RegressionBasis::Polynomial { degree: 4 };
            let (y, _) = lsmc_y0(&e, &c, &g, &base, basis).unwrap();
            let (yd, _) = lsmc_y0(&e, &c, &g, &Perturbed { base: base.clone(), delta }, basis).unwrap();
            // |ΔY₀| ≤ e^{K₂T}·δ for the exact solution; allow regression slack
            proptest::prop_assert!((yd - y).abs() / delta <= 2.0 * 0.5f64.exp());
        }
    }

    #[test]
    fn stability_ratio_does_not_blow_up() {
        let (c, e) = bm(8_000, 10, 11);
        let g = GeneratorSpec::smooth_nonhom(0.5).unwrap();
        let base = TerminalClaim::tanh(1.0, 0.0, 0.7, 0.0);
        let basis = RegressionBasis::Polynomial { degree: 4 };
        let (y, _) = lsmc_y0(&e, &c, &g, &base, basis).unwrap();
        let ratios: Vec<f64> = [0.1, 0.05, 0.01]
            .iter()
            .map(|&delta| {
                let (yd, _) = lsmc_y0(&e, &c, &g, &Perturbed { base: base.clone(), delta }, basis).unwrap();
                (yd - y).abs() / delta
            })
            .collect();
        assert!(ratios.iter().all(|&r| r <= 2.0), "{ratios:?}");
        assert!(ratios[2] <= 2.0 * ratios[0] + 0.1, "{ratios:?}");
    }
}
