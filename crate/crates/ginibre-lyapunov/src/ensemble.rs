//! Monte Carlo sampling of products of complex Ginibre matrices.
//!
//! Each sample regenerates its factors from a ChaCha8 stream keyed by
//! `(seed, sample_index)`, so a batch is bit-identical whatever the number of
//! worker threads. Two product algorithms are available:
//!
//! * staged QR: X_1 = Q_1 R_1, X_{j+1} Q_j = Q_{j+1} R_{j+1}, and the triangular
//!   product T = R_M ⋯ R_1 is kept as diag(e^d)·S with unit rows of S. The
//!   singular values of T come from a one-sided Jacobi iteration on the rows
//!   that carries the logarithmic ledger d through every rotation, so all N
//!   values keep full relative accuracy for any M.
//! * direct scaled: the product is formed with a scalar log scale and the
//!   leading eigenvalues of P*P are taken by Lanczos. Values graded more than
//!   √ε below the top one are flagged unreliable.

use crate::error::{Error, Result};
use crate::kernels::{self, ProductEnsembleParams, ScalingMap};
use crate::specfun::digamma_real;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Which product algorithm a batch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductAlgorithm {
    /// Direct scaled when the predicted log range is below
    /// [`DIRECT_LOG_RANGE_LIMIT`] and fewer than N values are needed,
    /// staged QR otherwise.
    #[default]
    Auto,
    StagedQr,
    DirectScaled,
}

/// Predicted spread of log σ² above which the direct product is not used.
pub const DIRECT_LOG_RANGE_LIMIT: f64 = 600.0;

/// Relative grading σ_k²/σ_1² below which a directly computed value is unreliable.
pub const GRADING_LIMIT: f64 = 1.490_116_119_384_765_6e-8;

/// What to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinibreProductSpec {
    pub params: ProductEnsembleParams,
    pub n_samples: usize,
    pub seed: u64,
    /// Leading log singular values required at full precision.
    pub top_k: usize,
    #[serde(default)]
    pub algorithm: ProductAlgorithm,
}

impl GinibreProductSpec {
    pub fn new(params: ProductEnsembleParams, n_samples: usize, seed: u64, top_k: usize) -> Result<Self> {
        let spec = GinibreProductSpec { params, n_samples, seed, top_k, algorithm: ProductAlgorithm::Auto };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_algorithm(mut self, algorithm: ProductAlgorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        if self.top_k == 0 || self.top_k > self.params.n {
            return Err(Error::invalid("top_k", format!("must lie in 1..={}", self.params.n)));
        }
        ProductEnsembleParams::new(self.params.n, self.params.m, self.params.nu.clone())?;
        Ok(())
    }

    /// The algorithm `Auto` resolves to.
    pub fn resolved_algorithm(&self) -> ProductAlgorithm {
        match self.algorithm {
            ProductAlgorithm::Auto => {
                if predicted_log_range(&self.params) < DIRECT_LOG_RANGE_LIMIT && self.top_k < self.params.n {
                    ProductAlgorithm::DirectScaled
                } else {
                    ProductAlgorithm::StagedQr
                }
            }
            a => a,
        }
    }
}

/// Σ_j (ψ(ν_j + N) − ψ(ν_j + 1)), the expected spread of log σ² across the spectrum.
pub fn predicted_log_range(p: &ProductEnsembleParams) -> f64 {
    let n = p.n as f64;
    p.nu_full()[1..].iter().map(|&v| digamma_real(v as f64 + n) - digamma_real(v as f64 + 1.0)).sum()
}

/// The RNG stream of one sample.
pub fn sample_stream(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

fn fill_ginibre<R: Rng + ?Sized>(buf: &mut [Complex64], rng: &mut R) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for z in buf.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = Complex64::new(s * re, s * im);
    }
}

/// A rows × cols complex Ginibre matrix: real and imaginary parts N(0, 1/2),
/// drawn column by column.
pub fn sample_ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
    fill_ginibre(&mut buf, rng);
    DMatrix::from_vec(rows, cols, buf)
}

/// (rows, cols) of X_1 … X_M: X_j is (ν_j + N) × (ν_{j−1} + N).
pub fn factor_sizes(p: &ProductEnsembleParams) -> Vec<(usize, usize)> {
    let nu = p.nu_full();
    (1..=p.m).map(|j| (nu[j] as usize + p.n, nu[j - 1] as usize + p.n)).collect()
}

/// The factors X_1 … X_M of one sample, exactly as the product algorithms draw them.
pub fn sample_factors(spec: &GinibreProductSpec, sample_index: u64) -> Vec<DMatrix<Complex64>> {
    let mut rng = sample_stream(spec.seed, sample_index);
    factor_sizes(&spec.params).into_iter().map(|(r, c)| sample_ginibre(r, c, &mut rng)).collect()
}

/// One sample's log squared singular values, descending. Entries past
/// `reliable` are either flagged values or −∞ when not computed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub log_sv: Vec<f64>,
    pub reliable: usize,
}

/// Log squared singular values of the product for one sample index.
pub fn product_log_singular_values(spec: &GinibreProductSpec, sample_index: u64) -> Result<SampleRow> {
    spec.check()?;
    let mut rng = sample_stream(spec.seed, sample_index);
    let row = match spec.resolved_algorithm() {
        ProductAlgorithm::DirectScaled => direct_scaled(&spec.params, spec.top_k, &mut rng)?,
        _ => staged_qr(&spec.params, &mut rng)?,
    };
    if row.reliable < spec.top_k {
        return Err(Error::Reliability { reliable: row.reliable, required: spec.top_k });
    }
    Ok(row)
}

// ---------------------------------------------------------------------------
// Staged QR with a graded triangular factor
// ---------------------------------------------------------------------------

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Thin QR of a column-major rows × n matrix by modified Gram–Schmidt with
/// one reorthogonalisation. Q overwrites `a`; R (n × n, column-major) has a
/// real positive diagonal.
fn cgs2_qr(a: &mut [Complex64], rows: usize, n: usize, r: &mut [Complex64]) -> Result<()> {
    r.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    for k in 0..n {
        let (done, rest) = a.split_at_mut(k * rows);
        let v = &mut rest[..rows];
        for _ in 0..2 {
            for i in 0..k {
                let qi = &done[i * rows..(i + 1) * rows];
                let h = dot_conj(qi, v);
                for (vv, q) in v.iter_mut().zip(qi) {
                    *vv -= h * q;
                }
                r[k * n + i] += h;
            }
        }
        let nv = norm(v);
        if !(nv > 0.0) || !nv.is_finite() {
            return Err(Error::Numerical(format!("rank-deficient factor at column {k}")));
        }
        r[k * n + k] = Complex64::new(nv, 0.0);
        let inv = 1.0 / nv;
        v.iter_mut().for_each(|z| *z *= inv);
    }
    Ok(())
}

/// T = diag(e^d)·S with unit rows s_i (row-major n × n).
struct GradedTriangle {
    n: usize,
    d: Vec<f64>,
    s: Vec<Complex64>,
}

impl GradedTriangle {
    fn from_r(r: &[Complex64], n: usize) -> Self {
        let mut s = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = r[j * n + i];
            }
        }
        let mut g = GradedTriangle { n, d: vec![0.0; n], s };
        for i in 0..n {
            g.normalize_row(i);
        }
        g
    }

    fn row(&self, i: usize) -> &[Complex64] {
        &self.s[i * self.n..(i + 1) * self.n]
    }

    fn normalize_row(&mut self, i: usize) {
        let n = self.n;
        let row = &mut self.s[i * n..(i + 1) * n];
        let nr = norm(row);
        self.d[i] += nr.ln();
        let inv = 1.0 / nr;
        row.iter_mut().for_each(|z| *z *= inv);
    }

    /// T ← R·T for upper-triangular R (column-major).
    fn left_multiply(&mut self, r: &[Complex64], tmp: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let mut top = f64::NEG_INFINITY;
            for k in i..n {
                let a = r[k * n + i].norm();
                if a > 0.0 {
                    top = top.max(a.ln() + self.d[k]);
                }
            }
            tmp.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for k in i..n {
                let rik = r[k * n + i];
                if rik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let w = rik * (self.d[k] - top).exp();
                if w == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (t, sv) in tmp.iter_mut().zip(self.row(k)) {
                    *t += w * sv;
                }
            }
            self.s[i * n..(i + 1) * n].copy_from_slice(tmp);
            self.d[i] = top;
            self.normalize_row(i);
        }
    }

    /// One-sided Jacobi on the rows of diag(e^d)·S; returns log σ², descending.
    fn log_singular_values(mut self) -> Result<Vec<f64>> {
        let n = self.n;
        let tol = JACOBI_REL_TOL * (n as f64).sqrt();
        let mut converged = n == 1;
        for _ in 0..MAX_JACOBI_SWEEPS {
            if converged {
                break;
            }
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    rotated |= self.rotate(p, q, tol);
                }
            }
            converged = !rotated;
        }
        if !converged {
            return Err(Error::Numerical(format!("graded Jacobi did not converge in {MAX_JACOBI_SWEEPS} sweeps")));
        }
        let mut out: Vec<f64> = (0..n).map(|i| 2.0 * (self.d[i] + norm(self.row(i)).ln())).collect();
        out.sort_by(|a, b| b.total_cmp(a));
        Ok(out)
    }

    fn rotate(&mut self, p: usize, q: usize, tol: f64) -> bool {
        let n = self.n;
        let (alpha_p, alpha_q) = (norm(self.row(p)).powi(2), norm(self.row(q)).powi(2));
        let gram = dot_conj(self.row(q), self.row(p));
        let g = gram.norm();
        if g <= tol * (alpha_p * alpha_q).sqrt() {
            return false;
        }
        // a is the row with the larger scale, b the other one.
        let (a, b, alpha, beta, gamma) = if self.d[p] + 0.5 * alpha_p.ln() >= self.d[q] + 0.5 * alpha_q.ln() {
            (p, q, alpha_p, alpha_q, gram)
        } else {
            (q, p, alpha_q, alpha_p, gram.conj())
        };
        let r = (self.d[b] - self.d[a]).exp();
        let z = (r * r * beta - alpha) / (2.0 * g);
        let t_over_r = z.signum() / (z.abs() + (r * r + z * z).sqrt());
        let t = r * t_over_r;
        let c = 1.0 / (1.0 + t * t).sqrt();
        let phase = gamma / g;
        for j in 0..n {
            let sa = self.s[a * n + j];
            let sb = phase * self.s[b * n + j];
            self.s[a * n + j] = c * sa - c * t * r * sb;
            self.s[b * n + j] = c * t_over_r * sa + c * sb;
        }
        self.normalize_row(a);
        self.normalize_row(b);
        true
    }
}

const JACOBI_REL_TOL: f64 = 4.0 * f64::EPSILON;
const MAX_JACOBI_SWEEPS: usize = 60;

fn staged_qr<R: Rng + ?Sized>(p: &ProductEnsembleParams, rng: &mut R) -> Result<SampleRow> {
    let n = p.n;
    let sizes = factor_sizes(p);
    let max_rows = sizes.iter().map(|s| s.0).max().unwrap_or(n);
    let max_cols = sizes.iter().map(|s| s.1).max().unwrap_or(n);
    let mut x = vec![Complex64::new(0.0, 0.0); max_rows * max_cols];
    let mut q = vec![Complex64::new(0.0, 0.0); max_rows * n];
    let mut a = vec![Complex64::new(0.0, 0.0); max_rows * n];
    let mut r = vec![Complex64::new(0.0, 0.0); n * n];
    let mut tmp = vec![Complex64::new(0.0, 0.0); n];
    let mut tri: Option<GradedTriangle> = None;
    for &(rows, cols) in &sizes {
        let xs = &mut x[..rows * cols];
        fill_ginibre(xs, rng);
        let a = &mut a[..rows * n];
        match tri {
            None => a.copy_from_slice(xs),
            Some(_) => {
                // A = X·Q with Q cols × n.
                let qv = &q[..cols * n];
                for j in 0..n {
                    let col = &mut a[j * rows..(j + 1) * rows];
                    col.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                    for k in 0..cols {
                        let qkj = qv[j * cols + k];
                        for (c, xv) in col.iter_mut().zip(&xs[k * rows..(k + 1) * rows]) {
                            *c += xv * qkj;
                        }
                    }
                }
            }
        }
        cgs2_qr(a, rows, n, &mut r)?;
        q[..rows * n].copy_from_slice(a);
        match tri.as_mut() {
            None => tri = Some(GradedTriangle::from_r(&r, n)),
            Some(t) => t.left_multiply(&r, &mut tmp),
        }
    }
    let tri = tri.ok_or_else(|| Error::invalid("M", "must be at least 1"))?;
    let log_sv = tri.log_singular_values()?;
    Ok(SampleRow { reliable: n, log_sv })
}

// ---------------------------------------------------------------------------
// Direct scaled product with Lanczos
// ---------------------------------------------------------------------------

/// A complex vector as separate real and imaginary parts.
#[derive(Clone)]
struct SplitVec {
    re: DVector<f64>,
    im: DVector<f64>,
}

impl SplitVec {
    fn dot(&self, other: &SplitVec) -> Complex64 {
        // ⟨self, other⟩ = Σ conj(self)·other
        Complex64::new(self.re.dot(&other.re) + self.im.dot(&other.im), self.re.dot(&other.im) - self.im.dot(&other.re))
    }
    fn norm(&self) -> f64 {
        (self.re.norm_squared() + self.im.norm_squared()).sqrt()
    }
    fn axpy(&mut self, a: Complex64, x: &SplitVec) {
        self.re.axpy(a.re, &x.re, 1.0);
        self.re.axpy(-a.im, &x.im, 1.0);
        self.im.axpy(a.re, &x.im, 1.0);
        self.im.axpy(a.im, &x.re, 1.0);
    }
    fn scale(&mut self, s: f64) {
        self.re *= s;
        self.im *= s;
    }
}

const LANCZOS_RESIDUAL: f64 = 1e-12;

fn direct_scaled<R: Rng + ?Sized>(p: &ProductEnsembleParams, top_k: usize, rng: &mut R) -> Result<SampleRow> {
    let n = p.n;
    let mut pr = DMatrix::<f64>::zeros(0, 0);
    let mut pi = DMatrix::<f64>::zeros(0, 0);
    let mut log_scale = 0.0;
    for (j, (rows, cols)) in factor_sizes(p).into_iter().enumerate() {
        let x = sample_ginibre(rows, cols, rng);
        let xr = x.map(|z| z.re);
        let xi = x.map(|z| z.im);
        if j == 0 {
            pr = xr;
            pi = xi;
        } else {
            let nr = &xr * &pr - &xi * &pi;
            let ni = &xr * &pi + &xi * &pr;
            pr = nr;
            pi = ni;
        }
        let top = pr.iter().chain(pi.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        if !(top > 0.0) || !top.is_finite() {
            return Err(Error::Numerical("degenerate product in the direct path".into()));
        }
        pr /= top;
        pi /= top;
        log_scale += top.ln();
    }
    let hr = pr.transpose() * &pr + pi.transpose() * &pi;
    let hi = pr.transpose() * &pi - pi.transpose() * &pr;
    let apply = |v: &SplitVec| SplitVec { re: &hr * &v.re - &hi * &v.im, im: &hr * &v.im + &hi * &v.re };
    let start = SplitVec {
        re: DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        im: DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
    };
    let (values, converged) = lanczos_top(apply, start, n, top_k)?;
    let mut log_sv = vec![f64::NEG_INFINITY; n];
    let mut reliable = 0;
    let lead = values.first().copied().unwrap_or(0.0);
    for (k, &lam) in values.iter().enumerate().take(top_k) {
        if lam > 0.0 {
            log_sv[k] = 2.0 * log_scale + lam.ln();
        }
        if k < converged && lam >= GRADING_LIMIT * lead && reliable == k {
            reliable += 1;
        }
    }
    Ok(SampleRow { log_sv, reliable })
}

/// Largest eigenvalues of a Hermitian operator by Lanczos with full
/// reorthogonalisation. Returns the Ritz values (descending) and how many
/// leading ones meet the residual test.
fn lanczos_top<F: Fn(&SplitVec) -> SplitVec>(apply: F, start: SplitVec, n: usize, want: usize) -> Result<(Vec<f64>, usize)> {
    let mut v = start;
    let nv = v.norm();
    if !(nv > 0.0) {
        return Err(Error::Numerical("zero Lanczos start vector".into()));
    }
    v.scale(1.0 / nv);
    let mut basis: Vec<SplitVec> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j]);
        let alpha = basis[j].dot(&w).re;
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let h = b.dot(&w);
                w.axpy(-h, b);
            }
        }
        let beta = w.norm();
        let dim = alphas.len();
        let t = DMatrix::from_fn(dim, dim, |a, b| {
            if a == b {
                alphas[a]
            } else if a + 1 == b {
                betas[a]
            } else if b + 1 == a {
                betas[b]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta_max = eig.eigenvalues[order[0]].abs();
        let exhausted = dim == n || beta <= 1e-14 * theta_max;
        let mut converged = 0;
        for &idx in order.iter().take(want) {
            let res = beta * eig.eigenvectors[(dim - 1, idx)].abs();
            if exhausted || res <= LANCZOS_RESIDUAL * theta_max {
                converged += 1;
            } else {
                break;
            }
        }
        if exhausted || (dim >= want && converged >= want) {
            let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            return Ok((values, converged));
        }
        w.scale(1.0 / beta);
        betas.push(beta);
        basis.push(w);
    }
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// Log squared singular values of `n_samples` products, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub log_sv: Vec<Vec<f64>>,
    /// Leading columns that meet the precision contract in every row.
    pub reliable_k: usize,
    pub meta: GinibreProductSpec,
}

impl SampleBatch {
    /// Samples indices 0 … n_samples − 1 in parallel; rows keep index order.
    pub fn generate(spec: &GinibreProductSpec) -> Result<Self> {
        spec.check()?;
        let rows: Vec<SampleRow> = (0..spec.n_samples as u64)
            .into_par_iter()
            .map(|i| product_log_singular_values(spec, i))
            .collect::<Result<_>>()?;
        let reliable_k = rows.iter().map(|r| r.reliable).min().unwrap_or(0);
        Ok(SampleBatch { log_sv: rows.into_iter().map(|r| r.log_sv).collect(), reliable_k, meta: spec.clone() })
    }

    /// log_sv[·][k−1] across samples.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.log_sv.iter().map(|r| r[k - 1]).collect()
    }

    /// Finite-time Lyapunov exponents λ_{k,M} = log σ_k² / (2M).
    pub fn lyapunov_exponents(&self, k: usize) -> Vec<f64> {
        let two_m = 2.0 * self.meta.params.m as f64;
        self.column(k).into_iter().map(|v| v / two_m).collect()
    }

    /// Columnar CSV `sample_index,k,log_sv,reliable`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_index,k,log_sv,reliable\n");
        for (i, row) in self.log_sv.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{i},{},{v:e},{}", k + 1, k < self.reliable_k);
            }
        }
        out
    }

    /// JSON sidecar with the full spec, the resolved algorithm and the crate version.
    pub fn sidecar_json(&self) -> Result<String> {
        let doc = serde_json::json!({
            "spec": self.meta,
            "algorithm": self.meta.resolved_algorithm(),
            "reliable_k": self.reliable_k,
            "code_version": env!("CARGO_PKG_VERSION"),
        });
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Theory
// ---------------------------------------------------------------------------

/// λ_k = ψ(N − k + 1)/2 for k = 1 … N.
pub fn lyapunov_spectrum_theory(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 0.5 * digamma_real((n - k + 1) as f64)).collect()
}

/// (1/(2(M+1))) Σ_{j=0}^{M} ψ(ν_j + N − k + 1) for k = 1 … N.
pub fn time_average_theory(p: &ProductEnsembleParams) -> Vec<f64> {
    let nu = p.nu_full();
    let denom = 2.0 * (p.m as f64 + 1.0);
    (1..=p.n)
        .map(|k| nu.iter().map(|&v| digamma_real((v as usize + p.n - k + 1) as f64)).sum::<f64>() / denom)
        .collect()
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Sorted samples of a real statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub sorted_samples: Vec<f64>,
    pub n: usize,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("samples", "empty"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("samples", "contains NaN"));
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        Ok(EmpiricalDistribution { sorted_samples: samples, n })
    }

    /// Fraction of samples ≤ x.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted_samples.partition_point(|&v| v <= x) as f64 / self.n as f64
    }

    pub fn mean(&self) -> f64 {
        self.sorted_samples.iter().sum::<f64>() / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.sorted_samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (self.n as f64 - 1.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// CSV `x,ecdf` with the right-continuous step value at each sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,ecdf\n");
        for (i, v) in self.sorted_samples.iter().enumerate() {
            let _ = writeln!(out, "{v:e},{}", (i + 1) as f64 / self.n as f64);
        }
        out
    }
}

/// sup_x |F_n(x) − F(x)|, exact over the jump points of the ECDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(emp: &EmpiricalDistribution, cdf: F) -> f64 {
    let n = emp.n as f64;
    let mut d: f64 = 0.0;
    let s = &emp.sorted_samples;
    let mut i = 0;
    while i < s.len() {
        // Ties form one jump.
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// A distribution function tabulated on a uniform grid and interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedCdf {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedCdf {
    /// Tabulates `f` on lo, lo + step, … ≤ hi (in parallel).
    pub fn from_fn<F: Fn(f64) -> Result<f64> + Sync>(lo: f64, hi: f64, step: f64, f: F) -> Result<Self> {
        if !(hi > lo) || !(step > 0.0) {
            return Err(Error::invalid("table", "need lo < hi and step > 0"));
        }
        let xs = kernels::linspace_step(lo, hi, step);
        let values = xs.par_iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
        Ok(TabulatedCdf { xs, values })
    }

    /// Linear interpolation, clamped to the end values outside the table.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.values[0];
        }
        if x >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x).min(n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let w = (x - x0) / (x1 - x0);
        (1.0 - w) * self.values[i - 1] + w * self.values[i]
    }
}

// ---------------------------------------------------------------------------
// Regime experiments
// ---------------------------------------------------------------------------

/// Which standardised statistic a regime experiment collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RegimeKind {
    /// ξ of the k-th largest level under the Gaussian-regime map.
    NormalK { k: usize },
    /// ξ of the largest level under the critical soft-edge map.
    Critical,
    /// ξ of the largest level under the θ = 0 soft-edge map.
    AiryEdge,
}

impl RegimeKind {
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        match name {
            "normal-k" => Ok(RegimeKind::NormalK { k }),
            "critical" => Ok(RegimeKind::Critical),
            "airy-edge" => Ok(RegimeKind::AiryEdge),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeKind::NormalK { .. } => "normal-k",
            RegimeKind::Critical => "critical",
            RegimeKind::AiryEdge => "airy-edge",
        }
    }

    /// Which level the statistic is built from (1 = largest).
    pub fn level(&self) -> usize {
        match self {
            RegimeKind::NormalK { k } => *k,
            _ => 1,
        }
    }

    /// The scaling map from log σ² to ξ.
    pub fn scaling_map(&self, p: &ProductEnsembleParams) -> Result<ScalingMap> {
        let square = p.nu.iter().all(|&v| v == 0);
        match self {
            RegimeKind::NormalK { k } => kernels::scaling_normal(*k, p.m, p.n),
            RegimeKind::Critical if square => kernels::scaling_critical(p.m, p.n),
            RegimeKind::Critical => kernels::scaling_critical_nu(p),
            RegimeKind::AiryEdge => kernels::scaling_airy(p.m, p.n),
        }
    }

    /// Warnings when M/N is far from the regime's range.
    pub fn compatibility_warnings(&self, p: &ProductEnsembleParams) -> Vec<String> {
        let ratio = p.m as f64 / p.n as f64;
        let mut w = Vec::new();
        match self {
            RegimeKind::NormalK { .. } if ratio < 10.0 => {
                w.push(format!("normal-k expects M much larger than N; M/N = {ratio}"))
            }
            RegimeKind::Critical if !(0.1..=10.0).contains(&ratio) => {
                w.push(format!("critical expects M comparable to N; M/N = {ratio}"))
            }
            RegimeKind::AiryEdge if ratio > 0.1 => w.push(format!("airy-edge expects M much smaller than N; M/N = {ratio}")),
            _ => {}
        }
        w
    }
}

/// Outcome of [`regime_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeExperiment {
    pub regime: RegimeKind,
    pub distribution: EmpiricalDistribution,
    pub map: ScalingMap,
    pub warnings: Vec<String>,
    pub reliable_k: usize,
}

/// Samples the product and collects ξ = map⁻¹(log σ_k²) for the regime's level k.
pub fn regime_experiment(regime: RegimeKind, p: &ProductEnsembleParams, n_samples: usize, seed: u64) -> Result<RegimeExperiment> {
    let k = regime.level();
    if k == 0 || k > p.n {
        return Err(Error::invalid("k", format!("must lie in 1..={}", p.n)));
    }
    let map = regime.scaling_map(p)?;
    let spec = GinibreProductSpec::new(p.clone(), n_samples, seed, k)?;
    let batch = SampleBatch::generate(&spec)?;
    let xi: Vec<f64> = batch.column(k).into_iter().map(|v| map.xi_of(v)).collect();
    Ok(RegimeExperiment {
        regime,
        distribution: EmpiricalDistribution::new(xi)?,
        map,
        warnings: regime.compatibility_warnings(p),
        reliable_k: batch.reliable_k,
    })
}
