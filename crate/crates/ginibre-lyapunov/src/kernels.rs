//! Correlation kernels of the log-singular-value process of Ginibre products
//! and of its scaling limits.
//!
//! * [`finite_n_kernel`]: the exact kernel K̃_N(x, y) of log(Π*Π), including
//!   rectangular factors through the offsets ν_j.
//! * [`crit_kernel_integral`], [`crit_kernel_series`], [`CritReflection`] and
//!   [`crit_kernel_hat`]: four evaluations of the critical kernel K_crit.
//! * [`bulk_crit_kernel`], [`airy_kernel`], [`sine_kernel`]: the remaining limits.
//! * [`ScalingMap`]: the affine changes of variable g(ξ) and the conjugations
//!   that connect K̃_N with its limits.
//!
//! Every kernel is defined up to a conjugation e^{c(x−y)}; determinants and
//! Fredholm determinants do not see it.

use crate::contours::{self, ComplexPath, QuadSpec};
use crate::error::{Error, Result};
use crate::specfun::{self, EvalPrecision};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

type C64 = Complex64;

fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn ln_gamma(z: C64) -> C64 {
    specfun::log_gamma_unchecked(z)
}

fn ln_gamma_real(x: f64) -> f64 {
    specfun::log_gamma_unchecked(c64(x, 0.0)).re
}

/// (2πi)² = −4π², the normalisation of every double contour integral here.
const TWO_PI_I_SQ: f64 = -4.0 * PI * PI;

/// Below this |y − x| the series form of K_crit hands over to the double integral.
pub const SERIES_DIAG_THRESHOLD: f64 = 1e-2;

// ---------------------------------------------------------------------------
// Ensemble parameters
// ---------------------------------------------------------------------------

/// Sizes of the product Π_M = X_M ⋯ X_1 with X_j of size (ν_j + N) × (ν_{j−1} + N).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductEnsembleParams {
    /// Matrix size N.
    pub n: usize,
    /// Number of factors M.
    pub m: usize,
    /// Offsets ν_1 … ν_M (ν_0 = 0 is implied). Empty means all zero.
    pub nu: Vec<u32>,
}

impl ProductEnsembleParams {
    /// Checks N ≥ 1, M ≥ 1 and that `nu` is empty or has length M.
    pub fn new(n: usize, m: usize, nu: Vec<u32>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "must be at least 1"));
        }
        if m == 0 {
            return Err(Error::invalid("M", "must be at least 1 (one Ginibre factor)"));
        }
        if !nu.is_empty() && nu.len() != m {
            return Err(Error::invalid("nu", format!("must be empty or have length M = {m}, got {}", nu.len())));
        }
        Ok(ProductEnsembleParams { n, m, nu })
    }

    /// Square factors: all ν_j = 0.
    pub fn square(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, Vec::new())
    }

    /// ν_0, ν_1, …, ν_M.
    pub fn nu_full(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.m + 1);
        v.push(0);
        if self.nu.is_empty() {
            v.extend(std::iter::repeat(0).take(self.m));
        } else {
            v.extend_from_slice(&self.nu);
        }
        v
    }

    /// Distinct values ν_j + N with their multiplicities among j = 0 … M,
    /// sorted increasingly. All-zero offsets give the single group (N, M + 1)
    /// whether or not `nu` is spelled out.
    pub fn gamma_groups(&self) -> Vec<(f64, f64)> {
        let mut nus = self.nu_full();
        nus.sort_unstable();
        let mut out: Vec<(f64, f64)> = Vec::new();
        for v in nus {
            let a = (v as usize + self.n) as f64;
            match out.last_mut() {
                Some(last) if last.0 == a => last.1 += 1.0,
                _ => out.push((a, 1.0)),
            }
        }
        out
    }

    /// Σ_{j=0}^{M} 1/(ν_j + N), the effective critical parameter γ.
    pub fn effective_gamma(&self) -> f64 {
        self.gamma_groups().iter().map(|(a, m)| m / a).sum()
    }
}

// ---------------------------------------------------------------------------
// Spectrum parametrisation
// ---------------------------------------------------------------------------

/// x_N(k) = N(ψ(1 − k + N) − log N).
pub fn x_n(k: usize, n: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("must satisfy 1 <= k <= N = {n}, got {k}")));
    }
    let nf = n as f64;
    Ok(nf * (specfun::digamma_real((1 + n - k) as f64) - nf.ln()))
}

/// log(sin a / a), accurate down to a = 0.
fn ln_sinc(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        let a2 = a * a;
        -a2 / 6.0 - a2 * a2 / 180.0
    } else {
        (a.sin() / a).ln()
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..PI).contains(&theta) {
        return Err(Error::invalid("theta", format!("must lie in [0, pi), got {theta}")));
    }
    Ok(())
}

/// v_M(θ) = (M+1) log sin θ − M log sin(Mθ/(M+1)) − log sin(θ/(M+1)) − log(M+1).
///
/// The logarithms of θ cancel exactly, leaving −M log(M/(M+1)) plus
/// log-sinc corrections, which is also the value at θ = 0.
pub fn v_m(theta: f64, m: usize) -> Result<f64> {
    check_theta(theta)?;
    if m == 0 {
        return Err(Error::invalid("M", "must be at least 1"));
    }
    let mf = m as f64;
    let mp = mf + 1.0;
    Ok(-mf * (mf / mp).ln() + mp * ln_sinc(theta) - mf * ln_sinc(mf * theta / mp) - ln_sinc(theta / mp))
}

/// v_∞(θ) = θ cot θ − log(θ / sin θ), the M → ∞ limit of [`v_m`].
pub fn v_infty(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let tc = if theta.abs() < 1e-8 { 1.0 } else { theta / theta.tan() };
    Ok(tc + ln_sinc(theta))
}

/// Local density ρ_{M,N}(θ); at θ = 0 the edge scale 2^{1/3}(N/(M+1))^{2/3}.
pub fn rho_mn(theta: f64, m: usize, n: usize) -> Result<f64> {
    check_theta(theta)?;
    if m == 0 || n == 0 {
        return Err(Error::invalid("M, N", "must be at least 1"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let mp = mf + 1.0;
    if theta == 0.0 {
        return Ok(2f64.powf(1.0 / 3.0) * (nf / mp).powf(2.0 / 3.0));
    }
    Ok(nf * theta.sin() * (theta / mp).sin() / (PI * (mf * theta / mp).sin()))
}

// ---------------------------------------------------------------------------
// Scaling maps
// ---------------------------------------------------------------------------

/// Which limit a [`ScalingMap`] zooms into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    NormalK,
    Critical,
    BulkCritical,
    SineTheta,
    AiryEdge,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::NormalK => "normal-k",
            Regime::Critical => "critical",
            Regime::BulkCritical => "bulk-critical",
            Regime::SineTheta => "sine-theta",
            Regime::AiryEdge => "airy-edge",
        }
    }
}

/// Regime-specific parameters recorded with a scaling map.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalingParams {
    pub k: Option<usize>,
    pub theta: Option<f64>,
    pub u: Option<f64>,
    pub gamma: Option<f64>,
}

/// Affine map x = shift + direction·ξ/scale together with the conjugation
/// e^{c(ξ−η)} under which K̃_N(x(ξ), x(η))/scale converges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub regime: Regime,
    pub n: usize,
    pub m: usize,
    pub shift: f64,
    /// Units of ξ per unit of log-spectrum; always positive.
    pub scale: f64,
    /// +1, or −1 for the bulk-critical map whose ξ runs downwards.
    pub direction: f64,
    pub conj_exponent: f64,
    pub params: ScalingParams,
}

impl ScalingMap {
    fn build(regime: Regime, n: usize, m: usize, shift: f64, scale: f64, direction: f64, c: f64, params: ScalingParams) -> Result<Self> {
        if !(scale > 0.0) || !shift.is_finite() || !c.is_finite() {
            return Err(Error::Numerical(format!("degenerate scaling map: shift {shift}, scale {scale}")));
        }
        Ok(ScalingMap { regime, n, m, shift, scale, direction, conj_exponent: c, params })
    }

    /// x(ξ).
    pub fn x_of(&self, xi: f64) -> f64 {
        self.shift + self.direction * xi / self.scale
    }

    /// Inverse map ξ(x).
    pub fn xi_of(&self, x: f64) -> f64 {
        self.direction * (x - self.shift) * self.scale
    }

    /// e^{c(ξ−η)} K / scale: turns a finite-N kernel value at (x(ξ), x(η))
    /// into the quantity that converges to the limiting kernel.
    pub fn rescale(&self, xi: f64, eta: f64, value: f64) -> f64 {
        (self.conj_exponent * (xi - eta)).exp() * value / self.scale
    }

    /// Evaluates the rescaled, conjugated finite-N kernel at (ξ, η).
    pub fn rescaled_kernel(&self, k: &FiniteNKernel, xi: f64, eta: f64) -> Result<f64> {
        let v = k.eval(self.x_of(xi), self.x_of(eta))?;
        Ok(self.rescale(xi, eta, v))
    }

    /// Name of the regime followed by its parameters, for CSV and JSON output.
    pub fn describe(&self) -> String {
        let mut s = format!("{} N={} M={}", self.regime.as_str(), self.n, self.m);
        if let Some(k) = self.params.k {
            let _ = write!(s, " k={k}");
        }
        if let Some(t) = self.params.theta {
            let _ = write!(s, " theta={t}");
        }
        if let Some(u) = self.params.u {
            let _ = write!(s, " u={u}");
        }
        if let Some(g) = self.params.gamma {
            let _ = write!(s, " gamma={g}");
        }
        s
    }
}

fn check_mn(m: usize, n: usize) -> Result<(f64, f64)> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("M, N", "must be at least 1"));
    }
    Ok((m as f64, n as f64))
}

/// Gaussian regime around the k-th largest level:
/// x = (M+1)/N · (N log N + x_N(k) + ξ√(N/(M+1))), conjugation (k−1)√((M+1)/N).
pub fn scaling_normal(k: usize, m: usize, n: usize) -> Result<ScalingMap> {
    let (mf, nf) = check_mn(m, n)?;
    let xk = x_n(k, n)?;
    let mp = mf + 1.0;
    let shift = mp * (nf.ln() + xk / nf);
    let scale = (nf / mp).sqrt();
    let c = (k as f64 - 1.0) / scale;
    let params = ScalingParams { k: Some(k), gamma: Some(mf / nf), ..Default::default() };
    ScalingMap::build(Regime::NormalK, n, m, shift, scale, 1.0, c, params)
}

/// Critical soft edge: x = (M+1)(log N − 1/(2N)) + ξ.
pub fn scaling_critical(m: usize, n: usize) -> Result<ScalingMap> {
    let (mf, nf) = check_mn(m, n)?;
    let shift = (mf + 1.0) * (nf.ln() - 0.5 / nf);
    let params = ScalingParams { gamma: Some(mf / nf), ..Default::default() };
    ScalingMap::build(Regime::Critical, n, m, shift, 1.0, 1.0, 0.0, params)
}

/// Critical soft edge for rectangular factors: x = Σ_j (log(ν_j+N) − 1/(2(ν_j+N))) + ξ.
pub fn scaling_critical_nu(p: &ProductEnsembleParams) -> Result<ScalingMap> {
    let shift: f64 = p.gamma_groups().iter().map(|(a, mult)| mult * (a.ln() - 0.5 / a)).sum();
    let params = ScalingParams { gamma: Some(p.effective_gamma()), ..Default::default() };
    ScalingMap::build(Regime::Critical, p.n, p.m, shift, 1.0, 1.0, 0.0, params)
}

/// Bulk of the critical regime at relative depth u ∈ (0, 1):
/// x = M log(N(1−u)) + log((1−u)/u) + (M+1)/(N(1−u))·(Nu − [Nu] − 1/2) − ξ,
/// conjugation e^{(g(ξ)−g(η))[Nu]} and limit parameter γ′ = (M/N)/(1−u).
pub fn scaling_bulk_critical(u: f64, m: usize, n: usize) -> Result<ScalingMap> {
    let (mf, nf) = check_mn(m, n)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid("u", format!("must lie in (0, 1), got {u}")));
    }
    let nu_floor = (nf * u).floor();
    let shift = mf * (nf * (1.0 - u)).ln() + ((1.0 - u) / u).ln() + (mf + 1.0) / (nf * (1.0 - u)) * (nf * u - nu_floor - 0.5);
    let params = ScalingParams { u: Some(u), gamma: Some(mf / nf / (1.0 - u)), ..Default::default() };
    ScalingMap::build(Regime::BulkCritical, n, m, shift, 1.0, -1.0, -nu_floor, params)
}

/// Strongly correlated bulk at angle θ ∈ (0, π):
/// x = M log N + log(M+1) + v_M(θ) + ξ/ρ, conjugation −π cot θ.
pub fn scaling_sine(theta: f64, m: usize, n: usize) -> Result<ScalingMap> {
    let (mf, _) = check_mn(m, n)?;
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::invalid("theta", format!("must lie in (0, pi), got {theta}")));
    }
    let rho = rho_mn(theta, m, n)?;
    let shift = mf * (n as f64).ln() + (mf + 1.0).ln() + v_m(theta, m)?;
    let params = ScalingParams { theta: Some(theta), ..Default::default() };
    ScalingMap::build(Regime::SineTheta, n, m, shift, rho, 1.0, -PI / theta.tan(), params)
}

/// Strongly correlated soft edge (θ = 0):
/// x = M log N + log(M+1) + v_M(0) + ξ/ρ, conjugation −N/((M+1)ρ).
pub fn scaling_airy(m: usize, n: usize) -> Result<ScalingMap> {
    let (mf, nf) = check_mn(m, n)?;
    let rho = rho_mn(0.0, m, n)?;
    let shift = mf * nf.ln() + (mf + 1.0).ln() + v_m(0.0, m)?;
    let params = ScalingParams { theta: Some(0.0), ..Default::default() };
    ScalingMap::build(Regime::AiryEdge, n, m, shift, rho, 1.0, -nf / ((mf + 1.0) * rho), params)
}

/// Soft-edge map built from the exact double saddle of the finite-(M, N)
/// phase F(t) = xt + log Γ(t) − (M+1) log Γ(t+N).
///
/// F″(t*) = 0 fixes t* (close to N/M), the centre is x* = (M+1)ψ(t*+N) − ψ(t*),
/// the scale is ρ* = (−F‴(t*)/2)^{−1/3} and the conjugation is −t*/ρ*. For
/// large M this agrees with [`scaling_airy`]; at small M the two differ by
/// factors of order (M+1)/M.
pub fn scaling_airy_exact(m: usize, n: usize) -> Result<ScalingMap> {
    let (mf, nf) = check_mn(m, n)?;
    let mp = mf + 1.0;
    let f2 = |t: f64| specfun::trigamma_real(t) - mp * specfun::trigamma_real(t + nf);
    let (mut lo, mut hi) = (1e-3 * nf / mf, 10.0 * nf / mf + 10.0);
    while f2(lo) < 0.0 {
        lo *= 0.5;
    }
    while f2(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f2(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let shift = mp * specfun::digamma_real(t + nf) - specfun::digamma_real(t);
    let f3 = specfun::tetragamma_real(t) - mp * specfun::tetragamma_real(t + nf);
    let rho = (-f3 / 2.0).powf(-1.0 / 3.0);
    let params = ScalingParams { theta: Some(0.0), ..Default::default() };
    ScalingMap::build(Regime::AiryEdge, n, m, shift, rho, 1.0, -t / rho, params)
}

// ---------------------------------------------------------------------------
// Trapezoid rule on vertical lines
// ---------------------------------------------------------------------------

/// Nodes s_j = c + i·j·h of a truncated trapezoid rule on the upward line
/// Re s = c with weights h/(2π)·exp(log_env(s_j) − log_ref), so that
/// Σ w_j φ(s_j) ≈ ∫ env(s) φ(s) ds/(2πi). Truncation happens where
/// env·e^{growth·|Im s|} has dropped below e^{LINE_DROP} of its peak, for
/// factors φ that may grow like e^{growth·|Im s|}.
struct LineRule {
    s: Vec<C64>,
    w: Vec<C64>,
}

/// Relative drop of the envelope (natural log) at which a line is truncated.
const LINE_DROP: f64 = -46.0;

fn line_rule(c: f64, h: f64, log_env: &dyn Fn(C64) -> C64, log_ref: f64, growth: f64) -> Result<LineRule> {
    const MAX_NODES: usize = 400_000;
    let mut s = Vec::new();
    let mut w = Vec::new();
    let scale = h / (2.0 * PI);
    let z0 = c64(c, 0.0);
    let l0 = log_env(z0);
    let mut peak = l0.re;
    s.push(z0);
    w.push((l0 - log_ref).exp() * scale);
    for dir in [1.0, -1.0] {
        let mut below = 0;
        let mut j = 1usize;
        loop {
            let z = c64(c, dir * j as f64 * h);
            let l = log_env(z);
            if !l.re.is_nan() {
                let lt = l.re + growth * z.im.abs();
                peak = peak.max(lt);
                if lt - peak < LINE_DROP {
                    below += 1;
                } else {
                    below = 0;
                }
                s.push(z);
                w.push((l - log_ref).exp() * scale);
            }
            if below >= 3 {
                break;
            }
            j += 1;
            if s.len() > MAX_NODES {
                return Err(Error::Numerical(format!("line Re s = {c}: envelope does not decay")));
            }
        }
    }
    Ok(LineRule { s, w })
}

/// Runs `eval` on trapezoid rules of step h0, h0/2, … until two successive
/// results agree to `tol` (absolute, on the largest component). Returns the
/// finer result and the last difference as the error estimate.
fn refine_line<F>(c: f64, h0: f64, log_env: &dyn Fn(C64) -> C64, log_ref: f64, growth: f64, tol: f64, eval: F) -> Result<(Vec<C64>, f64)>
where
    F: Fn(&LineRule) -> Vec<C64>,
{
    let mut h = h0;
    let mut prev = eval(&line_rule(c, h, log_env, log_ref, growth)?);
    for _ in 0..10 {
        h *= 0.5;
        let rule = line_rule(c, h, log_env, log_ref, growth)?;
        let next = eval(&rule);
        let diff = prev.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let size = next.iter().map(|v| v.norm()).fold(0.0, f64::max);
        // Rounding level of the weighted sum itself.
        let roundoff = 1e3 * f64::EPSILON * rule.s.iter().zip(&rule.w).map(|(s, w)| w.norm() * (growth * s.im.abs()).exp()).sum::<f64>();
        if diff <= (tol * size).max(roundoff).max(1e-300) || diff == 0.0 {
            return Ok((next, diff));
        }
        prev = next;
    }
    Err(Error::NoConvergence { value_re: prev[0].re, value_im: prev[0].im, err: f64::NAN })
}

// ---------------------------------------------------------------------------
// Finite-N kernel
// ---------------------------------------------------------------------------

/// How [`finite_n_kernel`] evaluates the double integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiniteNMethod {
    /// Residues at t = 0, −1, …, −N+1, each times one s-line integral.
    ResidueSeries,
    /// Nested adaptive quadrature over a rectangle around the poles and a vertical line.
    DoubleContour,
    /// Nested adaptive quadrature over the steepest-descent curve {q_M(φ)} for t
    /// and a vertical s-line through the dominant point of that curve (square
    /// factors only). Free of the cancellation that the residue sum suffers
    /// for large N at fixed M.
    SteepestDescent,
}

/// Cancellation ratio Σ|terms| / |Σ terms| above which the residue form
/// hands over to [`FiniteNMethod::SteepestDescent`] for square factors.
pub const RESIDUE_CANCELLATION_LIMIT: f64 = 1e6;

/// ln ∫|J_n integrand| below which the J_n are taken as zero.
const LOG_NEGLIGIBLE_MASS: f64 = -1500.0;

/// Σ|terms| of the residue sum above which the same hand-over happens.
pub const RESIDUE_MAGNITUDE_LIMIT: f64 = 1e10;

/// The finite-N kernel
/// K̃(x, y) = ∫ds/2πi ∮dt/2πi e^{xt−ys}/(s−t) · Γ(t)/Γ(s) · Π_{j=0}^{M} Γ(s+ν_j+N)/Γ(t+ν_j+N).
///
/// The residue form used by default is
/// K̃(x, y) = Σ_{n<N} (−1)^n/n! · e^{−xn} / Π_j Γ(N−n+ν_j) · J_n(y),
/// J_n(y) = ∫_{Re s = c} e^{−ys} Π_j Γ(s+ν_j+N) / ((s+n) Γ(s)) ds/2πi,
/// which is independent of c > 0 because 1/Γ(s) vanishes at s = −n. The
/// kernel factorises as a sum of N products, which [`FiniteNKernel::matrix`]
/// exploits.
#[derive(Debug, Clone)]
pub struct FiniteNKernel {
    params: ProductEnsembleParams,
    groups: Vec<(f64, f64)>,
    /// −ln n! − Σ_j m_j ln Γ(a_j − n) for n = 0 … N−1.
    res_const: Vec<f64>,
    pub method: FiniteNMethod,
    pub spec: QuadSpec,
}

impl FiniteNKernel {
    pub fn new(params: ProductEnsembleParams, method: FiniteNMethod, spec: QuadSpec) -> Self {
        let groups = params.gamma_groups();
        let res_const = (0..params.n)
            .map(|n| {
                let nf = n as f64;
                -ln_gamma_real(nf + 1.0) - groups.iter().map(|(a, m)| m * ln_gamma_real(a - nf)).sum::<f64>()
            })
            .collect();
        FiniteNKernel { params, groups, res_const, method, spec }
    }

    pub fn params(&self) -> &ProductEnsembleParams {
        &self.params
    }

    /// Φ(s; y) = ys + ln Γ(s) − Σ_j m_j ln Γ(s + a_j); the s-integrand is e^{−Φ}.
    fn phi(&self, s: C64, y: f64) -> C64 {
        let mut v = s * y + ln_gamma(s);
        for (a, m) in &self.groups {
            v -= ln_gamma(s + a) * *m;
        }
        v
    }

    fn dphi(&self, s: f64, y: f64, order: u8) -> f64 {
        let f = |t: f64| match order {
            1 => specfun::digamma_real(t),
            2 => specfun::trigamma_real(t),
            _ => specfun::tetragamma_real(t),
        };
        let mut v = f(s);
        for (a, m) in &self.groups {
            v -= m * f(s + a);
        }
        if order == 1 {
            v + y
        } else {
            v
        }
    }

    /// Offset c of the s-line: the real saddle of e^{−Φ(s; y)} where the
    /// modulus is largest along the line, or the point nearest to the
    /// complex saddle pair when no real one exists.
    fn line_offset(&self, y: f64) -> f64 {
        // Φ″ > 0 near 0 and < 0 for large s; its root is where Φ′ peaks.
        let (mut lo, mut hi) = (1e-12, 1.0);
        while self.dphi(hi, y, 2) > 0.0 && hi < 1e12 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.dphi(mid, y, 2) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s_peak = 0.5 * (lo + hi);
        let mut c = s_peak;
        if self.dphi(s_peak, y, 1) > 0.0 {
            let (mut lo, mut hi) = (s_peak, 2.0 * s_peak + 1.0);
            while self.dphi(hi, y, 1) > 0.0 && hi < 1e12 {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.dphi(mid, y, 1) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            c = 0.5 * (lo + hi);
        }
        c.max(1e-3)
    }

    /// Offset of the J_n lines. The J_n integrands are analytic for
    /// Re s > −a_min (a_min = N + min ν), so the line may sit anywhere right
    /// of −a_min. Candidates are the saddle of [`Self::line_offset`], the real
    /// saddle inside (−a_min, −a_min + 1) when there is one, and the
    /// half-integers in between; the winner has the smallest ∫|e^{−Φ}| along
    /// the line. For y ≪ 0 only the lines left of the origin avoid an
    /// envelope exponentially larger than J_n itself.
    fn residue_line_offset(&self, y: f64) -> f64 {
        let right = self.line_offset(y);
        let a_min = self.a_min();
        let mut candidates = vec![right];
        let (lo, hi) = (-a_min + 1e-9, -a_min + 1.0 - 1e-9);
        // Φ″ runs from −∞ to +∞ across (lo, hi); Φ′ is smallest at its root.
        let (mut a, mut b) = (lo, hi);
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if self.dphi(mid, y, 2) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let s_min = 0.5 * (a + b);
        if self.dphi(s_min, y, 1) < 0.0 {
            // Φ′ falls from +∞ through zero on (lo, s_min): a local maximum of Φ.
            let (mut a, mut b) = (lo, s_min);
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                if self.dphi(mid, y, 1) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            candidates.push(0.5 * (a + b));
        }
        for h in [-a_min + 0.5, (-0.5 * a_min).floor() + 0.5, -0.5] {
            if h < 0.0 && h > -a_min && !candidates.contains(&h) {
                candidates.push(h);
            }
        }
        candidates
            .into_iter()
            .map(|c| (c, self.log_line_mass(c, y)))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .map(|p| p.0)
            .unwrap_or(right)
    }

    fn a_min(&self) -> f64 {
        self.groups.iter().map(|g| g.0).fold(f64::INFINITY, f64::min)
    }

    /// ln ∫ |e^{−Φ(c + iτ; y)}| dτ by a coarse trapezoid rule.
    fn log_line_mass(&self, c: f64, y: f64) -> f64 {
        let d2 = self.dphi(c, y, 2).abs().max(1e-300);
        let h = 0.5 * (1.0 / d2.sqrt()).min(1.0).min(self.line_room(c));
        let f = |t: f64| -self.phi(c64(c, t), y).re;
        let peak0 = f(0.0);
        let mut terms = vec![peak0];
        for dir in [1.0, -1.0] {
            let mut peak = peak0;
            for j in 1..20_000 {
                let v = f(dir * j as f64 * h);
                peak = peak.max(v);
                terms.push(v);
                if v < peak - 30.0 {
                    break;
                }
            }
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln() + h.ln()
    }

    /// Distance from c to the nearest real point where ψ or 1/(s + n) is singular.
    fn line_room(&self, c: f64) -> f64 {
        if c > 0.0 {
            c
        } else {
            (c + self.a_min()).min(c.ceil() - c).min(c - c.floor()).max(1e-3)
        }
    }

    /// J_n(y) e^{−Re Φ(c; y)} for n = 0 … N−1, with Re Φ(c; y) and an error bound.
    fn column(&self, y: f64) -> Result<(Vec<f64>, f64, f64)> {
        let n = self.params.n;
        let c = self.residue_line_offset(y);
        if self.log_line_mass(c, y) < LOG_NEGLIGIBLE_MASS {
            // Every J_n underflows: the points far right of the spectrum.
            return Ok((vec![0.0; n], 0.0, 0.0));
        }
        let phi_c = self.phi(c64(c, 0.0), y).re;
        let d2 = self.dphi(c, y, 2).abs();
        let d3 = self.dphi(c, y, 3).abs();
        let width = (1.0 / d2.sqrt()).min((6.0 / d3).cbrt());
        let h0 = (width / 3.0).min(self.line_room(c) / 3.0).min(0.5);
        let log_env = |s: C64| -self.phi(s, y);
        let tol = self.spec.rel_tol.max(1e-14);
        let (vals, err) = refine_line(c, h0, &log_env, -phi_c, 0.0, tol, |rule| {
            let mut out = vec![C64::new(0.0, 0.0); n];
            for (s, w) in rule.s.iter().zip(&rule.w) {
                for (k, o) in out.iter_mut().enumerate() {
                    *o += w / (s + k as f64);
                }
            }
            out
        })?;
        Ok((vals.iter().map(|v| v.re).collect(), phi_c, err))
    }

    /// Log-magnitudes ln|R_n(x)| of the residue coefficients; R_n carries the sign (−1)^n.
    fn row(&self, x: f64) -> Vec<f64> {
        self.res_const.iter().enumerate().map(|(k, c)| c - x * k as f64).collect()
    }

    fn combine(&self, row: &[f64], col: &(Vec<f64>, f64, f64)) -> Result<(f64, f64)> {
        self.combine_parts(row, col).map(|v| (v.0, v.1))
    }

    /// Value, error and Σ|terms| of the residue sum.
    fn combine_parts(&self, row: &[f64], col: &(Vec<f64>, f64, f64)) -> Result<(f64, f64, f64)> {
        let (j, phi_c, qerr) = col;
        let mut sum = 0.0;
        let mut abs = 0.0;
        let mut coef_max: f64 = 0.0;
        for (k, (r, jv)) in row.iter().zip(j).enumerate() {
            let coef = (r - phi_c).exp();
            let term = if k % 2 == 0 { coef * jv } else { -coef * jv };
            sum += term;
            abs += term.abs();
            coef_max = coef_max.max(coef);
        }
        if !sum.is_finite() {
            return Err(Error::Numerical(format!("finite-N kernel overflow (|terms| = {abs:e})")));
        }
        let err = qerr * coef_max * row.len() as f64 + 4.0 * f64::EPSILON * abs;
        Ok((sum, err, abs))
    }

    /// Φ″(t) at complex t.
    fn dphi2_complex(&self, t: C64) -> C64 {
        let mut v = specfun::trigamma_unchecked(t);
        for (a, m) in &self.groups {
            v -= specfun::trigamma_unchecked(t + a) * *m;
        }
        v
    }

    fn is_square(&self) -> bool {
        self.groups.len() == 1 && self.groups[0].0 == self.params.n as f64
    }

    /// Residue value, or the steepest-descent value when the residue sum
    /// cancels by more than [`RESIDUE_CANCELLATION_LIMIT`] and the factors are square.
    fn residue_or_fallback(&self, x: f64, row: &[f64], y: f64, col: &(Vec<f64>, f64, f64)) -> Result<(f64, f64)> {
        let (v, e, abs) = self.combine_parts(row, col)?;
        // Terms beyond RESIDUE_MAGNITUDE_LIMIT mean that any moderate kernel value has lost
        // most of its digits even when the computed sum is itself garbage of similar size.
        if self.is_square() && (abs > RESIDUE_CANCELLATION_LIMIT * v.abs() || abs > RESIDUE_MAGNITUDE_LIMIT) {
            return self.steepest_descent(x, y);
        }
        Ok((v, e))
    }

    /// K̃(x, y) on the steepest-descent contours (square factors).
    ///
    /// The t-curve is N/(M+1)·{q_M(φ)}, closed by a wall at −N + 1/2, and
    /// |e^{Φ(t; x̄)}| (x̄ = (x+y)/2) peaks on it at t₊ = N/(M+1)·q_M(φ*). When
    /// φ* > 0 the s-line Re s = Re t₊ crosses the curve at t₊ and its mirror
    /// image t₋; moving the line there collects the pole at s = t on the arc
    /// to its right, which adds (e^{(x−y)t₊} − e^{(x−y)t₋})/(2πi(x−y)) to the
    /// crossed double integral; near the crossings the line detours around t
    /// (see [`notched_line`]). At the edge itself the line is placed to the
    /// right of the curve instead.
    pub fn steepest_descent(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !self.is_square() {
            return Err(Error::invalid("nu", "the steepest-descent contours need square factors"));
        }
        let m = self.params.m;
        let nf = self.params.n as f64;
        let mp = m as f64 + 1.0;
        let scale = nf / mp;
        let phi_end = contours::h_m_inverse(-mp + mp / (2.0 * nf), m);
        let xbar = 0.5 * (x + y);
        let height = |phi: f64| self.phi(contours::q_m(phi, m) * scale, xbar).re;
        const SAMPLES: usize = 800;
        let mut best = (0usize, f64::NEG_INFINITY);
        for k in 0..=SAMPLES {
            let v = height(phi_end * k as f64 / SAMPLES as f64);
            if v > best.1 {
                best = (k, v);
            }
        }
        let step = phi_end / SAMPLES as f64;
        let (mut lo, mut hi) = (((best.0 as f64) - 1.0).max(0.0) * step, ((best.0 as f64) + 1.0).min(SAMPLES as f64) * step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if height(a) > height(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let phi_star = 0.5 * (lo + hi);
        let f = |s: C64, t: C64| (self.phi(t, x) - self.phi(s, y)).exp() / (s - t);
        let t_edge = nf / m as f64;
        // Width of the cubic saddle region at the edge.
        let width = (6.0 / self.dphi(t_edge, xbar, 3).abs().max(1e-300)).cbrt();
        let tp = contours::q_m(phi_star, m) * scale;
        if phi_star < 1e-6 || tp.im < 0.05 * width {
            // At or beyond the edge the line is kept half a width to the right of the curve.
            let path = contours::q_m_closed_path(m, phi_end, 0.0, scale, 400);
            let c = self.line_offset(y).max(t_edge + 0.5 * width);
            let r = contours::integrate_double(f, &ComplexPath::vertical_line(c), &path, &self.spec)?.into_result()?;
            return real_part(r.value / TWO_PI_I_SQ, r.err / (4.0 * PI * PI));
        }
        let path = contours::q_m_closed_path(m, phi_end, phi_star, scale, 400);
        let c = tp.re;
        let notch = (0.5 / self.dphi2_complex(tp).norm().sqrt()).min(0.5 * width);
        let inner_ok = std::sync::atomic::AtomicBool::new(true);
        let r = contours::integrate_with_error_par(
            |t| {
                let line = notched_line(c, t, notch);
                let r = contours::integrate(|s| f(s, t), &line, &self.spec);
                if !r.converged {
                    inner_ok.store(false, std::sync::atomic::Ordering::Relaxed);
                }
                (r.value, r.err)
            },
            &path,
            &self.spec,
        );
        if !inner_ok.load(std::sync::atomic::Ordering::Relaxed) {
            return Err(Error::NoConvergence { value_re: r.value.re, value_im: r.value.im, err: r.err });
        }
        let r = r.into_result()?;
        let (v, e) = real_part(r.value / TWO_PI_I_SQ, r.err / (4.0 * PI * PI))?;
        let d = x - y;
        let arc = if (d * tp.norm()).abs() < 1e-12 {
            tp.im / PI
        } else {
            let z = ((tp * d).exp() - (tp.conj() * d).exp()) / c64(0.0, 2.0 * PI * d);
            z.re
        };
        Ok((v + arc, e))
    }

    /// K̃(x, y) with an absolute error estimate.
    pub fn eval_with_error(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        match self.method {
            FiniteNMethod::ResidueSeries => {
                let col = self.column(y)?;
                self.residue_or_fallback(x, &self.row(x), y, &col)
            }
            FiniteNMethod::DoubleContour => self.double_contour(x, y, None),
            FiniteNMethod::SteepestDescent => self.steepest_descent(x, y),
        }
    }

    /// K̃(x, y).
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.eval_with_error(x, y).map(|v| v.0)
    }

    /// The double integral over the rectangle around 0, …, −N+1 (clearance 1/4)
    /// and the line Re s = c (default 3/4).
    pub fn double_contour(&self, x: f64, y: f64, c: Option<f64>) -> Result<(f64, f64)> {
        let c = c.unwrap_or(0.75);
        let t_path = contours::sigma_encircling(self.params.n, 0.25)?;
        let s_path = ComplexPath::vertical_line(c);
        let f = |s: C64, t: C64| {
            let e = self.phi(s, y) * -1.0 + t * x + ln_gamma(t) - self.groups.iter().map(|(a, m)| ln_gamma(t + a) * *m).sum::<C64>();
            e.exp() / (s - t)
        };
        let r = contours::integrate_double(f, &s_path, &t_path, &self.spec)?.into_result()?;
        real_part(r.value / TWO_PI_I_SQ, r.err / (4.0 * PI * PI))
    }

    /// Matrix [K̃(x_i, y_j)] and the largest entry error, using the rank-N factorisation.
    pub fn matrix(&self, xs: &[f64], ys: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let mut out = DMatrix::zeros(xs.len(), ys.len());
        let mut err: f64 = 0.0;
        match self.method {
            FiniteNMethod::ResidueSeries => {
                let rows: Vec<Vec<f64>> = xs.iter().map(|&x| self.row(x)).collect();
                for (j, &y) in ys.iter().enumerate() {
                    let col = self.column(y)?;
                    for (i, row) in rows.iter().enumerate() {
                        let (v, e) = self.residue_or_fallback(xs[i], row, y, &col)?;
                        out[(i, j)] = v;
                        err = err.max(e);
                    }
                }
            }
            FiniteNMethod::DoubleContour | FiniteNMethod::SteepestDescent => {
                for (i, &x) in xs.iter().enumerate() {
                    for (j, &y) in ys.iter().enumerate() {
                        let (v, e) = self.eval_with_error(x, y)?;
                        out[(i, j)] = v;
                        err = err.max(e);
                    }
                }
            }
        }
        Ok((out, err))
    }
}

/// The upward line Re s = c, with a triangular detour of depth `d` around
/// the height of t when t lies within `d` of it. The detour points away from
/// t, so the pole at s = t stays on the same side of the line and the integral
/// is unchanged, while the integrand stays bounded by 1/d.
fn notched_line(c: f64, t: C64, d: f64) -> ComplexPath {
    use contours::{DecayCertificate, Segment};
    if (t.re - c).abs() >= d {
        return ComplexPath::vertical_line(c);
    }
    let side = if t.re < c { 1.0 } else { -1.0 };
    let lo = c64(c, t.im - d);
    let hi = c64(c, t.im + d);
    let apex = c64(c + side * d, t.im);
    let up = c64(0.0, 1.0);
    let axis = c64(c, 0.0);
    let ray_down = |from: C64| Segment::ray(from, -up).with_decay(DecayCertificate::SuperExponential).reversed();
    let ray_up = |from: C64| Segment::ray(from, up).with_decay(DecayCertificate::SuperExponential);
    // Rays start on the real axis whenever possible, so that their tail
    // truncation does not stop in the valley between conjugate saddles.
    let segs = if lo.im > 0.0 {
        vec![ray_down(axis), Segment::line(axis, lo), Segment::line(lo, apex), Segment::line(apex, hi), ray_up(hi)]
    } else if hi.im < 0.0 {
        vec![ray_down(lo), Segment::line(lo, apex), Segment::line(apex, hi), Segment::line(hi, axis), ray_up(axis)]
    } else {
        vec![ray_down(lo), Segment::line(lo, apex), Segment::line(apex, hi), ray_up(hi)]
    };
    ComplexPath::new(segs)
}

/// Returns the real part after checking |Im| ≤ 10 × the error estimate
/// (plus a rounding floor).
fn real_part(v: C64, err: f64) -> Result<(f64, f64)> {
    let floor = 1e-13 * v.norm() + 1e-300;
    if v.im.abs() > 10.0 * err + floor {
        return Err(Error::Numerical(format!(
            "kernel has imaginary part {:e} above ten times its error estimate {:e}",
            v.im, err
        )));
    }
    Ok((v.re, err))
}

/// K̃_N(x, y) for the product described by `p`.
///
/// `c` is the abscissa of the s-line; `None` picks the saddle of the
/// s-integrand for the residue form and 3/4 for the double contour. With
/// the residue form any c > 0 gives the same value.
pub fn finite_n_kernel(p: &ProductEnsembleParams, x: f64, y: f64, c: Option<f64>, spec: &QuadSpec) -> Result<f64> {
    let k = FiniteNKernel::new(p.clone(), FiniteNMethod::ResidueSeries, *spec);
    match c {
        None => k.eval(x, y),
        Some(c) => {
            if !(c > 0.0) {
                return Err(Error::invalid("c", format!("the s-line must lie right of the poles, got {c}")));
            }
            k.residue_with_offset(x, y, c).map(|v| v.0)
        }
    }
}

impl FiniteNKernel {
    /// Residue form with a caller-chosen J_n line Re s = c > −N − min ν.
    pub fn residue_with_offset(&self, x: f64, y: f64, c: f64) -> Result<(f64, f64)> {
        let n = self.params.n;
        let phi_c = self.phi(c64(c, 0.0), y).re;
        let d2 = self.dphi(c, y, 2).abs().max(1e-300);
        if c <= -self.a_min() {
            return Err(Error::invalid("c", "the line must lie right of −N − min ν"));
        }
        let h0 = (0.3 / d2.sqrt()).min(self.line_room(c) / 3.0).min(0.5);
        let log_env = |s: C64| -self.phi(s, y);
        let (vals, err) = refine_line(c, h0, &log_env, -phi_c, 0.0, self.spec.rel_tol.max(1e-14), |rule| {
            let mut out = vec![C64::new(0.0, 0.0); n];
            for (s, w) in rule.s.iter().zip(&rule.w) {
                for (k, o) in out.iter_mut().enumerate() {
                    *o += w / (s + k as f64);
                }
            }
            out
        })?;
        let col = (vals.iter().map(|v| v.re).collect(), phi_c, err);
        self.combine(&self.row(x), &col)
    }
}

// ---------------------------------------------------------------------------
// Critical kernel: double contour integral
// ---------------------------------------------------------------------------

/// Contour geometry (Re s, crossing of the t-hairpin, hairpin half-height)
/// for K_crit. For γ ∈ [1/4, 4] the s-line is Re s = 1 and the hairpin
/// crosses at 1/2. Outside that range both are moved next to the saddle t₀
/// (ψ′(t₀) = γ), a distance d = min(t₀, 1/k)/2 on either side with
/// k = 2^{−1/3}γ^{2/3}, which avoids the e^{O(γ)} or e^{O(1/γ)} cancellation
/// that the fixed contours suffer.
fn crit_geometry(gamma: f64) -> Result<(f64, f64, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid("gamma", format!("must be positive and finite, got {gamma}")));
    }
    if (0.25..=4.0).contains(&gamma) {
        return Ok((1.0, 0.5, 0.25));
    }
    let t0 = specfun::solve_t0(gamma)?;
    let k = airy_scale(gamma);
    let d = 0.5 * t0.min(1.0 / k);
    let cross = t0 - d;
    Ok((t0 + d, cross, (0.5 * cross).min(0.25)))
}

/// k(γ) = 2^{−1/3} γ^{2/3}.
pub fn airy_scale(gamma: f64) -> f64 {
    2f64.powf(-1.0 / 3.0) * gamma.powf(2.0 / 3.0)
}

/// K_crit(x, y; γ) = ∫ds/2πi ∮_{Σ_{−∞}} dt/2πi · 1/(s−t) · Γ(t)/Γ(s) · e^{γs²/2 − ys}/e^{γt²/2 − xt},
/// by nested adaptive quadrature.
pub fn crit_kernel_integral(x: f64, y: f64, gamma: f64, spec: &QuadSpec) -> Result<f64> {
    crit_kernel_integral_with_error(x, y, gamma, spec).map(|v| v.0)
}

/// [`crit_kernel_integral`] with its absolute error estimate.
pub fn crit_kernel_integral_with_error(x: f64, y: f64, gamma: f64, spec: &QuadSpec) -> Result<(f64, f64)> {
    let (sigma, cross, eps) = crit_geometry(gamma)?;
    let s_path = ComplexPath::vertical_line(sigma);
    let t_path = contours::hairpin(cross, eps);
    let g2 = 0.5 * gamma;
    let f = |s: C64, t: C64| (ln_gamma(t) - ln_gamma(s) + (s * s - t * t) * g2 - s * y + t * x).exp() / (s - t);
    let r = contours::integrate_double(f, &s_path, &t_path, spec)?.into_result()?;
    real_part(r.value / TWO_PI_I_SQ, r.err / (4.0 * PI * PI))
}

/// K̂_crit(ξ, η; γ): the critical kernel written around the saddle t₀,
/// ∫ds/2πi ∮dt/2πi · 1/(s−t) · Γ(t+t₀)/Γ(s+t₀) · e^{γs²/2 − ηs}/e^{γt²/2 − ξt},
/// with the hairpin enclosing −t₀, −t₀−1, … .
pub fn crit_kernel_hat(x: f64, y: f64, gamma: f64) -> Result<f64> {
    crit_kernel_hat_with_error(x, y, gamma, &QuadSpec::default()).map(|v| v.0)
}

/// [`crit_kernel_hat`] with explicit quadrature settings and error estimate.
pub fn crit_kernel_hat_with_error(x: f64, y: f64, gamma: f64, spec: &QuadSpec) -> Result<(f64, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid("gamma", format!("must be positive and finite, got {gamma}")));
    }
    let t0 = specfun::solve_t0(gamma)?;
    let a = 0.5f64.min(1.0 / gamma.sqrt());
    let b = 0.5 * t0.min(a);
    let eps = 0.25f64.min(0.5 * (t0 - b));
    let s_path = ComplexPath::vertical_line(a);
    let t_path = contours::hairpin(-b, eps);
    let g2 = 0.5 * gamma;
    let f = |s: C64, t: C64| (ln_gamma(t + t0) - ln_gamma(s + t0) + (s * s - t * t) * g2 - s * y + t * x).exp() / (s - t);
    let r = contours::integrate_double(f, &s_path, &t_path, spec)?.into_result()?;
    real_part(r.value / TWO_PI_I_SQ, r.err / (4.0 * PI * PI))
}

// ---------------------------------------------------------------------------
// Critical kernel: integrable series form
// ---------------------------------------------------------------------------

/// Which pairing to use in the series Σ_n of the integrable form of K_crit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesReading {
    /// (y − x) K = γ f_{−1}(x) g_{−1}(y) − Σ_{n≥0} f_n(x) g_n(y), as obtained
    /// from integration by parts and ψ(s) − ψ(t) = Σ_n (s−t)/((n+s)(n+t)).
    Derived,
    /// (y − x) K = γ f_{−1}(x) g_{−1}(y) + Σ_{n≥0} f_n(x) f_n(y).
    AsPrinted,
}

/// Residues a_m(x) = (−1)^m e^{−γm²/2 − mx}/m! of Γ(t) e^{−γt²/2 + xt} at
/// t = −m, kept while they exceed 1e-20 of the largest one.
fn residue_coeffs(x: f64, gamma: f64) -> Vec<f64> {
    let mut logs = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    let mut lnfact = 0.0;
    for m in 0..100_000usize {
        let mf = m as f64;
        if m > 0 {
            lnfact += mf.ln();
        }
        let l = -0.5 * gamma * mf * mf - mf * x - lnfact;
        peak = peak.max(l);
        logs.push(l);
        if l < peak - 46.0 && m > 2 {
            break;
        }
    }
    logs.iter().enumerate().map(|(m, l)| if m % 2 == 0 { l.exp() } else { -l.exp() }).collect()
}

/// f_k from the residues: simple poles for m ≠ k and the double pole at −k,
/// whose residue is (−1)^k/k!·[g′(−k) + ψ(k+1) g(−k)] with g(t) = e^{−γt²/2 + xt}.
fn f_from_coeffs(k: i64, a: &[f64], x: f64, gamma: f64) -> f64 {
    if k < 0 {
        return a.iter().sum();
    }
    let kf = k as f64;
    let mut v = 0.0;
    for (m, am) in a.iter().enumerate() {
        if m as i64 == k {
            v += am * (gamma * kf + x + specfun::digamma_real(kf + 1.0));
        } else {
            v += am / (kf - m as f64);
        }
    }
    v
}

fn check_k(k: i64, gamma: f64) -> Result<()> {
    if k < -1 {
        return Err(Error::invalid("k", format!("must be at least -1, got {k}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid("gamma", format!("must be positive and finite, got {gamma}")));
    }
    Ok(())
}

/// f_k(x) = ∮_{Σ_{−∞}} Γ(t)/(t+k) e^{−γt²/2 + xt} dt/2πi (k ≥ 0), and without
/// the 1/(t+k) factor for k = −1, summed over residues.
pub fn f_func(k: i64, x: f64, gamma: f64) -> Result<f64> {
    check_k(k, gamma)?;
    Ok(f_from_coeffs(k, &residue_coeffs(x, gamma), x, gamma))
}

/// g_k(y) = ∫_{Re s = 1} e^{γs²/2 − ys}/((s+k)Γ(s)) ds/2πi (k ≥ 0), and without
/// the 1/(s+k) factor for k = −1.
pub fn g_func(k: i64, y: f64, gamma: f64) -> Result<f64> {
    check_k(k, gamma)?;
    g_func_line(k, y, gamma, g_line_offset(y, gamma)?)
}

/// Line offset for the g-integrals: the right-hand real saddle of
/// e^{γs²/2 − ys}/Γ(s), the largest root of γs − ψ(s) = y, or the minimum t₀
/// of γs − ψ(s) when there is no real saddle.
pub fn g_line_offset(y: f64, gamma: f64) -> Result<f64> {
    let t0 = specfun::solve_t0(gamma)?;
    let f = |s: f64| gamma * s - specfun::digamma_real(s) - y;
    if f(t0) >= 0.0 {
        return Ok(t0);
    }
    let (mut lo, mut hi) = (t0, 2.0 * t0 + 1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Step for a line rule through a real saddle with second derivative `curv`.
fn saddle_step(curv: f64) -> f64 {
    (0.3 / curv.abs().max(1e-12).sqrt()).min(0.25)
}

/// [`g_func`] on the line Re s = c, c > 0.
pub fn g_func_line(k: i64, y: f64, gamma: f64, c: f64) -> Result<f64> {
    check_k(k, gamma)?;
    if !(c > 0.0) {
        return Err(Error::invalid("c", format!("must be positive, got {c}")));
    }
    let log_env = |s: C64| s * s * (0.5 * gamma) - s * y - ln_gamma(s);
    let log_ref = log_env(c64(c, 0.0)).re;
    let kf = k as f64;
    let h0 = saddle_step(gamma - specfun::trigamma_real(c));
    let (v, _) = refine_line(c, h0, &log_env, log_ref, 0.0, 1e-14, |rule| {
        let mut acc = C64::new(0.0, 0.0);
        for (s, w) in rule.s.iter().zip(&rule.w) {
            acc += if k < 0 { *w } else { w / (s + kf) };
        }
        vec![acc]
    })?;
    Ok(v[0].re * log_ref.exp())
}

/// The bracket B(x, y) of the integrable form, so that K_crit = B/(y − x).
///
/// The series over n is summed exactly up to n₀ and the rest in closed form:
/// Σ_{n>n₀} 1/((n−m)(n+s)) = (ψ(n₀+1+s) − ψ(n₀+1−m))/(s+m). With
/// `include_leading = false` the γ f_{−1} g_{−1} term is left out.
pub fn crit_series_bracket(x: f64, y: f64, gamma: f64, reading: SeriesReading, include_leading: bool) -> Result<f64> {
    check_k(-1, gamma)?;
    let a = residue_coeffs(x, gamma);
    let n0 = a.len() + 24;
    let f: Vec<f64> = (-1..=n0 as i64).map(|k| f_from_coeffs(k, &a, x, gamma)).collect();
    let f_m1 = f[0];
    match reading {
        SeriesReading::Derived => {
            let c = g_line_offset(y, gamma)?;
            let h0 = saddle_step(gamma - specfun::trigamma_real(c));
            let log_env = |s: C64| s * s * (0.5 * gamma) - s * y - ln_gamma(s);
            let log_ref = log_env(c64(c, 0.0)).re;
            let n0f = n0 as f64;
            let psi_m: Vec<f64> = (0..a.len()).map(|m| specfun::digamma_real(n0f + 1.0 - m as f64)).collect();
            // Outputs: g_{-1}, g_0 … g_{n0}, then Σ_m a_m T_m.
            let (v, _) = refine_line(c, h0, &log_env, log_ref, 0.0, 1e-14, |rule| {
                let mut out = vec![C64::new(0.0, 0.0); n0 + 3];
                for (s, w) in rule.s.iter().zip(&rule.w) {
                    out[0] += w;
                    for k in 0..=n0 {
                        out[k + 1] += w / (s + k as f64);
                    }
                    let psi_s = specfun::digamma_unchecked(s + n0f + 1.0);
                    let mut tail = C64::new(0.0, 0.0);
                    for (m, am) in a.iter().enumerate() {
                        tail += (psi_s - psi_m[m]) / (s + m as f64) * *am;
                    }
                    out[n0 + 2] += w * tail;
                }
                out
            })?;
            let scale = log_ref.exp();
            let g_m1 = v[0].re * scale;
            let mut sum = v[n0 + 2].re * scale;
            for k in 0..=n0 {
                sum += f[k + 1] * v[k + 1].re * scale;
            }
            let lead = if include_leading { gamma * f_m1 * g_m1 } else { 0.0 };
            Ok(lead - sum)
        }
        SeriesReading::AsPrinted => {
            let b = residue_coeffs(y, gamma);
            let fy: Vec<f64> = (-1..=n0 as i64).map(|k| f_from_coeffs(k, &b, y, gamma)).collect();
            let mut sum = 0.0;
            for k in 0..=n0 {
                sum += f[k + 1] * fy[k + 1];
            }
            // Σ_{n>n₀} 1/((n−m)(n−m′)) in closed form.
            let n0f = n0 as f64;
            for (m, am) in a.iter().enumerate() {
                for (mp, bm) in b.iter().enumerate() {
                    let t = if m == mp {
                        specfun::trigamma_real(n0f + 1.0 - m as f64)
                    } else {
                        (specfun::digamma_real(n0f + 1.0 - mp as f64) - specfun::digamma_real(n0f + 1.0 - m as f64)) / (m as f64 - mp as f64)
                    };
                    sum += am * bm * t;
                }
            }
            let lead = if include_leading { gamma * f_m1 * g_func(-1, y, gamma)? } else { 0.0 };
            Ok(lead + sum)
        }
    }
}

/// K_crit(x, y; γ) from the integrable series (derived pairing). Within
/// [`SERIES_DIAG_THRESHOLD`] of the diagonal the double integral is used.
pub fn crit_kernel_series(x: f64, y: f64, gamma: f64) -> Result<f64> {
    crit_kernel_series_with(x, y, gamma, SeriesReading::Derived)
}

/// [`crit_kernel_series`] with an explicit reading of the series.
pub fn crit_kernel_series_with(x: f64, y: f64, gamma: f64, reading: SeriesReading) -> Result<f64> {
    if (y - x).abs() < SERIES_DIAG_THRESHOLD {
        return crit_kernel_integral(x, y, gamma, &QuadSpec::default());
    }
    Ok(crit_series_bracket(x, y, gamma, reading, true)? / (y - x))
}

// ---------------------------------------------------------------------------
// Critical kernel: reflection form
// ---------------------------------------------------------------------------

/// K_crit through Euler's reflection formula:
/// K_crit(x, y; γ) = ½ ∫_{−1}^{1} H(x + iπw) G(y + iπw) dw with
/// H(z) = Σ_{n≥0} e^{−zn − γn²/2}/n! and
/// G(z) = ∫_{Re s = σ} Γ(1−s) e^{γs²/2 − zs} ds/2πi, σ < 1.
///
/// Writing Γ(t)/Γ(s) = Γ(1−s) sin(πs)/(Γ(1−t) sin(πt)) and
/// sin πs/sin πt = e^{iπt} sin π(s−t)/sin πt + e^{−iπ(s−t)} removes the
/// 1/(s−t) singularity, and sin π(s−t)/(π(s−t)) = ½∫e^{iπw(s−t)}dw separates
/// the variables. Every matrix of kernel values then costs one sum and one
/// line integral per point, which is what the Fredholm determinants use.
/// The w-integrand grows like e^{π²/(8γ)}, so the form loses accuracy for
/// γ well below 0.2; [`crit_kernel`] then switches to the double integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CritReflection {
    pub gamma: f64,
    /// Relative tolerance for the line integrals.
    pub tol: f64,
}

struct HTerms {
    log_scale: f64,
    n_lo: usize,
    mags: Vec<f64>,
}

impl CritReflection {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid("gamma", format!("must be positive and finite, got {gamma}")));
        }
        Ok(CritReflection { gamma, tol: 1e-13 })
    }

    /// Terms e^{−(n − m₀)x − γn²/2}/n! of H, relative to the largest.
    fn h_terms(&self, x: f64, m0: f64) -> HTerms {
        let g = self.gamma;
        let l = |n: usize, lf: f64| {
            let nf = n as f64;
            -(nf - m0) * x - 0.5 * g * nf * nf - lf
        };
        let mut logs = Vec::new();
        let mut lnfact = 0.0;
        let mut peak = f64::NEG_INFINITY;
        for n in 0..1_000_000usize {
            if n > 0 {
                lnfact += (n as f64).ln();
            }
            let v = l(n, lnfact);
            peak = peak.max(v);
            logs.push(v);
            if v < peak - 46.0 && n > 2 {
                break;
            }
        }
        let n_lo = logs.iter().position(|v| *v >= peak - 46.0).unwrap_or(0);
        let mags = logs[n_lo..].iter().map(|v| (v - peak).exp()).collect();
        HTerms { log_scale: peak, n_lo, mags }
    }

    fn h_values(&self, h: &HTerms, w_nodes: &[f64]) -> Vec<C64> {
        w_nodes
            .iter()
            .map(|w| {
                let step = C64::from_polar(1.0, -PI * w);
                let mut ph = C64::from_polar(1.0, -PI * w * h.n_lo as f64);
                let mut acc = C64::new(0.0, 0.0);
                for m in &h.mags {
                    acc += ph * *m;
                    ph *= step;
                }
                acc
            })
            .collect()
    }

    /// Real saddle σ < 1 of log Γ(1−s) + γs²/2 − ys, where
    /// −ψ(1−s) + γs − y increases from −∞ to +∞.
    fn g_sigma(&self, y: f64) -> f64 {
        let f = |s: f64| -specfun::digamma_real(1.0 - s) + self.gamma * s - y;
        let mut lo = -1.0;
        while f(lo) > 0.0 {
            lo = 2.0 * lo - 1.0;
        }
        let mut hi = 0.5;
        while f(hi) < 0.0 {
            hi = 0.5 * (hi + 1.0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + lo.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Largest |Im s| that matters on the G-line, given the worst-case growth e^{π|Im s|}.
    fn g_umax(&self) -> f64 {
        let g = self.gamma;
        (PI / 2.0 + (PI * PI / 4.0 + 2.0 * 46.0 * g).sqrt()) / g
    }

    /// G(y + iπw_l) e^{−ym₀} relative to e^{log_scale}, for every w-node.
    fn g_values(&self, y: f64, m0: f64, sigma: f64, w_nodes: &[f64]) -> Result<(Vec<C64>, f64, f64)> {
        let g = self.gamma;
        let log_env = |s: C64| ln_gamma(-s + 1.0) + s * s * (0.5 * g) - s * y;
        let log_ref = log_env(c64(sigma, 0.0)).re;
        let width = 1.0 / (specfun::trigamma_real(1.0 - sigma) + g).sqrt();
        let h0 = (width / 3.0).min((1.0 - sigma) / 3.0).min(0.25);
        let (v, err) = refine_line(sigma, h0, &log_env, log_ref, PI, self.tol, |rule| {
            w_nodes
                .iter()
                .map(|w| {
                    let mut acc = C64::new(0.0, 0.0);
                    for (s, wt) in rule.s.iter().zip(&rule.w) {
                        acc += wt * C64::from_polar((PI * w * s.im).exp(), -PI * w * s.re);
                    }
                    acc
                })
                .collect()
        })?;
        Ok((v, log_ref - y * m0, err))
    }

    /// [e^{m₀(x_i − y_j)} K_crit(x_i, y_j)] with the largest entry error.
    ///
    /// m₀ only balances the magnitudes of H and G: with m₀ near the index of
    /// the dominant residue both factors stay in floating-point range even
    /// deep in the bulk.
    pub fn conjugated_matrix(&self, xs: &[f64], ys: &[f64], m0: f64) -> Result<(DMatrix<f64>, f64)> {
        let hs: Vec<HTerms> = xs.iter().map(|&x| self.h_terms(x, m0)).collect();
        let sigmas: Vec<f64> = ys.iter().map(|&y| self.g_sigma(y)).collect();
        let n_hi = hs.iter().map(|h| h.n_lo + h.mags.len()).max().unwrap_or(0) as f64;
        let s_max = sigmas.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        let band = PI * (n_hi + s_max) + PI * self.g_umax();
        let n_w = ((0.6 * band + 32.0).ceil() as usize).clamp(32, 4096);
        let (w_nodes, w_weights) = contours::gauss_legendre(n_w);
        let hv: Vec<Vec<C64>> = hs.iter().map(|h| self.h_values(h, &w_nodes)).collect();
        let mut out = DMatrix::zeros(xs.len(), ys.len());
        let mut err: f64 = 0.0;
        for (j, &y) in ys.iter().enumerate() {
            let (gv, g_scale, g_err) = self.g_values(y, m0, sigmas[j], &w_nodes)?;
            for (i, h) in hs.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                let mut abs = 0.0;
                let mut habs = 0.0;
                for l in 0..n_w {
                    let p = hv[i][l] * gv[l] * w_weights[l];
                    acc += p;
                    abs += p.norm();
                    habs += hv[i][l].norm() * w_weights[l];
                }
                let scale = (h.log_scale + g_scale).exp();
                let v = 0.5 * acc.re * scale;
                if !v.is_finite() {
                    return Err(Error::Numerical(format!("reflection form overflow at ({}, {y})", xs[i])));
                }
                out[(i, j)] = v;
                err = err.max(0.5 * scale * (abs * 1e2 * f64::EPSILON + habs * g_err));
            }
        }
        Ok((out, err))
    }

    /// K_crit(x, y; γ) with an error estimate.
    pub fn eval_with_error(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let (m, e) = self.conjugated_matrix(&[x], &[y], 0.0)?;
        Ok((m[(0, 0)], e))
    }

    /// K_crit(x, y; γ).
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.eval_with_error(x, y).map(|v| v.0)
    }
}

/// Below this γ the reflection form loses digits and the double integral is used.
pub const REFLECTION_MIN_GAMMA: f64 = 0.15;

/// K_crit(x, y; γ) by the cheapest accurate method: the reflection form for
/// γ ≥ [`REFLECTION_MIN_GAMMA`], the double contour integral below.
pub fn crit_kernel(x: f64, y: f64, gamma: f64) -> Result<f64> {
    if gamma >= REFLECTION_MIN_GAMMA {
        CritReflection::new(gamma)?.eval(x, y)
    } else {
        crit_kernel_integral(x, y, gamma, &QuadSpec::default())
    }
}

// ---------------------------------------------------------------------------
// Bulk critical, Airy and sine kernels
// ---------------------------------------------------------------------------

fn check_gamma_prime(gp: f64) -> Result<()> {
    if !(gp > 0.0) || !gp.is_finite() {
        return Err(Error::invalid("gamma_prime", format!("must be positive and finite, got {gp}")));
    }
    Ok(())
}

/// Bulk critical kernel
/// K(ξ, η; γ′) = (8πγ′)^{−1/2} ∫_{−1}^{1} e^{(πw − iη)²/(2γ′)} ϑ((πw − iξ)/(2π); iγ′/(2π)) dw.
///
/// Poisson summation turns ϑ into √(2π/γ′) Σ_m e^{−(π(w+2m) − iξ)²/(2γ′)}; the
/// exponent difference is then linear in w and every term integrates in
/// closed form, which stays exact when γ′ is small and the direct
/// w-integrand oscillates with amplitude e^{π²/(2γ′)}.
pub fn bulk_crit_kernel(xi: f64, eta: f64, gamma_prime: f64) -> Result<f64> {
    check_gamma_prime(gamma_prime)?;
    let gp = gamma_prime;
    let delta = xi - eta;
    let sigma = xi + eta;
    let gauge = delta * sigma / (2.0 * gp);
    let mut acc = C64::new(0.0, 0.0);
    let term = |m: f64| -> C64 {
        let d = c64(-2.0 * PI * m, delta);
        let alpha = d * (PI / gp);
        let beta = d * c64(2.0 * PI * m, -sigma) / (2.0 * gp) - gauge;
        if alpha.norm() < 1e-12 {
            beta.exp() * 2.0 * (1.0 + alpha * alpha / 6.0)
        } else {
            ((beta + alpha).exp() - (beta - alpha).exp()) / alpha
        }
    };
    acc += term(0.0);
    for m in 1..10_000 {
        let mf = m as f64;
        let a = term(mf);
        let b = term(-mf);
        acc += a + b;
        if a.norm() + b.norm() < 1e-18 * acc.norm() && mf * mf * 4.0 * PI * PI > 2.0 * gp * 50.0 {
            break;
        }
    }
    let v = acc * gauge.exp() / (2.0 * gp);
    if v.im.abs() > 1e-9 * (1.0 + v.re.abs()) {
        return Err(Error::Numerical(format!("bulk kernel has imaginary part {:e}", v.im)));
    }
    Ok(v.re)
}

/// The bulk critical kernel by Gauss–Legendre quadrature in w of the theta
/// series itself. Accurate for γ′ ≳ 1; used to cross-check [`bulk_crit_kernel`].
pub fn bulk_crit_kernel_quadrature(xi: f64, eta: f64, gamma_prime: f64, nodes: usize) -> Result<f64> {
    check_gamma_prime(gamma_prime)?;
    let gp = gamma_prime;
    let (w, wt) = contours::gauss_legendre(nodes);
    let tau = c64(0.0, gp / (2.0 * PI));
    let prec = EvalPrecision { abs_tol: 1e-18, max_terms: 100_000 };
    let mut acc = C64::new(0.0, 0.0);
    for (wi, wti) in w.iter().zip(&wt) {
        let a = c64(PI * wi, -eta);
        let th = specfun::jacobi_theta(c64(PI * wi, -xi) / (2.0 * PI), tau, prec)?;
        acc += (a * a / (2.0 * gp)).exp() * th * *wti;
    }
    let v = acc / (8.0 * PI * gp).sqrt();
    Ok(v.re)
}

/// Sine kernel sin π(x−y)/(π(x−y)), equal to 1 on the diagonal.
pub fn sine_kernel(x: f64, y: f64) -> f64 {
    let d = PI * (x - y);
    if d.abs() < 1e-8 {
        1.0 - d * d / 6.0
    } else {
        d.sin() / d
    }
}

/// Airy kernel (Ai(x)Ai′(y) − Ai′(x)Ai(y))/(x − y), with Ai′(x)² − x Ai(x)²
/// on the diagonal and a Taylor expansion in (x − y) next to it.
pub fn airy_kernel(x: f64, y: f64) -> f64 {
    let d = x - y;
    if d.abs() < 1e-3 {
        let m = 0.5 * (x + y);
        let (a, ap) = specfun::airy_ai_pair(m);
        let diag = ap * ap - m * a * a;
        let h = 0.5 * d;
        return diag + h * h * (a * ap / 3.0 + 2.0 * m * diag / 3.0);
    }
    let (ax, apx) = specfun::airy_ai_pair(x);
    let (ay, apy) = specfun::airy_ai_pair(y);
    (ax * apy - apx * ay) / d
}

/// Airy kernel from Ai values already computed at the points.
fn airy_from_pairs(x: f64, y: f64, px: (f64, f64), py: (f64, f64)) -> f64 {
    let d = x - y;
    if d.abs() < 1e-3 {
        return airy_kernel(x, y);
    }
    (px.0 * py.1 - px.1 * py.0) / d
}

/// Airy kernel as the double integral over the wedges
/// ∫_{𝒞_<} ds/2πi ∫_{Σ_>} dt/2πi · 1/(s−t) · e^{s³/3 − ys}/e^{t³/3 − xt}.
pub fn airy_kernel_contour(x: f64, y: f64, spec: &QuadSpec) -> Result<(f64, f64)> {
    let (sigma, cee) = contours::airy_wedges(None)?;
    let f = |s: C64, t: C64| (s * s * s / 3.0 - s * y - t * t * t / 3.0 + t * x).exp() / (s - t);
    let r = contours::integrate_double(f, &cee, &sigma, spec)?.into_result()?;
    real_part(r.value / TWO_PI_I_SQ, r.err / (4.0 * PI * PI))
}

/// The Gaussian limit (1/√(2π)) e^{−η²/2} of the rescaled kernel in the weakly correlated regime.
pub fn gaussian_limit_kernel(_xi: f64, eta: f64) -> f64 {
    (-0.5 * eta * eta).exp() / (2.0 * PI).sqrt()
}

// ---------------------------------------------------------------------------
// Kernel handles
// ---------------------------------------------------------------------------

/// Kernel families that a [`KernelHandle`] can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// K̃_N(x, y) of log(Π*Π) in log-spectrum variables.
    FiniteN,
    /// (1/√(2π)) e^{−η²/2}.
    GaussianLimit,
    /// K_crit(x, y; γ).
    CritEdge,
    /// K̂_crit(x, y; γ).
    CritEdgeHat,
    /// The bulk critical kernel with parameter γ′.
    CritBulk,
    /// sin π(x−y)/(π(x−y)).
    Sine,
    /// The Airy kernel.
    Airy,
}

impl KernelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelFamily::FiniteN => "finite-n",
            KernelFamily::GaussianLimit => "gaussian-limit",
            KernelFamily::CritEdge => "crit-edge",
            KernelFamily::CritEdgeHat => "crit-edge-hat",
            KernelFamily::CritBulk => "crit-bulk",
            KernelFamily::Sine => "sine",
            KernelFamily::Airy => "airy",
        }
    }

    /// Parses the kebab-case name used on the command line.
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "finite-n" => KernelFamily::FiniteN,
            "gaussian-limit" => KernelFamily::GaussianLimit,
            "crit-edge" => KernelFamily::CritEdge,
            "crit-edge-hat" => KernelFamily::CritEdgeHat,
            "crit-bulk" => KernelFamily::CritBulk,
            "sine" => KernelFamily::Sine,
            "airy" => KernelFamily::Airy,
            other => return Err(Error::invalid("family", format!("unknown kernel family '{other}'"))),
        })
    }
}

/// How a [`KernelHandle`] evaluates its kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    /// Adaptive quadrature of the double contour integral.
    DoubleContour,
    /// Residue or integrable-series evaluation.
    ResidueSeries,
    /// An explicit formula.
    ClosedForm,
    /// The reflection form of K_crit ([`CritReflection`]).
    Reflection,
}

/// Parameters attached to a [`KernelHandle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelParams {
    Ensemble(ProductEnsembleParams),
    Gamma(f64),
    GammaPrime(f64),
    None,
}

/// A named kernel with its parameters and evaluation method. Immutable and
/// safe to share between threads.
#[derive(Debug, Clone)]
pub struct KernelHandle {
    family: KernelFamily,
    params: KernelParams,
    method: EvalMethod,
    spec: QuadSpec,
    finite: Option<FiniteNKernel>,
}

impl KernelHandle {
    /// Builds a handle after checking that family, parameters and method fit together.
    pub fn new(family: KernelFamily, params: KernelParams, method: EvalMethod) -> Result<Self> {
        use EvalMethod as E;
        use KernelFamily as F;
        let bad = |what: &str| Err(Error::invalid("kernel", format!("{} does not accept {what}", family.as_str())));
        match (&family, &params) {
            (F::FiniteN, KernelParams::Ensemble(_)) => {}
            (F::CritEdge | F::CritEdgeHat, KernelParams::Gamma(g)) | (F::CritBulk, KernelParams::GammaPrime(g)) => {
                if !(*g > 0.0) || !g.is_finite() {
                    return Err(Error::invalid("gamma", format!("must be positive and finite, got {g}")));
                }
            }
            (F::GaussianLimit | F::Sine | F::Airy, KernelParams::None) => {}
            _ => return bad("these parameters"),
        }
        let ok = match family {
            F::FiniteN => matches!(method, E::DoubleContour | E::ResidueSeries),
            F::CritEdge => matches!(method, E::DoubleContour | E::ResidueSeries | E::Reflection),
            F::CritEdgeHat => matches!(method, E::DoubleContour),
            F::CritBulk => matches!(method, E::ClosedForm | E::DoubleContour),
            F::GaussianLimit | F::Sine => matches!(method, E::ClosedForm),
            F::Airy => matches!(method, E::ClosedForm | E::DoubleContour),
        };
        if !ok {
            return bad(&format!("method {method:?}"));
        }
        let spec = QuadSpec::default();
        let finite = match (&family, &params) {
            (F::FiniteN, KernelParams::Ensemble(p)) => {
                let fm = if method == E::DoubleContour { FiniteNMethod::DoubleContour } else { FiniteNMethod::ResidueSeries };
                Some(FiniteNKernel::new(p.clone(), fm, spec))
            }
            _ => None,
        };
        Ok(KernelHandle { family, params, method, spec, finite })
    }

    /// Finite-N kernel evaluated by residues.
    pub fn finite_n(p: ProductEnsembleParams) -> Self {
        Self::new(KernelFamily::FiniteN, KernelParams::Ensemble(p), EvalMethod::ResidueSeries).expect("valid finite-N handle")
    }

    /// K_crit with the default method for γ.
    pub fn crit(gamma: f64) -> Result<Self> {
        let method = if gamma >= REFLECTION_MIN_GAMMA { EvalMethod::Reflection } else { EvalMethod::DoubleContour };
        Self::new(KernelFamily::CritEdge, KernelParams::Gamma(gamma), method)
    }

    pub fn crit_hat(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::CritEdgeHat, KernelParams::Gamma(gamma), EvalMethod::DoubleContour)
    }

    pub fn crit_bulk(gamma_prime: f64) -> Result<Self> {
        Self::new(KernelFamily::CritBulk, KernelParams::GammaPrime(gamma_prime), EvalMethod::ClosedForm)
    }

    pub fn sine() -> Self {
        Self::new(KernelFamily::Sine, KernelParams::None, EvalMethod::ClosedForm).expect("valid sine handle")
    }

    pub fn airy() -> Self {
        Self::new(KernelFamily::Airy, KernelParams::None, EvalMethod::ClosedForm).expect("valid Airy handle")
    }

    pub fn gaussian_limit() -> Self {
        Self::new(KernelFamily::GaussianLimit, KernelParams::None, EvalMethod::ClosedForm).expect("valid Gaussian handle")
    }

    /// Replaces the quadrature settings used by contour methods.
    pub fn with_spec(mut self, spec: QuadSpec) -> Self {
        self.spec = spec;
        if let Some(f) = self.finite.as_mut() {
            f.spec = spec;
        }
        self
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn method(&self) -> EvalMethod {
        self.method
    }

    fn gamma(&self) -> f64 {
        match self.params {
            KernelParams::Gamma(g) | KernelParams::GammaPrime(g) => g,
            _ => f64::NAN,
        }
    }

    /// Kernel value and absolute error estimate at (x, y).
    pub fn eval_with_error(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let exact = |v: f64| Ok((v, 4.0 * f64::EPSILON * v.abs()));
        match self.family {
            KernelFamily::FiniteN => {
                let k = self.finite.as_ref().expect("finite-N handle carries its kernel");
                k.eval_with_error(x, y)
            }
            KernelFamily::GaussianLimit => exact(gaussian_limit_kernel(x, y)),
            KernelFamily::Sine => exact(sine_kernel(x, y)),
            KernelFamily::Airy => match self.method {
                EvalMethod::DoubleContour => airy_kernel_contour(x, y, &self.spec),
                _ => Ok((airy_kernel(x, y), 1e-13)),
            },
            KernelFamily::CritBulk => match self.method {
                EvalMethod::DoubleContour => {
                    let a = bulk_crit_kernel_quadrature(x, y, self.gamma(), 200)?;
                    let b = bulk_crit_kernel_quadrature(x, y, self.gamma(), 400)?;
                    Ok((b, (a - b).abs()))
                }
                _ => exact(bulk_crit_kernel(x, y, self.gamma())?),
            },
            KernelFamily::CritEdgeHat => crit_kernel_hat_with_error(x, y, self.gamma(), &self.spec),
            KernelFamily::CritEdge => match self.method {
                EvalMethod::Reflection => CritReflection::new(self.gamma())?.eval_with_error(x, y),
                EvalMethod::ResidueSeries => {
                    let v = crit_kernel_series(x, y, self.gamma())?;
                    Ok((v, 1e-12 * (1.0 + v.abs()) / (y - x).abs().max(SERIES_DIAG_THRESHOLD)))
                }
                _ => crit_kernel_integral_with_error(x, y, self.gamma(), &self.spec),
            },
        }
    }

    /// Kernel value at (x, y).
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.eval_with_error(x, y).map(|v| v.0)
    }

    /// The matrix [K(x_i, y_j)] with the largest entry error. Structured
    /// methods (finite-N residues, the reflection form, Airy) share work
    /// across entries; the rest evaluate each entry in parallel.
    pub fn matrix(&self, xs: &[f64], ys: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        match (self.family, self.method) {
            (KernelFamily::FiniteN, EvalMethod::ResidueSeries) => self.finite.as_ref().expect("finite-N kernel").matrix(xs, ys),
            (KernelFamily::CritEdge, EvalMethod::Reflection) => CritReflection::new(self.gamma())?.conjugated_matrix(xs, ys, 0.0),
            (KernelFamily::Airy, EvalMethod::ClosedForm) => {
                let px: Vec<(f64, f64)> = xs.par_iter().map(|&x| specfun::airy_ai_pair(x)).collect();
                let py: Vec<(f64, f64)> = ys.par_iter().map(|&y| specfun::airy_ai_pair(y)).collect();
                let m = DMatrix::from_fn(xs.len(), ys.len(), |i, j| airy_from_pairs(xs[i], ys[j], px[i], py[j]));
                Ok((m, 1e-13))
            }
            _ => {
                let pairs: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (0..ys.len()).map(move |j| (i, j))).collect();
                let vals: Result<Vec<(f64, f64)>> = pairs.par_iter().map(|&(i, j)| self.eval_with_error(xs[i], ys[j])).collect();
                let vals = vals?;
                let mut m = DMatrix::zeros(xs.len(), ys.len());
                let mut err: f64 = 0.0;
                for (&(i, j), (v, e)) in pairs.iter().zip(vals) {
                    m[(i, j)] = v;
                    err = err.max(e);
                }
                Ok((m, err))
            }
        }
    }

    /// Short description, e.g. `crit-edge gamma=1`.
    pub fn label(&self) -> String {
        format!("{} {}", self.family.as_str(), self.params_string())
    }

    /// Parameters as `key=value` pairs separated by `;`.
    pub fn params_string(&self) -> String {
        match &self.params {
            KernelParams::Ensemble(p) => {
                let nu: Vec<String> = p.nu_full().iter().map(|v| v.to_string()).collect();
                format!("N={};M={};nu={}", p.n, p.m, nu.join(" "))
            }
            KernelParams::Gamma(g) => format!("gamma={g}"),
            KernelParams::GammaPrime(g) => format!("gamma_prime={g}"),
            KernelParams::None => String::new(),
        }
    }
}

/// Maximum size of the correlation determinants.
pub const MAX_CORRELATION_POINTS: usize = 8;

/// n-point correlation function det[K(x_i, x_j)] for n ≤ 8.
///
/// The determinant is also evaluated for the conjugated kernel
/// e^{c(x_i − x_j)} K(x_i, x_j); the two must agree (to 1e-10 relative to
/// the size of the matrix entries), otherwise the evaluation is reported as
/// a numerical error.
pub fn correlation_det(kernel: &KernelHandle, points: &[f64], conj_exponent: f64) -> Result<f64> {
    let n = points.len();
    if n == 0 || n > MAX_CORRELATION_POINTS {
        return Err(Error::invalid("points", format!("need between 1 and {MAX_CORRELATION_POINTS} points, got {n}")));
    }
    if !conj_exponent.is_finite() {
        return Err(Error::invalid("conj_exponent", "must be finite"));
    }
    let (m, _) = kernel.matrix(points, points)?;
    let det = m.clone().determinant();
    let conj = DMatrix::from_fn(n, n, |i, j| (conj_exponent * (points[i] - points[j])).exp() * m[(i, j)]);
    let det_c = conj.determinant();
    let entry = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let size = entry.powi(n as i32).max(det.abs()).max(f64::MIN_POSITIVE);
    if (det - det_c).abs() > 1e-10 * size {
        return Err(Error::Numerical(format!("conjugated determinant {det_c:e} differs from {det:e}")));
    }
    Ok(det)
}

// ---------------------------------------------------------------------------
// Transitions out of the critical regime
// ---------------------------------------------------------------------------

/// Limits of K_crit compared by [`transition_discrepancy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    /// γ → ∞: √γ K_crit(√γ x, √γ y; γ) → (1/√(2π)) e^{−y²/2}.
    CritToGauss { gamma: f64 },
    /// γ → 0: k e^{k t₀ (y−x)} K_crit(c₀ + kx, c₀ + ky; γ) → K_Airy(x, y),
    /// k = 2^{−1/3}γ^{2/3}, c₀ = γt₀ − ψ(t₀).
    CritToAiry { gamma: f64 },
    /// k → ∞: e^{k(x−y)} K_crit(−γk − log k + x, −γk − log k + y; γ) → K_bulk(x, y; γ).
    EdgeToBulk { k: f64, gamma: f64 },
}

impl Transition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Transition::CritToGauss { .. } => "crit-to-gauss",
            Transition::CritToAiry { .. } => "crit-to-airy",
            Transition::EdgeToBulk { .. } => "edge-to-bulk",
        }
    }

    /// Builds a transition from its kebab-case name; `param` is γ for the
    /// first two kinds and k for edge-to-bulk, where γ = `gamma`.
    pub fn parse(kind: &str, param: f64, gamma: f64) -> Result<Self> {
        if !(param > 0.0) || !param.is_finite() {
            return Err(Error::invalid("param", format!("must be positive and finite, got {param}")));
        }
        Ok(match kind {
            "crit-to-gauss" => Transition::CritToGauss { gamma: param },
            "crit-to-airy" => Transition::CritToAiry { gamma: param },
            "edge-to-bulk" => Transition::EdgeToBulk { k: param, gamma },
            other => return Err(Error::invalid("kind", format!("unknown transition '{other}'"))),
        })
    }
}

fn split_grid(grid: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut xs: Vec<f64> = grid.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = grid.iter().map(|p| p.1).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    (xs, ys)
}

fn index_of(v: &[f64], x: f64) -> usize {
    v.binary_search_by(|a| a.total_cmp(&x)).expect("grid point present")
}

/// Rescaled K_crit minus its limit at each grid point, together with the
/// rescaled values themselves.
pub fn transition_values(kind: Transition, grid: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let (xs, ys) = split_grid(grid);
    match kind {
        Transition::CritToGauss { gamma } => {
            let sg = gamma.sqrt();
            let h = KernelHandle::crit(gamma)?;
            let (m, _) = h.matrix(&xs.iter().map(|x| sg * x).collect::<Vec<_>>(), &ys.iter().map(|y| sg * y).collect::<Vec<_>>())?;
            Ok(grid
                .iter()
                .map(|&(x, y)| {
                    let v = sg * m[(index_of(&xs, x), index_of(&ys, y))];
                    (v, gaussian_limit_kernel(x, y))
                })
                .collect())
        }
        Transition::CritToAiry { gamma } => {
            let t0 = specfun::solve_t0(gamma)?;
            let k = airy_scale(gamma);
            let c0 = gamma * t0 - specfun::digamma_real(t0);
            let h = KernelHandle::crit(gamma)?;
            let (m, _) = h.matrix(&xs.iter().map(|x| c0 + k * x).collect::<Vec<_>>(), &ys.iter().map(|y| c0 + k * y).collect::<Vec<_>>())?;
            let airy = KernelHandle::airy();
            let (a, _) = airy.matrix(&xs, &ys)?;
            Ok(grid
                .iter()
                .map(|&(x, y)| {
                    let (i, j) = (index_of(&xs, x), index_of(&ys, y));
                    ((k * t0 * (y - x)).exp() * k * m[(i, j)], a[(i, j)])
                })
                .collect())
        }
        Transition::EdgeToBulk { k, gamma } => {
            let c = -gamma * k - k.ln();
            let r = CritReflection::new(gamma)?;
            let (m, _) = r.conjugated_matrix(&xs.iter().map(|x| c + x).collect::<Vec<_>>(), &ys.iter().map(|y| c + y).collect::<Vec<_>>(), k)?;
            grid.iter()
                .map(|&(x, y)| Ok((m[(index_of(&xs, x), index_of(&ys, y))], bulk_crit_kernel(x, y, gamma)?)))
                .collect()
        }
    }
}

/// max over the grid of |rescaled K_crit − limiting kernel| for one of the
/// three transitions out of the critical regime.
pub fn transition_discrepancy(kind: Transition, grid: &[(f64, f64)]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must contain at least one point"));
    }
    Ok(transition_values(kind, grid)?.iter().fold(0.0, |a, (v, t)| a.max((v - t).abs())))
}

/// Square grid {lo, lo+step, …, hi}² flattened into (x, y) pairs.
pub fn square_grid(lo: f64, hi: f64, step: f64) -> Vec<(f64, f64)> {
    let pts = linspace_step(lo, hi, step);
    pts.iter().flat_map(|&x| pts.iter().map(move |&y| (x, y))).collect()
}

/// lo, lo+step, … up to hi (inclusive up to rounding).
pub fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || hi < lo {
        return vec![lo];
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Kernel values on xs × ys as CSV with columns `x,y,value,err_est,family,params`.
pub fn kernel_grid_csv(kernel: &KernelHandle, xs: &[f64], ys: &[f64]) -> Result<String> {
    let (m, err) = kernel.matrix(xs, ys)?;
    let mut out = String::from("x,y,value,err_est,family,params\n");
    let fam = kernel.family().as_str();
    let params = kernel.params_string();
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            writeln!(out, "{x},{y},{:.16e},{err:.3e},{fam},{params}", m[(i, j)]).expect("write to String");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn x_n_approaches_half_minus_k() {
        assert!((x_n(1, 1000).unwrap() + 0.5).abs() <= 1e-3);
        for k in 1..4 {
            let d = x_n(k, 1000).unwrap() - x_n(k + 1, 1000).unwrap();
            // x_N(k) − x_N(k+1) = N/(N−k) up to O(1/N²).
            assert!((d - 1.0).abs() <= 2.0 * k as f64 / 1000.0, "spacing {d}");
        }
        assert!(x_n(0, 5).is_err());
        assert!(x_n(6, 5).is_err());
    }

    #[test]
    fn normal_scaling_factor() {
        let n = 9;
        let map = scaling_normal(1, n, n).unwrap();
        assert_eq!(map.scale, (n as f64 / (n as f64 + 1.0)).sqrt());
        assert_eq!(map.conj_exponent, 0.0);
        let map = scaling_normal(3, 100, 10).unwrap();
        assert!(close(map.conj_exponent, 2.0 * (101.0f64 / 10.0).sqrt(), 1e-12));
        assert!(close(map.xi_of(map.x_of(0.37)), 0.37, 1e-12));
    }

    #[test]
    fn v_m_and_rho_values() {
        assert!(close(v_m(0.0, 1).unwrap(), 2f64.ln(), 1e-15));
        assert!(close(rho_mn(0.0, 1, 8).unwrap(), 2f64.powf(5.0 / 3.0), 1e-12));
        let theta = 1.0f64;
        let v_inf = theta / theta.tan() - (theta / theta.sin()).ln();
        assert!(close(v_infty(theta).unwrap(), v_inf, 1e-15));
        assert!((v_m(theta, 64).unwrap() - v_inf).abs() <= 3.0 / 65.0);
        assert!(v_m(0.3, 8).unwrap() > v_m(1.2, 8).unwrap());
        assert!(v_m(PI, 3).is_err());
        assert!(rho_mn(PI + 0.1, 3, 4).is_err());
        // The θ = 0 values are the limits of the θ > 0 formulas.
        assert!(close(v_m(1e-6, 5).unwrap(), v_m(0.0, 5).unwrap(), 1e-9));
    }

    #[test]
    fn rho_approaches_n_theta_over_pi_m() {
        // sin(θ/(M+1)) ≈ θ/(M+1) and sin(Mθ/(M+1)) ≈ sin θ.
        let (m, n) = (400, 10_000);
        let theta = PI / 2.0;
        let r = rho_mn(theta, m, n).unwrap();
        let approx = n as f64 * theta / (PI * (m as f64 + 1.0));
        assert!((r / approx - 1.0).abs() < 5.0 / (m as f64 + 1.0));
    }

    #[test]
    fn finite_n_one_factor_is_log_exponential() {
        let p = ProductEnsembleParams::square(1, 1).unwrap();
        let v = finite_n_kernel(&p, 0.0, 0.0, None, &QuadSpec::default()).unwrap();
        assert!(close(v, (-1f64).exp(), 1e-12), "{v}");
    }

    #[test]
    fn finite_n_rejects_bad_parameters() {
        assert!(ProductEnsembleParams::new(0, 1, vec![]).is_err());
        assert!(ProductEnsembleParams::new(2, 0, vec![]).is_err());
        assert!(ProductEnsembleParams::new(2, 3, vec![1, 2]).is_err());
        let p = ProductEnsembleParams::square(2, 1).unwrap();
        assert!(finite_n_kernel(&p, 0.0, 0.0, Some(-0.5), &QuadSpec::default()).is_err());
    }

    #[test]
    fn finite_n_total_mass_is_n() {
        let p = ProductEnsembleParams::square(2, 1).unwrap();
        let k = FiniteNKernel::new(p, FiniteNMethod::ResidueSeries, QuadSpec::default());
        // log of the eigenvalues: e^{x} decay on the left, e^{−e^x} on the right.
        let (lo, hi, h) = (-32.0, 6.0, 0.1);
        let n = ((hi - lo) / h) as usize;
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * h * k.eval(x, x).unwrap();
        }
        assert!((total - 2.0).abs() <= 1e-3, "mass {total}");
    }

    #[test]
    fn finite_n_methods_agree() {
        let p = ProductEnsembleParams::square(3, 2).unwrap();
        let res = FiniteNKernel::new(p.clone(), FiniteNMethod::ResidueSeries, QuadSpec::default());
        let dc = FiniteNKernel::new(p.clone(), FiniteNMethod::DoubleContour, QuadSpec::default());
        for (x, y) in [(1.0, 1.0), (0.5, 2.0), (2.5, -0.5)] {
            let a = res.eval(x, y).unwrap();
            let b = dc.eval(x, y).unwrap();
            assert!(close(a, b, 1e-8 * (1.0 + a.abs())), "({x},{y}): {a} vs {b}");
            for c in [0.4, 2.5] {
                let v = finite_n_kernel(&p, x, y, Some(c), &QuadSpec::default()).unwrap();
                assert!(close(a, v, 1e-9 * (1.0 + a.abs())), "offset {c}: {a} vs {v}");
            }
        }
    }

    #[test]
    fn steepest_descent_matches_residues() {
        let n = 16;
        let p = ProductEnsembleParams::square(n, 4).unwrap();
        let k = FiniteNKernel::new(p, FiniteNMethod::ResidueSeries, QuadSpec::default());
        let map = scaling_sine(PI / 2.0, 4, n).unwrap();
        for (a, b) in [(0.0, 0.0), (0.5, -0.5)] {
            let (x, y) = (map.x_of(a), map.x_of(b));
            let col = k.column(y).unwrap();
            let r = k.combine(&k.row(x), &col).unwrap().0;
            let s = k.steepest_descent(x, y).unwrap().0;
            assert!(close(r, s, 1e-8 * (1.0 + r.abs())), "({a},{b}): {r} vs {s}");
        }
        let nonsquare = FiniteNKernel::new(ProductEnsembleParams::new(3, 2, vec![1, 0]).unwrap(), FiniteNMethod::ResidueSeries, QuadSpec::default());
        assert!(nonsquare.steepest_descent(0.0, 0.0).is_err());
    }

    #[test]
    fn zero_offsets_take_the_square_path() {
        let plain = ProductEnsembleParams::square(3, 2).unwrap();
        let spelled = ProductEnsembleParams::new(3, 2, vec![0, 0]).unwrap();
        assert_eq!(plain.gamma_groups(), spelled.gamma_groups());
        let spec = QuadSpec::default();
        for (x, y) in [(0.3, 1.1), (2.0, 2.0)] {
            let a = finite_n_kernel(&plain, x, y, None, &spec).unwrap();
            let b = finite_n_kernel(&spelled, x, y, None, &spec).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rectangular_factors_change_the_kernel() {
        let spec = QuadSpec::default();
        let square = ProductEnsembleParams::square(2, 2).unwrap();
        let rect = ProductEnsembleParams::new(2, 2, vec![2, 1]).unwrap();
        let a = finite_n_kernel(&square, 1.0, 1.0, None, &spec).unwrap();
        let b = finite_n_kernel(&rect, 1.0, 1.0, None, &spec).unwrap();
        assert!((a - b).abs() > 1e-3);
        // Both methods agree for rectangular factors as well.
        let dc = FiniteNKernel::new(rect, FiniteNMethod::DoubleContour, spec).eval(1.0, 1.0).unwrap();
        assert!(close(b, dc, 1e-8));
        assert!(close(rect_gamma(), ProductEnsembleParams::new(2, 2, vec![2, 1]).unwrap().effective_gamma(), 1e-15));
    }

    fn rect_gamma() -> f64 {
        1.0 / 2.0 + 1.0 / 4.0 + 1.0 / 3.0
    }

    #[test]
    fn conjugation_leaves_two_point_function() {
        let h = KernelHandle::finite_n(ProductEnsembleParams::square(2, 1).unwrap());
        for pts in [[0.2, 1.3], [-1.0, 0.7]] {
            let a = correlation_det(&h, &pts, 0.0).unwrap();
            let b = correlation_det(&h, &pts, 0.7).unwrap();
            assert!(close(a, b, 1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn crit_integral_matches_derived_series() {
        for (x, y) in [(-2.0, 1.0), (0.5, 4.0), (2.5, -0.5)] {
            let a = crit_kernel_integral(x, y, 1.0, &QuadSpec::default()).unwrap();
            let b = crit_kernel_series(x, y, 1.0).unwrap();
            assert!(close(a, b, 1e-8), "({x},{y}): {a} vs {b}");
        }
    }

    #[test]
    fn printed_pairing_disagrees_with_integral() {
        let a = crit_kernel_integral(0.0, 1.0, 1.0, &QuadSpec::default()).unwrap();
        let b = crit_kernel_series_with(0.0, 1.0, 1.0, SeriesReading::AsPrinted).unwrap();
        assert!((a - b).abs() > 1e-2, "{a} vs {b}");
    }

    #[test]
    fn leading_term_is_needed() {
        let a = crit_kernel_integral(0.0, 1.0, 1.0, &QuadSpec::default()).unwrap();
        let without = crit_series_bracket(0.0, 1.0, 1.0, SeriesReading::Derived, false).unwrap();
        assert!((a - without).abs() > 1e-3);
    }

    #[test]
    fn bracket_vanishes_linearly_at_diagonal() {
        let x = 0.4;
        let diag = crit_kernel_integral(x, x, 1.0, &QuadSpec::default()).unwrap();
        for h in [1e-2, 1e-3] {
            let q = crit_series_bracket(x, x + h, 1.0, SeriesReading::Derived, true).unwrap() / h;
            assert!(q.is_finite() && (q - diag).abs() < 20.0 * h, "h={h}: {q} vs {diag}");
        }
    }

    #[test]
    fn series_falls_back_near_diagonal() {
        let a = crit_kernel_series(0.3, 0.305, 1.0).unwrap();
        let b = crit_kernel_integral(0.3, 0.305, 1.0, &QuadSpec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reflection_form_matches_integral() {
        for g in [0.2, 1.0, 3.0] {
            let r = CritReflection::new(g).unwrap();
            for (x, y) in [(0.0, 0.0), (-1.5, 0.5), (1.0, -1.0)] {
                let a = crit_kernel_integral(x, y, g, &QuadSpec::default()).unwrap();
                let b = r.eval(x, y).unwrap();
                assert!(close(a, b, 1e-9 * (1.0 + a.abs())), "γ={g} ({x},{y}): {a} vs {b}");
            }
        }
        let (m, _) = CritReflection::new(1.0).unwrap().conjugated_matrix(&[0.0, 1.0], &[0.5, -0.5], 2.0).unwrap();
        let direct = (2.0f64 * (1.0 - 0.5)).exp() * crit_kernel(1.0, 0.5, 1.0).unwrap();
        assert!(close(m[(1, 0)], direct, 1e-10));
    }

    #[test]
    fn crit_diagonal_is_nonnegative() {
        for g in [0.5, 1.0, 2.0] {
            let xs: Vec<f64> = (0..=30).map(|i| -5.0 + 0.5 * i as f64).collect();
            let (m, err) = CritReflection::new(g).unwrap().conjugated_matrix(&xs, &xs, 0.0).unwrap();
            for i in 0..xs.len() {
                assert!(m[(i, i)] >= -err, "γ={g} x={}: {}", xs[i], m[(i, i)]);
            }
        }
    }

    #[test]
    fn crit_gaussian_limit_at_large_gamma() {
        let g = 100.0f64;
        let v = g.sqrt() * crit_kernel(0.0, 0.0, g).unwrap();
        assert!((v - 1.0 / (2.0 * PI).sqrt()).abs() <= 1e-2, "{v}");
    }

    #[test]
    fn f_and_g_families() {
        assert!((f_func(-1, 20.0, 1.0).unwrap() - 1.0).abs() <= 1e-8);
        let mut oracle = 0.0;
        let mut fact = 1.0;
        for n in 0..30 {
            if n > 0 {
                fact *= n as f64;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            oracle += sign * (-(n * n) as f64).exp() / fact;
        }
        assert!(close(f_func(-1, 0.0, 2.0).unwrap(), oracle, 1e-12));
        for y in [-1.0, 0.5, 2.0] {
            let a = g_func_line(-1, y, 1.0, 1.0).unwrap();
            let b = g_func_line(-1, y, 1.0, 2.0).unwrap();
            assert!(close(a, b, 1e-10 * (1.0 + a.abs())), "y={y}: {a} vs {b}");
            let c = g_func(3, y, 1.0).unwrap();
            let d = g_func_line(3, y, 1.0, 1.0).unwrap();
            assert!(close(c, d, 1e-10 * (1.0 + c.abs())));
        }
        assert!(f_func(-2, 0.0, 1.0).is_err());
        assert!(g_func(0, 0.0, -1.0).is_err());
    }

    #[test]
    fn f_k_residue_series_matches_contour() {
        // f_2 by quadrature of Γ(t)/(t+2) e^{−γt²/2 + xt} around the poles
        // inside |t + 3| = 3.5 plus the remaining residues, which are tiny.
        let (x, g) = (0.3, 1.0);
        let circle = ComplexPath::new(vec![contours::Segment::arc(c64(-3.0, 0.0), 3.5, 0.0, 2.0 * PI)]);
        let f = |t: C64| (ln_gamma(t) - t * t * (0.5 * g) + t * x).exp() / (t + 2.0);
        let r = contours::integrate(f, &circle, &QuadSpec::default());
        let mut v = r.value / c64(0.0, 2.0 * PI);
        let a = residue_coeffs(x, g);
        for (m, am) in a.iter().enumerate().skip(7) {
            v += am / (2.0 - m as f64);
        }
        assert!(close(f_func(2, x, g).unwrap(), v.re, 1e-12), "{} vs {}", f_func(2, x, g).unwrap(), v.re);
    }

    #[test]
    fn hat_relation() {
        let g = 1.0;
        let t0 = specfun::solve_t0(g).unwrap();
        let (xi, eta) = (0.3, -0.5);
        let lhs = ((eta - xi) * t0).exp() * crit_kernel_integral(xi, eta, g, &QuadSpec::default()).unwrap();
        let rhs = crit_kernel_hat(xi - g * t0, eta - g * t0, g).unwrap();
        assert!(close(lhs, rhs, 1e-8), "{lhs} vs {rhs}");
        let g = PI * PI / 6.0;
        assert!(close(specfun::solve_t0(g).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn bulk_kernel_properties() {
        for x in [-3.0, 0.0, 3.0] {
            assert!(bulk_crit_kernel(x, x, 1.0).unwrap() > 0.0);
        }
        for (a, b, g) in [(0.3, -0.4, 1.0), (1.3, 0.4, 3.0), (-0.7, 2.2, 0.4)] {
            let k = bulk_crit_kernel(a, b, g).unwrap();
            assert!(close(k, bulk_crit_kernel(-a, -b, g).unwrap(), 1e-10));
            let q = bulk_crit_kernel_quadrature(a, b, g, 400).unwrap();
            assert!(close(k, q, 1e-10), "{k} vs {q}");
        }
        assert!(bulk_crit_kernel(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bulk_kernel_approaches_sine() {
        // γ′ e^{−γ′(ξ²−η²)/2} K(γ′ξ, γ′η; γ′) → sinc(ξ − η).
        let target = sine_kernel(0.0, 0.5);
        let mut prev = f64::INFINITY;
        for gp in [0.5f64, 0.2, 0.05] {
            let v = gp * (gp * 0.25 / 2.0).exp() * bulk_crit_kernel(0.0, gp * 0.5, gp).unwrap();
            let d = (v - target).abs();
            assert!(d < prev, "γ′={gp}: {d} vs {prev}");
            prev = d;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn airy_kernel_values() {
        // Ai′(0) = −1/(3^{1/3} Γ(1/3)), Γ(1/3) = 2.6789385347077476337.
        let aip0 = -1.0 / (3f64.cbrt() * 2.678_938_534_707_747_6);
        assert!(close(airy_kernel(0.0, 0.0), aip0 * aip0, 1e-12));
        let (v, _) = airy_kernel_contour(0.3, -0.2, &QuadSpec::default()).unwrap();
        assert!(close(v, airy_kernel(0.3, -0.2), 1e-9));
        // The Taylor branch joins the closed form.
        assert!(close(airy_kernel(0.5, 0.5 + 9e-4), airy_kernel(0.5, 0.5 + 1.1e-3), 1e-4));
    }

    #[test]
    fn kernel_handle_checks_consistency() {
        assert!(KernelHandle::new(KernelFamily::Sine, KernelParams::Gamma(1.0), EvalMethod::ClosedForm).is_err());
        assert!(KernelHandle::new(KernelFamily::CritEdge, KernelParams::Gamma(-1.0), EvalMethod::Reflection).is_err());
        assert!(KernelHandle::new(KernelFamily::Sine, KernelParams::None, EvalMethod::DoubleContour).is_err());
        assert!(KernelHandle::new(KernelFamily::CritBulk, KernelParams::GammaPrime(1.0), EvalMethod::ClosedForm).is_ok());
        assert_eq!(KernelFamily::parse("crit-edge-hat").unwrap(), KernelFamily::CritEdgeHat);
        assert!(KernelFamily::parse("meijer").is_err());
        let h = KernelHandle::crit(1.0).unwrap();
        assert_eq!(h.label(), "crit-edge gamma=1");
    }

    #[test]
    fn correlation_det_basics() {
        let h = KernelHandle::sine();
        assert!(close(correlation_det(&h, &[0.3], 0.0).unwrap(), 1.0, 1e-15));
        assert!(correlation_det(&h, &[0.3, 0.3], 0.0).unwrap().abs() < 1e-15);
        assert!(correlation_det(&h, &[0.0; 9], 0.0).is_err());
        let handles = [
            KernelHandle::sine(),
            KernelHandle::airy(),
            KernelHandle::crit(1.0).unwrap(),
            KernelHandle::crit_bulk(1.0).unwrap(),
            KernelHandle::finite_n(ProductEnsembleParams::square(3, 2).unwrap()),
        ];
        let pts = [-0.6, 0.1, 0.9];
        for h in &handles {
            let d0 = correlation_det(h, &pts, 0.0).unwrap();
            for c in [-1.0, 1.0] {
                let d = correlation_det(h, &pts, c).unwrap();
                assert!(close(d, d0, 1e-12), "{}: {d} vs {d0}", h.label());
            }
        }
    }

    #[test]
    fn crit_to_gauss_trend() {
        let grid = square_grid(-1.0, 1.0, 0.5);
        let a = transition_discrepancy(Transition::CritToGauss { gamma: 25.0 }, &grid).unwrap();
        let b = transition_discrepancy(Transition::CritToGauss { gamma: 100.0 }, &grid).unwrap();
        assert!(b < a && b <= 5e-2, "{a} {b}");
    }

    #[test]
    fn edge_to_bulk_trend() {
        let grid = square_grid(-1.0, 1.0, 1.0);
        let a = transition_discrepancy(Transition::EdgeToBulk { k: 10.0, gamma: 1.0 }, &grid).unwrap();
        let b = transition_discrepancy(Transition::EdgeToBulk { k: 40.0, gamma: 1.0 }, &grid).unwrap();
        assert!(b < a, "{a} {b}");
        assert!(transition_discrepancy(Transition::CritToGauss { gamma: 1.0 }, &[]).is_err());
        assert!(Transition::parse("crit-to-nowhere", 1.0, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let csv = kernel_grid_csv(&KernelHandle::sine(), &[0.0, 1.0], &[0.0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y,value,err_est,family,params");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0,1."));
        assert!(lines[1].ends_with(",sine,"));
    }

    #[test]
    fn scaling_maps_are_consistent() {
        let (m, n) = (4, 200);
        let a = scaling_airy(m, n).unwrap();
        let e = scaling_airy_exact(m, n).unwrap();
        // Same order of magnitude: the exact saddle differs from the
        // M → ∞ form by factors (M+1)/M.
        assert!((e.scale / a.scale - 1.0).abs() < 0.5);
        let big = scaling_airy_exact(400, 100_000).unwrap();
        let big_a = scaling_airy(400, 100_000).unwrap();
        assert!((big.scale / big_a.scale - 1.0).abs() < 0.02);
        let b = scaling_bulk_critical(0.5, 20, 20).unwrap();
        assert_eq!(b.conj_exponent, -10.0);
        assert!(scaling_bulk_critical(1.0, 20, 20).is_err());
        assert!(scaling_sine(0.0, 4, 10).is_err());
        let c = scaling_critical_nu(&ProductEnsembleParams::square(5, 5).unwrap()).unwrap();
        assert!(close(c.shift, scaling_critical(5, 5).unwrap().shift, 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn one_factor_diagonal_density(x in -4.0f64..2.0) {
            let p = ProductEnsembleParams::square(1, 1).unwrap();
            let v = finite_n_kernel(&p, x, x, None, &QuadSpec::default()).unwrap();
            prop_assert!((v - (x - x.exp()).exp()).abs() <= 1e-11);
        }

        #[test]
        fn sine_diagonal_is_one(a in -50.0f64..50.0) {
            prop_assert_eq!(sine_kernel(a, a), 1.0);
        }

        #[test]
        fn airy_symmetric(x in -4.0f64..4.0, y in -4.0f64..4.0) {
            prop_assert!((airy_kernel(x, y) - airy_kernel(y, x)).abs() <= 1e-10);
        }

        #[test]
        fn bulk_reflection_symmetry(a in -3.0f64..3.0, b in -3.0f64..3.0, g in 0.1f64..5.0) {
            let k1 = bulk_crit_kernel(a, b, g).unwrap();
            let k2 = bulk_crit_kernel(-a, -b, g).unwrap();
            prop_assert!((k1 - k2).abs() <= 1e-10 * (1.0 + k1.abs()));
        }

        #[test]
        fn crit_conjugation_invariance(x in -2.0f64..3.0, y in -2.0f64..3.0, c in -1.5f64..1.5) {
            let h = KernelHandle::crit(1.0).unwrap();
            let d0 = correlation_det(&h, &[x, y], 0.0).unwrap();
            let d1 = correlation_det(&h, &[x, y], c).unwrap();
            prop_assert!((d0 - d1).abs() <= 1e-12);
        }
    }
}
