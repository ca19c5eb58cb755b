//! Fredholm determinants det(I − K) on half-lines (x, ∞).
//!
//! The operator is discretised by Gauss–Legendre on one truncated panel
//! [x, x + L] (Nyström), and the determinant of I − W^{1/2} K W^{1/2} is
//! taken from a partially pivoted LU factorisation with the diagonal factors
//! accumulated in the log domain. The node count doubles until two successive
//! values agree; the neglected piece (x + L, ∞) is bounded by the expected
//! number of points there, ∫ K(t, t) dt, extrapolated from an exponential fit
//! of the diagonal at the truncation point.
//!
//! * [`fredholm_det`] and [`fredholm_det_fn`]: the general determinant.
//! * [`f_crit`], [`f_gue`], [`finite_n_largest_cdf`]: the three distributions.
//! * [`expected_count`]: ∫_a^b K(t, t) dt with infinite ends allowed.

use crate::contours::gauss_legendre;
use crate::error::{Error, Result};
use crate::kernels::{KernelHandle, ProductEnsembleParams};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Truncation length and node count for the Nyström panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Panel length L; the panel is [x, x + L].
    pub length: f64,
    /// Starting number of Gauss–Legendre nodes.
    pub n_nodes: usize,
    /// Doubling stops once two successive determinants differ by less than this.
    pub tol: f64,
    /// Largest node count tried.
    pub max_nodes: usize,
    /// Lengthen the panel while the tail bound exceeds `tol`.
    pub extend: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { length: 12.0, n_nodes: 60, tol: 1e-10, max_nodes: 480, extend: true }
    }
}

impl GridSpec {
    /// A fixed grid: exactly `n` nodes on [x, x + length], no doubling or extension.
    pub fn fixed(length: f64, n: usize) -> Self {
        GridSpec { length, n_nodes: n, tol: f64::INFINITY, max_nodes: n, extend: false }
    }

    fn check(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::invalid("L", "panel length must be positive"));
        }
        if self.n_nodes == 0 || self.max_nodes < self.n_nodes {
            return Err(Error::invalid("n", "need 1 ≤ n ≤ max_nodes"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on [left, left + length].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NystromGrid {
    pub left: f64,
    pub length: f64,
    pub n_nodes: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NystromGrid {
    /// The n-point rule mapped to [left, left + length], nodes increasing.
    pub fn new(left: f64, length: f64, n: usize) -> Result<Self> {
        if n == 0 || !(length > 0.0) || !left.is_finite() {
            return Err(Error::invalid("grid", "need n ≥ 1, L > 0 and a finite left end"));
        }
        let (t, w) = gauss_legendre(n);
        let half = 0.5 * length;
        let mut pairs: Vec<(f64, f64)> = t.iter().zip(&w).map(|(&t, &w)| (left + half * (t + 1.0), half * w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(NystromGrid {
            left,
            length,
            n_nodes: n,
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }
}

/// A Fredholm determinant with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterminantResult {
    pub value: f64,
    /// |det(n) − det(n/2)| at the final doubling, plus the kernel error
    /// propagated through the trace.
    pub err_estimate: f64,
    pub n_nodes_used: usize,
    /// Bound on ∫_{x+L}^∞ K(t, t) dt.
    pub truncation_tail_bound: f64,
    /// Panel length finally used.
    pub length_used: f64,
}

/// det(I − W^{1/2} K W^{1/2}) for a kernel matrix K on the grid nodes.
pub fn nystrom_det(kmat: &DMatrix<f64>, weights: &[f64]) -> f64 {
    let n = weights.len();
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - sw[i] * kmat[(i, j)] * sw[j]);
    log_det(a)
}

/// Determinant through LU with partial pivoting; the diagonal of U is
/// multiplied as a sum of logarithms.
fn log_det(a: DMatrix<f64>) -> f64 {
    let lu = a.lu();
    let u = lu.u();
    let mut log_abs = 0.0;
    let mut sign = lu.p().determinant::<f64>();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return 0.0;
        }
        if d < 0.0 {
            sign = -sign;
        }
        log_abs += d.abs().ln();
    }
    sign * log_abs.exp()
}

/// Kernel diagonal at t (both arguments equal).
trait Diagonal: Sync {
    fn diag(&self, t: f64) -> Result<f64>;
    fn matrix(&self, nodes: &[f64]) -> Result<(DMatrix<f64>, f64)>;
}

impl Diagonal for KernelHandle {
    fn diag(&self, t: f64) -> Result<f64> {
        self.eval(t, t)
    }
    fn matrix(&self, nodes: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        KernelHandle::matrix(self, nodes, nodes)
    }
}

struct FnKernel<F>(F);

impl<F: Fn(f64, f64) -> f64 + Sync> Diagonal for FnKernel<F> {
    fn diag(&self, t: f64) -> Result<f64> {
        Ok((self.0)(t, t))
    }
    fn matrix(&self, nodes: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let n = nodes.len();
        let vals: Vec<f64> = (0..n * n).into_par_iter().map(|k| (self.0)(nodes[k % n], nodes[k / n])).collect();
        Ok((DMatrix::from_vec(n, n, vals), 0.0))
    }
}

/// The diagonal at the truncation point above which the panel is judged not
/// to reach the decay region.
pub const TAIL_NON_DECAY_LEVEL: f64 = 1e-3;

/// Longest panel tried while extending towards the decay region.
pub const MAX_PANEL_LENGTH: f64 = 200.0;

/// Exponential-fit bound on ∫_b^∞ K(t, t) dt from the diagonal at b − 1/2 and b.
fn tail_bound<K: Diagonal + ?Sized>(k: &K, b: f64) -> Result<f64> {
    let d1 = k.diag(b)?.abs();
    if d1 == 0.0 {
        return Ok(0.0);
    }
    let d0 = k.diag(b - 0.5)?.abs();
    let rate = 2.0 * (d0 / d1).ln();
    if rate.is_finite() && rate > 0.0 {
        Ok(d1 / rate)
    } else {
        Ok(f64::INFINITY)
    }
}

fn det_core<K: Diagonal + ?Sized>(k: &K, x: f64, grid: &GridSpec) -> Result<DeterminantResult> {
    grid.check()?;
    if !x.is_finite() {
        return Err(Error::invalid("x", "must be finite"));
    }
    let mut length = grid.length;
    let mut tail = tail_bound(k, x + length)?;
    if grid.extend {
        while tail > grid.tol && length < MAX_PANEL_LENGTH {
            length = (length * 1.25).min(MAX_PANEL_LENGTH);
            tail = tail_bound(k, x + length)?;
        }
    }
    let edge = k.diag(x + length)?;
    if edge.abs() > TAIL_NON_DECAY_LEVEL || !edge.is_finite() {
        return Err(Error::TailNonDecay { at: x + length, value: edge });
    }
    let mut n = grid.n_nodes;
    let mut prev: Option<f64> = None;
    loop {
        let g = NystromGrid::new(x, length, n)?;
        let (kmat, kerr) = k.matrix(&g.nodes)?;
        let value = nystrom_det(&kmat, &g.weights);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite determinant with {n} nodes")));
        }
        let kernel_err = kerr * length;
        let step_err = prev.map_or(f64::INFINITY, |p| (value - p).abs());
        let done = n >= grid.max_nodes || step_err <= grid.tol;
        if done {
            let err = if grid.max_nodes == grid.n_nodes { kernel_err } else { step_err + kernel_err };
            return Ok(DeterminantResult { value, err_estimate: err, n_nodes_used: n, truncation_tail_bound: tail, length_used: length });
        }
        prev = Some(value);
        n = (2 * n).min(grid.max_nodes);
    }
}

/// det(I − K) on (x, ∞) for a kernel handle.
pub fn fredholm_det(kernel: &KernelHandle, x: f64, grid: &GridSpec) -> Result<DeterminantResult> {
    det_core(kernel, x, grid)
}

/// det(I − K) on (x, ∞) for a kernel given as a plain function.
pub fn fredholm_det_fn<F>(kernel: F, x: f64, grid: &GridSpec) -> Result<DeterminantResult>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    det_core(&FnKernel(kernel), x, grid)
}

/// The determinants det_n for the node counts `ns` on the fixed panel [x, x + L].
pub fn doubling_sequence(kernel: &KernelHandle, x: f64, length: f64, ns: &[usize]) -> Result<Vec<f64>> {
    ns.iter()
        .map(|&n| {
            let g = NystromGrid::new(x, length, n)?;
            let (kmat, _) = kernel.matrix(&g.nodes, &g.nodes)?;
            Ok(nystrom_det(&kmat, &g.weights))
        })
        .collect()
}

fn check_distribution(mut r: DeterminantResult) -> Result<DeterminantResult> {
    let slack = r.err_estimate + r.truncation_tail_bound + 1e-12;
    if r.value < -slack || r.value > 1.0 + slack {
        return Err(Error::Numerical(format!(
            "distribution value {} outside [0, 1] by more than its error {slack:e}",
            r.value
        )));
    }
    r.err_estimate = r.err_estimate.max(0.0);
    Ok(r)
}

/// F_crit(x; γ) = det(I − K_crit) on (x, ∞).
pub fn f_crit(x: f64, gamma: f64, grid: &GridSpec) -> Result<DeterminantResult> {
    let h = KernelHandle::crit(gamma)?;
    check_distribution(fredholm_det(&h, x, grid)?)
}

/// The GUE Tracy–Widom distribution F_GUE(x) = det(I − K_Airy) on (x, ∞).
pub fn f_gue(x: f64, grid: &GridSpec) -> Result<DeterminantResult> {
    check_distribution(fredholm_det(&KernelHandle::airy(), x, grid)?)
}

/// ℙ(largest log squared singular value ≤ x) for the finite product.
pub fn finite_n_largest_cdf(p: &ProductEnsembleParams, x: f64, grid: &GridSpec) -> Result<DeterminantResult> {
    let h = KernelHandle::finite_n(p.clone());
    check_distribution(fredholm_det(&h, x, grid)?)
}

/// Gauss–Legendre 16/32 pair on [lo, hi]: the 32-point value and the difference.
fn panel_integral<K: Diagonal + ?Sized>(k: &K, lo: f64, hi: f64) -> Result<(f64, f64)> {
    const COARSE: usize = 16;
    const FINE: usize = 32;
    let (tc, wc) = gauss_legendre(COARSE);
    let (tf, wf) = gauss_legendre(FINE);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let pts: Vec<f64> = tc.iter().chain(&tf).map(|t| mid + half * t).collect();
    let vals: Result<Vec<f64>> = pts.par_iter().map(|&t| k.diag(t)).collect();
    let vals = vals?;
    let coarse: f64 = wc.iter().zip(&vals[..COARSE]).map(|(w, v)| w * v).sum::<f64>() * half;
    let fine: f64 = wf.iter().zip(&vals[COARSE..]).map(|(w, v)| w * v).sum::<f64>() * half;
    Ok((fine, (fine - coarse).abs()))
}

/// Relative accuracy of [`expected_count`].
const COUNT_REL_TOL: f64 = 1e-10;

/// Adaptive bisection of [lo, hi] driven by the 16/32 difference.
fn adaptive_integral<K: Diagonal + ?Sized>(k: &K, lo: f64, hi: f64, abs_tol: f64, depth: u32) -> Result<(f64, f64)> {
    let (v, e) = panel_integral(k, lo, hi)?;
    if e <= abs_tol.max(COUNT_REL_TOL * v.abs()) || depth == 0 {
        return Ok((v, e));
    }
    let mid = 0.5 * (lo + hi);
    let (v1, e1) = adaptive_integral(k, lo, mid, 0.5 * abs_tol, depth - 1)?;
    let (v2, e2) = adaptive_integral(k, mid, hi, 0.5 * abs_tol, depth - 1)?;
    Ok((v1 + v2, e1 + e2))
}

/// Panels walked outward when an end of the count window is infinite.
const MAX_TAIL_PANELS: usize = 200;

/// Expected number of points of the process in (a, b): ∫_a^b K(t, t) dt.
/// Either end may be infinite; the walk outwards uses panels of doubling
/// width (capped at 16), stops once the diagonal is below 1e-15 relative to
/// the running total, and bounds the rest by an exponential fit.
pub fn expected_count(kernel: &KernelHandle, a: f64, b: f64) -> Result<f64> {
    expected_count_with_error(kernel, a, b).map(|r| r.0)
}

/// [`expected_count`] with an absolute error estimate.
pub fn expected_count_with_error(kernel: &KernelHandle, a: f64, b: f64) -> Result<(f64, f64)> {
    if a.is_nan() || b.is_nan() || a >= b {
        return Err(Error::invalid("a, b", "need a < b"));
    }
    let k = kernel;
    let (lo, hi) = match (a.is_finite(), b.is_finite()) {
        (true, true) => (a, b),
        (true, false) => (a, a + 1.0),
        (false, true) => (b - 1.0, b),
        (false, false) => (-0.5, 0.5),
    };
    let (mut total, mut err) = adaptive_integral(k, lo, hi, 1e-13, 30)?;
    let walk = |start: f64, dir: f64, total: &mut f64, err: &mut f64| -> Result<()> {
        let mut edge = start;
        let mut width: f64 = 1.0;
        for _ in 0..MAX_TAIL_PANELS {
            let next = edge + dir * width;
            let (v, e) = if dir > 0.0 {
                adaptive_integral(k, edge, next, 1e-14, 20)?
            } else {
                adaptive_integral(k, next, edge, 1e-14, 20)?
            };
            *total += v;
            *err += e;
            edge = next;
            let scale = total.abs().max(1e-300);
            let d = k.diag(edge)?.abs();
            if d <= 1e-15 * scale && v.abs() <= 1e-15 * scale {
                let d_in = k.diag(edge - 0.5 * dir)?.abs();
                let rate = 2.0 * (d_in / d.max(1e-300)).ln();
                *err += if rate > 0.0 { d / rate } else { d };
                return Ok(());
            }
            width = (2.0 * width).min(16.0);
        }
        Err(Error::TailNonDecay { at: edge, value: k.diag(edge)? })
    };
    if !b.is_finite() {
        walk(hi, 1.0, &mut total, &mut err)?;
    }
    if !a.is_finite() {
        walk(lo, -1.0, &mut total, &mut err)?;
    }
    Ok((total, err))
}

/// CSV table `x,value,err_estimate,truncation_tail_bound,n_nodes_used` of a distribution over xs.
pub fn cdf_table_csv<F>(xs: &[f64], mut f: F) -> Result<String>
where
    F: FnMut(f64) -> Result<DeterminantResult>,
{
    let mut out = String::from("x,value,err_estimate,truncation_tail_bound,n_nodes_used\n");
    for &x in xs {
        let r = f(x)?;
        let _ = writeln!(out, "{x},{},{:e},{:e},{}", r.value, r.err_estimate, r.truncation_tail_bound, r.n_nodes_used);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{scaling_normal, sine_kernel};
    use proptest::prelude::*;

    #[test]
    fn grid_nodes_and_weights() {
        let g = NystromGrid::new(-1.0, 3.0, 17).unwrap();
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes[0] > -1.0 && g.nodes[16] < 2.0);
        assert!(g.weights.iter().all(|&w| w > 0.0));
        assert!((g.weights.iter().sum::<f64>() - 3.0).abs() < 1e-13);
        assert!(NystromGrid::new(0.0, -1.0, 4).is_err());
    }

    #[test]
    fn zero_kernel_gives_one() {
        let r = fredholm_det_fn(|_, _| 0.0, 0.0, &GridSpec::fixed(5.0, 10)).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn rank_one_closed_form() {
        // a(s) b(t) with ∫_0^L a b = 0.3.
        let l = 4.0f64;
        let norm = 0.3 / (1.0 - (-2.0 * l).exp()) * 2.0;
        let k = move |s: f64, t: f64| norm * (-s).exp() * (-t).exp();
        let grid = GridSpec { length: l, extend: false, ..GridSpec::default() };
        let r = fredholm_det_fn(k, 0.0, &grid).unwrap();
        assert!((r.value - 0.7).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn small_trace_expansion() {
        // det(I − εK) = 1 − ε tr K + ε²/2 (tr² K − tr K²) + O(ε³).
        let eps = 1e-2;
        let k = move |s: f64, t: f64| eps * (-(s * s + t * t) / 2.0).exp() * (1.0 + 0.3 * s * t);
        let g = NystromGrid::new(-6.0, 12.0, 80).unwrap();
        let m = DMatrix::from_fn(80, 80, |i, j| k(g.nodes[i], g.nodes[j]) * g.weights[j]);
        let tr = m.trace();
        let tr2 = (&m * &m).trace();
        let expansion = 1.0 - tr + 0.5 * (tr * tr - tr2);
        let r = fredholm_det_fn(k, -6.0, &GridSpec { length: 12.0, extend: false, ..GridSpec::default() }).unwrap();
        assert!((r.value - expansion).abs() < 10.0 * tr.abs().powi(3), "{} vs {expansion}", r.value);
    }

    #[test]
    fn one_factor_largest_law() {
        let p = ProductEnsembleParams::square(1, 1).unwrap();
        for x in [-1.0f64, 0.0, 1.0] {
            let r = finite_n_largest_cdf(&p, x, &GridSpec::default()).unwrap();
            let exact = 1.0 - (-x.exp()).exp();
            assert!((r.value - exact).abs() < 1e-6, "x={x}: {} vs {exact}", r.value);
        }
    }

    #[test]
    fn gue_properties() {
        let xs = [-4.0, -2.0, 0.0, 2.0];
        let v: Vec<f64> = xs.iter().map(|&x| f_gue(x, &GridSpec::default()).unwrap().value).collect();
        assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
        assert!(v[3] >= 0.999);
        let hi = f_gue(-1.0, &GridSpec::fixed(14.0, 200)).unwrap().value;
        let lo = f_gue(-1.0, &GridSpec::default()).unwrap().value;
        assert!((hi - lo).abs() < 1e-8, "{hi} vs {lo}");
    }

    #[test]
    fn gue_truncation_honesty() {
        let a = f_gue(-2.0, &GridSpec { length: 10.0, extend: false, ..GridSpec::default() }).unwrap();
        let b = f_gue(-2.0, &GridSpec { length: 14.0, extend: false, ..GridSpec::default() }).unwrap();
        assert!((a.value - b.value).abs() <= a.truncation_tail_bound + a.err_estimate + b.err_estimate);
    }

    #[test]
    fn node_doubling_contracts() {
        let h = KernelHandle::airy();
        let d = doubling_sequence(&h, -3.0, 12.0, &[8, 16, 32]).unwrap();
        let (e1, e2) = ((d[0] - d[1]).abs(), (d[1] - d[2]).abs());
        assert!(e1 >= 4.0 * e2, "{e1} {e2}");
        let h = KernelHandle::crit(1.0).unwrap();
        let d = doubling_sequence(&h, -4.0, 12.0, &[8, 16, 32]).unwrap();
        let (e1, e2) = ((d[0] - d[1]).abs(), (d[1] - d[2]).abs());
        assert!(e1 >= 4.0 * e2, "{e1} {e2}");
    }

    #[test]
    fn crit_distribution_shape() {
        let g = GridSpec::default();
        assert!(f_crit(12.0, 1.0, &g).unwrap().value >= 1.0 - 1e-6);
        let v: Vec<f64> = [0.0, 1.0, 2.0].iter().map(|&x| f_crit(x, 1.0, &g).unwrap().value).collect();
        assert!(v[0] <= v[1] && v[1] <= v[2], "{v:?}");
        let left = f_crit(-15.0, 1.0, &g).unwrap();
        assert!(left.value <= 0.05, "{left:?}");
        assert!(f_crit(0.0, -1.0, &g).is_err());
    }

    #[test]
    fn airy_determinant_ignores_conjugation() {
        let grid = GridSpec::fixed(12.0, 60);
        let plain = fredholm_det(&KernelHandle::airy(), -1.0, &grid).unwrap().value;
        let conj = fredholm_det_fn(|s, t| (1.5 * (s - t)).exp() * crate::kernels::airy_kernel(s, t), -1.0, &grid).unwrap().value;
        assert!((plain - conj).abs() <= 1e-12, "{plain} vs {conj}");
    }

    #[test]
    fn tail_non_decay_is_reported() {
        let r = fredholm_det_fn(|s, t| sine_kernel(s, t) * 0.5, 0.0, &GridSpec::default());
        assert!(matches!(r, Err(Error::TailNonDecay { .. })));
        assert!(fredholm_det_fn(|_, _| 0.0, f64::NAN, &GridSpec::default()).is_err());
    }

    #[test]
    fn counts() {
        let h = KernelHandle::finite_n(ProductEnsembleParams::square(2, 1).unwrap());
        let total = expected_count(&h, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!((total - 2.0).abs() < 1e-3, "{total}");
        let g = expected_count(&KernelHandle::gaussian_limit(), -2.0, 2.0).unwrap();
        assert!((g - 0.954_499_736_103_641_6).abs() < 1e-3);
        assert!(expected_count(&h, 1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_window_counts_shrink() {
        // Points between the first and second levels, away from both.
        let (m, n) = (64, 2);
        let h = KernelHandle::finite_n(ProductEnsembleParams::square(n, m).unwrap());
        let s1 = scaling_normal(1, m, n).unwrap();
        let s2 = scaling_normal(2, m, n).unwrap();
        let counts: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&c| expected_count(&h, s2.x_of(c), s1.x_of(-c)).unwrap())
            .collect();
        assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
        let beyond = expected_count(&h, s1.x_of(4.0), f64::INFINITY).unwrap();
        assert!(beyond < 1e-2);
    }

    #[test]
    fn csv_table() {
        let csv = cdf_table_csv(&[0.0], |x| f_gue(x, &GridSpec::default())).unwrap();
        assert!(csv.starts_with("x,value,err_estimate,truncation_tail_bound,n_nodes_used\n0,0.96"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn conjugation_invariance(x in -3.0f64..1.0, c in -2.0f64..2.0) {
            let k = |s: f64, t: f64| 0.8 * (-(s * s + t * t) / 4.0).exp() * (1.0 + 0.5 * (s - t).sin());
            let grid = GridSpec::fixed(12.0, 60);
            let plain = fredholm_det_fn(k, x, &grid).unwrap().value;
            let conj = fredholm_det_fn(move |s, t| (c * (s - t)).exp() * k(s, t), x, &grid).unwrap().value;
            prop_assert!((plain - conj).abs() <= 1e-12);
        }

        #[test]
        fn finite_cdf_in_unit_interval(x in -3.0f64..4.0) {
            let p = ProductEnsembleParams::square(2, 1).unwrap();
            let r = finite_n_largest_cdf(&p, x, &GridSpec::default()).unwrap();
            prop_assert!(r.value >= -r.err_estimate && r.value <= 1.0 + r.err_estimate);
        }
    }
}
