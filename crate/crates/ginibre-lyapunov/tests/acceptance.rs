//! Acceptance battery. Runs without the libtest harness so that every
//! criterion prints its `[PASS]` or `[FAIL]` line; the process fails if any
//! criterion does. Tolerances, grids and sample counts are fixed inside
//! `ginibre_lyapunov::cli::verify`.
//!
//! Positional arguments select criteria by number (`cargo test --test
//! acceptance -- 3 10`); flags are ignored.
//!
//! Criterion 10 is checked against a 256-bit one-sided Jacobi SVD of the
//! explicitly formed product.

use ginibre_lyapunov::cli::verify::{run_criterion, Scale, CRITERIA};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rug::Float;

const PREC: u32 = 256;

#[derive(Clone)]
struct C {
    re: Float,
    im: Float,
}

impl C {
    fn zero() -> Self {
        C { re: Float::new(PREC), im: Float::new(PREC) }
    }

    fn from(z: Complex64) -> Self {
        C { re: Float::with_val(PREC, z.re), im: Float::with_val(PREC, z.im) }
    }

    /// self += a * b
    fn add_mul(&mut self, a: &C, b: &C) {
        self.re += Float::with_val(PREC, &a.re * &b.re) - Float::with_val(PREC, &a.im * &b.im);
        self.im += Float::with_val(PREC, &a.re * &b.im) + Float::with_val(PREC, &a.im * &b.re);
    }

    fn norm_sqr(&self) -> Float {
        Float::with_val(PREC, self.re.square_ref()) + Float::with_val(PREC, self.im.square_ref())
    }
}

/// Columns of the product X_M ⋯ X_1 at 256 bits.
fn product_columns(factors: &[DMatrix<Complex64>]) -> Vec<Vec<C>> {
    let lift = |m: &DMatrix<Complex64>| -> Vec<Vec<C>> {
        (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| C::from(m[(i, j)])).collect()).collect()
    };
    let mut p = lift(&factors[0]);
    for f in &factors[1..] {
        let x = lift(f);
        let rows = f.nrows();
        p = p
            .iter()
            .map(|col| {
                let mut out = vec![C::zero(); rows];
                for (k, pk) in col.iter().enumerate() {
                    for (i, o) in out.iter_mut().enumerate() {
                        o.add_mul(&x[k][i], pk);
                    }
                }
                out
            })
            .collect();
    }
    p
}

/// log σ² of the product, descending, by one-sided Jacobi on columns.
fn multiprecision_log_sv(factors: &[DMatrix<Complex64>]) -> Vec<f64> {
    let mut a = product_columns(factors);
    let n = a.len();
    let tol = Float::with_val(PREC, Float::i_exp(1, -240));
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a[p].iter().fold(Float::new(PREC), |s, z| s + z.norm_sqr());
                let beta = a[q].iter().fold(Float::new(PREC), |s, z| s + z.norm_sqr());
                // g = a_p^H a_q
                let mut g = C::zero();
                for (x, y) in a[p].iter().zip(&a[q]) {
                    let xc = C { re: x.re.clone(), im: Float::with_val(PREC, -&x.im) };
                    g.add_mul(&xc, y);
                }
                let gabs = Float::with_val(PREC, g.norm_sqr().sqrt_ref());
                let scale = Float::with_val(PREC, &alpha * &beta).sqrt();
                if gabs <= Float::with_val(PREC, &tol * &scale) || gabs.is_zero() {
                    continue;
                }
                rotated = true;
                // Rotate a_q by the phase of g so the off-diagonal entry is real.
                let ph = C { re: Float::with_val(PREC, &g.re / &gabs), im: -Float::with_val(PREC, &g.im / &gabs) };
                let zeta = Float::with_val(PREC, &beta - &alpha) / Float::with_val(PREC, 2 * &gabs);
                let root = Float::with_val(PREC, Float::with_val(PREC, zeta.square_ref()) + 1u32).sqrt();
                let mut t = Float::with_val(PREC, 1u32) / (Float::with_val(PREC, zeta.abs_ref()) + root);
                if zeta.is_sign_negative() {
                    t = -t;
                }
                let c = Float::with_val(PREC, Float::with_val(PREC, t.square_ref()) + 1u32).sqrt().recip();
                let s = Float::with_val(PREC, &c * &t);
                for i in 0..a[p].len() {
                    let mut bq = C::zero();
                    bq.add_mul(&ph, &a[q][i]);
                    let ap = a[p][i].clone();
                    a[p][i] = C {
                        re: Float::with_val(PREC, &c * &ap.re) - Float::with_val(PREC, &s * &bq.re),
                        im: Float::with_val(PREC, &c * &ap.im) - Float::with_val(PREC, &s * &bq.im),
                    };
                    a[q][i] = C {
                        re: Float::with_val(PREC, &s * &ap.re) + Float::with_val(PREC, &c * &bq.re),
                        im: Float::with_val(PREC, &s * &ap.im) + Float::with_val(PREC, &c * &bq.im),
                    };
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut v: Vec<f64> = a
        .iter()
        .map(|col| col.iter().fold(Float::new(PREC), |s, z| s + z.norm_sqr()).ln().to_f64())
        .collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

fn oracle_self_checks() -> Result<(), String> {
    let d1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 1e-30)]));
    let d2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(0.0, 3.0), Complex64::new(1e-30, 0.0)]));
    let v = multiprecision_log_sv(&[d1, d2]);
    if (v[0] - 36f64.ln()).abs() > 1e-14 || (v[1] - 2.0 * 1e-60f64.ln()).abs() > 1e-12 {
        return Err(format!("diagonal product gave {v:?}"));
    }

    let mut rng = ginibre_lyapunov::ensemble::sample_stream(5, 0);
    let f: Vec<DMatrix<Complex64>> = (0..3).map(|_| ginibre_lyapunov::ensemble::sample_ginibre(4, 4, &mut rng)).collect();
    let mp = multiprecision_log_sv(&f);
    let dp = ginibre_lyapunov::cli::verify::double_precision_oracle(&f);
    if mp.iter().zip(&dp).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(format!("short product: {mp:?} vs {dp:?}"));
    }
    Ok(())
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();

    if let Err(e) = oracle_self_checks() {
        println!("[FAIL] multiprecision oracle self-check: {e}");
        failed.push(0);
    }
    for id in CRITERIA.filter(|id| selected.is_empty() || selected.contains(id)) {
        let report = run_criterion(id, Scale::Full, Some(&multiprecision_log_sv));
        println!("{}", report.line());
        if !report.strict_pass() {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing {failed:?}");
        std::process::exit(1);
    }
}
