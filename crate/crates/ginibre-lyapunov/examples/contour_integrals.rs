// Closed and open contours with adaptive Gauss–Kronrod quadrature.
//
//     cargo run --example contour_integrals

use ginibre_lyapunov::contours::{self, ComplexPath, QuadSpec};
use ginibre_lyapunov::specfun;
use num_complex::Complex64;
use std::f64::consts::PI;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = QuadSpec::default();

    // The rectangle around 0, −1, −2 picks up the residues (−1)^k / k! of Γ.
    let rect = contours::sigma_encircling(3, 0.25)?;
    println!("closed: {}, winding about −1: {}", rect.is_closed(), rect.winding_number(Complex64::new(-1.0, 0.0)));
    let gamma = |s: Complex64| specfun::log_gamma_unchecked(s).exp();
    let res = contours::integrate(gamma, &rect, &spec).into_result()?;
    let expected = Complex64::new(0.0, 2.0 * PI) * (1.0 - 1.0 + 0.5);
    println!("∮ Γ(s) ds = {:.14} (expected {expected:.14}), error estimate {:.1e}", res.value, res.err);
    if (res.value - expected).norm() > 1e-10 {
        return Err("residue sum not reproduced".into());
    }

    // A vertical line: (1/2πi) ∫_{1-i∞}^{1+i∞} e^{s²/2 − s} ds = e^{-1/2} / √(2π).
    let line = ComplexPath::vertical_line(1.0);
    let f = |s: Complex64| (s * s / 2.0 - s).exp();
    let r = contours::integrate(f, &line, &spec).into_result()?;
    let value = r.value / Complex64::new(0.0, 2.0 * PI);
    let exact = (-0.5f64).exp() / (2.0 * PI).sqrt();
    println!("line integral {:.15} vs {exact:.15} ({} evaluations)", value.re, r.evaluations);
    if (value.re - exact).abs() > 1e-12 {
        return Err("line integral wrong".into());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
