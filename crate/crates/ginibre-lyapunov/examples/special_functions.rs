// log Γ, ψ, ψ′ on the complex plane, the saddle equation ψ′(t₀) = γ,
// a theta series and the Airy pair.
//
//     cargo run --example special_functions

use ginibre_lyapunov::specfun::{self, EvalPrecision};
use num_complex::Complex64;
use std::f64::consts::PI;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let z = Complex64::new(0.3, 2.5);
    let lg = specfun::log_gamma(z)?;
    let psi = specfun::digamma(z)?;
    let psi1 = specfun::trigamma(z)?;
    println!("z = {z}: log Γ = {lg:.12}, ψ = {psi:.12}, ψ′ = {psi1:.12}");

    // Recurrence log Γ(z + 1) = log Γ(z) + log z, up to a multiple of 2πi.
    let gap = specfun::log_gamma(z + 1.0)? - lg - z.ln();
    let k = (gap.im / (2.0 * PI)).round();
    let resid = (gap - Complex64::new(0.0, 2.0 * PI * k)).norm();
    println!("recurrence residual {resid:.2e}");
    if resid > 1e-12 {
        return Err(format!("log Γ recurrence off by {resid:e}").into());
    }

    // Poles are reported, not evaluated.
    assert!(specfun::digamma(Complex64::new(-2.0, 0.0)).is_err());

    for gamma in [0.1, 1.0, 10.0] {
        let t0 = specfun::solve_t0(gamma)?;
        println!("γ = {gamma:>5}: t₀ = {t0:.12}, ψ′(t₀) − γ = {:.1e}", specfun::trigamma_real(t0) - gamma);
    }

    // ϑ(0; i) = π^{1/4} / Γ(3/4).
    let theta = specfun::jacobi_theta(Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0), EvalPrecision::default())?;
    let exact = PI.powf(0.25) / specfun::log_gamma(Complex64::new(0.75, 0.0))?.re.exp();
    println!("ϑ(0; i) = {:.15} (closed form {exact:.15})", theta.re);
    if (theta.re - exact).abs() > 1e-13 {
        return Err("theta series disagrees with its closed form".into());
    }

    let (ai, aip) = specfun::airy_ai_pair(0.0);
    println!("Ai(0) = {ai:.15}, Ai′(0) = {aip:.15}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
