// Largest-level distributions as Fredholm determinants on a Gauss–Legendre grid.
//
//     cargo run --release --example fredholm_distributions

use ginibre_lyapunov::fredholm::{self, GridSpec};
use ginibre_lyapunov::kernels::ProductEnsembleParams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::default();

    let mut prev = 0.0;
    for x in [-4.0, -2.0, 0.0, 2.0] {
        let r = fredholm::f_gue(x, &grid)?;
        println!(
            "F_GUE({x:>4}) = {:.12}  err {:.1e}  nodes {}  panel length {:.1}",
            r.value, r.err_estimate, r.n_nodes_used, r.length_used
        );
        if r.value < prev {
            return Err("F_GUE is not monotone".into());
        }
        prev = r.value;
    }

    let f = fredholm::f_crit(0.0, 1.0, &grid)?;
    println!("F_crit(0; γ=1) = {:.12}", f.value);

    // For N = M = 1 the largest level is log Exp(1): P(≤ 0) = 1 − 1/e.
    let p = ProductEnsembleParams::square(1, 1)?;
    let one = fredholm::finite_n_largest_cdf(&p, 0.0, &grid)?;
    let exact = 1.0 - (-1.0f64).exp();
    println!("N=1 M=1: P(x_max ≤ 0) = {:.12} (exact {exact:.12})", one.value);
    if (one.value - exact).abs() > 1e-6 {
        return Err("single-factor CDF wrong".into());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
