// Sine and Airy kernels, and how the critical kernel moves between regimes.
//
//     cargo run --release --example limit_kernels

use ginibre_lyapunov::kernels::{self, Transition};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("sine(0, 0) = {}, sine(0, 1) = {:.3e}", kernels::sine_kernel(0.0, 0.0), kernels::sine_kernel(0.0, 1.0));
    println!("airy(0, 0) = {:.12}, airy(1, -1) = {:.12}", kernels::airy_kernel(0.0, 0.0), kernels::airy_kernel(1.0, -1.0));

    // Large γ pushes the critical kernel towards the Gaussian one.
    let grid = kernels::square_grid(-1.0, 1.0, 0.5);
    let mut last = f64::INFINITY;
    for gamma in [25.0, 100.0, 400.0] {
        let d = kernels::transition_discrepancy(Transition::CritToGauss { gamma }, &grid)?;
        println!("crit-to-gauss γ = {gamma:>5}: sup discrepancy {d:.4e}");
        if d >= last {
            return Err("discrepancy did not shrink".into());
        }
        last = d;
    }

    // Pointwise view of one transition.
    let few = [(0.0, 0.0), (0.5, -0.5)];
    for (a, b) in kernels::transition_values(Transition::CritToGauss { gamma: 100.0 }, &few)? {
        println!("  rescaled critical {a:.8}  limit {b:.8}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
