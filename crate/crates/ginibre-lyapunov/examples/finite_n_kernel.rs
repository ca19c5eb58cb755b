// The finite-N correlation kernel of log(Π*Π) for a product of Ginibre matrices.
//
//     cargo run --release --example finite_n_kernel

use ginibre_lyapunov::kernels::{self, KernelHandle, ProductEnsembleParams};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // One 1×1 factor: log|z|² with |z|² ~ Exp(1), so the density is e^{x − e^x}.
    let single = KernelHandle::finite_n(ProductEnsembleParams::square(1, 1)?);
    for x in [-2.0, 0.0, 1.0] {
        let k = single.eval(x, x)?;
        let exact = (x - x.exp()).exp();
        println!("N=1 M=1 K({x}, {x}) = {k:.10} (density {exact:.10})");
        if (k - exact).abs() > 1e-8 {
            return Err(format!("one-point density off at x = {x}").into());
        }
    }

    // A rectangular product with offsets ν = (0, 2).
    let p = ProductEnsembleParams::new(3, 2, vec![0, 2])?;
    let h = KernelHandle::finite_n(p);
    let grid = kernels::linspace_step(-1.0, 2.0, 1.5);
    print!("{}", kernels::kernel_grid_csv(&h, &grid, &grid)?);

    let (k, err) = h.eval_with_error(0.5, 0.5)?;
    println!("{} [{}] K(0.5, 0.5) = {k:.10} ± {err:.1e}", h.label(), h.params_string());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
