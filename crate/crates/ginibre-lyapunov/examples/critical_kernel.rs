// The critical edge kernel evaluated along two independent routes: the double
// contour integral and the residue series. Also the hatted form and the bulk kernel.
//
//     cargo run --release --example critical_kernel

use ginibre_lyapunov::contours::QuadSpec;
use ginibre_lyapunov::kernels::{self, KernelHandle};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = QuadSpec::default();
    let gamma = 1.0;
    let mut worst: f64 = 0.0;
    for (x, y) in [(-1.0, 0.5), (0.0, 0.0), (1.5, -0.5)] {
        let a = kernels::crit_kernel_integral(x, y, gamma, &spec)?;
        let b = kernels::crit_kernel_series(x, y, gamma)?;
        worst = worst.max((a - b).abs());
        println!("K_crit({x:>4}, {y:>4}; γ=1): integral {a:.14}  series {b:.14}");
    }
    println!("largest disagreement {worst:.2e}");
    if worst > 1e-8 {
        return Err("the two routes disagree".into());
    }

    let hat = KernelHandle::crit_hat(gamma)?;
    println!("K̂_crit(0, 0) = {:.12}", hat.eval(0.0, 0.0)?);

    let bulk = KernelHandle::crit_bulk(0.5)?;
    let grid = kernels::linspace_step(-1.0, 1.0, 1.0);
    let (m, _) = bulk.matrix(&grid, &grid)?;
    println!("bulk kernel γ′ = 0.5 on {{-1, 0, 1}}²:\n{m:.8}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
