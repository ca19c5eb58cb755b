// Monte Carlo for long Ginibre products: staged QR keeps every singular value
// finite, and the time averages approach the Lyapunov spectrum.
//
//     cargo run --release --example lyapunov_sampling

use ginibre_lyapunov::ensemble::{self, GinibreProductSpec, SampleBatch};
use ginibre_lyapunov::kernels::ProductEnsembleParams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = ProductEnsembleParams::square(4, 200)?;
    let spec = GinibreProductSpec::new(p.clone(), 200, 42, 4)?;
    println!("algorithm: {:?}", spec.resolved_algorithm());
    let batch = SampleBatch::generate(&spec)?;

    let theory = ensemble::time_average_theory(&p);
    let limit = ensemble::lyapunov_spectrum_theory(4);
    for k in 1..=4 {
        let lam = batch.lyapunov_exponents(k);
        let mean = lam.iter().sum::<f64>() / lam.len() as f64;
        let var = lam.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (lam.len() - 1) as f64;
        let se = (var / lam.len() as f64).sqrt();
        println!("λ_{k}: mean {mean:+.5} ± {se:.5}  finite-M {:+.5}  M→∞ {:+.5}", theory[k - 1], limit[k - 1]);
        if (mean - theory[k - 1]).abs() > 5.0 * se {
            return Err(format!("λ_{k} is more than five standard errors off").into());
        }
    }

    // Same seed, same rows.
    let again = SampleBatch::generate(&spec)?;
    assert_eq!(batch.to_csv(), again.to_csv());
    println!("{}", batch.to_csv().lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
