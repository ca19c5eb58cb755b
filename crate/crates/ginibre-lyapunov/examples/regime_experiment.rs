// Standardise the largest level in a chosen regime and compare its empirical
// law with the predicted limit through the Kolmogorov–Smirnov distance.
//
//     cargo run --release --example regime_experiment

use ginibre_lyapunov::ensemble::{self, RegimeKind, TabulatedCdf};
use ginibre_lyapunov::fredholm::{self, GridSpec};
use ginibre_lyapunov::kernels::ProductEnsembleParams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // Many factors, few rows: Gaussian fluctuations.
    let p = ProductEnsembleParams::square(2, 256)?;
    let exp = ensemble::regime_experiment(RegimeKind::NormalK { k: 1 }, &p, 400, 3)?;
    let ks = ensemble::ks_statistic(&exp.distribution, ensemble::normal_cdf);
    println!("{}: {} samples, KS to Φ = {ks:.4}", exp.map.describe(), exp.distribution.n);
    for w in &exp.warnings {
        println!("  warning: {w}");
    }

    // Few factors, many rows: Tracy–Widom at the edge.
    let q = ProductEnsembleParams::square(32, 2)?;
    let edge = ensemble::regime_experiment(RegimeKind::AiryEdge, &q, 200, 3)?;
    let tw = TabulatedCdf::from_fn(-6.0, 4.0, 0.25, |x| fredholm::f_gue(x, &GridSpec::default()).map(|r| r.value))?;
    let ks_tw = ensemble::ks_statistic(&edge.distribution, |x| tw.eval(x));
    println!(
        "airy edge N=32 M=2: mean {:.3}, variance {:.3}, KS to F_GUE = {ks_tw:.4}",
        edge.distribution.mean(),
        edge.distribution.variance()
    );
    if !(ks.is_finite() && ks_tw.is_finite() && ks < 1.0 && ks_tw < 1.0) {
        return Err("KS distance out of range".into());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
