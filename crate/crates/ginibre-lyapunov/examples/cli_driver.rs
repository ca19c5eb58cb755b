// Drive the command-line front end in-process and read its CSV output.
//
//     cargo run --release --example cli_driver

use std::ffi::OsString;

fn call(args: &[&str]) -> Result<String, Box<dyn std::error::Error>> {
    let argv: Vec<OsString> = std::iter::once("ginibre-lyapunov").chain(args.iter().copied()).map(OsString::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = ginibre_lyapunov::cli::run(argv, &mut out, &mut err);
    if code != 0 {
        return Err(format!("exit {code}: {}", String::from_utf8_lossy(&err)).into());
    }
    Ok(String::from_utf8(out)?)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", call(&["kernel-eval", "--family", "sine", "--grid", "-1:1:1"])?);
    print!("{}", call(&["kernel-eval", "--family", "crit-edge", "--gamma", "1", "--method", "both", "--grid", "0"])?);
    print!("{}", call(&["fredholm", "--dist", "f-gue", "--x", "-3:1:2"])?);
    print!("{}", call(&["sweep", "--kind", "crit-to-gauss", "--gammas", "25,100"])?);

    let batch = call(&["sample", "--N", "3", "--M", "8", "--n", "2", "--seed", "1"])?;
    println!("{} sample rows", batch.lines().count() - 1);

    // Configuration errors come back as exit code 2.
    let argv: Vec<OsString> = ["ginibre-lyapunov", "kernel-eval", "--family", "finite-n", "--N", "1", "--M", "0"].iter().map(OsString::from).collect();
    let code = ginibre_lyapunov::cli::run(argv, &mut Vec::new(), &mut Vec::new());
    println!("M = 0 exits with {code}");
    assert_eq!(code, 2);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
