//! Command-line driver: `kernel-eval`, `fredholm`, `sample`, `sweep` and `verify`.
//!
//! Grids use the range syntax `a:b:step` (a single number is a one-point
//! grid). With `--out PATH` the body goes to PATH and a JSON sidecar with the
//! configuration echo and crate version to `PATH.json`; otherwise the body is
//! printed. A JSON object named by the `CONFIG_FILE` environment variable
//! supplies default flags; flags given on the command line win.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure (with a
//! JSON diagnostic on stderr), 4 verification failure.

pub mod verify;

use crate::contours::QuadSpec;
use crate::ensemble::{self, GinibreProductSpec, ProductAlgorithm, RegimeKind, SampleBatch};
use crate::error::{Error, Result};
use crate::fredholm::{self, DeterminantResult, GridSpec};
use crate::kernels::{self, EvalMethod, KernelFamily, KernelHandle, KernelParams, ProductEnsembleParams, Transition};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, Parser, Serialize)]
#[command(name = "ginibre-lyapunov", version, about = "Kernels, Fredholm determinants and Monte Carlo for products of Ginibre matrices")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output file (stdout when absent); a JSON sidecar goes next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Kernel values on a grid.
    KernelEval(KernelEvalArgs),
    /// Distribution of the largest level as a Fredholm determinant.
    Fredholm(FredholmArgs),
    /// Monte Carlo batch of log squared singular values.
    Sample(SampleArgs),
    /// Discrepancy of a kernel transition across a parameter list.
    Sweep(SweepArgs),
    /// Run the verification battery.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleArgs {
    /// Matrix size N.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Number of factors M.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Offsets ν_1,…,ν_M (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub nu: Vec<u32>,
}

impl EnsembleArgs {
    fn params(&self) -> Result<ProductEnsembleParams> {
        let n = self.n.ok_or_else(|| Error::Config("--N is required".into()))?;
        let m = self.m.ok_or_else(|| Error::Config("--M is required".into()))?;
        ProductEnsembleParams::new(n, m, self.nu.clone())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelEvalArgs {
    /// finite-n, gaussian-limit, crit-edge, crit-edge-hat, crit-bulk, sine or airy.
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub gamma_prime: Option<f64>,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// x grid (and y grid unless --ygrid is given).
    #[arg(long, default_value = "-2:2:0.5", allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, allow_hyphen_values = true)]
    pub ygrid: Option<String>,
    /// Evaluate only K(x, x) at this point.
    #[arg(long, allow_hyphen_values = true)]
    pub diag: Option<f64>,
    /// auto, integral, series, reflection, closed-form, or both (crit-edge only).
    #[arg(long, default_value = "auto")]
    pub method: String,
    /// Relative tolerance of the contour quadrature.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FredholmArgs {
    /// f-gue, f-crit or finite-n.
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Points x (range syntax).
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub x: String,
    /// Panel length L.
    #[arg(long)]
    pub length: Option<f64>,
    /// Starting node count.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Doubling tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Keep the panel length fixed instead of extending it until the tail is negligible.
    #[arg(long)]
    pub fixed_length: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    /// normal-k, critical or airy-edge; also writes the ECDF of the standardised statistic.
    #[arg(long)]
    pub regime: Option<String>,
    /// Level used by normal-k.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Number of samples.
    #[arg(long = "n", default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leading values required at full precision (defaults to k, or N without a regime).
    #[arg(long)]
    pub top_k: Option<usize>,
    /// auto, staged-qr or direct-scaled.
    #[arg(long, default_value = "auto")]
    pub algorithm: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// crit-to-gauss, crit-to-airy or edge-to-bulk.
    #[arg(long)]
    pub kind: String,
    /// γ values for crit-to-gauss and crit-to-airy.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Vec<f64>,
    /// k values for edge-to-bulk.
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<f64>,
    /// γ for edge-to-bulk.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Square (x, y) grid; defaults to -1:1:0.5.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Divide every sample count by 10.
    #[arg(long)]
    pub quick: bool,
    /// Run only these criteria (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u32>,
    /// Treat failed trend checks as failures.
    #[arg(long)]
    pub strict: bool,
}

/// Parses `a:b:step` or a single number.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{t}` in range `{s}`")));
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
                return Err(Error::Config(format!("range `{s}` needs a ≤ b and step > 0")));
            }
            Ok(kernels::linspace_step(a, b, step))
        }
        _ => Err(Error::Config(format!("range `{s}` is not of the form a:b:step"))),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Turns the JSON object in `CONFIG_FILE` into flags placed before the
/// command-line flags of the subcommand, so the latter override them.
pub fn merge_config_file(args: Vec<OsString>, config: Option<&Path>) -> Result<Vec<OsString>> {
    let Some(path) = config else { return Ok(args) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("CONFIG_FILE {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("CONFIG_FILE {}: {e}", path.display())))?;
    let obj = value.as_object().ok_or_else(|| Error::Config("CONFIG_FILE must hold a JSON object".into()))?;
    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => flags.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(json_scalar).collect::<Result<_>>()?;
                flags.push(format!("{flag}={}", joined.join(",")).into());
            }
            other => flags.push(format!("{flag}={}", json_scalar(other)?).into()),
        }
    }
    // Insert after the subcommand name: the first argument past the program that is not a flag.
    let pos = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 2).unwrap_or(args.len());
    let mut out = args[..pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[pos..]);
    Ok(out)
}

fn json_scalar(v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        _ => Err(Error::Config(format!("unsupported CONFIG_FILE value {v}"))),
    }
}

/// Entry point of the binary: parses `args`, runs the command and returns the exit code.
pub fn run(args: Vec<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let config = std::env::var_os("CONFIG_FILE").map(PathBuf::from);
    let args = match merge_config_file(args, config.as_deref()) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            return EXIT_CONFIG;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(stdout, "{e}");
            } else {
                let _ = write!(stderr, "{e}");
            }
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            if code == EXIT_NUMERICAL {
                let diag = serde_json::json!({ "error": format!("{e:?}"), "message": e.to_string(), "config": &cli });
                let _ = writeln!(stderr, "{diag}");
            } else {
                let _ = writeln!(stderr, "{e}");
            }
            code
        }
    }
}

/// The body of an output file and its extra sidecar fields.
struct Artifact {
    csv: String,
    extra: serde_json::Value,
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    let (artifact, code) = match &cli.command {
        Command::KernelEval(a) => (kernel_eval(a)?, EXIT_OK),
        Command::Fredholm(a) => (fredholm_table(a)?, EXIT_OK),
        Command::Sample(a) => (sample(a, cli.out.as_deref())?, EXIT_OK),
        Command::Sweep(a) => (sweep(a)?, EXIT_OK),
        Command::Verify(a) => verify_cmd(a)?,
    };
    let body = match cli.format {
        Format::Csv => artifact.csv.clone(),
        Format::Json => csv_to_json(&artifact.csv)?,
    };
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &body)?;
            let sidecar = serde_json::json!({
                "config": cli,
                "code_version": env!("CARGO_PKG_VERSION"),
                "details": artifact.extra,
            });
            let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Numerical(e.to_string()))?;
            std::fs::write(sidecar_path(path), text)?;
        }
        None => stdout.write_all(body.as_bytes())?,
    }
    Ok(code)
}

/// `PATH.json` next to an output file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// CSV with a header row into a JSON array of records; numeric fields become numbers.
pub fn csv_to_json(csv: &str) -> Result<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<serde_json::Value> = lines
        .map(|line| {
            let obj: serde_json::Map<String, serde_json::Value> = header
                .iter()
                .zip(line.split(','))
                .map(|(k, v)| {
                    let val = match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => serde_json::json!(x),
                        _ => serde_json::json!(v),
                    };
                    (k.to_string(), val)
                })
                .collect();
            serde_json::Value::Object(obj)
        })
        .collect();
    serde_json::to_string_pretty(&rows).map_err(|e| Error::Numerical(e.to_string()))
}

// ---------------------------------------------------------------------------
// kernel-eval
// ---------------------------------------------------------------------------

fn kernel_handle(a: &KernelEvalArgs) -> Result<KernelHandle> {
    let family = KernelFamily::parse(&a.family)?;
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("--{name} is required for {}", a.family)));
    let params = match family {
        KernelFamily::FiniteN => KernelParams::Ensemble(a.ensemble.params()?),
        KernelFamily::CritEdge | KernelFamily::CritEdgeHat => KernelParams::Gamma(need(a.gamma, "gamma")?),
        KernelFamily::CritBulk => KernelParams::GammaPrime(need(a.gamma_prime, "gamma-prime")?),
        _ => KernelParams::None,
    };
    let handle = match a.method.as_str() {
        "auto" => match (&family, &params) {
            (KernelFamily::FiniteN, KernelParams::Ensemble(p)) => KernelHandle::finite_n(p.clone()),
            (KernelFamily::CritEdge, KernelParams::Gamma(g)) => KernelHandle::crit(*g)?,
            (KernelFamily::CritEdgeHat, KernelParams::Gamma(g)) => KernelHandle::crit_hat(*g)?,
            (KernelFamily::CritBulk, KernelParams::GammaPrime(g)) => KernelHandle::crit_bulk(*g)?,
            (KernelFamily::Sine, _) => KernelHandle::sine(),
            (KernelFamily::Airy, _) => KernelHandle::airy(),
            _ => KernelHandle::gaussian_limit(),
        },
        other => {
            let method = match other {
                "integral" | "double-contour" => EvalMethod::DoubleContour,
                "series" | "residue" | "residue-series" => EvalMethod::ResidueSeries,
                "reflection" => EvalMethod::Reflection,
                "closed-form" => EvalMethod::ClosedForm,
                _ => return Err(Error::Config(format!("unknown method `{other}`"))),
            };
            KernelHandle::new(family, params, method)?
        }
    };
    Ok(match a.tol {
        Some(t) => {
            let d = QuadSpec::default();
            handle.with_spec(QuadSpec::new(t, d.abs_tol, d.max_subdivisions, d.ray_truncation_drop)?)
        }
        None => handle,
    })
}

fn kernel_eval(a: &KernelEvalArgs) -> Result<Artifact> {
    let (xs, ys) = match a.diag {
        Some(x) => (vec![x], vec![x]),
        None => {
            let xs = parse_range(&a.grid)?;
            let ys = match &a.ygrid {
                Some(g) => parse_range(g)?,
                None => xs.clone(),
            };
            (xs, ys)
        }
    };
    if a.method == "both" {
        if a.family != "crit-edge" {
            return Err(Error::Config("--method both is available for crit-edge only".into()));
        }
        let g = a.gamma.ok_or_else(|| Error::Config("--gamma is required for crit-edge".into()))?;
        let spec = QuadSpec::default();
        let pts: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
        let vals: Vec<(f64, f64)> = pts
            .par_iter()
            .map(|&(x, y)| Ok((kernels::crit_kernel_integral(x, y, g, &spec)?, kernels::crit_kernel_series(x, y, g)?)))
            .collect::<Result<_>>()?;
        let mut csv = String::from("x,y,integral,series,abs_diff\n");
        let mut worst: f64 = 0.0;
        for (&(x, y), &(i, s)) in pts.iter().zip(&vals) {
            worst = worst.max((i - s).abs());
            let _ = writeln!(csv, "{x},{y},{i:.16e},{s:.16e},{:.3e}", (i - s).abs());
        }
        return Ok(Artifact { csv, extra: serde_json::json!({ "max_abs_diff": worst }) });
    }
    let h = kernel_handle(a)?;
    let csv = kernels::kernel_grid_csv(&h, &xs, &ys)?;
    Ok(Artifact { csv, extra: serde_json::json!({ "family": h.label(), "params": h.params_string() }) })
}

// ---------------------------------------------------------------------------
// fredholm
// ---------------------------------------------------------------------------

fn fredholm_table(a: &FredholmArgs) -> Result<Artifact> {
    let xs = parse_range(&a.x)?;
    let mut grid = GridSpec::default();
    if let Some(l) = a.length {
        grid.length = l;
    }
    if let Some(n) = a.nodes {
        grid.n_nodes = n;
        grid.max_nodes = grid.max_nodes.max(n);
    }
    if let Some(t) = a.tol {
        grid.tol = t;
    }
    grid.extend = !a.fixed_length;
    let eval: Box<dyn Fn(f64) -> Result<DeterminantResult> + Sync> = match a.dist.as_str() {
        "f-gue" => Box::new(move |x| fredholm::f_gue(x, &grid)),
        "f-crit" => {
            let g = a.gamma.ok_or_else(|| Error::Config("--gamma is required for f-crit".into()))?;
            Box::new(move |x| fredholm::f_crit(x, g, &grid))
        }
        "finite-n" => {
            let p = a.ensemble.params()?;
            Box::new(move |x| fredholm::finite_n_largest_cdf(&p, x, &grid))
        }
        other => return Err(Error::Config(format!("unknown distribution `{other}`"))),
    };
    let results: Vec<DeterminantResult> = xs.par_iter().map(|&x| eval(x)).collect::<Result<_>>()?;
    let mut it = results.iter();
    let csv = fredholm::cdf_table_csv(&xs, |_| Ok(*it.next().expect("one result per x")))?;
    let max_err = results.iter().map(|r| r.err_estimate).fold(0.0, f64::max);
    Ok(Artifact { csv, extra: serde_json::json!({ "grid": grid, "max_err_estimate": max_err }) })
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

/// `PATH.ecdf.csv` next to a batch file.
pub fn ecdf_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ecdf.csv");
    PathBuf::from(s)
}

fn sample(a: &SampleArgs, out: Option<&Path>) -> Result<Artifact> {
    let p = a.ensemble.params()?;
    let algorithm = match a.algorithm.as_str() {
        "auto" => ProductAlgorithm::Auto,
        "staged-qr" => ProductAlgorithm::StagedQr,
        "direct-scaled" => ProductAlgorithm::DirectScaled,
        other => return Err(Error::Config(format!("unknown algorithm `{other}`"))),
    };
    let regime = a.regime.as_deref().map(|r| RegimeKind::parse(r, a.k)).transpose()?;
    let top_k = a.top_k.unwrap_or(match regime {
        Some(r) => r.level(),
        None => p.n,
    });
    let spec = GinibreProductSpec::new(p.clone(), a.samples, a.seed, top_k)?.with_algorithm(algorithm);
    let batch = SampleBatch::generate(&spec)?;
    let mut extra = serde_json::from_str::<serde_json::Value>(&batch.sidecar_json()?).map_err(|e| Error::Numerical(e.to_string()))?;
    if let Some(r) = regime {
        let map = r.scaling_map(&p)?;
        let xi: Vec<f64> = batch.column(r.level()).into_iter().map(|v| map.xi_of(v)).collect();
        let emp = ensemble::EmpiricalDistribution::new(xi)?;
        extra["regime"] = serde_json::json!({ "kind": r, "map": map.describe(), "warnings": r.compatibility_warnings(&p) });
        if let Some(path) = out {
            std::fs::write(ecdf_path(path), emp.to_csv())?;
        }
    }
    Ok(Artifact { csv: batch.to_csv(), extra })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn sweep(a: &SweepArgs) -> Result<Artifact> {
    let grid = match &a.grid {
        Some(g) => {
            let pts = parse_range(g)?;
            pts.iter().flat_map(|&x| pts.iter().map(move |&y| (x, y))).collect()
        }
        None => kernels::square_grid(-1.0, 1.0, 0.5),
    };
    let params = if a.kind == "edge-to-bulk" { &a.ks } else { &a.gammas };
    if params.is_empty() {
        return Err(Error::Config(format!("{} needs {}", a.kind, if a.kind == "edge-to-bulk" { "--ks" } else { "--gammas" })));
    }
    let mut csv = String::from("kind,param,discrepancy\n");
    let mut values = Vec::new();
    for &param in params {
        let t = Transition::parse(&a.kind, param, a.gamma)?;
        let d = kernels::transition_discrepancy(t, &grid)?;
        values.push(d);
        let _ = writeln!(csv, "{},{param},{d:.6e}", t.as_str());
    }
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    Ok(Artifact { csv, extra: serde_json::json!({ "grid_points": grid.len(), "strictly_decreasing": decreasing }) })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn verify_cmd(a: &VerifyArgs) -> Result<(Artifact, i32)> {
    let scale = if a.quick { verify::Scale::Quick } else { verify::Scale::Full };
    let ids: Vec<u32> = if a.only.is_empty() { verify::CRITERIA.collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|id| !verify::CRITERIA.contains(id)) {
        return Err(Error::Config(format!("no criterion {bad}")));
    }
    let mut csv = String::from("criterion,status,title,measured,elapsed_s,budget_s\n");
    let mut reports = Vec::new();
    for id in ids {
        let r = verify::run_criterion(id, scale, None);
        eprintln!("{}", r.line());
        let _ = writeln!(
            csv,
            "{},{:?},{},\"{}\",{:.1},{:.0}",
            r.id,
            r.status(),
            r.title,
            r.measured.replace(',', ";"),
            r.elapsed_s,
            r.budget_s
        );
        reports.push(r);
    }
    let (_, ok) = verify::summarize(&reports, a.strict);
    let code = if ok { EXIT_OK } else { EXIT_ACCEPTANCE };
    Ok((Artifact { csv, extra: serde_json::json!({ "reports": reports }) }, code))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<OsString> = std::iter::once("ginibre-lyapunov").chain(args.iter().copied()).map(OsString::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("-2:2:0.5").unwrap().len(), 9);
        assert_eq!(parse_range("3").unwrap(), vec![3.0]);
        assert!(parse_range("1:0:0.5").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn sine_grid_has_unit_diagonal() {
        let (code, out, _) = run_args(&["kernel-eval", "--family", "sine", "--grid", "-2:2:0.5"]);
        assert_eq!(code, 0);
        let rows: Vec<Vec<String>> = out.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
        assert_eq!(rows.len(), 81);
        for r in rows.iter().filter(|r| r[0] == r[1]) {
            assert_eq!(r[2].parse::<f64>().unwrap(), 1.0);
        }
    }

    #[test]
    fn finite_n_diagonal_value() {
        let (code, out, _) = run_args(&["kernel-eval", "--family", "finite-n", "--N", "1", "--M", "1", "--diag", "0"]);
        assert_eq!(code, 0);
        let v: f64 = out.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-7, "{v}");
        let (code, _, _) = run_args(&["kernel-eval", "--family", "finite-n", "--N", "1", "--M", "0", "--diag", "0"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn crit_edge_both_methods_agree() {
        let (code, out, _) = run_args(&["kernel-eval", "--family", "crit-edge", "--gamma", "1", "--method", "both", "--grid", "-1:1:1"]);
        assert_eq!(code, 0);
        for line in out.lines().skip(1) {
            let f: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            assert!((f[2] - f[3]).abs() <= 1e-8);
        }
    }

    #[test]
    fn fredholm_tables() {
        let (code, out, _) = run_args(&["fredholm", "--dist", "f-gue", "--x", "-4:2:1"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("x,value,err_estimate,truncation_tail_bound,n_nodes_used\n"));
        let vals: Vec<f64> = out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let (code, out, _) = run_args(&["fredholm", "--dist", "finite-n", "--N", "1", "--M", "1", "--x", "0"]);
        assert_eq!(code, 0);
        let v: f64 = out.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - 0.632_120_558_8).abs() < 1e-6);
        let (code, _, _) = run_args(&["fredholm", "--dist", "f-crit", "--x", "0"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn numerical_failures_exit_three() {
        let (code, _, err) = run_args(&["fredholm", "--dist", "f-gue", "--x", "-4", "--length", "1", "--fixed-length"]);
        assert_eq!(code, EXIT_NUMERICAL, "{err}");
        let diag: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
        assert!(diag["message"].as_str().is_some());
    }

    #[test]
    fn sample_files_are_reproducible() {
        let dir = std::env::temp_dir().join(format!("gl-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let a = dir.join("a.csv");
        let b = dir.join("b.csv");
        for p in [&a, &b] {
            let (code, _, _) = run_args(&["sample", "--regime", "airy-edge", "--N", "16", "--M", "2", "--n", "50", "--seed", "7", "--out", p.to_str().unwrap()]);
            assert_eq!(code, 0);
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(std::fs::read(ecdf_path(&a)).unwrap(), std::fs::read(ecdf_path(&b)).unwrap());
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&a)).unwrap()).unwrap();
        assert_eq!(side["details"]["spec"]["seed"], 7);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sweep_is_decreasing() {
        let (code, out, _) = run_args(&["sweep", "--kind", "crit-to-gauss", "--gammas", "25,100,400"]);
        assert_eq!(code, 0);
        let d: Vec<f64> = out.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        assert_eq!(d.len(), 3);
        assert!(d[1] < d[0] && d[2] < d[1], "{d:?}");
    }

    #[test]
    fn json_format() {
        let (code, out, _) = run_args(&["kernel-eval", "--family", "airy", "--grid", "0", "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v[0]["value"].as_f64().unwrap() - 0.066_987_483_8).abs() < 1e-9);
    }

    #[test]
    fn config_file_flags_are_overridden() {
        let path = std::env::temp_dir().join(format!("gl-config-{}.json", std::process::id()));
        std::fs::write(&path, r#"{"family": "sine", "grid": "0:1:1", "quick": false}"#).unwrap();
        let argv: Vec<OsString> = ["ginibre-lyapunov", "kernel-eval", "--grid", "0"].iter().map(OsString::from).collect();
        let merged = merge_config_file(argv, Some(&path)).unwrap();
        let cli = Cli::try_parse_from(merged).unwrap();
        match cli.command {
            Command::KernelEval(a) => {
                assert_eq!(a.family, "sine");
                assert_eq!(a.grid, "0");
            }
            _ => panic!("wrong command"),
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn config_errors_exit_two() {
        assert_eq!(run_args(&["kernel-eval", "--family", "nope"]).0, EXIT_CONFIG);
        assert_eq!(run_args(&["bogus"]).0, EXIT_CONFIG);
        assert_eq!(run_args(&["verify", "--only", "15"]).0, EXIT_CONFIG);
        assert_eq!(run_args(&["sample", "--N", "2", "--M", "2", "--algorithm", "lu"]).0, EXIT_CONFIG);
    }

    #[test]
    fn verify_reports_selected_criteria() {
        let (code, out, _) = run_args(&["verify", "--quick", "--only", "2,14"]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().count(), 3);
        assert!(out.lines().nth(1).unwrap().starts_with("2,Pass"));
    }
}
