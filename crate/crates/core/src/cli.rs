//! Command-line front end: `analyze`, `solve`, `perturb`, `sweep`.
//!
//! Every command reads one JSON config (see [`RunConfig`]) and writes its
//! outputs into a directory. Exit codes: 0 dichotomic, 2 not dichotomic,
//! 3 inconclusive, 1 on invalid input or computation errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dichotomy::{self, DichotomyReport, Verdict, WindowAnalysis};
use crate::green::{self, ForcingFunction};
use crate::linalg::{self, Matrix, Vector};
use crate::propagator::{self, GrowthEstimate};
use crate::roughness::{self, RoughnessContext, RoughnessError, SweepRow};
use crate::system::{self, LinearSystem, PerturbationSpec, SystemKind, TimeGrid};

pub const DEFAULT_SEED: u64 = 0x5EED;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_DICHOTOMIC: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dichotomy", version, about = "Exponential dichotomy analysis of x' = A(t)x")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate growth, compute the splitting and fit dichotomy constants.
    Analyze(CommonArgs),
    /// Solve Lu = f for the bounded solution.
    Solve(CommonArgs),
    /// Analyze one perturbed system A + B.
    Perturb(CommonArgs),
    /// Analyze A + c·B over a list of amplitudes c.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for random perturbations without an explicit seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub forcing: Option<String>,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SystemConfig {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: BTreeMap<String, Vec<f64>>,
    },
    File {
        file: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub h: f64,
}

/// Direction of a perturbation, normalized to unit sup norm, times
/// `amplitude` (ignored by `sweep`).
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    Matrix {
        matrix: Vec<Vec<f64>>,
        #[serde(default = "unit")]
        amplitude: f64,
    },
}

fn unit() -> f64 {
    1.0
}

/// Input problem, fully loaded and validated.
struct Problem {
    sys: LinearSystem,
    grid: TimeGrid,
    out: PathBuf,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn fail(msg: impl Into<String>) -> CliError {
    CliError(msg.into())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| fail(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(format!("invalid config {}: {e}", path.display())))
}

fn load_problem(args: &CommonArgs, config: &RunConfig) -> Result<Problem, CliError> {
    let base = args.config.parent().unwrap_or(Path::new("."));
    let sys = match &config.system {
        SystemConfig::Builtin { builtin, params } => system::builtin(builtin, params)?,
        SystemConfig::File { file } => system::load_sampled(resolve(base, file))?,
    };
    let g = config.grid;
    let grid = TimeGrid::new(g.t_min, g.t_max, g.h)?;
    if !sys.covers(&grid) {
        return Err(fail(format!("grid [{}, {}] leaves the system domain", g.t_min, g.t_max)));
    }
    let out = args.out.clone().or_else(|| config.output_dir.as_ref().map(|p| resolve(base, p)));
    let out = out.unwrap_or_else(|| PathBuf::from("out"));
    Ok(Problem { sys, grid, out })
}

fn symmetric_half(grid: &TimeGrid) -> Result<f64, CliError> {
    let (lo, hi) = (grid.t_min(), grid.t_max());
    if (lo + hi).abs() > 1e-9 * hi.abs().max(1.0) || hi <= 0.0 {
        return Err(fail(format!("grid [{lo}, {hi}] must be symmetric about 0")));
    }
    Ok(hi)
}

/// Parses `const:<c1,...,cn>`, `sin:<k>` (`cos t` on component k, 1-based)
/// or `file:<path>` (CSV with header `t,f1,...,fn`).
pub fn parse_forcing(spec: &str, dim: usize, base: &Path) -> Result<ForcingFunction, String> {
    let (kind, arg) = spec.split_once(':').ok_or_else(|| format!("forcing `{spec}`: expected <kind>:<argument>"))?;
    match kind {
        "const" => {
            let values = arg
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| format!("forcing `{spec}`: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != dim || values.iter().any(|v| !v.is_finite()) {
                return Err(format!("forcing `{spec}`: need {dim} finite values"));
            }
            Ok(ForcingFunction::constant(Vector::from_vec(values)))
        }
        "sin" => {
            let k: usize = arg.trim().parse().map_err(|e| format!("forcing `{spec}`: {e}"))?;
            if k == 0 || k > dim {
                return Err(format!("forcing `{spec}`: component must be in 1..={dim}"));
            }
            Ok(ForcingFunction::cosine(dim, k - 1))
        }
        "file" => load_forcing(&resolve(base, Path::new(arg)), dim),
        _ => Err(format!("forcing `{spec}`: unknown kind `{kind}` (const, sin, file)")),
    }
}

fn load_forcing(path: &Path, dim: usize) -> Result<ForcingFunction, String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("forcing file {}: {e}", path.display()))?;
    let headers = reader.headers().map_err(|e| format!("forcing file {}: {e}", path.display()))?.clone();
    if headers.len() != dim + 1 || &headers[0] != "t" {
        return Err(format!("forcing file {}: header must be t plus {dim} columns", path.display()));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("forcing file {}: {e}", path.display()))?;
        let row = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("forcing file {} row {}: {e}", path.display(), line + 1))?;
        if row.len() != dim + 1 || row.iter().any(|v| !v.is_finite()) {
            return Err(format!("forcing file {} row {}: expected {} finite numbers", path.display(), line + 1, dim + 1));
        }
        if times.last().is_some_and(|&t| row[0] <= t) {
            return Err(format!("forcing file {} row {}: times must increase", path.display(), line + 1));
        }
        times.push(row[0]);
        values.push(Vector::from_vec(row[1..].to_vec()));
    }
    if times.len() < 2 {
        return Err(format!("forcing file {}: need at least 2 rows", path.display()));
    }
    Ok(ForcingFunction::sampled(times, values))
}

fn perturbation_direction(
    cfg: &PerturbationConfig,
    dim: usize,
    seed: u64,
) -> Result<(PerturbationSpec, f64), CliError> {
    match cfg {
        PerturbationConfig::Random { seed: s, amplitude } => {
            Ok((PerturbationSpec::random_unit(dim, s.unwrap_or(seed)), *amplitude))
        }
        PerturbationConfig::Matrix { matrix, amplitude } => {
            if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                return Err(fail(format!("perturbation matrix must be {dim}x{dim}")));
            }
            let m = Matrix::from_fn(dim, dim, |i, j| matrix[i][j]);
            let norm = linalg::spectral_norm(&m);
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(fail("perturbation matrix must be nonzero and finite"));
            }
            let mut spec = PerturbationSpec::constant(m / norm);
            spec.description = format!("matrix {matrix:?} normalized");
            Ok((spec, *amplitude))
        }
    }
    .and_then(|(spec, a)| {
        if a.is_finite() && a >= 0.0 {
            Ok((spec, a))
        } else {
            Err(fail(format!("amplitude must be finite and nonnegative, got {a}")))
        }
    })
}

/// Formats a float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn verdict_exit(v: Verdict) -> u8 {
    match v {
        Verdict::Dichotomic => EXIT_OK,
        Verdict::NotDichotomic => EXIT_NOT_DICHOTOMIC,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| fail(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| fail(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

#[derive(Serialize)]
struct DichotomyOutput<'a> {
    system: &'a str,
    #[serde(flatten)]
    report: &'a DichotomyReport,
    inverse_bound: Option<f64>,
    threshold: Option<f64>,
    windows_tried: &'a [f64],
    /// Distance to the spectral projection, for constant systems.
    spectral_distance: Option<f64>,
}

fn spectral_distance(sys: &LinearSystem, report: &DichotomyReport) -> Option<f64> {
    if sys.kind() != SystemKind::Constant || !report.is_dichotomic() {
        return None;
    }
    let spectral = dichotomy::spectral_projector(sys).ok()?;
    spectral.is_dichotomic().then(|| linalg::spectral_norm(&(&report.p - &spectral.p)))
}

fn describe_system(sys: &LinearSystem) -> String {
    let params: Vec<String> = sys.params().iter().map(|(k, v)| format!("{k} = {v:?}")).collect();
    if params.is_empty() {
        sys.name().to_string()
    } else {
        format!("{} ({})", sys.name(), params.join(", "))
    }
}

fn summary(sys: &LinearSystem, analysis: &WindowAnalysis, growth: &GrowthEstimate) -> String {
    let report = &analysis.report;
    let grid = analysis.cache.grid();
    let mut s = String::new();
    let _ = writeln!(s, "system: {}", describe_system(sys));
    let _ = writeln!(s, "window: [{}, {}], h = {}, {} points", grid.t_min(), grid.t_max(), grid.step(), grid.len());
    let _ = writeln!(s, "half-windows tried: {:?}", analysis.attempts);
    let _ = writeln!(s, "growth: alpha = {:.6}, beta = {:.6}", growth.alpha, growth.beta);
    let _ = writeln!(s, "verdict: {:?}", report.verdict);
    if let Some(f) = &report.finding {
        let _ = writeln!(s, "finding: {}", serde_json::to_string(f).unwrap_or_default());
    }
    let _ = writeln!(s, "gap ratio: {:.6e}", report.gap_ratio);
    let _ = writeln!(s, "stable dimension: {}, unstable dimension: {}", report.x1_basis.ncols(), report.x2_basis.ncols());
    if let Some(c) = report.constants {
        let _ = writeln!(s, "fit window: [{}, {}]", report.fit_window.0, report.fit_window.1);
        match c.stable {
            Some(k) => _ = writeln!(s, "N1 = {:.6}, nu1 = {:.6}", k.n, k.nu),
            None => _ = writeln!(s, "stable side vacuous (P = 0)"),
        }
        match c.unstable {
            Some(k) => _ = writeln!(s, "N2 = {:.6}, nu2 = {:.6}", k.n, k.nu),
            None => _ = writeln!(s, "unstable side vacuous (Q = 0)"),
        }
        let inv = c.inverse_bound();
        let _ = writeln!(s, "inverse bound N1/nu1 + N2/nu2 = {inv:.6}");
        let _ = writeln!(s, "roughness threshold = {:.6}", 1.0 / inv);
    }
    if let Some(m) = report.margin {
        let _ = writeln!(s, "verification margin: {m:.6}");
    }
    s
}

fn analyze_problem(p: &Problem) -> Result<WindowAnalysis, CliError> {
    let half = symmetric_half(&p.grid)?;
    Ok(dichotomy::analyze_window(&p.sys, half, p.grid.step())?)
}

fn cmd_analyze(args: &CommonArgs) -> Result<u8, CliError> {
    let config = load_config(&args.config)?;
    let p = load_problem(args, &config)?;
    let analysis = analyze_problem(&p)?;
    let growth = propagator::estimate_growth(&analysis.cache);
    let report = &analysis.report;
    let inverse_bound = report.constants.filter(|_| report.is_dichotomic()).map(|c| c.inverse_bound());
    write_json(&p.out, "growth.json", &growth)?;
    write_json(
        &p.out,
        "dichotomy.json",
        &DichotomyOutput {
            system: p.sys.name(),
            report,
            inverse_bound,
            threshold: inverse_bound.map(|b| 1.0 / b),
            windows_tried: &analysis.attempts,
            spectral_distance: spectral_distance(&p.sys, report),
        },
    )?;
    let text = summary(&p.sys, &analysis, &growth);
    write_file(&p.out, "report.txt", &text)?;
    print!("{text}");
    Ok(verdict_exit(report.verdict))
}

fn solution_csv(sol: &green::GreenSolution) -> Result<String, CliError> {
    let n = sol.u.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("u{i}")));
    header.push("residual".into());
    w.write_record(&header)?;
    for k in sol.region.0..=sol.region.1 {
        let mut row = vec![fmt_float(sol.grid.point(k))];
        row.extend(sol.u[k].iter().map(|x| fmt_float(*x)));
        row.push(fmt_float(sol.residual[k]));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| fail(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| fail(e.to_string()))
}

fn cmd_solve(args: &CommonArgs) -> Result<u8, CliError> {
    let config = load_config(&args.config)?;
    let p = load_problem(args, &config)?;
    let spec = config.forcing.as_deref().ok_or_else(|| fail("solve needs `forcing` in the config"))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let forcing = parse_forcing(spec, p.sys.dim(), base).map_err(CliError)?;
    forcing.sample(&p.grid)?;
    let analysis = analyze_problem(&p)?;
    if !analysis.report.is_dichotomic() {
        eprintln!("system is not certified dichotomic ({:?})", analysis.report.verdict);
        return Ok(EXIT_NOT_DICHOTOMIC);
    }
    let sol = green::green_solve(&analysis.cache, &analysis.report, &forcing)?;
    write_file(&p.out, "solution.csv", &solution_csv(&sol)?)?;
    let (lo, hi) = sol.region_times();
    println!("region: [{lo}, {hi}]");
    println!("u_sup: {}", fmt_float(sol.u_sup));
    println!("f_sup: {}", fmt_float(sol.f_sup));
    println!("bound_margin: {}", fmt_float(sol.bound_margin));
    println!("residual_sup: {}", fmt_float(sol.residual_sup));
    Ok(EXIT_OK)
}

fn roughness_context(p: &Problem) -> Result<Result<RoughnessContext, u8>, CliError> {
    symmetric_half(&p.grid)?;
    match RoughnessContext::new(&p.sys, &p.grid) {
        Ok(ctx) => Ok(Ok(ctx)),
        Err(RoughnessError::NotDichotomic(v)) => {
            eprintln!("base system is not certified dichotomic ({v:?})");
            Ok(Err(verdict_exit(v)))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_perturb(args: &CommonArgs) -> Result<u8, CliError> {
    let config = load_config(&args.config)?;
    let p = load_problem(args, &config)?;
    let cfg = config.perturbation.as_ref().ok_or_else(|| fail("perturb needs `perturbation` in the config"))?;
    let (direction, amplitude) = perturbation_direction(cfg, p.sys.dim(), args.seed)?;
    let ctx = match roughness_context(&p)? {
        Ok(ctx) => ctx,
        Err(code) => return Ok(code),
    };
    match ctx.verify(&direction.scaled(amplitude)) {
        Ok(report) => {
            write_json(&p.out, "perturb.json", &report)?;
            println!(
                "b_norm: {}  threshold: {}  admissible: {}  verdict: {:?}",
                fmt_float(report.b_norm),
                fmt_float(report.threshold),
                report.admissible,
                report.perturbed.verdict
            );
            Ok(verdict_exit(report.perturbed.verdict))
        }
        Err(RoughnessError::TheoremViolationSuspected { report, .. }) => {
            write_json(&p.out, "perturb.json", &*report)?;
            eprintln!(
                "admissible perturbation (b_norm {} < threshold {}) not certified: {:?}; window or grid likely too coarse",
                fmt_float(report.b_norm),
                fmt_float(report.threshold),
                report.perturbed.verdict
            );
            Ok(EXIT_ERROR)
        }
        Err(e) => Err(e.into()),
    }
}

/// Sweep table as CSV.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| e.to_string();
    w.write_record(["amplitude", "b_norm", "threshold", "admissible", "verdict", "N1", "nu1", "N2", "nu2", "perturbed_inv_bound"])
        .map_err(err)?;
    for r in rows {
        let stable = r.fitted.and_then(|c| c.stable);
        let unstable = r.fitted.and_then(|c| c.unstable);
        w.write_record([
            fmt_float(r.amplitude),
            fmt_float(r.b_norm),
            fmt_float(r.threshold),
            r.admissible.to_string(),
            r.verdict.clone(),
            fmt_opt(stable.map(|c| c.n)),
            fmt_opt(stable.map(|c| c.nu)),
            fmt_opt(unstable.map(|c| c.n)),
            fmt_opt(unstable.map(|c| c.nu)),
            fmt_opt(r.perturbed_inv_bound),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

fn cmd_sweep(args: &CommonArgs) -> Result<u8, CliError> {
    let config = load_config(&args.config)?;
    let p = load_problem(args, &config)?;
    let amplitudes = config.amplitudes.clone().ok_or_else(|| fail("sweep needs `amplitudes` in the config"))?;
    if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(fail("amplitudes must be finite and nonnegative"));
    }
    let cfg = config.perturbation.clone().unwrap_or(PerturbationConfig::Random { seed: None, amplitude: 1.0 });
    let (direction, _) = perturbation_direction(&cfg, p.sys.dim(), args.seed)?;
    let ctx = match roughness_context(&p)? {
        Ok(ctx) => ctx,
        Err(code) => return Ok(code),
    };
    let rows = roughness::sweep(&ctx, &direction, &amplitudes);
    write_file(&p.out, "sweep.csv", &sweep_csv(&rows).map_err(CliError)?)?;
    println!("threshold: {}  rows: {}", fmt_float(ctx.threshold), rows.len());
    Ok(EXIT_OK)
}

/// Runs a parsed command and returns its exit code; errors go to stderr.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forcing_grammar() {
        let base = Path::new(".");
        let c = parse_forcing("const:1, -2", 2, base).unwrap();
        assert_eq!(c.eval(3.0).unwrap(), Vector::from_vec(vec![1.0, -2.0]));
        let s = parse_forcing("sin:2", 2, base).unwrap();
        assert_eq!(s.eval(0.0).unwrap(), Vector::from_vec(vec![0.0, 1.0]));
        assert!(parse_forcing("sin:3", 2, base).is_err());
        assert!(parse_forcing("const:1", 2, base).is_err());
        assert!(parse_forcing("poly:1", 2, base).is_err());
        assert!(parse_forcing("file:/nonexistent/f.csv", 2, base).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn config_parsing() {
        let c: RunConfig = serde_json::from_str(
            r#"{"system": {"builtin": "const_diag", "params": {"diag": [-1, 2]}},
                "grid": {"t_min": -8, "t_max": 8, "h": 0.01},
                "perturbation": {"kind": "matrix", "matrix": [[1, 0], [0, -1]], "amplitude": 0.4}}"#,
        )
        .unwrap();
        assert!(matches!(c.system, SystemConfig::Builtin { .. }));
        assert!(matches!(c.perturbation, Some(PerturbationConfig::Matrix { amplitude, .. }) if amplitude == 0.4));
        let f: RunConfig =
            serde_json::from_str(r#"{"system": {"file": "a.csv"}, "grid": {"t_min": 0, "t_max": 1, "h": 0.1}}"#).unwrap();
        assert!(matches!(f.system, SystemConfig::File { .. }));
        assert!(serde_json::from_str::<RunConfig>(r#"{"system": {"file": "a"}, "grid": {"t_min": 0, "t_max": 1, "h": 0.1}, "bogus": 1}"#).is_err());
    }
}
