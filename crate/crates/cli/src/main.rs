//! `slq`: forward spectral data, model constants, reconstruction and data checks
//! for matrix Sturm-Liouville problems.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use slq_core::checks::{check_asymptotics, check_condition_i, compare_modulo_gauge, completeness_proxy, CheckOptions};
use slq_core::forward::{extract_with_diagnostics, ForwardOptions};
use slq_core::inverse::{run_algorithm1, InverseOptions, ReconstructionResult};
use slq_core::io::{self, ModelOutputJson, ReconJson, SpectralJson};
use slq_core::model::{model_constants, model_spectral_data};
use slq_core::problem::{validate_problem, DEFAULT_STRUCTURE_TOL};
use slq_core::{ProblemSpec, Sigma, SlqError, SpectralDataSet};

#[derive(Parser)]
#[command(name = "slq", version, about = "Matrix Sturm-Liouville spectral data and reconstruction")]
struct Cli {
    /// Seed for randomized fixtures; the commands themselves are deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and weight matrices of a problem.
    Forward(ForwardArgs),
    /// Model problem constants and spectral data for given boundary projectors.
    Model(ModelArgs),
    /// Reconstruct sigma and H2 from spectral data.
    Inverse(InverseArgs),
    /// Forward, truncate, reconstruct and compare against the input.
    Roundtrip(RoundtripArgs),
    /// Finite-scale checks of spectral data.
    Check(CheckArgs),
}

#[derive(Args, Clone)]
struct Tolerances {
    #[arg(long, default_value_t = 1e-10)]
    ode_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    #[arg(long, default_value_t = 1e-11)]
    root_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    cluster_tol: f64,
    #[arg(long, default_value_t = 32)]
    contour_points: usize,
}

impl Tolerances {
    fn forward_options(&self) -> Result<ForwardOptions, String> {
        for (name, v) in [
            ("ode-tol", self.ode_tol),
            ("rank-tol", self.rank_tol),
            ("root-tol", self.root_tol),
            ("cluster-tol", self.cluster_tol),
        ] {
            if !(v > 0.0) {
                return Err(format!("--{name} must be positive"));
            }
        }
        if self.contour_points < 4 {
            return Err("--contour-points must be at least 4".into());
        }
        Ok(ForwardOptions {
            ode_tol: self.ode_tol,
            rank_tol: self.rank_tol,
            root_tol: self.root_tol,
            cluster_tol: self.cluster_tol,
            contour_points: self.contour_points,
            ..ForwardOptions::default()
        })
    }
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    nmax: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    bc: PathBuf,
    #[arg(long)]
    nmax: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ReconstructionArgs {
    /// Levels of data used; model values above.
    #[arg(long = "N", value_name = "N")]
    n_cut: usize,
    #[arg(long, default_value_t = 501)]
    grid: usize,
    /// Eigenvalue shift; chosen from the data when absent.
    #[arg(long)]
    shift: Option<f64>,
    /// Size of the first eigenvalue group; searched when absent.
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long, default_value_t = 1e12)]
    cond_limit: f64,
}

impl ReconstructionArgs {
    fn options(&self, cluster_tol: f64) -> Result<InverseOptions, String> {
        if self.n_cut < 1 {
            return Err("--N must be at least 1".into());
        }
        if self.grid < 3 {
            return Err("--grid must be at least 3".into());
        }
        Ok(InverseOptions {
            grid_nodes: self.grid,
            shift: self.shift,
            n0: self.n0,
            cond_limit: self.cond_limit,
            cluster_tol,
        })
    }
}

#[derive(Args)]
struct InverseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    bc: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write sigma samples as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    cluster_tol: f64,
    #[command(flatten)]
    rec: ReconstructionArgs,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// CSV with the input and reconstructed sigma on the grid.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Levels re-extracted from the reconstruction and compared with the input.
    #[arg(long, default_value_t = 5)]
    reextract: usize,
    /// Exit with code 4 when the gauge-aware sigma distance exceeds this.
    #[arg(long, default_value_t = f64::INFINITY)]
    threshold: f64,
    #[command(flatten)]
    rec: ReconstructionArgs,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    bc: PathBuf,
    #[arg(long)]
    ncut: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn stage(code: u8, err: SlqError) -> Self {
        Failure { code, message: err.to_string() }
    }
}

impl From<SlqError> for Failure {
    fn from(err: SlqError) -> Self {
        Failure { code: 1, message: err.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn forward_failure(err: SlqError) -> Failure {
    match err {
        SlqError::SlotMismatch { .. } => Failure::stage(2, err),
        SlqError::IntegratorFailure { .. } => Failure::stage(3, err),
        other => Failure::from(other),
    }
}

fn load_problem(path: &Path) -> Result<ProblemSpec, Failure> {
    io::read_problem(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path, cluster_tol: f64) -> Result<SpectralDataSet, Failure> {
    io::read_json::<SpectralJson>(path)
        .and_then(|j| j.to_data(cluster_tol))
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn cmd_forward(args: &ForwardArgs) -> CmdResult {
    let opts = args.tol.forward_options().map_err(Failure::usage)?;
    let problem = validate_problem(&load_problem(&args.config)?, DEFAULT_STRUCTURE_TOL)?;
    let (data, _) = extract_with_diagnostics(&problem, args.nmax, &opts).map_err(forward_failure)?;
    io::write_json(&args.out, &SpectralJson::from_data(&data))?;
    Ok(())
}

fn cmd_model(args: &ModelArgs) -> CmdResult {
    let spec = load_problem(&args.bc)?;
    validate_problem(&ProblemSpec::model(&spec.t1, &spec.t2), DEFAULT_STRUCTURE_TOL)?;
    let consts = model_constants(&spec.t1, &spec.t2)?;
    let data = model_spectral_data(&spec.t1, &consts, args.nmax);
    io::write_json(&args.out, &ModelOutputJson::new(&consts, &data))?;
    Ok(())
}

fn reconstruct(data: &SpectralDataSet, bc: &ProblemSpec, rec: &ReconstructionArgs, cluster_tol: f64) -> Result<ReconstructionResult, Failure> {
    let opts = rec.options(cluster_tol).map_err(Failure::usage)?;
    validate_problem(&ProblemSpec::model(&bc.t1, &bc.t2), DEFAULT_STRUCTURE_TOL)?;
    if data.m != bc.m {
        return Err(Failure::usage(format!("data has m = {}, boundary conditions m = {}", data.m, bc.m)));
    }
    run_algorithm1(data, &bc.t1, &bc.t2, rec.n_cut, &opts).map_err(|e| Failure::stage(3, e))
}

fn grid_values(sigma: &Sigma) -> (Vec<f64>, Vec<slq_core::CMat>) {
    match sigma {
        Sigma::Grid { x, values } => (x.clone(), values.clone()),
        other => {
            let x = slq_core::problem::uniform_grid(501);
            let v = x.iter().map(|&t| other.eval(t)).collect();
            (x, v)
        }
    }
}

fn cmd_inverse(args: &InverseArgs) -> CmdResult {
    let data = load_data(&args.data, args.cluster_tol)?;
    let bc = load_problem(&args.bc)?;
    let r = reconstruct(&data, &bc, &args.rec, args.cluster_tol)?;
    io::write_json(&args.out, &ReconJson::from_result(&r))?;
    if let Some(csv) = &args.csv {
        let (x, v) = grid_values(&r.sigma);
        std::fs::write(csv, io::sigma_csv(&x, &v)).map_err(SlqError::from)?;
    }
    Ok(())
}

fn cmd_roundtrip(args: &RoundtripArgs) -> CmdResult {
    let fopts = args.tol.forward_options().map_err(Failure::usage)?;
    let spec = load_problem(&args.config)?;
    let problem = validate_problem(&spec, DEFAULT_STRUCTURE_TOL)?;
    let (data, _) = extract_with_diagnostics(&problem, args.rec.n_cut, &fopts).map_err(forward_failure)?;
    let r = reconstruct(&data, &spec, &args.rec, fopts.cluster_tol)?;
    let dist = compare_modulo_gauge(&r.sigma_star(), &r.h2_star(), &spec.sigma, &spec.h2, &spec.t1, &spec.t2)
        .map_err(|e| Failure::stage(4, e))?;

    let levels = args.reextract.min(args.rec.n_cut);
    let rebuilt = ProblemSpec::new(spec.t1.clone(), spec.t2.clone(), r.h2_star(), r.sigma_star());
    let rebuilt = validate_problem(&rebuilt, 1e-8).map_err(|e| Failure::stage(3, e))?;
    let (again, _) = extract_with_diagnostics(&rebuilt, levels, &fopts).map_err(forward_failure)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for e in again.by_index() {
        if let Some(orig) = data.get(e.index) {
            let err = (e.lambda - orig.lambda).abs();
            worst = worst.max(err);
            rows.push(json!({"n": e.index.n, "k": e.index.k, "lambda_input": orig.lambda, "lambda_reconstructed": e.lambda, "error": err}));
        }
    }

    let report = json!({
        "N": args.rec.n_cut,
        "grid": args.rec.grid,
        "n0": r.n0,
        "gN": r.g_n,
        "shift": r.shift,
        "sigma_distance": dist.sigma_l2,
        "h2_distance": dist.h2,
        "raw_sigma_distance": dist.raw_sigma_l2,
        "raw_h2_distance": dist.raw_h2,
        "gauge": io::matrix_to_json(&dist.h1d),
        "reextracted": rows,
        "max_reextraction_error": worst,
        "max_cond": r.diagnostics.max_cond,
        "max_residual": r.diagnostics.max_residual,
        "threshold": if args.threshold.is_finite() { json!(args.threshold) } else { json!(null) },
    });
    io::write_json(&args.out, &report)?;
    if let Some(csv) = &args.csv {
        let (x, rec) = grid_values(&r.sigma_star());
        let input: Vec<_> = x.iter().map(|&t| spec.sigma.eval(t)).collect();
        let mut text = String::from("# input\n");
        text.push_str(&io::sigma_csv(&x, &input));
        text.push_str("# reconstructed\n");
        text.push_str(&io::sigma_csv(&x, &rec));
        std::fs::write(csv, text).map_err(SlqError::from)?;
    }
    if dist.sigma_l2 > args.threshold {
        return Err(Failure {
            code: 4,
            message: format!("sigma distance {:.3e} exceeds threshold {:.3e}", dist.sigma_l2, args.threshold),
        });
    }
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> CmdResult {
    let opts = CheckOptions::default();
    let data = load_data(&args.data, opts.cluster_tol)?;
    let bc = load_problem(&args.bc)?;
    if data.m != bc.m {
        return Err(Failure::usage(format!("data has m = {}, boundary conditions m = {}", data.m, bc.m)));
    }
    let consts = model_constants(&bc.t1, &bc.t2)?;
    let model = model_spectral_data(&bc.t1, &consts, args.ncut);
    let cond_i = check_condition_i(&data, &opts);
    let asym = check_asymptotics(&data, &bc.t1, &consts, &opts);
    let proxy = completeness_proxy(&data, &model, &bc.t1, args.ncut, 8 * (args.ncut + 2), &opts);
    let report = json!({
        "condition_i": cond_i,
        "asymptotics": asym,
        "completeness": proxy,
        "pass": cond_i.pass && asym.pass && proxy.pass,
    });
    io::write_json(&args.out, &report)?;
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("SLQ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let _ = cli.seed;
    let result = match &cli.command {
        Command::Forward(a) => cmd_forward(a),
        Command::Model(a) => cmd_model(a),
        Command::Inverse(a) => cmd_inverse(a),
        Command::Roundtrip(a) => cmd_roundtrip(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("slq: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_errors_map_to_stage_codes() {
        let slot = SlqError::SlotMismatch { level: 1, found: 1, expected: 2, lo: 0.0, hi: 1.0 };
        assert_eq!(forward_failure(slot).code, 2);
        assert_eq!(forward_failure(SlqError::Parse("x".into())).code, 1);
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let t = Tolerances { ode_tol: 0.0, rank_tol: 1e-6, root_tol: 1e-11, cluster_tol: 1e-8, contour_points: 32 };
        assert!(t.forward_options().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
