//! Command-line driver for the splitting toolkit: loads operator models,
//! runs each pipeline stage and emits JSON (single runs) or CSV (sweeps)
//! reports.
//!
//! Exit status: 0 when every requested invariant check passes, 1 on a
//! check failure (a machine-readable failure list goes to stderr), 2 on
//! input or parse errors. Reports are written atomically (temp file in
//! the target directory, then rename), so a crashed run never leaves a
//! half-written artifact behind.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use gapsplit::angular::{
    angular_from_projections, direct_rotation, verify_norm_bound, ReferenceProjections,
};
use gapsplit::dirac::{
    build_demo_operator, magnetic_threshold, z_threshold, CoulombConstants, DemoPotential,
    Momentum, ThresholdMode,
};
use gapsplit::dkh::{convergence_report, estimate_gamma_max};
use gapsplit::form::{construct_h, spectral_strip, FormPerturbation, GappedOperator};
use gapsplit::instances::{parse_model, random_hermitian, reference_instance};
use gapsplit::linalg::{operator_norm, schur_split};
use gapsplit::riesz::{
    resolvent_difference_series, riesz_split, riesz_split_auto, verify_decay, QuadratureScheme,
    RieszSplit,
};
use gapsplit::{ComplexMatrix, Error};

#[derive(Parser)]
#[command(
    name = "gapsplit",
    version,
    about = "Spectral splitting, angular bounds and coupling expansions for gapped operator matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relative form bounds and the coupling budget of a model file.
    Rho(RhoArgs),
    /// Spectral splitting of one operator, cross-checked against the
    /// triangular-form oracle.
    Split(SplitArgs),
    /// Angular operators of a perturbed splitting against the unperturbed
    /// frame, with the tangent-sum norm bound.
    Angular(CouplingArgs),
    /// Direct rotation mapping the unperturbed splitting onto the
    /// perturbed one.
    Rotate(CouplingArgs),
    /// Truncation-error sweep of the coupling expansion (CSV).
    Dkh(DkhArgs),
    /// Resolvent-decay bound along the imaginary axis.
    Verify(VerifyArgs),
    /// Admissible-charge thresholds for the relativistic Coulomb coupling.
    #[command(name = "dirac-threshold")]
    DiracThreshold(ThresholdArgs),
    /// Seeded end-to-end run on a discretized free-particle demo operator.
    Demo(DemoArgs),
}

#[derive(Args)]
struct RhoArgs {
    /// Model file with fields `h0` and `v`.
    #[arg(long)]
    input: PathBuf,
    /// Real coupling at which the enclosure strip is checked.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Operator file (a single matrix).
    #[arg(long)]
    input: PathBuf,
    /// Quadrature node count; overrides the automatic scheme.
    #[arg(long, requires = "quad_radius")]
    quad_nodes: Option<usize>,
    /// Quadrature concentration radius; overrides the automatic scheme.
    #[arg(long, requires = "quad_nodes")]
    quad_radius: Option<f64>,
    /// Largest accepted distance to the triangular-form oracle.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CouplingArgs {
    /// Model file with fields `h0` and `v`.
    #[arg(long)]
    input: PathBuf,
    /// Real coupling strength.
    #[arg(long)]
    gamma: f64,
    /// Largest accepted conjugation/unitarity residual.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DkhArgs {
    /// Model file with fields `h0` and `v`; the bundled reference model
    /// when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Real couplings to sweep; defaults to {0.1, 0.3, 0.5} times the
    /// estimated breakdown radius.
    #[arg(long)]
    gamma: Vec<f64>,
    /// Largest truncation order.
    #[arg(long, default_value_t = 8)]
    nmax: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Model file with fields `h0` and `v`.
    #[arg(long)]
    input: PathBuf,
    /// Real coupling strength.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Full-strength admissibility.
    Exact,
    /// Series-expansion regime (half budget).
    Dkh,
    /// Magnetic variant with an explicit gap parameter.
    Magnetic,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Fine-structure constant override.
    #[arg(long)]
    alpha: Option<f64>,
    /// Gap parameter of the magnetic variant, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    delta_b: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Seed for the momentum grid and the demo potential.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Real coupling strength.
    #[arg(long, default_value_t = 0.3)]
    gamma: f64,
    /// Order of the resolvent-difference series cross-check.
    #[arg(long, default_value_t = 6)]
    order: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Whether a failure happened while reading inputs (exit 2) or while
/// checking invariants (exit 1).
#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Input,
    Check,
}

#[derive(Serialize)]
struct Failure {
    invariant: String,
    module: &'static str,
}

struct CliFailure {
    phase: Phase,
    failures: Vec<Failure>,
}

impl CliFailure {
    fn input(invariant: String, module: &'static str) -> Self {
        Self {
            phase: Phase::Input,
            failures: vec![Failure { invariant, module }],
        }
    }

    fn check(invariant: String, module: &'static str) -> Self {
        Self {
            phase: Phase::Check,
            failures: vec![Failure { invariant, module }],
        }
    }
}

type CliResult<T> = Result<T, CliFailure>;

/// Module that raises the given library error, for failure attribution.
/// `None` when the variant is shared between modules; the call site then
/// supplies the module it invoked.
fn module_of(err: &Error) -> Option<&'static str> {
    match err {
        Error::ShapeMismatch { .. }
        | Error::NotSquare { .. }
        | Error::DimensionMismatch { .. }
        | Error::NonFinite { .. }
        | Error::Parse(_) => Some("matrix"),
        Error::NoConvergence { .. }
        | Error::UndefinedAtEigenvalue { .. }
        | Error::Singular { .. } => Some("linalg"),
        Error::NoGap { .. } | Error::DegenerateFormBound { .. } => Some("form"),
        Error::EigenvalueNearAxis { .. }
        | Error::QuadratureNotConverged { .. }
        | Error::BadQuadratureScheme { .. }
        | Error::ContractionTooLarge { .. } => Some("riesz"),
        Error::GraphPosition { .. }
        | Error::RankMismatch { .. }
        | Error::SpectralRadiusTooLarge { .. }
        | Error::SeriesTooSlow { .. }
        | Error::SubspacesTooFar { .. }
        | Error::RhoTooLarge { .. }
        | Error::AngleTooLarge { .. } => Some("angular"),
        Error::NodeCountTooSmall { .. } | Error::AliasingTooLarge { .. } => Some("dkh"),
        Error::NotHermitian { .. }
        | Error::CouplingTooLarge { .. }
        | Error::ParameterOutOfRange { .. }
        | Error::PostconditionFailed { .. } => None,
    }
}

/// Promotes a library error hit during input loading to exit status 2.
/// `home` is the module whose operation was invoked.
fn input_err<T>(res: gapsplit::Result<T>, home: &'static str) -> CliResult<T> {
    res.map_err(|e| CliFailure::input(e.to_string(), module_of(&e).unwrap_or(home)))
}

/// Promotes a library error hit during a pipeline run to exit status 1.
/// `home` is the module whose operation was invoked.
fn check_err<T>(res: gapsplit::Result<T>, home: &'static str) -> CliResult<T> {
    res.map_err(|e| CliFailure::check(e.to_string(), module_of(&e).unwrap_or(home)))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliFailure::input(format!("cannot read {}: {e}", path.display()), "cli"))
}

fn load_model(path: &Path) -> CliResult<(GappedOperator, FormPerturbation)> {
    input_err(parse_model(&read_file(path)?), "instances")
}

fn load_matrix(path: &Path) -> CliResult<ComplexMatrix> {
    input_err(ComplexMatrix::from_json(&read_file(path)?), "matrix")
}

/// Writes the report to the given path via a sibling temp file plus
/// rename, or to stdout when no path is given.
fn write_report(output: Option<&Path>, text: &str) -> CliResult<()> {
    let Some(path) = output else {
        print!("{text}");
        return Ok(());
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let io = |e: std::io::Error| {
        CliFailure::input(format!("cannot write {}: {e}", path.display()), "cli")
    };
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(text.as_bytes()).map_err(io)?;
    file.sync_all().map_err(io)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io)
}

fn pretty(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization");
    text.push('\n');
    text
}

fn run_rho(args: &RhoArgs) -> CliResult<()> {
    let (base, pert) = load_model(&args.input)?;
    let summary = pert.summary();
    let mut report = json!({
        "command": "rho",
        "order": base.order(),
        "delta": base.delta(),
        "symmetric": pert.symmetric(),
        "a": summary.a,
        "b": summary.b,
        "rho_full": summary.rho_full,
        "rho_half": summary.rho_half,
        "norm_c_ab": summary.norm_c_ab,
    });
    let mut failures = Vec::new();
    if let Some(gamma) = args.gamma {
        let strip = check_err(spectral_strip(&base, &pert, gamma), "form")?;
        report["strip"] = json!({
            "gamma": gamma,
            "interval": strip.interval.map(|(lo, hi)| vec![lo, hi]),
            "violations": strip.violations.len(),
            "diagnostic": strip.diagnostic,
        });
        if !strip.ok() {
            failures.push(Failure {
                invariant: format!(
                    "spectral enclosure strip at gamma = {gamma}: {}",
                    strip
                        .diagnostic
                        .clone()
                        .unwrap_or_else(|| format!("{} eigenvalue(s) inside", strip.violations.len()))
                ),
                module: "form",
            });
        }
    }
    write_report(args.output.as_deref(), &pretty(&report))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliFailure {
            phase: Phase::Check,
            failures,
        })
    }
}

fn run_split(args: &SplitArgs) -> CliResult<()> {
    if !(args.tol > 0.0) {
        return Err(CliFailure::input(
            format!("tolerance {} must be positive", args.tol),
            "config",
        ));
    }
    let h = load_matrix(&args.input)?;
    let split: RieszSplit = match (args.quad_nodes, args.quad_radius) {
        (Some(nodes), Some(radius)) => {
            let scheme = input_err(QuadratureScheme::new(radius, nodes), "riesz")?;
            check_err(riesz_split(&h, &scheme), "riesz")?
        }
        _ => check_err(riesz_split_auto(&h), "riesz")?,
    };
    let (oracle_plus, _) = check_err(schur_split(&h), "linalg")?;
    let oracle_distance = operator_norm(&(&split.pair.plus - &oracle_plus));
    let report = json!({
        "idempotency_residual": split.idempotency_residual,
        "commutation_residual": split.commutation_residual,
        "oracle_distance": oracle_distance,
        "node_count": split.node_count,
    });
    write_report(args.output.as_deref(), &pretty(&report))?;
    if oracle_distance <= args.tol {
        Ok(())
    } else {
        Err(CliFailure::check(
            format!(
                "splitting oracle distance {oracle_distance:.3e} exceeds tolerance {:.3e}",
                args.tol
            ),
            "riesz",
        ))
    }
}

fn run_angular(args: &CouplingArgs) -> CliResult<()> {
    let (base, pert) = load_model(&args.input)?;
    let op = check_err(construct_h(&base, &pert, Complex64::new(args.gamma, 0.0)), "form")?;
    let split = check_err(riesz_split_auto(&op.h), "riesz")?;
    let reference = check_err(ReferenceProjections::orthogonal(&base.spectral_pair()), "angular")?;
    let x = check_err(angular_from_projections(&split.pair, &reference), "angular")?;
    let bound = check_err(verify_norm_bound(
        pert.rho_half(),
        0.0,
        pert.symmetric(),
        &x,
    ), "angular")?;
    let report = json!({
        "command": "angular",
        "gamma": args.gamma,
        "rho_half": bound.rho_half,
        "nu": bound.nu,
        "symmetric": bound.symmetric,
        "norm_x_plus": bound.norm_x_plus,
        "norm_x_minus": bound.norm_x_minus,
        "bound": bound.bound,
        "orthogonal_distance": bound.orthogonal_distance,
        "orthogonal_bound": bound.orthogonal_bound,
        "pass": bound.pass,
    });
    write_report(args.output.as_deref(), &pretty(&report))?;
    if bound.pass {
        Ok(())
    } else {
        Err(CliFailure::check(
            format!(
                "angular norm bound: max(|X+|, |X-|) = {:.6} exceeds tan bound {:.6}",
                bound.norm_x_plus.max(bound.norm_x_minus),
                bound.bound
            ),
            "angular",
        ))
    }
}

fn run_rotate(args: &CouplingArgs) -> CliResult<()> {
    let (base, pert) = load_model(&args.input)?;
    let op = check_err(construct_h(&base, &pert, Complex64::new(args.gamma, 0.0)), "form")?;
    let split = check_err(riesz_split_auto(&op.h), "riesz")?;
    let p = base.spectral_pair();
    let u = check_err(direct_rotation(&split.pair, &p), "angular")?;
    let n = u.rows();
    let unitarity = operator_norm(&(&u.adjoint().matmul(&u) - &ComplexMatrix::identity(n)));
    let conj_plus = operator_norm(&(&u.matmul(&p.plus).matmul(&u.adjoint()) - &split.pair.plus));
    let conj_minus =
        operator_norm(&(&u.matmul(&p.minus).matmul(&u.adjoint()) - &split.pair.minus));
    let distance = operator_norm(&(&split.pair.plus - &p.plus));
    let report = json!({
        "command": "rotate",
        "gamma": args.gamma,
        "unitarity_residual": unitarity,
        "conjugation_residual_plus": conj_plus,
        "conjugation_residual_minus": conj_minus,
        "distance": distance,
    });
    write_report(args.output.as_deref(), &pretty(&report))?;
    let worst = unitarity.max(conj_plus).max(conj_minus);
    if worst <= args.tol {
        Ok(())
    } else {
        Err(CliFailure::check(
            format!(
                "direct rotation residual {worst:.3e} exceeds tolerance {:.3e}",
                args.tol
            ),
            "angular",
        ))
    }
}

fn run_dkh(args: &DkhArgs) -> CliResult<()> {
    let (base, pert) = match &args.input {
        Some(path) => load_model(path)?,
        None => input_err(reference_instance(), "instances")?,
    };
    let gamma_max = check_err(estimate_gamma_max(&base, &pert), "dkh")?;
    let gammas: Vec<Complex64> = if args.gamma.is_empty() {
        [0.1, 0.3, 0.5]
            .iter()
            .map(|f| Complex64::new(f * gamma_max, 0.0))
            .collect()
    } else {
        args.gamma.iter().map(|&g| Complex64::new(g, 0.0)).collect()
    };
    let report = check_err(convergence_report(&base, &pert, &gammas, args.nmax), "dkh")?;
    write_report(args.output.as_deref(), &report.to_csv())
}

fn run_verify(args: &VerifyArgs) -> CliResult<()> {
    let (base, pert) = load_model(&args.input)?;
    let report = check_err(verify_decay(&base, &pert, args.gamma, &[1.0, 10.0, 100.0]), "riesz")?;
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "eta": r.eta,
                "scaled_difference": r.scaled_difference,
                "bound": r.bound,
                "ratio": r.ratio,
                "contraction": r.contraction,
            })
        })
        .collect();
    let out = json!({
        "command": "verify",
        "gamma": args.gamma,
        "rows": rows,
        "max_ratio": report.max_ratio,
        "pass": report.pass(),
    });
    write_report(args.output.as_deref(), &pretty(&out))?;
    if report.pass() {
        Ok(())
    } else {
        Err(CliFailure::check(
            format!(
                "resolvent decay bound: worst measured/bound ratio {:.6} exceeds one",
                report.max_ratio
            ),
            "riesz",
        ))
    }
}

fn run_threshold(args: &ThresholdArgs) -> CliResult<()> {
    let constants = match args.alpha {
        Some(alpha) => input_err(CoulombConstants::with_alpha(alpha), "dirac")?,
        None => CoulombConstants::default(),
    };
    let text = match args.mode {
        Mode::Exact => {
            let z = check_err(z_threshold(ThresholdMode::Exact, &constants), "dirac")?;
            format!(
                "{z}\ngoverned by: Z * alpha * c < 1 with c = (pi/2 + 2/pi)/2 = {:.12}, alpha = {:.12}\n",
                constants.tix(),
                constants.alpha()
            )
        }
        Mode::Dkh => {
            let z = check_err(z_threshold(ThresholdMode::Dkh, &constants), "dirac")?;
            format!(
                "{z}\ngoverned by: Z * alpha * c < 1/2 with c = (pi/2 + 2/pi)/2 = {:.12}, alpha = {:.12}\n",
                constants.tix(),
                constants.alpha()
            )
        }
        Mode::Magnetic => {
            let z = input_err(magnetic_threshold(args.delta_b, &constants), "dirac")?;
            format!(
                "{z}\ngoverned by: Z * alpha * (pi/2) / delta_b < 1 with delta_b = {}, alpha = {:.12}\n",
                args.delta_b,
                constants.alpha()
            )
        }
    };
    write_report(args.output.as_deref(), &text)
}

fn run_demo(args: &DemoArgs) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let grid: Vec<Momentum> = (0..3)
        .map(|_| {
            let p = [
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
            ];
            input_err(Momentum::new(p), "dirac")
        })
        .collect::<CliResult<_>>()?;
    let raw = random_hermitian(&mut rng, 4 * grid.len(), 1.0);
    let (_, probe) = check_err(build_demo_operator(
        &grid,
        &DemoPotential::Coupling(raw.clone()),
    ), "dirac")?;
    // Rescale the potential so the weighted coupling norm sits at 0.3,
    // comfortably inside every bound checked below.
    let rho_raw = probe.rho_full();
    if rho_raw == 0.0 {
        return Err(CliFailure::check(
            "demo potential vanished after projection".into(),
            "dirac",
        ));
    }
    let scaled = raw.scale_re(0.3 / rho_raw);
    let (base, pert) = check_err(build_demo_operator(&grid, &DemoPotential::Coupling(scaled)), "dirac")?;

    let gamma = Complex64::new(args.gamma, 0.0);
    let op = check_err(construct_h(&base, &pert, gamma), "form")?;
    let split = check_err(riesz_split_auto(&op.h), "riesz")?;
    let (oracle_plus, _) = check_err(schur_split(&op.h), "linalg")?;
    let oracle_distance = operator_norm(&(&split.pair.plus - &oracle_plus));

    let reference = check_err(ReferenceProjections::orthogonal(&base.spectral_pair()), "angular")?;
    let x = check_err(angular_from_projections(&split.pair, &reference), "angular")?;
    let bound = check_err(verify_norm_bound(
        pert.rho_half(),
        0.0,
        pert.symmetric(),
        &x,
    ), "angular")?;

    let decay = check_err(verify_decay(&base, &pert, args.gamma, &[1.0, 10.0, 100.0]), "riesz")?;
    let series = check_err(resolvent_difference_series(
        &base, &pert, gamma, 10.0, args.order,
    ), "riesz")?;

    let report = json!({
        "command": "demo",
        "seed": args.seed,
        "gamma": args.gamma,
        "grid": grid.iter().map(|p| p.components().to_vec()).collect::<Vec<_>>(),
        "order": base.order(),
        "delta": base.delta(),
        "rho_full": pert.rho_full(),
        "rho_half": pert.rho_half(),
        "split": {
            "idempotency_residual": split.idempotency_residual,
            "commutation_residual": split.commutation_residual,
            "oracle_distance": oracle_distance,
            "node_count": split.node_count,
        },
        "angular": {
            "norm_x_plus": bound.norm_x_plus,
            "norm_x_minus": bound.norm_x_minus,
            "bound": bound.bound,
            "pass": bound.pass,
        },
        "decay": {
            "max_ratio": decay.max_ratio,
            "pass": decay.pass(),
        },
        "series": {
            "order": series.order,
            "difference_norm": operator_norm(&series.difference),
            "tail_bound": series.tail_bound,
        },
    });
    write_report(args.output.as_deref(), &pretty(&report))?;

    let mut failures = Vec::new();
    if oracle_distance > 1e-6 {
        failures.push(Failure {
            invariant: format!("splitting oracle distance {oracle_distance:.3e} exceeds 1e-6"),
            module: "riesz",
        });
    }
    if !bound.pass {
        failures.push(Failure {
            invariant: "angular norm bound exceeded".into(),
            module: "angular",
        });
    }
    if !decay.pass() {
        failures.push(Failure {
            invariant: format!("resolvent decay ratio {:.6} exceeds one", decay.max_ratio),
            module: "riesz",
        });
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliFailure {
            phase: Phase::Check,
            failures,
        })
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Rho(args) => run_rho(args),
        Command::Split(args) => run_split(args),
        Command::Angular(args) => run_angular(args),
        Command::Rotate(args) => run_rotate(args),
        Command::Dkh(args) => run_dkh(args),
        Command::Verify(args) => run_verify(args),
        Command::DiracThreshold(args) => run_threshold(args),
        Command::Demo(args) => run_demo(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let list = json!({ "failures": failure.failures });
            eprintln!("{}", serde_json::to_string_pretty(&list).expect("failure list"));
            match failure.phase {
                Phase::Check => ExitCode::from(1),
                Phase::Input => ExitCode::from(2),
            }
        }
    }
}
