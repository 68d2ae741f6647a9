//! Batch front end: load path specifications, run computations, emit JSON
//! reports and optional CSV trajectory dumps.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specflow::diffop;
use specflow::error::Error;
use specflow::flow::{self, VerifyOptions};
use specflow::grassmann;
use specflow::input::{PathKind, PathSpec, PresetSpec};
use specflow::invariant;
use specflow::linalg::{self, C64, CMat};
use specflow::path::OperatorPath;
use specflow::presets;
use specflow::propagator;
use specflow::report::*;
use specflow::spectral;

#[derive(Parser)]
#[command(
    name = "specflow",
    version,
    about = "Spectral flow, dichotomies and Fredholm indices of linear nonautonomous ODEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral projectors of the path matrix at a given time or limit.
    Projector(ProjectorArgs),
    /// Stable and unstable subspaces with the graph operator.
    Stable(StableArgs),
    /// Numerical index of the discretised operator plus the pair prediction.
    Index(CommonArgs),
    /// Spectral flow by both methods.
    Sf(CommonArgs),
    /// Full identity suite over a battery or a single path.
    Verify(VerifyArgs),
    /// Reproduce the worked closed-form examples.
    Demo(OutputArgs),
}

#[derive(Args)]
struct InputArgs {
    /// JSON path specification file.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Named preset (scalar-tanh, scalar-tanh-reversed, tanh-diag, rotation,
    /// patch).
    #[arg(long)]
    preset: Option<String>,
    /// Ambient dimension for presets that need one.
    #[arg(long)]
    dim: Option<usize>,
    /// Angle parameter of the rotation preset.
    #[arg(long)]
    angle: Option<f64>,
    /// Seed of seeded presets and batteries.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ToleranceArgs {
    /// Relative rank tolerance of the grid-operator rank decisions.
    #[arg(long, default_value_t = diffop::GRID_RANK_TOL)]
    rank_tol: f64,
    /// Integration tolerance of the propagator.
    #[arg(long, default_value_t = 1e-9)]
    ode_tol: f64,
    /// Tail tolerance deciding where the path has settled on its limits.
    #[arg(long, default_value_t = diffop::DEFAULT_TAIL_TOL)]
    tail_tol: f64,
    /// Horizon of the stable-space stopping rule.
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,
    /// Half-width of the discretisation window (chosen from the tails when
    /// absent).
    #[arg(long)]
    window: Option<f64>,
    /// Grid step of the discretised operator.
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV dump (trajectory or spectrum, depending on the command).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tols: ToleranceArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ProjectorArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Evaluate the path at this time (default 0).
    #[arg(long, default_value_t = 0.0, conflicts_with = "limit")]
    time: f64,
    /// Use an asymptotic limit instead: "plus" or "minus".
    #[arg(long)]
    limit: Option<String>,
}

#[derive(Args)]
struct StableArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Battery size when the preset is random-battery.
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Largest ambient dimension of battery members.
    #[arg(long, default_value_t = 6)]
    max_dim: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Projector(args) => cmd_projector(args),
        Command::Stable(args) => cmd_stable(args),
        Command::Index(args) => cmd_index(args),
        Command::Sf(args) => cmd_sf(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Demo(args) => cmd_demo(args),
    }
}

fn load_path(input: &InputArgs) -> Result<OperatorPath, Error> {
    if let Some(file) = &input.spec {
        let text = fs::read_to_string(file)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", file.display())))?;
        return PathSpec::from_json(&text)?.build();
    }
    let name = input
        .preset
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("provide --spec or --preset".into()))?;
    let dim = input.dim.unwrap_or(match name {
        "scalar-tanh" | "scalar-tanh-reversed" => 1,
        _ => 2,
    });
    let spec = PathSpec {
        dim,
        kind: PathKind::Preset(PresetSpec {
            name: name.to_string(),
            seed: Some(input.seed),
            angle: input.angle,
            count: None,
            subspace_x: None,
            subspace_y: None,
        }),
    };
    spec.build()
}

fn emit<T: serde::Serialize>(output: &OutputArgs, result: T) -> Result<(), Error> {
    let report = Report::new(result);
    let text = report.to_json();
    match &output.out {
        Some(file) => fs::write(file, text.as_bytes())
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", file.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_projector(args: ProjectorArgs) -> Result<ExitCode, Error> {
    let path = load_path(&args.common.input)?;
    let matrix = match args.limit.as_deref() {
        Some("plus") => path
            .limit_plus()
            .ok_or_else(|| Error::InvalidInput("path has no +inf limit".into()))?
            .clone(),
        Some("minus") => path
            .limit_minus()
            .ok_or_else(|| Error::InvalidInput("path has no -inf limit".into()))?
            .clone(),
        Some(other) => {
            return Err(Error::InvalidInput(format!("--limit must be plus or minus, got {other}")))
        }
        None => path.eval(args.time),
    };
    let split = spectral::spectral_projectors(&matrix)?;
    let result = ProjectorResult {
        margin: split.margin,
        rank_plus: split.p_plus.rank(),
        rank_minus: split.p_minus.rank(),
        p_plus: MatrixDto::from_cmat(split.p_plus.matrix()),
        p_minus: MatrixDto::from_cmat(split.p_minus.matrix()),
        idempotency_residual: split.p_plus.idempotency_residual(),
    };
    emit(&args.common.output, result)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_stable(args: StableArgs) -> Result<ExitCode, Error> {
    let path = load_path(&args.common.input)?;
    let tols = &args.common.tols;
    let stable = invariant::stable_space_limit(&path, tols.horizon, 1e-7)?;
    let unstable = invariant::unstable_space(&path, tols.horizon, 1e-7)?;
    let graph = invariant::stable_space_graph(&path, 1e-7).ok();
    let (graph_matrix, graph_norm, graph_shift, methods_delta1) = match &graph {
        Some((w, g)) => (
            Some(MatrixDto::from_cmat(&g.matrix)),
            Some(g.norm),
            Some(g.time),
            Some(grassmann::delta1(&stable, w)?),
        ),
        None => (None, None, None, None),
    };
    if let Some(csv) = &args.common.output.csv {
        dump_trajectory_csv(&path, tols.ode_tol, csv)?;
    }
    let result = StableResult {
        stable_dim: stable.dim(),
        unstable_dim: unstable.dim(),
        stable_basis: MatrixDto::from_cmat(stable.basis()),
        unstable_basis: MatrixDto::from_cmat(unstable.basis()),
        graph_matrix,
        graph_norm,
        graph_shift,
        methods_delta1,
    };
    emit(&args.common.output, result)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_index(args: CommonArgs) -> Result<ExitCode, Error> {
    let path = load_path(&args.input)?;
    let tols = &args.tols;
    let window = match tols.window {
        Some(w) => w,
        None => diffop::choose_window(&path, tols.tail_tol)?,
    };
    let sup = path.sup_norm();
    let cap = (0.1_f64).min(1.0 / (4.0 * sup));
    let step = tols.grid_step.unwrap_or(cap).min(cap);
    let op = diffop::assemble_with_tail_tol(&path, window, step, tols.tail_tol)?;
    let mut report = diffop::numeric_index_raw(&op, tols.rank_tol)?;
    let stable = invariant::stable_space_limit(&path, tols.horizon.max(window), 1e-7)?;
    let unstable = invariant::unstable_space(&path, tols.horizon.max(window), 1e-7)?;
    let pair = grassmann::pair_index(&stable, &unstable)?;
    report.pair_prediction = Some(pair.index);
    report.pair_match = Some(pair.index == report.index);
    emit(&args.output, IndexResult::from_report(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sf(args: CommonArgs) -> Result<ExitCode, Error> {
    let path = load_path(&args.input)?;
    let report = flow::spectral_flow_asymptotic(&path)?;
    if let Some(csv) = &args.output.csv {
        dump_spectrum_csv(&path, csv)?;
    }
    emit(&args.output, SfResult::from_report(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    let tols = &args.common.tols;
    let opts = VerifyOptions {
        ode_tol: tols.ode_tol,
        rank_tol: tols.rank_tol,
        tail_tol: tols.tail_tol,
        horizon: tols.horizon,
        window: tols.window,
        grid_step: tols.grid_step,
    };
    let members: Vec<(String, String, OperatorPath)> =
        if args.common.input.preset.as_deref() == Some("random-battery") {
            presets::random_battery(args.common.input.seed, args.count, args.max_dim)?
                .into_iter()
                .map(|m| (m.id, m.kind.to_string(), m.path))
                .collect()
        } else {
            let path = load_path(&args.common.input)?;
            vec![("single".into(), "spec".into(), path)]
        };

    let mut items = Vec::with_capacity(members.len());
    let mut failures = Vec::new();
    for (id, kind, path) in &members {
        let outcome = flow::verify_identity(path, &opts);
        match outcome {
            Ok(report) => {
                if !report.identities_hold {
                    failures.push(id.clone());
                }
                items.push(VerifyItem {
                    id: id.clone(),
                    kind: kind.clone(),
                    dim: path.dim(),
                    identity: IdentityResult::from_report(&report),
                });
            }
            Err(e) => {
                failures.push(format!("{id}: {e}"));
            }
        }
    }
    let passes = items.iter().filter(|i| i.identity.identities_hold).count();
    let all_ok = failures.is_empty();
    let result = VerifyResult { total: members.len(), passes, failures, items };
    emit(&args.common.output, result)?;
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn cmd_demo(output: OutputArgs) -> Result<ExitCode, Error> {
    let mut items = Vec::new();
    let mut check = |name: &str, detail: String, pass: bool| {
        items.push(DemoItem { name: name.into(), detail, pass });
    };

    // contour projector of [[0,3],[1,0]] against the rank-one eigenprojector
    {
        let a = linalg::cmat_from_rows(2, 2, &[0.0, 3.0, 1.0, 0.0]);
        let split = spectral::spectral_projectors(&a)?;
        let r = 3.0_f64.sqrt();
        let expected = linalg::cmat_from_rows(2, 2, &[0.5, r / 2.0, 1.0 / (2.0 * r), 0.5]);
        let err = (split.p_plus.matrix() - &expected).norm();
        check("projector-anti-triangular", format!("|P+ - closed form| = {err:.3e}"), err < 1e-8);
    }
    // functional calculus square root
    {
        let a = CMat::from_diagonal(&linalg::cvec_from_reals(&[0.21, 0.21]));
        let contour = spectral::Contour::circle(C64::new(0.0, 0.0), 0.6)?;
        let root = spectral::functional_calculus(&a, |z| (C64::new(1.0, 0.0) + z).sqrt(), &contour)?;
        let err = (&root * &root - (CMat::identity(2, 2) + &a)).norm();
        check("square-root", format!("|R^2 - (I+A)| = {err:.3e}"), err < 1e-8);
    }
    // retraction fixes square roots of unity
    {
        let p = linalg::cmat_from_rows(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        let a = &p * C64::new(2.0, 0.0) - CMat::identity(2, 2);
        let r = spectral::hyperbolic_retraction(&a)?;
        let err = (&r - &a).norm();
        check("retraction-fixed-point", format!("|r(2P-I) - (2P-I)| = {err:.3e}"), err < 1e-8);
    }
    // conjugation of a rotated projector
    {
        let theta: f64 = 0.3;
        let p = grassmann::Projector::new(linalg::cmat_from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]))?;
        let rot = linalg::cmat_from_rows(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let q = grassmann::Projector::new(&rot * p.matrix() * rot.transpose())?;
        let g = grassmann::conjugator(&p, &q)?;
        let err = (&g * p.matrix() - q.matrix() * &g).norm();
        check("conjugator-rotation", format!("|g p - q g| = {err:.3e}"), err <= 1e-9);
    }
    // minimum gap of tilted lines
    {
        let y = grassmann::Subspace::coordinate(2, &[0]);
        let theta = std::f64::consts::PI / 6.0;
        let z = grassmann::Subspace::from_columns(
            &linalg::cmat_from_rows(2, 1, &[theta.cos(), theta.sin()]),
            1e-10,
        )?;
        let g = grassmann::gap(&y, &z)?.value().unwrap_or(f64::NAN);
        check("minimum-gap", format!("gamma = {g:.6} (want 0.5)"), (g - 0.5).abs() < 1e-9);
    }
    // scalar tanh identity suite
    {
        let r = flow::verify_identity(&presets::scalar_tanh(), &VerifyOptions::default())?;
        check(
            "scalar-tanh-identities",
            format!(
                "sf = {}, ind = {}, ker = {}, coker = {}",
                r.sf.sf, r.index.index, r.index.ker_dim, r.index.coker_dim
            ),
            r.identities_hold
                && r.sf.sf == 1
                && r.index.index == -1
                && r.index.ker_dim == 0
                && r.index.coker_dim == 1,
        );
    }
    // diagonal tanh identity suite
    {
        let r = flow::verify_identity(&presets::tanh_diag(), &VerifyOptions::default())?;
        check(
            "tanh-diag-identities",
            format!("sf = {}, ind = {}, ker = {}", r.sf.sf, r.index.index, r.index.ker_dim),
            r.identities_hold && r.sf.sf == 0 && r.index.index == 0 && r.index.ker_dim == 1,
        );
    }
    // patch round trip on coordinate axes
    {
        let x = grassmann::Subspace::coordinate(2, &[0]);
        let y = grassmann::Subspace::coordinate(2, &[1]);
        let p = flow::patch_path(&x, &y)?;
        let w_s = invariant::stable_space_limit(&p, 16.0, 1e-8)?;
        let w_u = invariant::unstable_space(&p, 16.0, 1e-8)?;
        let ds = grassmann::delta1(&w_s, &x)?;
        let du = grassmann::delta1(&w_u, &y)?;
        check(
            "patch-round-trip",
            format!("delta1 stable {ds:.2e}, unstable {du:.2e}"),
            ds <= 1e-6 && du <= 1e-6,
        );
    }

    let all_pass = items.iter().all(|i| i.pass);
    emit(&output, DemoResult { items, all_pass })?;
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn dump_trajectory_csv(path: &OperatorPath, tol: f64, file: &PathBuf) -> Result<(), Error> {
    let (a, b) = path.domain();
    let window = (a.max(-20.0), b.min(20.0));
    let traj = propagator::propagate(path, window, tol)?;
    let n = path.dim();
    let mut text = String::from("t");
    for i in 0..n {
        for j in 0..n {
            text.push_str(&format!(",re_x{i}{j},im_x{i}{j}"));
        }
    }
    text.push('\n');
    for k in 0..traj.len() {
        text.push_str(&format!("{}", traj.times()[k]));
        let x = traj.value(k);
        for i in 0..n {
            for j in 0..n {
                text.push_str(&format!(",{},{}", x[(i, j)].re, x[(i, j)].im));
            }
        }
        text.push('\n');
    }
    fs::write(file, text)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", file.display())))
}

fn dump_spectrum_csv(path: &OperatorPath, file: &PathBuf) -> Result<(), Error> {
    let (a, b) = path.domain();
    let n = path.dim();
    let samples = 400;
    let mut text = String::from("t");
    for i in 0..n {
        text.push_str(&format!(",re_lambda{i},im_lambda{i}"));
    }
    text.push('\n');
    for k in 0..=samples {
        let t = a + (b - a) * k as f64 / samples as f64;
        let eigs = linalg::eigenvalues(&path.eval(t))?;
        text.push_str(&format!("{t}"));
        for e in eigs {
            text.push_str(&format!(",{},{}", e.re, e.im));
        }
        text.push('\n');
    }
    fs::write(file, text)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", file.display())))
}
