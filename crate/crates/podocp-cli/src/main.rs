//! `podocp` — command-line driver for the reduced-order modeling library.
//!
//! Subcommands: `offline` (train and persist a reduced model), `online`
//! (solve the reduced problem at one parameter point), `validate` (error and
//! speedup sweeps against the truth solver), and `mesh` (geometry export).
//! Every command writes into a fresh timestamped directory under the output
//! root and never mutates earlier artifacts.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 solver failure,
//! 4 I/O or artifact-format failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use podocp::bench;
use podocp::config::RunConfig;
use podocp::geometry::{build_bifurcation_mesh, deform_mesh, stretch_map};
use podocp::io;
use podocp::ocp::affine::KktStructure;
use podocp::ocp::{Discretization, ProblemId, TruthSolver};
use podocp::pipeline::{self, timestamped_dir, utc_stamp};
use podocp::pod::ReducedBasis;
use podocp::rom::{self, ReducedModel};
use podocp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "podocp",
    version,
    about = "Reduced-order boundary-control solvers on a bifurcation domain",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline pipeline: mesh, training solves, POD, projection.
    Offline(OfflineArgs),
    /// Solve the reduced problem at one parameter point.
    Online(OnlineArgs),
    /// Sweep reduced dimensions, comparing errors and timings to the truth.
    Validate(ValidateArgs),
    /// Build and export the bifurcation mesh without solving anything.
    Mesh(MeshArgs),
}

#[derive(Args)]
struct OfflineArgs {
    /// Run configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Worker threads for the training solves (0 = all cores).
    #[arg(long, value_name = "INT", default_value_t = 0)]
    jobs: usize,
    /// Output root (overrides PODOCP_OUT and the config's out_dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OnlineArgs {
    /// Reduced-model container; defaults to the config's model_path.
    #[arg(value_name = "MODEL")]
    model: Option<PathBuf>,
    /// Resolved run configuration, as written by `offline`.  Required by
    /// --n, --export-vtk, and --compare-truth (mesh and basis paths).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Parameter point, comma separated (stokes_td: mu1,mu2,mu3).
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    mu: String,
    /// Re-project onto the leading N modes per variable before solving.
    #[arg(long, value_name = "INT")]
    n: Option<usize>,
    /// Export the reduced fields as VTK files.
    #[arg(long)]
    export_vtk: bool,
    /// Also run the truth solver at the same point and report errors.
    #[arg(long)]
    compare_truth: bool,
    /// Output root (overrides PODOCP_OUT and the config's out_dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Run configuration whose basis_path points at a trained basis.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Sweep this single reduced dimension instead of the configured list.
    #[arg(long, value_name = "INT")]
    n: Option<usize>,
    /// Worker threads for the test-set truth solves (0 = all cores).
    #[arg(long, value_name = "INT", default_value_t = 0)]
    jobs: usize,
    /// Output root (overrides PODOCP_OUT and the config's out_dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    /// Run configuration naming the problem and mesh size.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output root (overrides PODOCP_OUT and the config's out_dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Offline(args) => cmd_offline(&args),
        Command::Online(args) => cmd_online(&args),
        Command::Validate(args) => cmd_validate(&args),
        Command::Mesh(args) => cmd_mesh(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Stable exit-code contract: 2 usage/config, 3 solver, 4 I/O.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::MeshResolution(_) | Error::Config(_) => 2,
        Error::SingularSystem { .. }
        | Error::NewtonDiverged { .. }
        | Error::LineSearchStagnation { .. }
        | Error::NotPositiveDefinite { .. } => 3,
        Error::Io { .. } | Error::MalformedArtifact { .. } => 4,
    }
}

/// Output root precedence: `--out` flag, then `PODOCP_OUT`, then the
/// config's `out_dir`, then `runs`.
fn out_root(flag: Option<&Path>, resolved: Option<&RunConfig>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Ok(dir) = std::env::var("PODOCP_OUT") {
        if !dir.trim().is_empty() {
            return PathBuf::from(dir);
        }
    }
    resolved
        .and_then(|r| r.out_dir.clone())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_mu(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad --mu component {part:?}: {e}")))
        })
        .collect()
}

fn format_mu(mu: &[f64]) -> String {
    let parts: Vec<String> = mu.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_offline(args: &OfflineArgs) -> Result<()> {
    let run = RunConfig::load(&args.config)?;
    let resolved = run.resolved()?;
    let root = out_root(args.out.as_deref(), Some(&resolved));
    let dir = timestamped_dir(&root, "offline")?;
    println!("output directory: {}", dir.display());

    let arts = pipeline::run_offline(&run, &dir, args.jobs)?;
    if arts.snapshot_failures > 0 {
        println!(
            "warning: {} training solves failed and were excluded (see MANIFEST.json)",
            arts.snapshot_failures
        );
    }
    println!(
        "reduced basis: N = {} modes per variable, aggregated dimension {}",
        arts.basis_n, arts.total_dim
    );
    println!("model persisted: {}", arts.model_path.display());
    Ok(())
}

fn cmd_online(args: &OnlineArgs) -> Result<()> {
    let mu = parse_mu(&args.mu)?;
    let run = args.config.as_deref().map(RunConfig::load).transpose()?;
    let resolved = run.as_ref().map(RunConfig::resolved).transpose()?;

    let model_path = args
        .model
        .clone()
        .or_else(|| {
            resolved
                .as_ref()
                .and_then(|r| r.model_path.clone().map(PathBuf::from))
        })
        .ok_or_else(|| {
            Error::invalid("no model to load: pass a MODEL path or --config whose model_path is set")
        })?;
    let mut model = io::load_model(&model_path)?;
    let problem = model.problem;
    model.cfg.check_mu(&mu)?;

    // The mesh and basis are rebuilt only for the flags that need them.
    let mut ctx: Option<(Discretization, ReducedBasis)> =
        if args.n.is_some() || args.export_vtk || args.compare_truth {
            let resolved = resolved.as_ref().ok_or_else(|| {
                Error::invalid(
                    "--n, --export-vtk, and --compare-truth need --config for the mesh and basis",
                )
            })?;
            let basis_path = resolved.basis_path.as_ref().ok_or_else(|| {
                Error::Config("config has no basis_path; run `podocp offline` first".into())
            })?;
            let basis = io::load_basis(basis_path)?;
            let mesh = build_bifurcation_mesh(resolved.h)?;
            let disc = Discretization::new(mesh, problem)?;
            Some((disc, basis))
        } else {
            None
        };

    if let Some(n) = args.n {
        let (disc, basis) = ctx.as_mut().expect("context built for --n");
        let truncated = basis.truncate(disc, n)?;
        let structure = KktStructure::new(disc, &model.cfg)?;
        model = rom::project(disc, &model.cfg, &structure, &truncated)?;
        *basis = truncated;
    }

    let sol = model.solve(&mu)?;
    println!("problem: {}", problem.name());
    println!("mu = {}", format_mu(&mu));
    println!(
        "reduced dimension: {} (N = {} modes per variable)",
        model.dim(),
        model.n
    );
    println!("J_N = {:.10e}", sol.cost);
    println!(
        "online solve: {:.3e} s ({} iterations, residual {:.3e})",
        sol.wall_time.as_secs_f64(),
        sol.iterations,
        sol.residual
    );

    let root = out_root(args.out.as_deref(), resolved.as_ref());
    let dir = timestamped_dir(&root, "online")?;
    if let Some(resolved) = &resolved {
        resolved.save(dir.join("config.toml"))?;
    }
    io::write_run_record(
        dir.join("run.json"),
        &io::RunRecord {
            problem,
            reduced: true,
            mu: mu.clone(),
            cost: sol.cost,
            residual: sol.residual,
            iterations: sol.iterations,
            wall_time_s: sol.wall_time.as_secs_f64(),
        },
    )?;

    let fields = match &ctx {
        Some((disc, basis)) => Some(rom::reconstruct(basis, disc, &model.cfg, &mu, &sol.coeffs)?),
        None => None,
    };

    if args.compare_truth {
        let (disc, _) = ctx.as_ref().expect("context built for --compare-truth");
        let fields = fields.as_ref().expect("fields reconstructed");
        compare_truth(&dir, disc, &model, &mu, &sol.cost, fields)?;
    }

    if args.export_vtk {
        let (disc, _) = ctx.as_ref().expect("context built for --export-vtk");
        let fields = fields.as_ref().expect("fields reconstructed");
        let written = export_fields(&dir, disc, &model, &mu, fields)?;
        for name in written {
            println!("fields exported: {}", dir.join(name).display());
        }
    }

    println!("run record: {}", dir.join("run.json").display());
    Ok(())
}

/// Solve the truth problem at `mu`, report per-variable relative errors of
/// the reconstructed reduced trajectory, and persist both run records.
fn compare_truth(
    dir: &Path,
    disc: &Discretization,
    model: &ReducedModel,
    mu: &[f64],
    reduced_cost: &f64,
    fields: &rom::ReducedFields,
) -> Result<()> {
    let mut solver = TruthSolver::new(disc, &model.cfg)?;
    let start = Instant::now();
    let truth = solver.solve(mu)?;
    let truth_time = start.elapsed().as_secs_f64();
    println!(
        "truth solve: {truth_time:.3e} s (J = {:.10e}, {} iterations)",
        truth.cost, truth.iterations
    );

    let nt = model.cfg.nt;
    let dt = model.cfg.dt();
    let err = [
        ("v", bench::trajectory_rel_err(&disc.velocity_gram, nt, dt, &fields.v, &truth.v)),
        ("p", bench::trajectory_rel_err(&disc.pressure_mass, nt, dt, &fields.p, &truth.p)),
        ("u", bench::trajectory_rel_err(&disc.control_gram, nt, dt, &fields.u, &truth.u)),
        ("w", bench::trajectory_rel_err(&disc.velocity_gram, nt, dt, &fields.w, &truth.w)),
        ("q", bench::trajectory_rel_err(&disc.pressure_mass, nt, dt, &fields.q, &truth.q)),
    ];
    let err_j = (reduced_cost - truth.cost).abs() / truth.cost.abs().max(1e-14);
    let line: Vec<String> = err
        .iter()
        .map(|(name, e)| format!("{name} {e:.3e}"))
        .collect();
    println!("relative errors: {}  J {err_j:.3e}", line.join("  "));

    io::write_run_record(
        dir.join("truth.json"),
        &io::RunRecord {
            problem: model.problem,
            reduced: false,
            mu: mu.to_vec(),
            cost: truth.cost,
            residual: truth.kkt_residual,
            iterations: truth.iterations,
            wall_time_s: truth_time,
        },
    )?;
    let mut comparison = serde_json::Map::new();
    for (name, e) in err {
        comparison.insert(format!("err_{name}"), serde_json::json!(e));
    }
    comparison.insert("err_j".into(), serde_json::json!(err_j));
    comparison.insert("truth_time_s".into(), serde_json::json!(truth_time));
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(comparison))
        .map_err(|e| Error::invalid(format!("comparison serialization: {e}")))?;
    io::write_text(dir.join("comparison.json"), &text)?;
    Ok(())
}

/// Write the reconstructed fields as VTK: the time-dependent problem at
/// t in {0.05, 0.5, 1} on the mu2-deformed mesh, the steady problem as a
/// single file on the reference mesh.
fn export_fields(
    dir: &Path,
    disc: &Discretization,
    model: &ReducedModel,
    mu: &[f64],
    fields: &rom::ReducedFields,
) -> Result<Vec<String>> {
    let problem = model.problem;
    let nt = model.cfg.nt;
    let dt = model.cfg.dt();
    let (date, _) = utc_stamp();
    let (mesh, times) = match problem {
        ProblemId::StokesTd => {
            let map = stretch_map(mu[1])?;
            (deform_mesh(&disc.mesh, &map), vec![0.05, 0.5, 1.0])
        }
        ProblemId::NsSteady => (disc.mesh.clone(), vec![dt]),
    };
    let mut written = Vec::new();
    for &t in &times {
        let k = ((t / dt).round() as usize).clamp(1, nt) - 1;
        let v: Vec<f64> = fields.v.column(k).iter().copied().collect();
        let p: Vec<f64> = fields.p.column(k).iter().copied().collect();
        let w: Vec<f64> = fields.w.column(k).iter().copied().collect();
        let q: Vec<f64> = fields.q.column(k).iter().copied().collect();
        let name = match problem {
            ProblemId::StokesTd => format!("{}_fields_t{t}_{date}.vtk", problem.name()),
            ProblemId::NsSteady => format!("{}_fields_{date}.vtk", problem.name()),
        };
        io::write_fields_vtk(
            dir.join(&name),
            &mesh,
            &disc.layout,
            &[("velocity", &v), ("adjoint_velocity", &w)],
            &[("pressure", &p), ("adjoint_pressure", &q)],
        )?;
        written.push(name);
    }
    Ok(written)
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let mut run = RunConfig::load(&args.config)?;
    if let Some(n) = args.n {
        run.n_list = Some(vec![n]);
    }
    let mut resolved = run.resolved()?;
    let problem = resolved.problem_id()?;
    let cfg = resolved.problem_config()?;
    let basis_path = resolved.basis_path.clone().ok_or_else(|| {
        Error::Config("config has no basis_path; run `podocp offline` first".into())
    })?;
    let basis = io::load_basis(&basis_path)?;

    // A default sweep list may overshoot an energy-truncated basis; clamp it
    // rather than fail.  An explicit n_list (or --n) is honored verbatim.
    if run.n_list.is_none() {
        let list = resolved.n_list.clone().expect("resolved");
        let mut clamped: Vec<usize> = list.into_iter().filter(|&n| n <= basis.n).collect();
        if clamped.is_empty() {
            clamped.push(basis.n);
        }
        resolved.n_list = Some(clamped);
    }

    let mesh = build_bifurcation_mesh(resolved.h)?;
    let disc = Discretization::new(mesh, problem)?;

    let root = out_root(args.out.as_deref(), Some(&resolved));
    let dir = timestamped_dir(&root, "validate")?;
    println!("output directory: {}", dir.display());
    resolved.save(dir.join("config.toml"))?;

    let report = bench::run_validation(&disc, &cfg, &basis, &resolved, args.jobs)?;

    let (date, _) = utc_stamp();
    let file = |quantity: &str, ext: &str| format!("{}_{quantity}_{date}.{ext}", problem.name());
    io::write_text(dir.join(file("errors", "csv")), &report.error_csv())?;
    io::write_text(dir.join(file("speedup", "csv")), &report.speedup_csv())?;
    io::write_text(dir.join(file("eigen_decay", "csv")), &report.eigen_csv())?;
    io::write_text(dir.join(file("report", "json")), &report.to_json()?)?;

    println!(
        "{:>4}  {:>6}  {:>10}  {:>10}  {:>10}  {:>10}",
        "N", "dim", "err_v", "err_u", "err_J", "speedup"
    );
    for (er, sr) in report.error_rows.iter().zip(&report.speedup_rows) {
        println!(
            "{:>4}  {:>6}  {:>10.3e}  {:>10.3e}  {:>10.3e}  {:>10.1}",
            er.n, er.total_dim, er.err_v, er.err_u, er.err_j, sr.speedup
        );
    }
    if !report.failures.is_empty() {
        println!(
            "warning: {} solves failed during the sweep (recorded in the report)",
            report.failures.len()
        );
    }
    println!("report written: {}", dir.join(file("report", "json")).display());
    Ok(())
}

fn cmd_mesh(args: &MeshArgs) -> Result<()> {
    let run = RunConfig::load(&args.config)?;
    let resolved = run.resolved()?;
    resolved.problem_id()?;
    let mesh = build_bifurcation_mesh(resolved.h)?;

    let root = out_root(args.out.as_deref(), Some(&resolved));
    let dir = timestamped_dir(&root, "mesh")?;
    resolved.save(dir.join("config.toml"))?;
    io::write_mesh_vtk(dir.join("mesh.vtk"), &mesh)?;
    io::write_mesh_text(dir.join("mesh.txt"), &mesh)?;

    println!(
        "mesh: {} vertices, {} triangles, h_max {:.4} (target {:.4})",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.h_max,
        mesh.h_target
    );
    println!("written to {}", dir.display());
    Ok(())
}
