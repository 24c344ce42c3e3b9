//! Offline orchestration: from a run configuration to a persisted reduced
//! model.
//!
//! [`run_offline`] executes the stages mesh → snapshots → POD → projection,
//! persisting every intermediate artifact into one output directory.  A
//! `MANIFEST.json` file in that directory is rewritten after every stage, so
//! an interrupted or failed run always leaves behind a machine-readable
//! record of which artifacts are trustworthy.  The module also provides the
//! small utilities shared by all front-end commands: timestamped output
//! directories, a UTC timestamp without external dependencies, and a helper
//! bounding library parallelism to a `--jobs` count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::build_bifurcation_mesh;
use crate::io;
use crate::ocp::affine::KktStructure;
use crate::ocp::Discretization;
use crate::pod::{build_reduced_basis, collect_snapshots, sample_training_set};
use crate::rom::{self, ReducedModel};

/// Gregorian calendar date for a count of days since 1970-01-01.
fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1_460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let year = yoe + era * 400 + i64::from(month <= 2);
    (year, month, day)
}

/// Current UTC time as `(YYYYMMDD, YYYYMMDD-HHMMSS)`.
///
/// The date half names report files, the full stamp names output
/// directories.  Hand-rolled from the Unix clock so artifacts carry no
/// dependency on a date-time crate.
pub fn utc_stamp() -> (String, String) {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    stamp_from_unix(secs)
}

fn stamp_from_unix(secs: i64) -> (String, String) {
    let (year, month, day) = civil_from_days(secs.div_euclid(86_400));
    let sod = secs.rem_euclid(86_400);
    let date = format!("{year:04}{month:02}{day:02}");
    let full = format!(
        "{date}-{:02}{:02}{:02}",
        sod / 3_600,
        (sod % 3_600) / 60,
        sod % 60
    );
    (date, full)
}

/// Create a fresh directory `root/<label>-<timestamp>` and return its path.
///
/// Existing directories are never reused or touched: on a name collision
/// (two runs within the same second) a `-2`, `-3`, … suffix disambiguates.
pub fn timestamped_dir(root: impl AsRef<Path>, label: &str) -> Result<PathBuf> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root.to_string_lossy(), e))?;
    let (_, stamp) = utc_stamp();
    let base = format!("{label}-{stamp}");
    for attempt in 1..10_000u32 {
        let name = if attempt == 1 {
            base.clone()
        } else {
            format!("{base}-{attempt}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(dir.to_string_lossy(), e)),
        }
    }
    Err(Error::invalid(format!(
        "could not allocate a unique directory under {} for label {label}",
        root.display()
    )))
}

/// Run `f` on a dedicated thread pool of `jobs` workers (`0` = the global
/// default pool), bounding all library parallelism underneath it.
pub fn with_jobs<T, F>(jobs: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("failed to build a {jobs}-thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Outcome of one pipeline stage, as recorded in `MANIFEST.json`.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: String,
    /// `"completed"` or `"failed"`.
    pub status: String,
    /// One-line summary on success, the error message on failure.
    pub detail: String,
    pub wall_time_s: f64,
}

/// Machine-readable record of an offline run, rewritten after every stage.
///
/// `complete` turns `true` only once every stage has finished and all
/// artifacts are on disk; consumers must treat artifacts from an incomplete
/// manifest as partial output.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub problem: String,
    pub created: String,
    pub complete: bool,
    pub stages: Vec<StageRecord>,
    /// File names (relative to the manifest) written so far.
    pub artifacts: Vec<String>,
}

impl Manifest {
    fn new(problem: &str) -> Self {
        Manifest {
            problem: problem.to_string(),
            created: utc_stamp().1,
            complete: false,
            stages: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        io::write_text(dir.join("MANIFEST.json"), &text)
    }
}

/// Run one stage, append its record to the manifest, and rewrite the
/// manifest on disk before propagating any failure.
fn stage<T>(
    manifest: &mut Manifest,
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut Manifest) -> Result<(T, String)>,
) -> Result<T> {
    let start = Instant::now();
    match f(manifest) {
        Ok((value, detail)) => {
            log::info!("stage {name}: {detail}");
            manifest.stages.push(StageRecord {
                stage: name.to_string(),
                status: "completed".to_string(),
                detail,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
            manifest.write(dir)?;
            Ok(value)
        }
        Err(err) => {
            log::error!("stage {name} failed: {err}");
            manifest.stages.push(StageRecord {
                stage: name.to_string(),
                status: "failed".to_string(),
                detail: err.to_string(),
                wall_time_s: start.elapsed().as_secs_f64(),
            });
            // Best effort: the stage error is the one worth reporting.
            let _ = manifest.write(dir);
            Err(err)
        }
    }
}

fn path_string(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Paths and dimensions of a completed offline run.
#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub dir: PathBuf,
    pub config_path: PathBuf,
    pub mesh_path: PathBuf,
    pub snapshots_path: PathBuf,
    pub basis_path: PathBuf,
    pub model_path: PathBuf,
    pub eigen_path: PathBuf,
    /// Modes per variable retained by the decomposition.
    pub basis_n: usize,
    /// Aggregated reduced dimension (13 × `basis_n`).
    pub total_dim: usize,
    /// Training points whose truth solve failed (excluded, recorded).
    pub snapshot_failures: usize,
}

/// Execute the full offline pipeline into `dir`, which must be a fresh
/// directory (see [`timestamped_dir`]).
///
/// Stages: resolve + persist the configuration, build the mesh and its
/// operators, solve the training set, build the reduced basis, project the
/// optimality system.  Every artifact is written as soon as it exists and
/// `MANIFEST.json` tracks stage status throughout, so partial output of a
/// failed run remains inspectable.  `jobs` bounds parallelism (`0` = all
/// cores).
pub fn run_offline(run: &RunConfig, dir: impl AsRef<Path>, jobs: usize) -> Result<OfflineArtifacts> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.to_string_lossy(), e))?;

    let mut resolved = run.resolved()?;
    let problem = resolved.problem_id()?;
    let cfg = resolved.problem_config()?;
    let pod_cfg = resolved.pod_config();

    let config_path = dir.join("config.toml");
    let mesh_path = dir.join("mesh.vtk");
    let snapshots_path = dir.join("snapshots.podc");
    let basis_path = dir.join("basis.podc");
    let model_path = dir.join("model.podc");
    let (date, _) = utc_stamp();
    let eigen_path = dir.join(format!("{}_eigen_decay_{date}.csv", problem.name()));

    // The resolved copy records where this run's own artifacts live, so it
    // can be fed back to the online and validation commands unchanged.
    resolved.snapshots_path = Some(path_string(&snapshots_path));
    resolved.basis_path = Some(path_string(&basis_path));
    resolved.model_path = Some(path_string(&model_path));

    let mut manifest = Manifest::new(problem.name());

    let resolved_for_stage = resolved.clone();
    stage(&mut manifest, dir, "config", move |m| {
        resolved_for_stage.save(&config_path)?;
        m.artifacts.push("config.toml".to_string());
        Ok(((), format!("resolved configuration for {}", problem.name())))
    })?;

    let disc = stage(&mut manifest, dir, "mesh", |m| {
        let mesh = build_bifurcation_mesh(resolved.h)?;
        let disc = Discretization::new(mesh, problem)?;
        io::write_mesh_vtk(&mesh_path, &disc.mesh)?;
        m.artifacts.push("mesh.vtk".to_string());
        let detail = format!(
            "{} vertices, {} triangles (h_max {:.4}); {} velocity + {} pressure + {} control dofs",
            disc.mesh.vertices.len(),
            disc.mesh.triangles.len(),
            disc.mesh.h_max,
            disc.layout.n_velocity,
            disc.layout.n_pressure,
            disc.layout.n_control,
        );
        Ok((disc, detail))
    })?;

    let mus = sample_training_set(&cfg.param_box, resolved.n_train, resolved.seed_train);
    let snaps = stage(&mut manifest, dir, "snapshots", |m| {
        let snaps = with_jobs(jobs, || collect_snapshots(&disc, &cfg, &mus))??;
        io::save_snapshots(&snapshots_path, &snaps)?;
        m.artifacts.push("snapshots.podc".to_string());
        let detail = format!(
            "{} of {} training solves succeeded",
            snaps.len(),
            mus.len()
        );
        Ok((snaps, detail))
    })?;

    let basis = stage(&mut manifest, dir, "pod", |m| {
        let basis = build_reduced_basis(&disc, &cfg, &snaps, &pod_cfg)?;
        io::save_basis(&basis_path, &basis)?;
        io::write_text(
            &eigen_path,
            &io::eigen_decay_csv(&["v", "p", "u", "w", "q"], &basis.spectra),
        )?;
        m.artifacts.push("basis.podc".to_string());
        m.artifacts
            .push(eigen_path.file_name().unwrap().to_string_lossy().into_owned());
        let detail = format!(
            "N = {} modes per variable, aggregated dimension {}, {} rank-deficient columns dropped",
            basis.n,
            basis.total_dim(),
            basis.dropped,
        );
        Ok((basis, detail))
    })?;

    let model: ReducedModel = stage(&mut manifest, dir, "projection", |m| {
        let structure = KktStructure::new(&disc, &cfg)?;
        let model = rom::project(&disc, &cfg, &structure, &basis)?;
        io::save_model(&model_path, &model)?;
        m.artifacts.push("model.podc".to_string());
        let detail = format!("reduced optimality system of dimension {}", model.dim());
        Ok((model, detail))
    })?;

    manifest.complete = true;
    manifest.write(dir)?;

    Ok(OfflineArtifacts {
        dir: dir.to_path_buf(),
        config_path: dir.join("config.toml"),
        mesh_path,
        snapshots_path,
        basis_path,
        model_path,
        eigen_path,
        basis_n: basis.n,
        total_dim: model.dim(),
        snapshot_failures: snaps.failures.len(),
    })
}
