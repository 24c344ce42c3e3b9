//! Error and speedup sweeps comparing reduced and full-order solves.
//!
//! The error sweep solves the truth problem once per test parameter, then
//! truncates the reduced basis to each requested size, re-projects, solves
//! the reduced problem, and reports the mean relative error per variable in
//! the variable's own norm (H1 for velocities, L2 for pressures, H1 on the
//! control boundary for the control) together with the relative cost error.
//! The speedup sweep times both solvers with a warmed-up median-of-5
//! protocol, batching reduced solves when a single one is too fast to time
//! reliably.  All raw per-point values are retained in the report so every
//! reported mean can be recomputed from it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fem::spacetime_norm;
use crate::ocp::affine::KktStructure;
use crate::ocp::{solve_truth_set, Discretization, OcpSolution, ProblemConfig, TruthSolver};
use crate::pod::{sample_training_set, PodSpectrum, ReducedBasis};
use crate::rom::{project, reconstruct};
use crate::sparse::CsrMatrix;

/// Experiment record stored with every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub problem: String,
    pub h_target: f64,
    pub h_max: f64,
    pub nt: usize,
    pub n_velocity: usize,
    pub n_pressure: usize,
    pub n_control: usize,
    /// Full-order optimality-system dimension (all variables, all time nodes).
    pub truth_dofs: usize,
    pub n_train: usize,
    pub test_size: usize,
    pub seed_train: u64,
    pub seed_test: u64,
    pub eps_tol: f64,
    pub n_max: usize,
    pub newton_tol: f64,
    pub hardware: String,
}

impl Environment {
    pub fn gather(disc: &Discretization, cfg: &ProblemConfig, run: &RunConfig) -> Self {
        let index = disc.block_index(cfg.nt);
        let cores = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        Environment {
            problem: cfg.problem.name().to_string(),
            h_target: disc.mesh.h_target,
            h_max: disc.mesh.h_max,
            nt: cfg.nt,
            n_velocity: disc.layout.n_velocity,
            n_pressure: disc.layout.n_pressure,
            n_control: disc.layout.n_control,
            truth_dofs: index.total(),
            n_train: run.n_train,
            test_size: run.test_size,
            seed_train: run.seed_train,
            seed_test: run.seed_test,
            eps_tol: run.eps_tol,
            n_max: run.n_max,
            newton_tol: run.newton_tol,
            hardware: format!("{}/{}, {} logical cores", std::env::consts::OS, std::env::consts::ARCH, cores),
        }
    }
}

/// Mean relative errors over the test set at one basis size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub total_dim: usize,
    pub err_v: f64,
    pub err_p: f64,
    pub err_u: f64,
    pub err_w: f64,
    pub err_q: f64,
    pub err_j: f64,
    /// Test points contributing to the means (declared size minus failures).
    pub points: usize,
}

/// Raw per-(basis size, parameter) record backing the row means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawErrorPoint {
    pub n: usize,
    pub mu: Vec<f64>,
    pub err_v: f64,
    pub err_p: f64,
    pub err_u: f64,
    pub err_w: f64,
    pub err_q: f64,
    pub cost_truth: f64,
    pub cost_reduced: f64,
}

/// Timing comparison at one basis size.  The truth timing is shared by all
/// rows of one sweep (it does not depend on the reduced dimension).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub n: usize,
    pub total_dim: usize,
    /// Mean over the timing sample of per-parameter median solve times.
    pub truth_time_s: f64,
    pub reduced_time_s: f64,
    pub speedup: f64,
    /// Reduced solves per timed repetition; above one the timer was too
    /// coarse for single solves and batched timing was used.
    pub batch: usize,
    /// Per parameter: the five timed repetitions (already divided by batch).
    pub raw_reduced_s: Vec<Vec<f64>>,
}

/// One excluded test point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFailure {
    pub stage: String,
    pub mu: Vec<f64>,
    pub reason: String,
}

/// Machine-readable sweep results (JSON), with CSV renderings for the error,
/// speedup, and eigenvalue-decay tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub problem: String,
    pub environment: Environment,
    pub error_rows: Vec<ErrorRow>,
    pub raw_errors: Vec<RawErrorPoint>,
    pub speedup_rows: Vec<SpeedupRow>,
    /// Parameters of the timing sample, aligned with `raw_truth_s`.
    pub timing_mus: Vec<Vec<f64>>,
    /// Per timing parameter: the five timed truth repetitions.
    pub raw_truth_s: Vec<Vec<f64>>,
    pub failures: Vec<SweepFailure>,
    pub eigen_labels: Vec<String>,
    pub spectra: Vec<PodSpectrum>,
}

impl SweepReport {
    fn new(env: Environment, basis: &ReducedBasis) -> Self {
        SweepReport {
            problem: env.problem.clone(),
            environment: env,
            error_rows: Vec::new(),
            raw_errors: Vec::new(),
            speedup_rows: Vec::new(),
            timing_mus: Vec::new(),
            raw_truth_s: Vec::new(),
            failures: Vec::new(),
            eigen_labels: ["v", "p", "u", "w", "q"].iter().map(|s| s.to_string()).collect(),
            spectra: basis.spectra.clone(),
        }
    }

    /// Re-derive every reported mean from the raw per-point records and
    /// check it against the stored rows (to 1e-14 relative).
    pub fn verify_consistency(&self) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1.0);
        for row in &self.error_rows {
            let points: Vec<&RawErrorPoint> =
                self.raw_errors.iter().filter(|p| p.n == row.n).collect();
            if points.len() != row.points {
                return Err(Error::invalid(format!(
                    "row N = {} declares {} points but {} raw records exist",
                    row.n,
                    row.points,
                    points.len()
                )));
            }
            let m = points.len().max(1) as f64;
            let mean = |f: &dyn Fn(&RawErrorPoint) -> f64| points.iter().map(|p| f(p)).sum::<f64>() / m;
            let checks = [
                (row.err_v, mean(&|p| p.err_v)),
                (row.err_p, mean(&|p| p.err_p)),
                (row.err_u, mean(&|p| p.err_u)),
                (row.err_w, mean(&|p| p.err_w)),
                (row.err_q, mean(&|p| p.err_q)),
                (
                    row.err_j,
                    mean(&|p| {
                        (p.cost_reduced - p.cost_truth).abs() / p.cost_truth.abs().max(1e-300)
                    }),
                ),
            ];
            for (stored, recomputed) in checks {
                if !close(stored, recomputed) {
                    return Err(Error::invalid(format!(
                        "row N = {}: stored mean {stored:.17e} != recomputed {recomputed:.17e}",
                        row.n
                    )));
                }
            }
        }
        for row in &self.speedup_rows {
            if !(row.speedup > 0.0) || !(row.truth_time_s > 0.0) || !(row.reduced_time_s > 0.0) {
                return Err(Error::invalid(format!(
                    "row N = {} has non-positive timings",
                    row.n
                )));
            }
        }
        Ok(())
    }

    pub fn error_csv(&self) -> String {
        let mut s = String::from("n,total_dim,err_v,err_p,err_u,err_w,err_q,err_j,points\n");
        for r in &self.error_rows {
            s.push_str(&format!(
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                r.n, r.total_dim, r.err_v, r.err_p, r.err_u, r.err_w, r.err_q, r.err_j, r.points
            ));
        }
        s
    }

    pub fn speedup_csv(&self) -> String {
        let mut s = String::from("n,total_dim,truth_time_s,reduced_time_s,speedup,batch\n");
        for r in &self.speedup_rows {
            s.push_str(&format!(
                "{},{},{:.6e},{:.6e},{:.3},{}\n",
                r.n, r.total_dim, r.truth_time_s, r.reduced_time_s, r.speedup, r.batch
            ));
        }
        s
    }

    pub fn eigen_csv(&self) -> String {
        let labels: Vec<&str> = self.eigen_labels.iter().map(|s| s.as_str()).collect();
        crate::io::eigen_decay_csv(&labels, &self.spectra)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("report serialization: {e}")))
    }
}

/// Relative space-time error between two trajectories in the norm induced
/// by `gram`, with the denominator floored at `1e-14` to keep near-zero
/// references from exploding the quotient.
pub fn trajectory_rel_err(
    gram: &CsrMatrix,
    nt: usize,
    dt: f64,
    got: &nalgebra::DMatrix<f64>,
    want: &nalgebra::DMatrix<f64>,
) -> f64 {
    let w: Vec<f64> = want.as_slice().to_vec();
    let d: Vec<f64> = got
        .as_slice()
        .iter()
        .zip(&w)
        .map(|(a, b)| a - b)
        .collect();
    let scale = spacetime_norm(gram, nt, dt, &w).max(1e-14);
    spacetime_norm(gram, nt, dt, &d) / scale
}

/// Truncate, re-project, and solve at every test point for each basis size;
/// append error rows and raw records to the report.
pub fn error_sweep(
    disc: &Discretization,
    cfg: &ProblemConfig,
    basis: &ReducedBasis,
    n_list: &[usize],
    test_set: &[Vec<f64>],
    jobs: usize,
    report: &mut SweepReport,
) -> Result<()> {
    if n_list.is_empty() || test_set.is_empty() {
        return Err(Error::invalid("error sweep needs basis sizes and test points"));
    }
    let structure = KktStructure::new(disc, cfg)?;
    let nt = cfg.nt;
    let dt = cfg.dt();

    log::info!("error sweep: {} truth solves on {} threads", test_set.len(), if jobs == 0 { rayon::current_num_threads() } else { jobs });
    let truths = solve_truth_set(disc, cfg, test_set, jobs);
    let mut solved: Vec<(usize, &OcpSolution)> = Vec::new();
    for (i, outcome) in truths.iter().enumerate() {
        match outcome {
            Ok(sol) => solved.push((i, sol)),
            Err(reason) => report.failures.push(SweepFailure {
                stage: "truth".into(),
                mu: test_set[i].clone(),
                reason: reason.clone(),
            }),
        }
    }
    if solved.is_empty() {
        return Err(Error::invalid("every truth solve in the test set failed"));
    }

    for &n in n_list {
        let small = basis.truncate(disc, n)?;
        let model = project(disc, cfg, &structure, &small)?;
        let mut sums = [0.0f64; 6];
        let mut points = 0usize;
        for &(i, truth) in &solved {
            let mu = &test_set[i];
            let red = match model.solve(mu) {
                Ok(r) => r,
                Err(e) => {
                    report.failures.push(SweepFailure {
                        stage: format!("reduced(N={n})"),
                        mu: mu.clone(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let fields = reconstruct(&small, disc, cfg, mu, &red.coeffs)?;
            let point = RawErrorPoint {
                n,
                mu: mu.clone(),
                err_v: trajectory_rel_err(&disc.velocity_gram, nt, dt, &fields.v, &truth.v),
                err_p: trajectory_rel_err(&disc.pressure_mass, nt, dt, &fields.p, &truth.p),
                err_u: trajectory_rel_err(&disc.control_gram, nt, dt, &fields.u, &truth.u),
                err_w: trajectory_rel_err(&disc.velocity_gram, nt, dt, &fields.w, &truth.w),
                err_q: trajectory_rel_err(&disc.pressure_mass, nt, dt, &fields.q, &truth.q),
                cost_truth: truth.cost,
                cost_reduced: red.cost,
            };
            sums[0] += point.err_v;
            sums[1] += point.err_p;
            sums[2] += point.err_u;
            sums[3] += point.err_w;
            sums[4] += point.err_q;
            sums[5] += (point.cost_reduced - point.cost_truth).abs()
                / point.cost_truth.abs().max(1e-300);
            points += 1;
            report.raw_errors.push(point);
        }
        if points == 0 {
            return Err(Error::invalid(format!(
                "every reduced solve failed at N = {n}"
            )));
        }
        let m = points as f64;
        report.error_rows.push(ErrorRow {
            n,
            total_dim: model.dim(),
            err_v: sums[0] / m,
            err_p: sums[1] / m,
            err_u: sums[2] / m,
            err_w: sums[3] / m,
            err_q: sums[4] / m,
            err_j: sums[5] / m,
            points,
        });
        log::info!(
            "error sweep N = {n}: err_v {:.3e}, err_j {:.3e} over {points} points",
            sums[0] / m,
            sums[5] / m
        );
    }
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

const TIMING_REPS: usize = 5;
/// Target wall time per timed repetition when batching reduced solves.
const BATCH_TARGET_S: f64 = 0.02;
/// Below this single-solve time the monotonic clock is treated as too
/// coarse and repetitions are batched.
const BATCH_THRESHOLD_S: f64 = 1e-3;

/// Time truth and reduced solves on a parameter sample and append one
/// speedup row per basis size.  Runs strictly sequentially.
pub fn speedup_sweep(
    disc: &Discretization,
    cfg: &ProblemConfig,
    basis: &ReducedBasis,
    n_list: &[usize],
    sample: &[Vec<f64>],
    report: &mut SweepReport,
) -> Result<()> {
    if n_list.is_empty() || sample.is_empty() {
        return Err(Error::invalid("speedup sweep needs basis sizes and parameters"));
    }
    let structure = KktStructure::new(disc, cfg)?;

    // Truth timings: shared by all rows (independent of the reduced size).
    let mut solver = TruthSolver::new(disc, cfg)?;
    let mut truth_medians = Vec::with_capacity(sample.len());
    report.timing_mus = sample.to_vec();
    report.raw_truth_s.clear();
    for mu in sample {
        solver.solve(mu)?; // warm-up, discarded
        let mut reps = Vec::with_capacity(TIMING_REPS);
        for _ in 0..TIMING_REPS {
            let t0 = Instant::now();
            solver.solve(mu)?;
            reps.push(t0.elapsed().as_secs_f64());
        }
        truth_medians.push(median(reps.clone()));
        report.raw_truth_s.push(reps);
    }
    let truth_time = truth_medians.iter().sum::<f64>() / truth_medians.len() as f64;

    for &n in n_list {
        let small = basis.truncate(disc, n)?;
        let model = project(disc, cfg, &structure, &small)?;
        let mut reduced_medians = Vec::with_capacity(sample.len());
        let mut raw = Vec::with_capacity(sample.len());
        let mut batch_used = 1usize;
        for mu in sample {
            model.solve(mu)?; // warm-up, discarded
            let t0 = Instant::now();
            model.solve(mu)?;
            let single = t0.elapsed().as_secs_f64();
            let batch = if single < BATCH_THRESHOLD_S {
                ((BATCH_TARGET_S / single.max(1e-9)).ceil() as usize).max(1)
            } else {
                1
            };
            batch_used = batch_used.max(batch);
            let mut reps = Vec::with_capacity(TIMING_REPS);
            for _ in 0..TIMING_REPS {
                let t0 = Instant::now();
                for _ in 0..batch {
                    model.solve(mu)?;
                }
                reps.push(t0.elapsed().as_secs_f64() / batch as f64);
            }
            reduced_medians.push(median(reps.clone()));
            raw.push(reps);
        }
        let reduced_time = reduced_medians.iter().sum::<f64>() / reduced_medians.len() as f64;
        if batch_used > 1 {
            log::info!("speedup sweep N = {n}: batched timing ({batch_used} solves per repetition)");
        }
        report.speedup_rows.push(SpeedupRow {
            n,
            total_dim: model.dim(),
            truth_time_s: truth_time,
            reduced_time_s: reduced_time,
            speedup: truth_time / reduced_time,
            batch: batch_used,
            raw_reduced_s: raw,
        });
    }
    Ok(())
}

/// Number of parameters in the timing sample of [`run_validation`].
const TIMING_SAMPLE: usize = 3;

/// Full validation phase: a fresh test set from the validation seed, the
/// error sweep over the configured basis sizes, the speedup sweep on a small
/// subsample, and the eigenvalue table — all in one report.
pub fn run_validation(
    disc: &Discretization,
    cfg: &ProblemConfig,
    basis: &ReducedBasis,
    run: &RunConfig,
    jobs: usize,
) -> Result<SweepReport> {
    let resolved = run.resolved()?;
    let n_list = resolved.n_list.clone().expect("resolved");
    let max_n = *n_list.iter().max().expect("non-empty");
    if max_n > basis.n {
        return Err(Error::invalid(format!(
            "n_list asks for N = {max_n} but the basis holds {} modes per variable",
            basis.n
        )));
    }
    let test_set = sample_training_set(&cfg.param_box, resolved.test_size, resolved.seed_test);
    let env = Environment::gather(disc, cfg, &resolved);
    let mut report = SweepReport::new(env, basis);
    error_sweep(disc, cfg, basis, &n_list, &test_set, jobs, &mut report)?;
    let sample: Vec<Vec<f64>> = test_set.iter().take(TIMING_SAMPLE).cloned().collect();
    speedup_sweep(disc, cfg, basis, &n_list, &sample, &mut report)?;
    report.verify_consistency()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_bifurcation_mesh;
    use crate::ocp::ProblemId;
    use crate::pod::{build_reduced_basis, collect_snapshots, PodConfig};

    fn tiny_setup() -> (Discretization, ProblemConfig, ReducedBasis, RunConfig) {
        let mesh = build_bifurcation_mesh(0.5).unwrap();
        let disc = Discretization::new(mesh, ProblemId::NsSteady).unwrap();
        let cfg = ProblemConfig::new(ProblemId::NsSteady);
        let mut run = RunConfig::example(ProblemId::NsSteady);
        run.h = 0.5;
        run.n_train = 3;
        run.n_max = 3;
        run.test_size = 2;
        run.n_list = Some(vec![2, 3]);
        let mus = sample_training_set(&cfg.param_box, run.n_train, run.seed_train);
        let snaps = collect_snapshots(&disc, &cfg, &mus).unwrap();
        let pod_cfg = PodConfig {
            eps_tol: 0.0,
            n_max: 3,
            min_rel_eig: 0.0,
        };
        let basis = build_reduced_basis(&disc, &cfg, &snaps, &pod_cfg).unwrap();
        (disc, cfg, basis, run)
    }

    #[test]
    fn validation_report_is_internally_consistent() {
        let (disc, cfg, basis, run) = tiny_setup();
        let report = run_validation(&disc, &cfg, &basis, &run, 1).unwrap();
        assert_eq!(report.error_rows.len(), 2);
        assert_eq!(report.speedup_rows.len(), 2);
        report.verify_consistency().unwrap();
        for row in &report.error_rows {
            assert_eq!(row.points, 2);
            assert!(row.err_v >= 0.0 && row.err_j >= 0.0);
        }
        for row in &report.speedup_rows {
            assert!(row.speedup > 0.0);
        }
        // Rendered tables carry one line per row plus the header.
        assert_eq!(report.error_csv().lines().count(), 3);
        assert_eq!(report.speedup_csv().lines().count(), 3);
        let json = report.to_json().unwrap();
        let back: SweepReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.error_rows.len(), 2);
    }

    #[test]
    fn corrupted_report_fails_consistency() {
        let (disc, cfg, basis, run) = tiny_setup();
        let mut report = run_validation(&disc, &cfg, &basis, &run, 1).unwrap();
        report.error_rows[0].err_j += 1.0;
        assert!(report.verify_consistency().is_err());
    }
}
