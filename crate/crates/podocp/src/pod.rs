//! Offline reduction: snapshot collection over a training set, proper
//! orthogonal decomposition per variable, supremizer enrichment, and
//! aggregation into one orthonormal reduced basis.
//!
//! Every variable is decomposed in its own inner product — velocities in the
//! full H1 product, pressures in L2, controls in the H1 product on the
//! control boundary — extended to trajectories as `sum_k dt (x_k, y_k)`.
//! The aggregated velocity space stacks state modes, adjoint modes, and the
//! supremizers of both pressure bases, so one basis serves the state and the
//! adjoint velocity alike; the pressure space stacks state and adjoint
//! pressure modes.  With `n` modes per variable the five trial blocks of the
//! optimality system then count `4n + 2n + n + 4n + 2n = 13n` degrees of
//! freedom.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{apply_per_slice, inflow_amplitude};
use crate::ocp::{solve_truth_set, Discretization, ParamBox, ProblemConfig, ProblemId};
use crate::sparse::CsrMatrix;

/// Truncation policy of one proper-orthogonal decomposition.
#[derive(Debug, Clone, Copy)]
pub struct PodConfig {
    /// Energy tolerance: keep the smallest `N` whose discarded eigenvalue
    /// tail is at most `eps_tol` times the total energy.
    pub eps_tol: f64,
    /// Hard cap on the retained count.
    pub n_max: usize,
    /// Relative eigenvalue floor below which modes are considered numerical
    /// null space and never constructed.  Lower it (down to 0) to keep every
    /// direction with positive energy, e.g. for span-reproduction studies.
    pub min_rel_eig: f64,
}

impl Default for PodConfig {
    fn default() -> Self {
        PodConfig {
            eps_tol: 1e-4,
            n_max: 100,
            min_rel_eig: 1e-13,
        }
    }
}

/// Eigenvalue report of one variable's correlation problem.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PodSpectrum {
    /// All correlation eigenvalues, descending, negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
    /// Count selected by the energy criterion and the `n_max` cap.
    pub retained: usize,
}

impl PodSpectrum {
    /// Fraction of the total energy carried by the leading `n` eigenvalues.
    pub fn energy_fraction(&self, n: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let kept: f64 = self.eigenvalues.iter().take(n).sum();
        kept / total
    }
}

/// Modes and spectrum of one variable.
#[derive(Debug, Clone)]
pub struct VariablePod {
    /// Orthonormal modes (in the variable's trajectory inner product),
    /// one column per mode.  May hold more columns than
    /// [`PodSpectrum::retained`]: everything above the eigenvalue floor is
    /// constructed so that a shared cross-variable count can be served.
    pub modes: DMatrix<f64>,
    pub spectrum: PodSpectrum,
}

/// Uniform sample of `size` parameter points, reproducible from the seed.
pub fn sample_training_set(pbox: &ParamBox, size: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            pbox.lo
                .iter()
                .zip(&pbox.hi)
                .map(|(&l, &h)| l + (h - l) * rng.random::<f64>())
                .collect()
        })
        .collect()
}

/// Truth trajectories of every variable over a training set, stored as one
/// column per parameter point (time slices concatenated).  State velocities
/// are homogenized: the parameter's lift is subtracted so that every column
/// vanishes on the essential boundary.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub problem: ProblemId,
    pub nt: usize,
    pub dt: f64,
    /// Parameter points that solved successfully, one per column.
    pub mu: Vec<Vec<f64>>,
    pub v: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Optimal cost of each successful solve.
    pub costs: Vec<f64>,
    /// Parameter points whose truth solve failed, with the failure message.
    pub failures: Vec<(Vec<f64>, String)>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Stack the `(dim x nt)` trajectory of one variable into a single column.
fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Solve the truth optimality system at every training point.  Failing
/// points are excluded with a warning; the set errors out only when every
/// solve fails.
pub fn collect_snapshots(
    disc: &Discretization,
    cfg: &ProblemConfig,
    mus: &[Vec<f64>],
) -> Result<SnapshotSet> {
    cfg.validate()?;
    if mus.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let nt = cfg.nt;
    let mut cols: [Vec<DVector<f64>>; 5] = Default::default();
    let mut kept = Vec::new();
    let mut costs = Vec::new();
    let mut failures = Vec::new();

    for (mu, outcome) in mus.iter().zip(solve_truth_set(disc, cfg, mus, 0)) {
        let sol = match outcome {
            Ok(sol) => sol,
            Err(reason) => {
                log::warn!("snapshot solve failed at {mu:?}: {reason}; point excluded");
                failures.push((mu.clone(), reason));
                continue;
            }
        };
        let amp = inflow_amplitude(cfg.problem, mu);
        let mut v = sol.v;
        for k in 0..nt {
            for i in 0..disc.layout.n_velocity {
                v[(i, k)] -= amp * disc.unit_lift[i];
            }
        }
        cols[0].push(flatten(&v));
        cols[1].push(flatten(&sol.p));
        cols[2].push(flatten(&sol.u));
        cols[3].push(flatten(&sol.w));
        cols[4].push(flatten(&sol.q));
        kept.push(mu.to_vec());
        costs.push(sol.cost);
    }
    if kept.is_empty() {
        return Err(Error::invalid(
            "every snapshot solve failed; no training data collected",
        ));
    }
    if !failures.is_empty() {
        log::warn!(
            "training set is partial: {} of {} points failed",
            failures.len(),
            mus.len()
        );
    }
    let mat = |v: &[DVector<f64>]| DMatrix::from_columns(v);
    Ok(SnapshotSet {
        problem: cfg.problem,
        nt,
        dt: cfg.dt(),
        mu: kept,
        v: mat(&cols[0]),
        p: mat(&cols[1]),
        u: mat(&cols[2]),
        w: mat(&cols[3]),
        q: mat(&cols[4]),
        costs,
        failures,
    })
}

/// Method-of-snapshots decomposition of one variable in the trajectory inner
/// product `sum_k dt (x_k, G y_k)`.
///
/// The correlation matrix is formed exactly in that product, its dense
/// symmetric eigendecomposition is sorted descending, and modes are built as
/// `sum_m (rho_n)_m snap_m / sqrt(lambda_n)` followed by a re-orthonormalizing
/// Gram-Schmidt sweep and a sign convention (largest-magnitude entry
/// positive) that makes the output reproducible.
///
/// All-zero snapshots yield an empty basis with a warning rather than an
/// error.
pub fn pod(
    snaps: &DMatrix<f64>,
    gram: &CsrMatrix,
    nt: usize,
    dt: f64,
    cfg: &PodConfig,
) -> Result<VariablePod> {
    let rows = snaps.nrows();
    let ns = snaps.ncols();
    if ns == 0 {
        return Err(Error::invalid("decomposition of zero snapshots"));
    }
    if rows != gram.nrows() * nt {
        return Err(Error::invalid(format!(
            "snapshot rows {rows} do not match {} gram rows x {nt} time nodes",
            gram.nrows()
        )));
    }
    if !(dt > 0.0) || !(cfg.eps_tol >= 0.0) || cfg.n_max == 0 {
        return Err(Error::invalid("nonpositive time weight or truncation bound"));
    }

    // Correlation in the trajectory product, via cached G-applied snapshots.
    let mut gsn = DMatrix::zeros(rows, ns);
    let mut work = vec![0.0; rows];
    let mut gwork = vec![0.0; rows];
    for m in 0..ns {
        work.copy_from_slice(snaps.column(m).as_slice());
        apply_per_slice(gram, nt, &work, &mut gwork);
        for (i, g) in gwork.iter().enumerate() {
            gsn[(i, m)] = dt * g;
        }
    }
    let mut corr = gsn.transpose() * snaps;
    for m in 0..ns {
        for n in (m + 1)..ns {
            let s = 0.5 * (corr[(m, n)] + corr[(n, m)]);
            corr[(m, n)] = s;
            corr[(n, m)] = s;
        }
    }

    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        log::warn!("all snapshots are zero; returning an empty basis");
        return Ok(VariablePod {
            modes: DMatrix::zeros(rows, 0),
            spectrum: PodSpectrum {
                eigenvalues,
                retained: 0,
            },
        });
    }
    if eig.eigenvalues[order[ns - 1]] < -1e-8 * total {
        log::warn!(
            "correlation matrix has a significantly negative eigenvalue {:.3e}",
            eig.eigenvalues[order[ns - 1]]
        );
    }

    // Energy criterion: smallest count whose discarded tail is within
    // eps_tol of the total, then the hard cap.
    let mut tail = total;
    let mut retained = ns;
    for (n, lam) in eigenvalues.iter().enumerate() {
        tail -= lam;
        if tail <= cfg.eps_tol * total {
            retained = n + 1;
            break;
        }
    }
    retained = retained.min(cfg.n_max);

    // Construct every mode above the eigenvalue floor (bounded by the cap)
    // so callers can harmonize counts across variables.
    let floor = total * cfg.min_rel_eig;
    let constructible = eigenvalues
        .iter()
        .take(cfg.n_max.min(ns))
        .filter(|&&l| l > floor && l > 0.0)
        .count();
    let retained = retained.min(constructible);

    let mut modes = DMatrix::zeros(rows, constructible);
    for (j, &src) in order.iter().take(constructible).enumerate() {
        let lam = eigenvalues[j];
        let rho = eig.eigenvectors.column(src);
        let mut col = DVector::zeros(rows);
        for m in 0..ns {
            col.axpy(rho[m] / lam.sqrt(), &snaps.column(m).into_owned(), 1.0);
        }
        modes.set_column(j, &col);
    }

    // Two Gram-Schmidt passes against the finalized columns remove the
    // round-off left by the eigenvector construction.
    let mut ghat: Vec<DVector<f64>> = Vec::with_capacity(constructible);
    let mut kept_cols: Vec<DVector<f64>> = Vec::with_capacity(constructible);
    for j in 0..constructible {
        let mut x = modes.column(j).into_owned();
        for _pass in 0..2 {
            for (phi, gphi) in kept_cols.iter().zip(&ghat) {
                let c = gphi.dot(&x);
                x.axpy(-c, phi, 1.0);
            }
        }
        work.copy_from_slice(x.as_slice());
        apply_per_slice(gram, nt, &work, &mut gwork);
        let mut gx = DVector::from_column_slice(&gwork) * dt;
        let norm = gx.dot(&x).max(0.0).sqrt();
        if norm <= 1e-12 {
            log::warn!("mode {j} collapsed during re-orthonormalization; dropped");
            continue;
        }
        x /= norm;
        gx /= norm;
        // Sign convention: the entry of largest magnitude is positive.
        let mut arg = 0;
        for i in 0..rows {
            if x[i].abs() > x[arg].abs() {
                arg = i;
            }
        }
        if x[arg] < 0.0 {
            x.neg_mut();
            gx.neg_mut();
        }
        kept_cols.push(x);
        ghat.push(gx);
    }
    let retained = retained.min(kept_cols.len());
    let modes = if kept_cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&kept_cols)
    };
    Ok(VariablePod {
        modes,
        spectrum: PodSpectrum {
            eigenvalues,
            retained,
        },
    })
}

/// Riesz representers of the divergence coupling: for each pressure column
/// `q` (time slices concatenated), solve `(s, phi)_V = b(phi, q)` over the
/// free velocity dofs, slice by slice.  The returned columns vanish on the
/// essential boundary and are *not* orthonormalized — aggregation does that.
pub fn compute_supremizers(
    pressure: &DMatrix<f64>,
    disc: &Discretization,
    nt: usize,
) -> Result<DMatrix<f64>> {
    let np = disc.layout.n_pressure;
    let nv = disc.layout.n_velocity;
    if pressure.nrows() != np * nt {
        return Err(Error::invalid(format!(
            "pressure rows {} do not match {np} x {nt}",
            pressure.nrows()
        )));
    }
    let m = pressure.ncols();
    if m == 0 {
        return Ok(DMatrix::zeros(nv * nt, 0));
    }
    let mask = &disc.layout.dirichlet_mask;
    let masked = disc.velocity_gram.zero_rows_cols(Some(mask), Some(mask));
    let diag: Vec<(u32, u32, f64)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(i, _)| (i as u32, i as u32, 1.0))
        .collect();
    let ident = CsrMatrix::from_triplets(nv, nv, &diag)?;
    let sys = CsrMatrix::linear_combination(&[(1.0, &masked), (1.0, &ident)])?;
    let llt = crate::sparse::SparseLlt::factor(&sys)?;

    // One batched solve over all columns and slices.
    let mut rhs = DMatrix::zeros(nv, m * nt);
    let mut slice = vec![0.0; nv];
    for c in 0..m {
        for k in 0..nt {
            slice.iter_mut().for_each(|x| *x = 0.0);
            let q = &pressure.as_slice()[c * np * nt + k * np..c * np * nt + (k + 1) * np];
            disc.div_full.tr_matvec_add(1.0, q, &mut slice);
            for i in 0..nv {
                if mask[i] {
                    slice[i] = 0.0;
                }
            }
            rhs.set_column(c * nt + k, &DVector::from_column_slice(&slice));
        }
    }
    let sol = llt.solve_mat(&rhs);
    let mut out = DMatrix::zeros(nv * nt, m);
    for c in 0..m {
        for k in 0..nt {
            for i in 0..nv {
                out[(k * nv + i, c)] = sol[(i, c * nt + k)];
            }
        }
    }
    Ok(out)
}

/// One reduced basis: the per-kind mode families plus the aggregated,
/// orthonormal spaces actually used by the projected system.
///
/// `velocity` holds `[state modes | adjoint modes | state supremizers |
/// adjoint supremizers]` after re-orthonormalization (4`n` columns when
/// nothing is rank deficient) and is shared by the state and adjoint
/// velocity trial blocks; `pressure` holds `[state | adjoint]` pressure
/// modes (2`n`) shared likewise; `control` holds `n` columns.  The five
/// trial blocks of the optimality system therefore count
/// [`ReducedBasis::total_dim`] = 13`n` reduced dofs.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub problem: ProblemId,
    pub nt: usize,
    pub dt: f64,
    /// Modes per variable (the `N` of the 13N bookkeeping).
    pub n: usize,
    pub v_modes: DMatrix<f64>,
    pub w_modes: DMatrix<f64>,
    /// Raw supremizers of the state pressure modes.
    pub sup_v: DMatrix<f64>,
    /// Raw supremizers of the adjoint pressure modes.
    pub sup_w: DMatrix<f64>,
    pub p_modes: DMatrix<f64>,
    pub q_modes: DMatrix<f64>,
    pub u_modes: DMatrix<f64>,
    /// Aggregated orthonormal spaces.
    pub velocity: DMatrix<f64>,
    pub pressure: DMatrix<f64>,
    pub control: DMatrix<f64>,
    /// Spectra in variable order v, p, u, w, q (empty when assembled from
    /// externally supplied modes).
    pub spectra: Vec<PodSpectrum>,
    /// Columns dropped as rank deficient during aggregation.
    pub dropped: usize,
}

impl ReducedBasis {
    /// Total trial dimension of the projected optimality system: the
    /// aggregated velocity space serves two blocks (state and adjoint), the
    /// pressure space likewise, the control space one.
    pub fn total_dim(&self) -> usize {
        2 * self.velocity.ncols() + 2 * self.pressure.ncols() + self.control.ncols()
    }

    /// Rebuild the basis from the leading `n` modes of every family.
    pub fn truncate(&self, disc: &Discretization, n: usize) -> Result<ReducedBasis> {
        if n == 0 || n > self.n {
            return Err(Error::invalid(format!(
                "cannot truncate a basis of {} modes per variable to {n}",
                self.n
            )));
        }
        let lead = |m: &DMatrix<f64>| m.columns(0, n).into_owned();
        let mut out = aggregate_parts(
            disc,
            self.problem,
            self.nt,
            self.dt,
            lead(&self.v_modes),
            lead(&self.w_modes),
            lead(&self.sup_v),
            lead(&self.sup_w),
            lead(&self.p_modes),
            lead(&self.q_modes),
            lead(&self.u_modes),
        )?;
        out.spectra = self.spectra.clone();
        Ok(out)
    }

    /// The same modes aggregated without any supremizer enrichment (the
    /// velocity space then has 2`n` columns).  Used to demonstrate why the
    /// enrichment is needed.
    pub fn without_supremizers(&self, disc: &Discretization) -> Result<ReducedBasis> {
        let nvt = self.v_modes.nrows();
        let mut out = aggregate_parts(
            disc,
            self.problem,
            self.nt,
            self.dt,
            self.v_modes.clone(),
            self.w_modes.clone(),
            DMatrix::zeros(nvt, 0),
            DMatrix::zeros(nvt, 0),
            self.p_modes.clone(),
            self.q_modes.clone(),
            self.u_modes.clone(),
        )?;
        out.spectra = self.spectra.clone();
        Ok(out)
    }
}

/// Orthonormalize `cols` (unit-normalized first) in the trajectory product
/// of `gram`, dropping columns whose orthogonal remainder is negligible.
/// Returns the kept columns and the number dropped.
fn orthonormalize(
    gram: &CsrMatrix,
    nt: usize,
    dt: f64,
    cols: Vec<DVector<f64>>,
    label: &str,
) -> (DMatrix<f64>, usize) {
    let rows = gram.nrows() * nt;
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut ghat: Vec<DVector<f64>> = Vec::new();
    let mut dropped = 0;
    let mut work = vec![0.0; rows];
    let mut gwork = vec![0.0; rows];
    let apply = |x: &DVector<f64>, work: &mut Vec<f64>, gwork: &mut Vec<f64>| {
        work.copy_from_slice(x.as_slice());
        apply_per_slice(gram, nt, work, gwork);
        DVector::from_column_slice(gwork) * dt
    };
    for (j, col) in cols.into_iter().enumerate() {
        let gx = apply(&col, &mut work, &mut gwork);
        let norm0 = gx.dot(&col).max(0.0).sqrt();
        if norm0 <= 1e-300 {
            log::warn!("{label} aggregate column {j} is zero; dropped");
            dropped += 1;
            continue;
        }
        let mut x = col / norm0;
        for _pass in 0..2 {
            for (phi, gphi) in kept.iter().zip(&ghat) {
                let c = gphi.dot(&x);
                x.axpy(-c, phi, 1.0);
            }
        }
        let mut gx = apply(&x, &mut work, &mut gwork);
        let norm = gx.dot(&x).max(0.0).sqrt();
        if norm <= 1e-7 {
            log::warn!(
                "{label} aggregate column {j} is linearly dependent (remainder {norm:.2e}); dropped"
            );
            dropped += 1;
            continue;
        }
        x /= norm;
        gx /= norm;
        let mut arg = 0;
        for i in 0..rows {
            if x[i].abs() > x[arg].abs() {
                arg = i;
            }
        }
        if x[arg] < 0.0 {
            x.neg_mut();
            gx.neg_mut();
        }
        kept.push(x);
        ghat.push(gx);
    }
    let mat = if kept.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&kept)
    };
    (mat, dropped)
}

/// Assemble a [`ReducedBasis`] from explicit mode families.  All families
/// must supply the same count `n` (supremizer families may instead be empty
/// to build an enrichment-free basis).  Rank-deficient aggregate columns are
/// dropped with a warning and reported via [`ReducedBasis::dropped`].
#[allow(clippy::too_many_arguments)]
pub fn aggregate_parts(
    disc: &Discretization,
    problem: ProblemId,
    nt: usize,
    dt: f64,
    v_modes: DMatrix<f64>,
    w_modes: DMatrix<f64>,
    sup_v: DMatrix<f64>,
    sup_w: DMatrix<f64>,
    p_modes: DMatrix<f64>,
    q_modes: DMatrix<f64>,
    u_modes: DMatrix<f64>,
) -> Result<ReducedBasis> {
    let n = v_modes.ncols();
    let same = [
        w_modes.ncols() == n,
        p_modes.ncols() == n,
        q_modes.ncols() == n,
        u_modes.ncols() == n,
        sup_v.ncols() == n || sup_v.ncols() == 0,
        sup_w.ncols() == n || sup_w.ncols() == 0,
    ];
    if n == 0 || !same.iter().all(|&s| s) {
        return Err(Error::invalid(
            "aggregation requires the same nonzero mode count for every family",
        ));
    }
    let stack = |mats: &[&DMatrix<f64>]| -> Vec<DVector<f64>> {
        mats.iter()
            .flat_map(|m| m.column_iter().map(|c| c.into_owned()))
            .collect()
    };
    let (velocity, d_v) = orthonormalize(
        &disc.velocity_gram,
        nt,
        dt,
        stack(&[&v_modes, &w_modes, &sup_v, &sup_w]),
        "velocity",
    );
    let (pressure, d_p) = orthonormalize(
        &disc.pressure_mass,
        nt,
        dt,
        stack(&[&p_modes, &q_modes]),
        "pressure",
    );
    let (control, d_u) = orthonormalize(&disc.control_gram, nt, dt, stack(&[&u_modes]), "control");
    let dropped = d_v + d_p + d_u;
    if dropped > 0 {
        log::warn!(
            "aggregation dropped {dropped} rank-deficient columns; reduced dimension is {} instead of {}",
            2 * velocity.ncols() + 2 * pressure.ncols() + control.ncols(),
            13 * n
        );
    }
    Ok(ReducedBasis {
        problem,
        nt,
        dt,
        n,
        v_modes,
        w_modes,
        sup_v,
        sup_w,
        p_modes,
        q_modes,
        u_modes,
        velocity,
        pressure,
        control,
        spectra: Vec::new(),
        dropped,
    })
}

/// Full offline reduction of a snapshot set: one decomposition per variable
/// in its own inner product, a shared mode count (the largest count any
/// variable needs for its energy criterion, capped by `n_max` and by the
/// available ranks), supremizer enrichment of both pressure families, and
/// aggregation.
pub fn build_reduced_basis(
    disc: &Discretization,
    cfg: &ProblemConfig,
    snaps: &SnapshotSet,
    pod_cfg: &PodConfig,
) -> Result<ReducedBasis> {
    if snaps.is_empty() {
        return Err(Error::invalid("empty snapshot set"));
    }
    let nt = snaps.nt;
    let dt = snaps.dt;
    let g_v = &disc.velocity_gram;
    let g_p = &disc.pressure_mass;
    let g_u = &disc.control_gram;
    let v = pod(&snaps.v, g_v, nt, dt, pod_cfg)?;
    let p = pod(&snaps.p, g_p, nt, dt, pod_cfg)?;
    let u = pod(&snaps.u, g_u, nt, dt, pod_cfg)?;
    let w = pod(&snaps.w, g_v, nt, dt, pod_cfg)?;
    let q = pod(&snaps.q, g_p, nt, dt, pod_cfg)?;

    let wanted = [&v, &p, &u, &w, &q]
        .iter()
        .map(|vp| vp.spectrum.retained)
        .max()
        .unwrap();
    let available = [&v, &p, &u, &w, &q]
        .iter()
        .map(|vp| vp.modes.ncols())
        .min()
        .unwrap();
    let n = wanted.min(pod_cfg.n_max).min(available);
    if n == 0 {
        return Err(Error::invalid(
            "no variable produced a usable mode (all-zero snapshots?)",
        ));
    }
    if n < wanted {
        log::warn!(
            "shared mode count limited to {n} by rank although the energy criterion asks for {wanted}"
        );
    }
    let lead = |m: &DMatrix<f64>| m.columns(0, n).into_owned();
    let p_lead = lead(&p.modes);
    let q_lead = lead(&q.modes);
    let sup_v = compute_supremizers(&p_lead, disc, nt)?;
    let sup_w = compute_supremizers(&q_lead, disc, nt)?;
    let mut basis = aggregate_parts(
        disc,
        cfg.problem,
        nt,
        dt,
        lead(&v.modes),
        lead(&w.modes),
        sup_v,
        sup_w,
        p_lead,
        q_lead,
        lead(&u.modes),
    )?;
    basis.spectra = vec![v.spectrum, p.spectrum, u.spectrum, w.spectrum, q.spectrum];
    Ok(basis)
}
