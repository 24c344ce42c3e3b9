//! Online reduced-order models: Galerkin projection of the optimality
//! systems onto an aggregated reduced basis and fast parameter sweeps.
//!
//! The offline [`project`] step precomputes one dense block per affine
//! coefficient group, the projected right-hand-side factors, the projected
//! convection tensor of the steady problem, and the dense factors of the
//! quadratic cost.  An online [`ReducedModel::solve`] then only evaluates
//! scalar coefficient functions, combines small dense objects, and
//! factorizes a matrix whose dimension is the total reduced size — no mesh,
//! sparse matrix, or other full-order object is touched, which the
//! instrumentation counter verifies in the test suite.
//!
//! The time-dependent problem yields one symmetric dense system per
//! parameter.  The steady convective problem runs the same damped Newton
//! iteration as the truth solver, with the nonlinearity evaluated through
//! the projected tensor
//! `E[i][j][k] = ((phi_i . grad) phi_j, phi_k)` and its lift couplings.

use std::ops::AddAssign;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{assemble_convection, inflow_amplitude, target_amplitude};
use crate::ocp::affine::{
    theta_mat, theta_rhs, KktStructure, RhsTime, SpatialSlot, TimePattern, N_MAT_GROUPS,
    N_RHS_GROUPS,
};
use crate::ocp::{Discretization, ProblemConfig, ProblemId, Var};
use crate::pod::ReducedBasis;

/// Smallest admissible line-search step (mirrors the truth solver).
const MIN_STEP: f64 = 1.0 / 1024.0;
/// Sufficient-decrease slope of the backtracking line search.
const ARMIJO_SLOPE: f64 = 1e-4;

/// All dense, parameter-independent factors of one projected optimality
/// system.  Self-contained: online solves read nothing else.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub problem: ProblemId,
    pub cfg: ProblemConfig,
    /// Modes per variable backing the aggregated spaces.
    pub n: usize,
    /// Aggregated velocity / pressure / control widths (4n / 2n / n when
    /// nothing was rank deficient).
    pub m_v: usize,
    pub m_p: usize,
    pub m_u: usize,
    /// One projected block per matrix coefficient group.
    pub mats: Vec<DMatrix<f64>>,
    /// One projected load per right-hand-side coefficient group.
    pub rhs: Vec<DVector<f64>>,
    /// Projected convection tensor, one matrix per advecting mode:
    /// `conv[i][(k, j)] = ((phi_i . grad) phi_j, phi_k)`.
    pub conv: Vec<DMatrix<f64>>,
    /// Lift-advecting coupling `l1[(j, k)] = ((L . grad) phi_j, phi_k)`.
    pub conv_l1: DMatrix<f64>,
    /// Lift-advected coupling `l2[(j, k)] = ((phi_j . grad) L, phi_k)`.
    pub conv_l2: DMatrix<f64>,
    /// Pure lift term `ll[k] = ((L . grad) L, phi_k)`.
    pub conv_ll: DVector<f64>,
    // Dense factors of the quadratic cost.
    pub q_obs: DMatrix<f64>,
    pub l_obs: DVector<f64>,
    pub l_tgt: DVector<f64>,
    pub c_ll: f64,
    pub c_lt: f64,
    pub c_tt: f64,
    pub q_u: DMatrix<f64>,
}

/// One online solve: reduced coefficients, attained cost, diagnostics.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub mu: Vec<f64>,
    /// Coefficients in block order (state velocity, state pressure, control,
    /// adjoint velocity, adjoint pressure).
    pub coeffs: DVector<f64>,
    pub cost: f64,
    /// Relative algebraic residual (time-dependent problem) or absolute
    /// Newton residual (steady problem) at the returned coefficients.
    pub residual: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Reconstructed full-order trajectories of every variable (`dim x nt`).
#[derive(Debug, Clone)]
pub struct ReducedFields {
    pub v: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl ReducedModel {
    /// Total reduced dimension (13n when nothing was rank deficient).
    pub fn dim(&self) -> usize {
        2 * self.m_v + 2 * self.m_p + self.m_u
    }

    pub fn width(&self, var: Var) -> usize {
        match var {
            Var::V | Var::W => self.m_v,
            Var::P | Var::Q => self.m_p,
            Var::U => self.m_u,
        }
    }

    /// Offset of a variable block in the reduced coefficient vector.
    pub fn offset(&self, var: Var) -> usize {
        match var {
            Var::V => 0,
            Var::P => self.m_v,
            Var::U => self.m_v + self.m_p,
            Var::W => self.m_v + self.m_p + self.m_u,
            Var::Q => 2 * self.m_v + self.m_p + self.m_u,
        }
    }

    /// Parameter-combined linear operator and load.
    pub fn assemble(&self, mu: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let th = theta_mat(&self.cfg, mu);
        let tr = theta_rhs(&self.cfg, mu);
        let dim = self.dim();
        let mut k = DMatrix::zeros(dim, dim);
        for (g, block) in self.mats.iter().enumerate() {
            if th[g] != 0.0 {
                k += block * th[g];
            }
        }
        let mut b = DVector::zeros(dim);
        for (g, load) in self.rhs.iter().enumerate() {
            if tr[g] != 0.0 {
                b.axpy(tr[g], load, 1.0);
            }
        }
        (k, b)
    }

    /// Reduced convection contributions to the optimality residual at the
    /// given state/adjoint coefficients and lift amplitude: the rows tested
    /// with the state-velocity basis (adjoint of the linearized convection
    /// applied to the adjoint) and the rows tested with the adjoint basis
    /// (the convection itself).
    pub fn convection_residual(
        &self,
        a_v: &DVector<f64>,
        a_w: &DVector<f64>,
        amp: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let m = self.m_v;
        let mut s1 = DMatrix::zeros(m, m);
        for (j, mj) in self.conv.iter().enumerate() {
            s1 += mj * a_v[j];
        }
        let mut vec_v = s1.transpose() * a_w;
        for (i, mi) in self.conv.iter().enumerate() {
            vec_v[i] += (a_w.transpose() * mi * a_v)[(0, 0)];
        }
        vec_v += (&self.conv_l1 + &self.conv_l2) * a_w * amp;

        let mut vec_w = &s1 * a_v;
        vec_w += (self.conv_l1.transpose() + self.conv_l2.transpose()) * a_v * amp;
        vec_w.axpy(amp * amp, &self.conv_ll, 1.0);
        (vec_v, vec_w)
    }

    /// Dense Jacobian blocks of the convection terms: the symmetric
    /// state-state block and the state-adjoint block (its transpose enters
    /// the adjoint-state position, keeping the Newton matrix symmetric).
    fn convection_jacobian(
        &self,
        a_v: &DVector<f64>,
        a_w: &DVector<f64>,
        amp: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.m_v;
        let mut s1 = DMatrix::zeros(m, m);
        let mut cw = DMatrix::zeros(m, m);
        let mut d = DMatrix::zeros(m, m);
        for (i, mi) in self.conv.iter().enumerate() {
            s1 += mi * a_v[i];
            cw.set_column(i, &(mi.transpose() * a_w));
            let t = mi * a_v;
            for k in 0..m {
                d[(i, k)] = t[k];
            }
        }
        let vv = &cw + cw.transpose();
        let vw = s1.transpose() + d + (&self.conv_l1 + &self.conv_l2) * amp;
        (vv, vw)
    }

    /// Full reduced optimality residual at coefficients `a`.
    fn residual(&self, k: &DMatrix<f64>, b: &DVector<f64>, a: &DVector<f64>, amp: f64) -> DVector<f64> {
        let mut r = k * a - b;
        if !self.conv.is_empty() {
            let a_v = a.rows(self.offset(Var::V), self.m_v).into_owned();
            let a_w = a.rows(self.offset(Var::W), self.m_v).into_owned();
            let (vec_v, vec_w) = self.convection_residual(&a_v, &a_w, amp);
            let mut rv = r.rows_mut(self.offset(Var::V), self.m_v);
            rv += vec_v;
            let mut rw = r.rows_mut(self.offset(Var::W), self.m_v);
            rw += vec_w;
        }
        r
    }

    /// Reduced cost functional at the given coefficients: exact for the
    /// quadratic tracking functional because every cross term is
    /// precomputed.
    pub fn cost(&self, mu: &[f64], coeffs: &DVector<f64>) -> f64 {
        let amp_l = inflow_amplitude(self.problem, mu);
        let amp_t = target_amplitude(self.problem, mu);
        let a_v = coeffs.rows(self.offset(Var::V), self.m_v);
        let a_u = coeffs.rows(self.offset(Var::U), self.m_u);
        let quad = (a_v.transpose() * &self.q_obs * a_v)[(0, 0)];
        let misfit = quad + 2.0 * amp_l * self.l_obs.dot(&a_v) - 2.0 * amp_t * self.l_tgt.dot(&a_v)
            + amp_l * amp_l * self.c_ll
            - 2.0 * amp_l * amp_t * self.c_lt
            + amp_t * amp_t * self.c_tt;
        let penalty = (a_u.transpose() * &self.q_u * a_u)[(0, 0)];
        0.5 * (misfit + penalty)
    }

    /// Online solve at one parameter point.
    pub fn solve(&self, mu: &[f64]) -> Result<ReducedSolution> {
        let start = Instant::now();
        self.cfg.check_mu(mu)?;
        let (k, b) = self.assemble(mu);
        let (coeffs, residual, iterations) = match self.problem {
            ProblemId::StokesTd => {
                let bnorm = b.norm();
                let a = k.clone().lu().solve(&b).ok_or_else(|| Error::SingularSystem {
                    context: format!("reduced monolithic operator (dimension {})", self.dim()),
                })?;
                let residual = (&k * &a - &b).norm() / bnorm.max(1e-300);
                (a, residual, 0)
            }
            ProblemId::NsSteady => self.solve_newton(&k, &b, mu)?,
        };
        let cost = self.cost(mu, &coeffs);
        Ok(ReducedSolution {
            mu: mu.to_vec(),
            coeffs,
            cost,
            residual,
            iterations,
            wall_time: start.elapsed(),
        })
    }

    /// Damped Newton on the projected system, mirroring the truth solver's
    /// tolerances and globalization; the initial guess is the zero
    /// coefficient vector.
    fn solve_newton(
        &self,
        k: &DMatrix<f64>,
        b: &DVector<f64>,
        mu: &[f64],
    ) -> Result<(DVector<f64>, f64, usize)> {
        let amp = inflow_amplitude(self.problem, mu);
        let dim = self.dim();
        let mut a = DVector::zeros(dim);
        let mut r = self.residual(k, b, &a, amp);
        let mut rnorm = r.norm();
        let mut iterations = 0usize;
        while rnorm > self.cfg.newton_tol {
            if iterations >= self.cfg.newton_max_iter {
                return Err(Error::NewtonDiverged {
                    iterations,
                    residual: rnorm,
                });
            }
            let a_v = a.rows(self.offset(Var::V), self.m_v).into_owned();
            let a_w = a.rows(self.offset(Var::W), self.m_v).into_owned();
            let (vv, vw) = self.convection_jacobian(&a_v, &a_w, amp);
            let mut jac = k.clone();
            let (ov, ow) = (self.offset(Var::V), self.offset(Var::W));
            let m = self.m_v;
            jac.view_mut((ov, ov), (m, m)).add_assign(&vv);
            jac.view_mut((ov, ow), (m, m)).add_assign(&vw);
            jac.view_mut((ow, ov), (m, m)).add_assign(&vw.transpose());
            let da = jac.lu().solve(&(-&r)).ok_or_else(|| Error::SingularSystem {
                context: format!("reduced Newton matrix (dimension {dim})"),
            })?;
            let mut step = 1.0;
            loop {
                let at = &a + &da * step;
                let rt = self.residual(k, b, &at, amp);
                let rtnorm = rt.norm();
                if rtnorm <= (1.0 - ARMIJO_SLOPE * step) * rnorm {
                    a = at;
                    r = rt;
                    rnorm = rtnorm;
                    break;
                }
                step *= 0.5;
                if step < MIN_STEP {
                    return Err(Error::LineSearchStagnation {
                        step,
                        residual: rnorm,
                    });
                }
            }
            iterations += 1;
            log::debug!("reduced newton iteration {iterations}: residual {rnorm:.3e}");
        }
        Ok((a, rnorm, iterations))
    }
}

/// Galerkin projection of one problem onto an aggregated basis.  Everything
/// parameter-independent is computed here, once.
pub fn project(
    disc: &Discretization,
    cfg: &ProblemConfig,
    structure: &KktStructure,
    basis: &ReducedBasis,
) -> Result<ReducedModel> {
    cfg.validate()?;
    if basis.problem != cfg.problem {
        return Err(Error::invalid("basis was built for the other problem"));
    }
    if basis.nt != cfg.nt {
        return Err(Error::invalid(format!(
            "basis holds {} time nodes but the configuration asks for {}",
            basis.nt, cfg.nt
        )));
    }
    let index = structure.index;
    let nt = index.nt;
    let (m_v, m_p, m_u) = (
        basis.velocity.ncols(),
        basis.pressure.ncols(),
        basis.control.ncols(),
    );
    if basis.velocity.nrows() != index.nv * nt
        || basis.pressure.nrows() != index.np * nt
        || basis.control.nrows() != index.nu * nt
    {
        return Err(Error::invalid("basis rows do not match the discretization"));
    }
    let dim = 2 * m_v + 2 * m_p + m_u;
    let model_off = |var: Var| match var {
        Var::V => 0,
        Var::P => m_v,
        Var::U => m_v + m_p,
        Var::W => m_v + m_p + m_u,
        Var::Q => 2 * m_v + m_p + m_u,
    };
    let z_of = |var: Var| -> &DMatrix<f64> {
        match var {
            Var::V | Var::W => &basis.velocity,
            Var::P | Var::Q => &basis.pressure,
            Var::U => &basis.control,
        }
    };

    // Projected operator blocks, grouped by affine coefficient.
    let mut mats = vec![DMatrix::zeros(dim, dim); N_MAT_GROUPS];
    for b in structure.blocks() {
        // The relinearized convection slots are replaced by the projected
        // tensor below.
        if matches!(b.slot, SpatialSlot::ConvHessian | SpatialSlot::ConvSum) {
            continue;
        }
        let a = &structure.spatial[b.slot.index()];
        let (zr, zc) = (z_of(b.row), z_of(b.col));
        let (dr, dc) = (index.var_dim(b.row), index.var_dim(b.col));
        let pairs: Vec<(usize, usize)> = match b.pattern {
            TimePattern::Diag => (0..nt).map(|k| (k, k)).collect(),
            TimePattern::Sub => (1..nt).map(|k| (k, k - 1)).collect(),
            TimePattern::Super => (0..nt.saturating_sub(1)).map(|k| (k, k + 1)).collect(),
        };
        for (kr, kc) in pairs {
            let contrib = if b.transpose {
                let zr_k = zr.rows(kr * dr, dr).into_owned();
                let t = a.mul_dense(&zr_k);
                (zc.rows(kc * dc, dc).transpose() * t).transpose()
            } else {
                let zc_k = zc.rows(kc * dc, dc).into_owned();
                let t = a.mul_dense(&zc_k);
                zr.rows(kr * dr, dr).transpose() * t
            };
            mats[b.group]
                .view_mut(
                    (model_off(b.row), model_off(b.col)),
                    (contrib.nrows(), contrib.ncols()),
                )
                .add_assign(&(contrib * b.scale));
        }
    }

    // Projected loads, grouped by right-hand-side coefficient.
    let mut rhs = vec![DVector::zeros(dim); N_RHS_GROUPS];
    for term in &structure.rhs_terms {
        let z = z_of(term.var);
        let d = index.var_dim(term.var);
        let ks: Vec<usize> = match term.time {
            RhsTime::All => (0..nt).collect(),
            RhsTime::AllButFirst => (1..nt).collect(),
            RhsTime::First => vec![0],
        };
        let mut acc = DVector::zeros(z.ncols());
        for k in ks {
            acc += z.rows(k * d, d).transpose() * &term.vec;
        }
        rhs[term.group]
            .rows_mut(model_off(term.var), z.ncols())
            .add_assign(&acc);
    }

    // Projected convection tensor of the steady problem.
    let (conv, conv_l1, conv_l2, conv_ll) = if cfg.problem == ProblemId::NsSteady {
        let z = &basis.velocity;
        let mut conv = Vec::with_capacity(m_v);
        for i in 0..m_v {
            let field: Vec<f64> = z.column(i).iter().copied().collect();
            let (c, _) = assemble_convection(&field, &disc.mesh, &disc.layout)?;
            conv.push(z.transpose() * c.mul_dense(z));
        }
        let lift: Vec<f64> = disc.unit_lift.iter().copied().collect();
        let (cl, cpl) = assemble_convection(&lift, &disc.mesh, &disc.layout)?;
        let l1 = (z.transpose() * cl.mul_dense(z)).transpose();
        let l2 = (z.transpose() * cpl.mul_dense(z)).transpose();
        let mut cll = vec![0.0; index.nv];
        cl.matvec(&lift, &mut cll);
        let ll = z.transpose() * DVector::from_column_slice(&cll);
        (conv, l1, l2, ll)
    } else {
        (
            Vec::new(),
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
        )
    };

    // Dense factors of the quadratic cost.
    let dt = cfg.dt();
    let nv = index.nv;
    let nu = index.nu;
    let mut obs_l = vec![0.0; nv];
    disc.obs_mass.matvec(disc.unit_lift.as_slice(), &mut obs_l);
    let obs_l = DVector::from_column_slice(&obs_l);
    let mut obs_t = vec![0.0; nv];
    disc.obs_mass.matvec(disc.unit_target.as_slice(), &mut obs_t);
    let obs_t = DVector::from_column_slice(&obs_t);
    let mut q_obs = DMatrix::zeros(m_v, m_v);
    let mut l_obs = DVector::zeros(m_v);
    let mut l_tgt = DVector::zeros(m_v);
    for k in 0..nt {
        let zk = basis.velocity.rows(k * nv, nv).into_owned();
        let t = disc.obs_mass.mul_dense(&zk);
        q_obs += zk.transpose() * t * dt;
        l_obs += zk.transpose() * &obs_l * dt;
        l_tgt += zk.transpose() * &obs_t * dt;
    }
    let span = nt as f64 * dt;
    let c_ll = span * disc.unit_lift.dot(&obs_l);
    let c_lt = span * disc.unit_lift.dot(&obs_t);
    let c_tt = span * disc.unit_target.dot(&obs_t);
    let penalty = crate::sparse::CsrMatrix::linear_combination(&[
        (cfg.alpha, &disc.control_mass),
        (cfg.alpha_grad, &disc.control_tangent),
    ])?;
    let mut q_u = DMatrix::zeros(m_u, m_u);
    for k in 0..nt {
        let zk = basis.control.rows(k * nu, nu).into_owned();
        let t = penalty.mul_dense(&zk);
        q_u += zk.transpose() * t * dt;
    }

    Ok(ReducedModel {
        problem: cfg.problem,
        cfg: cfg.clone(),
        n: basis.n,
        m_v,
        m_p,
        m_u,
        mats,
        rhs,
        conv,
        conv_l1,
        conv_l2,
        conv_ll,
        q_obs,
        l_obs,
        l_tgt,
        c_ll,
        c_lt,
        c_tt,
        q_u,
    })
}

/// Expand reduced coefficients back to full-order trajectories, adding the
/// parameter-scaled lift to the state velocity.
pub fn reconstruct(
    basis: &ReducedBasis,
    disc: &Discretization,
    cfg: &ProblemConfig,
    mu: &[f64],
    coeffs: &DVector<f64>,
) -> Result<ReducedFields> {
    let (m_v, m_p, m_u) = (
        basis.velocity.ncols(),
        basis.pressure.ncols(),
        basis.control.ncols(),
    );
    if coeffs.len() != 2 * m_v + 2 * m_p + m_u {
        return Err(Error::invalid(format!(
            "coefficient vector has length {} but the basis spans {}",
            coeffs.len(),
            2 * m_v + 2 * m_p + m_u
        )));
    }
    let nt = basis.nt;
    let nv = disc.layout.n_velocity;
    let amp = inflow_amplitude(cfg.problem, mu);
    let seg = |off: usize, len: usize| coeffs.rows(off, len).into_owned();
    let a_v = seg(0, m_v);
    let a_p = seg(m_v, m_p);
    let a_u = seg(m_v + m_p, m_u);
    let a_w = seg(m_v + m_p + m_u, m_v);
    let a_q = seg(2 * m_v + m_p + m_u, m_p);

    let mut v_flat = &basis.velocity * a_v;
    for k in 0..nt {
        for i in 0..nv {
            v_flat[k * nv + i] += amp * disc.unit_lift[i];
        }
    }
    let unflatten = |flat: DVector<f64>, d: usize| DMatrix::from_column_slice(d, nt, flat.as_slice());
    Ok(ReducedFields {
        v: unflatten(v_flat, nv),
        p: unflatten(&basis.pressure * a_p, disc.layout.n_pressure),
        u: unflatten(&basis.control * a_u, disc.layout.n_control),
        w: unflatten(&basis.velocity * a_w, nv),
        q: unflatten(&basis.pressure * a_q, disc.layout.n_pressure),
    })
}
