//! Damped Newton solver for the steady convective tracking problem.
//!
//! The coupled optimality system is nonlinear through the convection term and
//! its linearizations.  Each Newton step assembles the exact Jacobian —
//! including the second-derivative block of the convection tested with the
//! adjoint velocity, which keeps the iteration matrix symmetric — through the
//! same slot-mapped assembler as the linear problem, so the sparsity pattern
//! and symbolic factorization are computed once per mesh.  A backtracking
//! line search on the residual norm globalizes the iteration; the initial
//! guess comes from solving the system with the convection terms dropped.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_convection, assemble_convection_hessian, inflow_amplitude, target_amplitude,
};
use crate::ocp::affine::{theta_mat, theta_rhs, KktStructure};
use crate::ocp::{
    evaluate_cost, BlockIndex, Discretization, OcpSolution, ProblemConfig, ProblemId, Var,
};
use crate::sparse::{CooBuilder, CsrMatrix, KktAssembler, SparseLu};

/// Smallest admissible line-search step.
const MIN_STEP: f64 = 1.0 / 1024.0;
/// Sufficient-decrease slope of the backtracking line search.
const ARMIJO_SLOPE: f64 = 1e-4;

pub struct NsSteadySolver<'a> {
    disc: &'a Discretization,
    cfg: ProblemConfig,
    structure: KktStructure,
    assembler: KktAssembler,
}

impl<'a> NsSteadySolver<'a> {
    pub fn new(disc: &'a Discretization, cfg: &ProblemConfig) -> Result<Self> {
        if cfg.problem != ProblemId::NsSteady {
            return Err(Error::invalid(
                "the Newton solver only handles the steady convective problem",
            ));
        }
        let structure = KktStructure::new(disc, cfg)?;
        let assembler = structure.assembler()?;
        Ok(NsSteadySolver {
            disc,
            cfg: cfg.clone(),
            structure,
            assembler,
        })
    }

    pub fn index(&self) -> BlockIndex {
        self.structure.index
    }

    pub fn structure(&self) -> &KktStructure {
        &self.structure
    }

    pub fn assembler(&self) -> &KktAssembler {
        &self.assembler
    }

    fn segment(&self, x: &DVector<f64>, var: Var) -> Vec<f64> {
        let idx = self.structure.index;
        let off = idx.slice_offset(var, 0);
        x.as_slice()[off..off + idx.var_dim(var)].to_vec()
    }

    /// Nonlinear optimality residual at `x` (physical variables).
    /// Constrained state rows read `v - g`, constrained adjoint rows `w`.
    pub fn residual(&self, x: &DVector<f64>, mu: &[f64]) -> Result<DVector<f64>> {
        let idx = self.structure.index;
        if x.len() != idx.total() {
            return Err(Error::invalid("residual input has wrong dimension"));
        }
        let disc = self.disc;
        let cfg = &self.cfg;
        let eta = cfg.eta;
        let amp_l = inflow_amplitude(cfg.problem, mu);
        let amp_t = target_amplitude(cfg.problem, mu);

        let v = self.segment(x, Var::V);
        let p = self.segment(x, Var::P);
        let u = self.segment(x, Var::U);
        let w = self.segment(x, Var::W);
        let q = self.segment(x, Var::Q);

        let (conv, conv_prime) = assemble_convection(&v, &disc.mesh, &disc.layout)?;
        let conv_sum = CsrMatrix::linear_combination(&[(1.0, &conv), (1.0, &conv_prime)])?;

        let nv = idx.nv;
        let np = idx.np;
        let nu = idx.nu;
        let mut r = DVector::zeros(idx.total());

        // Gradient rows in the state velocity.
        let mut rv = vec![0.0; nv];
        disc.obs_mass.matvec_add(1.0, &v, &mut rv);
        disc.obs_mass
            .matvec_add(-amp_t, disc.unit_target.as_slice(), &mut rv);
        disc.stiff_full.matvec_add(eta, &w, &mut rv);
        conv_sum.tr_matvec_add(1.0, &w, &mut rv);
        disc.div_full.tr_matvec_add(-1.0, &q, &mut rv);
        // Gradient rows in the state pressure.
        let mut rp = vec![0.0; np];
        disc.div_full.matvec_add(-1.0, &w, &mut rp);
        // Gradient rows in the control.
        let mut ru = vec![0.0; nu];
        disc.control_mass.matvec_add(cfg.alpha, &u, &mut ru);
        disc.control_tangent.matvec_add(cfg.alpha_grad, &u, &mut ru);
        disc.control_coupling.tr_matvec_add(-1.0, &w, &mut ru);
        // Momentum rows.
        let mut rw = vec![0.0; nv];
        disc.stiff_full.matvec_add(eta, &v, &mut rw);
        conv.matvec_add(1.0, &v, &mut rw);
        disc.div_full.tr_matvec_add(-1.0, &p, &mut rw);
        disc.control_coupling.matvec_add(-1.0, &u, &mut rw);
        // Continuity rows.
        let mut rq = vec![0.0; np];
        disc.div_full.matvec_add(-1.0, &v, &mut rq);

        // Essential rows.
        for &d in &disc.layout.dirichlet_dofs {
            rv[d] = v[d] - amp_l * disc.unit_lift[d];
            rw[d] = w[d];
        }

        let mut write = |var: Var, vals: &[f64]| {
            let off = idx.slice_offset(var, 0);
            for (i, &val) in vals.iter().enumerate() {
                r[off + i] = val;
            }
        };
        write(Var::V, &rv);
        write(Var::P, &rp);
        write(Var::U, &ru);
        write(Var::W, &rw);
        write(Var::Q, &rq);
        Ok(r)
    }

    /// Assemble the exact Jacobian at `x` into the shared assembler.
    pub fn assemble_jacobian(&mut self, x: &DVector<f64>, mu: &[f64]) -> Result<()> {
        let disc = self.disc;
        let v = self.segment(x, Var::V);
        let w = self.segment(x, Var::W);
        let mask = &disc.layout.dirichlet_mask;
        let (conv, conv_prime) = assemble_convection(&v, &disc.mesh, &disc.layout)?;
        let conv_sum = CsrMatrix::linear_combination(&[(1.0, &conv), (1.0, &conv_prime)])?
            .zero_rows_cols(Some(mask), Some(mask));
        let hessian = assemble_convection_hessian(&w, &disc.mesh, &disc.layout)?
            .zero_rows_cols(Some(mask), Some(mask));
        let refs = self.structure.spatial_refs(Some(&hessian), Some(&conv_sum));
        self.assembler.assemble(&refs, &theta_mat(&self.cfg, mu))
    }

    /// Initial guess: solve the optimality system without convection.
    pub fn initial_guess(&mut self, mu: &[f64]) -> Result<DVector<f64>> {
        let refs = self.structure.spatial_refs(None, None);
        self.assembler.assemble(&refs, &theta_mat(&self.cfg, mu))?;
        let rhs = self.structure.assemble_rhs(&theta_rhs(&self.cfg, mu));
        let factor = self.assembler.factor()?;
        Ok(factor.solve_vec(&rhs))
    }

    /// Solve the optimality system at `mu` by damped Newton iteration.
    pub fn solve(&mut self, mu: &[f64]) -> Result<OcpSolution> {
        let start = Instant::now();
        self.cfg.check_mu(mu)?;
        let mut x = self.initial_guess(mu)?;
        let mut r = self.residual(&x, mu)?;
        let mut rnorm = r.norm();
        let mut iterations = 0usize;
        while rnorm > self.cfg.newton_tol {
            if iterations >= self.cfg.newton_max_iter {
                return Err(Error::NewtonDiverged {
                    iterations,
                    residual: rnorm,
                });
            }
            self.assemble_jacobian(&x, mu)?;
            let factor = self.assembler.factor()?;
            let dx = factor.solve_vec(&(-&r));
            let mut step = 1.0;
            loop {
                let xt = &x + &dx * step;
                let rt = self.residual(&xt, mu)?;
                let rtnorm = rt.norm();
                if rtnorm <= (1.0 - ARMIJO_SLOPE * step) * rnorm {
                    x = xt;
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
            log::debug!("newton iteration {iterations}: residual {rnorm:.3e}");
        }

        let idx = self.structure.index;
        let v = idx.extract(&x, Var::V);
        let p = idx.extract(&x, Var::P);
        let u = idx.extract(&x, Var::U);
        let w = idx.extract(&x, Var::W);
        let q = idx.extract(&x, Var::Q);
        let cost = evaluate_cost(self.disc, &self.cfg, mu, &v, &u);
        Ok(OcpSolution {
            problem: self.cfg.problem,
            mu: mu.to_vec(),
            v,
            p,
            u,
            w,
            q,
            cost,
            kkt_residual: rnorm,
            iterations,
            wall_time: start.elapsed(),
        })
    }
}

/// Solve the steady state equations alone for a fixed control (`None` means
/// no control) by damped Newton, starting from the viscous-only solution.
pub fn forward_ns_steady(
    disc: &Discretization,
    cfg: &ProblemConfig,
    mu: &[f64],
    control: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if cfg.problem != ProblemId::NsSteady {
        return Err(Error::invalid("forward steady solve requires the steady problem"));
    }
    cfg.check_mu(mu)?;
    let nv = disc.layout.n_velocity;
    let np = disc.layout.n_pressure;
    let mask = &disc.layout.dirichlet_mask;
    let eta = cfg.eta;
    let amp_l = inflow_amplitude(cfg.problem, mu);
    let lift: DVector<f64> = &disc.unit_lift * amp_l;

    let stiff = CsrMatrix::linear_combination(&[(eta, &disc.stiff_full)])?;
    let mut stiff_g = DVector::zeros(nv);
    stiff.matvec(lift.as_slice(), stiff_g.as_mut_slice());
    let mut div_g = DVector::zeros(np);
    disc.div_full.matvec(lift.as_slice(), div_g.as_mut_slice());

    let control_load = {
        let mut cu = DVector::zeros(nv);
        if let Some(u) = control {
            disc.control_coupling
                .matvec_add(1.0, u.as_slice(), cu.as_mut_slice());
        }
        cu
    };

    // Nonlinear residual of the state system at physical (v, p).
    let residual = |v: &DVector<f64>, p: &DVector<f64>| -> Result<DVector<f64>> {
        let (conv, _) = assemble_convection(v.as_slice(), &disc.mesh, &disc.layout)?;
        let mut rv = DVector::zeros(nv);
        stiff.matvec_add(1.0, v.as_slice(), rv.as_mut_slice());
        conv.matvec_add(1.0, v.as_slice(), rv.as_mut_slice());
        disc.div_full
            .tr_matvec_add(-1.0, p.as_slice(), rv.as_mut_slice());
        for i in 0..nv {
            rv[i] -= control_load[i];
        }
        let mut rq = DVector::zeros(np);
        disc.div_full.matvec_add(-1.0, v.as_slice(), rq.as_mut_slice());
        let mut r = DVector::zeros(nv + np);
        for i in 0..nv {
            r[i] = if mask[i] { v[i] - lift[i] } else { rv[i] };
        }
        for j in 0..np {
            r[nv + j] = rq[j];
        }
        Ok(r)
    };

    // Viscous-only initial guess.
    let mut v = DVector::zeros(nv);
    let mut p = DVector::zeros(np);
    {
        let mut coo = CooBuilder::new(nv + np, nv + np);
        for (r, c, val) in stiff.iter() {
            if !mask[r] && !mask[c] {
                coo.push(r, c, val);
            }
        }
        for (r, c, val) in disc.div_full.iter() {
            if !mask[c] {
                coo.push(nv + r, c, -val);
                coo.push(c, nv + r, -val);
            }
        }
        for (i, &fixed) in mask.iter().enumerate() {
            if fixed {
                coo.push(i, i, 1.0);
            }
        }
        let lu = SparseLu::factor(&coo.build()?)?;
        let mut rhs = DVector::zeros(nv + np);
        for i in 0..nv {
            rhs[i] = if mask[i] {
                lift[i]
            } else {
                control_load[i] - stiff_g[i]
            };
        }
        for r in 0..np {
            rhs[nv + r] = div_g[r];
        }
        lu.solve_in_place(rhs.as_mut_slice());
        for i in 0..nv {
            v[i] = rhs[i];
        }
        for r in 0..np {
            p[r] = rhs[nv + r];
        }
    }

    let mut r = residual(&v, &p)?;
    let mut rnorm = r.norm();
    let mut iterations = 0usize;
    while rnorm > cfg.newton_tol {
        if iterations >= cfg.newton_max_iter {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: rnorm,
            });
        }
        let (conv, conv_prime) = assemble_convection(v.as_slice(), &disc.mesh, &disc.layout)?;
        let mut coo = CooBuilder::new(nv + np, nv + np);
        for m in [&stiff, &conv, &conv_prime] {
            for (rr, cc, val) in m.iter() {
                if !mask[rr] && !mask[cc] {
                    coo.push(rr, cc, val);
                }
            }
        }
        for (rr, cc, val) in disc.div_full.iter() {
            if !mask[cc] {
                coo.push(nv + rr, cc, -val);
                coo.push(cc, nv + rr, -val);
            }
        }
        for (i, &fixed) in mask.iter().enumerate() {
            if fixed {
                coo.push(i, i, 1.0);
            }
        }
        let lu = SparseLu::factor(&coo.build()?)?;
        let dx = {
            let mut rhs = -r.clone();
            lu.solve_in_place(rhs.as_mut_slice());
            rhs
        };
        let mut step = 1.0;
        loop {
            let mut vt = v.clone();
            let mut pt = p.clone();
            for i in 0..nv {
                vt[i] += step * dx[i];
            }
            for j in 0..np {
                pt[j] += step * dx[nv + j];
            }
            let rt = residual(&vt, &pt)?;
            let rtnorm = rt.norm();
            if rtnorm <= (1.0 - ARMIJO_SLOPE * step) * rnorm {
                v = vt;
                p = pt;
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
    }
    Ok((v, p))
}
