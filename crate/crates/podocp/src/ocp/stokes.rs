//! Monolithic solver for the time-dependent tracking problem.
//!
//! Implicit Euler couples all time levels of the discrete optimality
//! conditions into one symmetric space-time system; assembling it through the
//! slot-mapped assembler keeps repeated parameter solves cheap, and a single
//! sparse LU with partial pivoting handles the saddle-point structure.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::inflow_amplitude;
use crate::ocp::affine::{theta_mat, theta_rhs, KktStructure};
use crate::ocp::{
    evaluate_cost, BlockIndex, Discretization, OcpSolution, ProblemConfig, ProblemId, Var,
};
use crate::sparse::{CooBuilder, CsrMatrix, KktAssembler, SparseLu};

/// Direct solver for the space-time optimality system of the unsteady
/// problem.  Construction analyzes the sparsity pattern once; every
/// [`StokesTdSolver::solve`] only scatters values, factors, and solves.
pub struct StokesTdSolver<'a> {
    disc: &'a Discretization,
    cfg: ProblemConfig,
    structure: KktStructure,
    assembler: KktAssembler,
}

impl<'a> StokesTdSolver<'a> {
    pub fn new(disc: &'a Discretization, cfg: &ProblemConfig) -> Result<Self> {
        if cfg.problem != ProblemId::StokesTd {
            return Err(Error::invalid(
                "the monolithic unsteady solver only handles the time-dependent problem",
            ));
        }
        let structure = KktStructure::new(disc, cfg)?;
        let assembler = structure.assembler()?;
        Ok(StokesTdSolver {
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

    /// Assemble the system at a parameter point (exposed for verification).
    pub fn assemble(&mut self, mu: &[f64]) -> Result<()> {
        self.cfg.check_mu(mu)?;
        let th = theta_mat(&self.cfg, mu);
        let refs = self.structure.spatial_refs(None, None);
        self.assembler.assemble(&refs, &th)
    }

    /// The assembler holding the currently assembled values.
    pub fn assembler(&self) -> &KktAssembler {
        &self.assembler
    }

    /// Right-hand side at a parameter point.
    pub fn rhs(&self, mu: &[f64]) -> DVector<f64> {
        self.structure.assemble_rhs(&theta_rhs(&self.cfg, mu))
    }

    /// Solve the optimality system at `mu`.
    pub fn solve(&mut self, mu: &[f64]) -> Result<OcpSolution> {
        let start = Instant::now();
        self.assemble(mu)?;
        let rhs = self.rhs(mu);
        let factor = self.assembler.factor()?;
        let x = factor.solve_vec(&rhs);

        // Relative algebraic residual of the monolithic solve.
        let mut kx = vec![0.0; x.len()];
        self.assembler.matvec(x.as_slice(), &mut kx);
        let mut rr = 0.0;
        let mut bb = 0.0;
        for i in 0..x.len() {
            let d = kx[i] - rhs[i];
            rr += d * d;
            bb += rhs[i] * rhs[i];
        }
        let rel_residual = rr.sqrt() / bb.sqrt().max(f64::MIN_POSITIVE);

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
            kkt_residual: rel_residual,
            iterations: 0,
            wall_time: start.elapsed(),
        })
    }
}

/// Parameter-weighted mass, stiffness, and divergence operators of the
/// unsteady problem (raw, before boundary elimination).
fn weighted_operators(
    disc: &Discretization,
    cfg: &ProblemConfig,
    mu: &[f64],
) -> Result<(CsrMatrix, CsrMatrix, CsrMatrix)> {
    use crate::ocp::affine as af;
    let th = theta_mat(cfg, mu);
    let mass = CsrMatrix::linear_combination(&[
        (th[af::G_MASS_CH], &disc.mass_ch),
        (th[af::G_MASS_BR], &disc.mass_br),
    ])?;
    let stiff = CsrMatrix::linear_combination(&[
        (th[af::G_STIFF_XX_CH], &disc.stiff_xx_ch),
        (th[af::G_STIFF_YY_CH], &disc.stiff_yy_ch),
        (th[af::G_STIFF_BR], &disc.stiff_br),
    ])?;
    let div = CsrMatrix::linear_combination(&[
        (th[af::G_DIV_Y_CH], &disc.div_y_ch),
        (th[af::G_DIV_REST], &disc.div_rest),
    ])?;
    Ok((mass, stiff, div))
}

/// Build the symmetric one-step saddle system
/// `[[M/dt + A, -D^T], [-D, 0]]` with essential velocity elimination.
fn step_system(
    mass_over_dt: Option<&CsrMatrix>,
    stiff: &CsrMatrix,
    div: &CsrMatrix,
    mask: &[bool],
) -> Result<CsrMatrix> {
    let nv = stiff.nrows();
    let np = div.nrows();
    let mut coo = CooBuilder::new(nv + np, nv + np);
    let mut momentum = |m: &CsrMatrix| {
        for (r, c, val) in m.iter() {
            if !mask[r] && !mask[c] {
                coo.push(r, c, val);
            }
        }
    };
    momentum(stiff);
    if let Some(m) = mass_over_dt {
        momentum(m);
    }
    for (r, c, val) in div.iter() {
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
    coo.build()
}

/// March the state equations forward in time for a given control trajectory
/// (`None` means no control).  Returns velocity and pressure trajectories,
/// one column per time node.
pub fn forward_stokes_td(
    disc: &Discretization,
    cfg: &ProblemConfig,
    mu: &[f64],
    control: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if cfg.problem != ProblemId::StokesTd {
        return Err(Error::invalid("forward marching requires the unsteady problem"));
    }
    cfg.check_mu(mu)?;
    let (mass, stiff, div) = weighted_operators(disc, cfg, mu)?;
    let dt = cfg.dt();
    let mass_over_dt = CsrMatrix::linear_combination(&[(1.0 / dt, &mass)])?;
    let mask = &disc.layout.dirichlet_mask;
    let nv = disc.layout.n_velocity;
    let np = disc.layout.n_pressure;

    let system = step_system(Some(&mass_over_dt), &stiff, &div, mask)?;
    let lu = SparseLu::factor(&system)?;

    let amp_l = inflow_amplitude(cfg.problem, mu);
    let lift: DVector<f64> = &disc.unit_lift * amp_l;
    let mut v_prev = if cfg.zero_initial_state {
        DVector::zeros(nv)
    } else {
        lift.clone()
    };

    // Parameter-independent parts of the step right-hand side.
    let mut stiff_g = DVector::zeros(nv);
    stiff.matvec(lift.as_slice(), stiff_g.as_mut_slice());
    let mut mass_g = DVector::zeros(nv);
    mass_over_dt.matvec(lift.as_slice(), mass_g.as_mut_slice());
    let mut div_g = DVector::zeros(np);
    div.matvec(lift.as_slice(), div_g.as_mut_slice());

    let mut v_out = DMatrix::zeros(nv, cfg.nt);
    let mut p_out = DMatrix::zeros(np, cfg.nt);
    let mut rhs = DVector::zeros(nv + np);
    for k in 0..cfg.nt {
        // Momentum rows: M/dt v_prev + C u - (M/dt + A) lift on free dofs,
        // essential values on constrained dofs.
        let mut mom = DVector::zeros(nv);
        mass_over_dt.matvec_add(1.0, v_prev.as_slice(), mom.as_mut_slice());
        if let Some(u) = control {
            let uk: Vec<f64> = u.column(k).iter().copied().collect();
            disc.control_coupling.matvec_add(1.0, &uk, mom.as_mut_slice());
        }
        for i in 0..nv {
            rhs[i] = if mask[i] {
                lift[i]
            } else {
                mom[i] - stiff_g[i] - mass_g[i]
            };
        }
        for r in 0..np {
            rhs[nv + r] = div_g[r];
        }
        lu.solve_in_place(rhs.as_mut_slice());
        for i in 0..nv {
            v_out[(i, k)] = rhs[i];
        }
        for r in 0..np {
            p_out[(r, k)] = rhs[nv + r];
        }
        v_prev = v_out.column(k).into_owned();
    }
    Ok((v_out, p_out))
}

/// Steady viscous solve with essential velocity data on an arbitrary dof set
/// and an explicit body-force load; the first pressure dof is pinned to zero.
/// Used by verification against manufactured solutions.
pub fn solve_steady_stokes_dirichlet(
    disc: &Discretization,
    viscosity: f64,
    mask: &[bool],
    boundary_values: &DVector<f64>,
    load: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let nv = disc.layout.n_velocity;
    let np = disc.layout.n_pressure;
    if mask.len() != nv || boundary_values.len() != nv || load.len() != nv {
        return Err(Error::invalid("dirichlet solve inputs have wrong dimensions"));
    }
    let stiff = CsrMatrix::linear_combination(&[(viscosity, &disc.stiff_full)])?;
    let div = &disc.div_full;

    let mut coo = CooBuilder::new(nv + np, nv + np);
    for (r, c, val) in stiff.iter() {
        if !mask[r] && !mask[c] {
            coo.push(r, c, val);
        }
    }
    for (r, c, val) in div.iter() {
        // Pin the first pressure dof against the constant mode.
        if !mask[c] && r != 0 {
            coo.push(nv + r, c, -val);
            coo.push(c, nv + r, -val);
        }
    }
    for (i, &fixed) in mask.iter().enumerate() {
        if fixed {
            coo.push(i, i, 1.0);
        }
    }
    coo.push(nv, nv, 1.0);
    let system = coo.build()?;
    let lu = SparseLu::factor(&system)?;

    let mut g = DVector::zeros(nv);
    for i in 0..nv {
        if mask[i] {
            g[i] = boundary_values[i];
        }
    }
    let mut stiff_g = DVector::zeros(nv);
    stiff.matvec(g.as_slice(), stiff_g.as_mut_slice());
    let mut div_g = DVector::zeros(np);
    div.matvec(g.as_slice(), div_g.as_mut_slice());

    let mut rhs = DVector::zeros(nv + np);
    for i in 0..nv {
        rhs[i] = if mask[i] { g[i] } else { load[i] - stiff_g[i] };
    }
    for r in 1..np {
        rhs[nv + r] = div_g[r];
    }
    lu.solve_in_place(rhs.as_mut_slice());
    let v = DVector::from_fn(nv, |i, _| rhs[i]);
    let p = DVector::from_fn(np, |r, _| rhs[nv + r]);
    Ok((v, p))
}
