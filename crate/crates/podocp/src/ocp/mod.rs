//! Full-order optimality systems for the two boundary-control benchmarks.
//!
//! Both problems minimize a velocity-tracking cost on the observation line
//! plus a Tikhonov penalty on the boundary control acting at the branch
//! outlets, subject to incompressible flow in the bifurcation domain:
//!
//! * **time-dependent viscous problem** (`StokesTd`): linear unsteady flow
//!   over `[0, 1]`, implicit Euler in time, with parameters
//!   (viscosity, channel stretch, target amplitude).  The first-order
//!   optimality conditions form one symmetric space-time system solved
//!   monolithically in [`stokes::StokesTdSolver`].
//! * **steady convective problem** (`NsSteady`): stationary flow with the
//!   quadratic convection term, parametrized by the inflow amplitude.  The
//!   coupled optimality system is solved by a damped Newton iteration in
//!   [`ns::NsSteadySolver`].
//!
//! Unknowns are ordered `[state velocity, state pressure, control, adjoint
//! velocity, adjoint pressure]`, each block holding all time nodes.

pub mod affine;
pub mod ns;
pub mod stokes;

pub use ns::{forward_ns_steady, NsSteadySolver};
pub use stokes::{forward_stokes_td, solve_steady_stokes_dirichlet, StokesTdSolver};

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_form, assemble_domain_form, build_layout, unit_lift, unit_target,
    BoundaryForm, DofLayout, DomainForm, DomainSel,
};
use crate::geometry::Mesh;
use crate::sparse::CsrMatrix;

/// The two supported benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemId {
    /// Time-dependent viscous flow, three parameters
    /// (viscosity, channel stretch, target amplitude).
    StokesTd,
    /// Steady convective flow, one parameter (inflow amplitude).
    NsSteady,
}

impl ProblemId {
    pub fn n_params(self) -> usize {
        match self {
            ProblemId::StokesTd => 3,
            ProblemId::NsSteady => 1,
        }
    }

    /// Calibrated parameter box.
    pub fn default_box(self) -> ParamBox {
        match self {
            ProblemId::StokesTd => ParamBox {
                lo: vec![0.01, 1.0, 0.01],
                hi: vec![1.0, 2.0, 1.0],
            },
            ProblemId::NsSteady => ParamBox {
                lo: vec![0.7],
                hi: vec![1.5],
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::StokesTd => "stokes_td",
            ProblemId::NsSteady => "ns_steady",
        }
    }
}

/// Axis-aligned parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(m, (l, h))| *m >= *l && *m <= *h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::invalid("parameter box bounds have mismatched size"));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::invalid(format!(
                    "parameter interval [{l}, {h}] is empty or not finite"
                )));
            }
        }
        Ok(())
    }
}

/// Solver and model parameters for one problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub problem: ProblemId,
    /// Number of implicit Euler steps (1 for the steady problem).
    pub nt: usize,
    /// Final time of the unsteady problem.
    pub t_final: f64,
    /// Control penalty weight (trace mass part).
    pub alpha: f64,
    /// Control penalty weight (tangential gradient part).
    pub alpha_grad: f64,
    /// Viscosity of the steady convective problem.
    pub eta: f64,
    /// Start the unsteady problem from a fluid at rest (`true`, default) or
    /// from the lifted inflow profile (`false`).
    pub zero_initial_state: bool,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub param_box: ParamBox,
}

impl ProblemConfig {
    pub fn new(problem: ProblemId) -> Self {
        ProblemConfig {
            problem,
            nt: match problem {
                ProblemId::StokesTd => 20,
                ProblemId::NsSteady => 1,
            },
            t_final: 1.0,
            alpha: 1e-3,
            alpha_grad: 1e-4,
            eta: 1.0,
            zero_initial_state: true,
            newton_tol: 1e-9,
            newton_max_iter: 25,
            param_box: problem.default_box(),
        }
    }

    /// Time-step weight: `dt` for the unsteady problem, one otherwise.
    pub fn dt(&self) -> f64 {
        match self.problem {
            ProblemId::StokesTd => self.t_final / self.nt as f64,
            ProblemId::NsSteady => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.param_box.validate()?;
        if self.param_box.dim() != self.problem.n_params() {
            return Err(Error::invalid(format!(
                "parameter box has {} intervals, problem needs {}",
                self.param_box.dim(),
                self.problem.n_params()
            )));
        }
        if self.problem == ProblemId::StokesTd && self.nt < 1 {
            return Err(Error::invalid("the unsteady problem needs nt >= 1"));
        }
        if self.problem == ProblemId::NsSteady && self.nt != 1 {
            return Err(Error::invalid("the steady problem has exactly one time node"));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::invalid("final time must be positive"));
        }
        if !(self.alpha > 0.0) || !(self.alpha_grad >= 0.0) {
            return Err(Error::invalid("control weights must be positive"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("viscosity must be positive"));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::invalid("Newton controls must be positive"));
        }
        Ok(())
    }

    /// Check a parameter point against the configured box, warning (not
    /// failing) on extrapolation.
    pub fn check_mu(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.problem.n_params() {
            return Err(Error::invalid(format!(
                "parameter point has {} entries, problem needs {}",
                mu.len(),
                self.problem.n_params()
            )));
        }
        if !self.param_box.contains(mu) {
            log::warn!("parameter {mu:?} outside the configured box (extrapolation)");
        }
        Ok(())
    }
}

/// Variables of the optimality system, in block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// State velocity.
    V,
    /// State pressure.
    P,
    /// Boundary control.
    U,
    /// Adjoint velocity.
    W,
    /// Adjoint pressure.
    Q,
}

pub const ALL_VARS: [Var; 5] = [Var::V, Var::P, Var::U, Var::W, Var::Q];

/// Index map of the monolithic unknown vector: five variable blocks, each
/// storing `nt` spatial slices back to back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockIndex {
    pub nt: usize,
    pub nv: usize,
    pub np: usize,
    pub nu: usize,
}

impl BlockIndex {
    pub fn var_dim(&self, var: Var) -> usize {
        match var {
            Var::V | Var::W => self.nv,
            Var::P | Var::Q => self.np,
            Var::U => self.nu,
        }
    }

    pub fn var_offset(&self, var: Var) -> usize {
        let (nv, np, nu) = (self.nt * self.nv, self.nt * self.np, self.nt * self.nu);
        match var {
            Var::V => 0,
            Var::P => nv,
            Var::U => nv + np,
            Var::W => nv + np + nu,
            Var::Q => 2 * nv + np + nu,
        }
    }

    /// Offset of the spatial slice of `var` at time node `k`.
    pub fn slice_offset(&self, var: Var, k: usize) -> usize {
        debug_assert!(k < self.nt);
        self.var_offset(var) + k * self.var_dim(var)
    }

    pub fn dof(&self, var: Var, k: usize, i: usize) -> usize {
        debug_assert!(i < self.var_dim(var));
        self.slice_offset(var, k) + i
    }

    pub fn total(&self) -> usize {
        self.nt * (2 * self.nv + 2 * self.np + self.nu)
    }

    /// Copy one variable block out of the flat vector as (dim x nt) columns.
    pub fn extract(&self, x: &DVector<f64>, var: Var) -> DMatrix<f64> {
        let d = self.var_dim(var);
        let mut out = DMatrix::zeros(d, self.nt);
        for k in 0..self.nt {
            let off = self.slice_offset(var, k);
            for i in 0..d {
                out[(i, k)] = x[off + i];
            }
        }
        out
    }
}

/// One solution of an optimality system: trajectories of every variable
/// (steady solutions hold a single column), the attained cost, and solver
/// diagnostics.
#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub problem: ProblemId,
    pub mu: Vec<f64>,
    /// State velocity, physical values (essential data included).
    pub v: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub cost: f64,
    /// Final solver residual: relative algebraic residual for the linear
    /// monolithic solve, absolute optimality-system residual for Newton.
    pub kkt_residual: f64,
    /// Newton iterations (zero for the linear problem).
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Mesh-bound assembly of every parameter-independent operator.
///
/// Parameter-dependent operators are weighted sums of these blocks; see
/// [`affine`] for the weights.
pub struct Discretization {
    pub mesh: Mesh,
    pub layout: DofLayout,
    pub problem: ProblemId,
    // Affine blocks of the mass, stiffness, and divergence operators.
    pub mass_ch: CsrMatrix,
    pub mass_br: CsrMatrix,
    pub stiff_xx_ch: CsrMatrix,
    pub stiff_yy_ch: CsrMatrix,
    pub stiff_br: CsrMatrix,
    pub div_y_ch: CsrMatrix,
    pub div_rest: CsrMatrix,
    // Parameter-independent boundary operators.
    pub obs_mass: CsrMatrix,
    pub control_mass: CsrMatrix,
    pub control_tangent: CsrMatrix,
    pub control_coupling: CsrMatrix,
    // Gram matrices of the model norms.
    pub pressure_mass: CsrMatrix,
    pub velocity_gram: CsrMatrix,
    pub control_gram: CsrMatrix,
    // Reference-domain sums.
    pub mass_full: CsrMatrix,
    pub stiff_full: CsrMatrix,
    pub div_full: CsrMatrix,
    // Problem data at unit amplitude.
    pub unit_lift: DVector<f64>,
    pub unit_target: DVector<f64>,
}

impl Discretization {
    pub fn new(mesh: Mesh, problem: ProblemId) -> Result<Self> {
        let layout = build_layout(&mesh)?;
        let dom = |form, sel| assemble_domain_form(form, &mesh, &layout, sel);
        let mass_ch = dom(DomainForm::VelocityMass, DomainSel::Channel)?;
        let mass_br = dom(DomainForm::VelocityMass, DomainSel::Branches)?;
        let stiff_xx_ch = dom(DomainForm::VelocityStiffnessXx, DomainSel::Channel)?;
        let stiff_yy_ch = dom(DomainForm::VelocityStiffnessYy, DomainSel::Channel)?;
        let stiff_br = dom(DomainForm::VelocityStiffness, DomainSel::Branches)?;
        let div_y_ch = dom(DomainForm::DivergenceY, DomainSel::Channel)?;
        // The x-derivative part everywhere plus the y-part on the branches is
        // exactly the stretch-invariant remainder of the divergence.
        let div_rest = CsrMatrix::linear_combination(&[
            (1.0, &dom(DomainForm::DivergenceX, DomainSel::All)?),
            (1.0, &dom(DomainForm::DivergenceY, DomainSel::Branches)?),
        ])?;
        let obs_mass = assemble_boundary_form(BoundaryForm::ObservationMass, &layout)?;
        let control_mass = assemble_boundary_form(BoundaryForm::ControlMass, &layout)?;
        let control_tangent =
            assemble_boundary_form(BoundaryForm::ControlTangentGradient, &layout)?;
        let control_coupling = assemble_boundary_form(BoundaryForm::ControlCoupling, &layout)?;
        let pressure_mass = dom(DomainForm::PressureMass, DomainSel::All)?;

        let mass_full = CsrMatrix::linear_combination(&[(1.0, &mass_ch), (1.0, &mass_br)])?;
        let stiff_full = CsrMatrix::linear_combination(&[
            (1.0, &stiff_xx_ch),
            (1.0, &stiff_yy_ch),
            (1.0, &stiff_br),
        ])?;
        let div_full = CsrMatrix::linear_combination(&[(1.0, &div_y_ch), (1.0, &div_rest)])?;
        let velocity_gram =
            CsrMatrix::linear_combination(&[(1.0, &stiff_full), (1.0, &mass_full)])?;
        let control_gram =
            CsrMatrix::linear_combination(&[(1.0, &control_mass), (1.0, &control_tangent)])?;

        let unit_lift = unit_lift(problem, &layout);
        let unit_target = unit_target(problem, &layout);
        Ok(Discretization {
            mesh,
            layout,
            problem,
            mass_ch,
            mass_br,
            stiff_xx_ch,
            stiff_yy_ch,
            stiff_br,
            div_y_ch,
            div_rest,
            obs_mass,
            control_mass,
            control_tangent,
            control_coupling,
            pressure_mass,
            velocity_gram,
            control_gram,
            mass_full,
            stiff_full,
            div_full,
            unit_lift,
            unit_target,
        })
    }

    /// Block index for a time level count.
    pub fn block_index(&self, nt: usize) -> BlockIndex {
        BlockIndex {
            nt,
            nv: self.layout.n_velocity,
            np: self.layout.n_pressure,
            nu: self.layout.n_control,
        }
    }
}

/// Evaluate the tracking-plus-penalty cost for given state and control
/// trajectories (columns = time nodes).
pub fn evaluate_cost(
    disc: &Discretization,
    cfg: &ProblemConfig,
    mu: &[f64],
    v: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> f64 {
    let amp_t = crate::fem::target_amplitude(cfg.problem, mu);
    let wgt = cfg.dt();
    let mut cost = 0.0;
    let mut diff = DVector::zeros(disc.layout.n_velocity);
    for k in 0..v.ncols() {
        for i in 0..diff.len() {
            diff[i] = v[(i, k)] - amp_t * disc.unit_target[i];
        }
        let misfit = disc.obs_mass.bilinear(diff.as_slice(), diff.as_slice());
        let uk: Vec<f64> = u.column(k).iter().copied().collect();
        let pen_m = disc.control_mass.bilinear(&uk, &uk);
        let pen_t = disc.control_tangent.bilinear(&uk, &uk);
        cost += wgt * 0.5 * (misfit + cfg.alpha * pen_m + cfg.alpha_grad * pen_t);
    }
    cost
}

/// Problem-dispatching truth solver for batch runs.
pub enum TruthSolver<'a> {
    Stokes(StokesTdSolver<'a>),
    Ns(NsSteadySolver<'a>),
}

impl<'a> TruthSolver<'a> {
    pub fn new(disc: &'a Discretization, cfg: &ProblemConfig) -> Result<Self> {
        Ok(match cfg.problem {
            ProblemId::StokesTd => TruthSolver::Stokes(StokesTdSolver::new(disc, cfg)?),
            ProblemId::NsSteady => TruthSolver::Ns(NsSteadySolver::new(disc, cfg)?),
        })
    }

    pub fn solve(&mut self, mu: &[f64]) -> Result<OcpSolution> {
        match self {
            TruthSolver::Stokes(s) => s.solve(mu),
            TruthSolver::Ns(s) => s.solve(mu),
        }
    }
}

/// Solve the truth problem at every parameter, returning outcomes in input
/// order.  Work is split into contiguous chunks, one solver (and hence one
/// symbolic factorization) per chunk, run in parallel; `jobs = 0` uses the
/// ambient thread-pool width, `jobs = 1` runs sequentially.
pub fn solve_truth_set(
    disc: &Discretization,
    cfg: &ProblemConfig,
    mus: &[Vec<f64>],
    jobs: usize,
) -> Vec<std::result::Result<OcpSolution, String>> {
    let threads = if jobs == 0 {
        rayon::current_num_threads()
    } else {
        jobs
    };
    let chunk_size = mus.len().div_ceil(threads.max(1)).max(1);
    let run_chunk = |chunk: &[Vec<f64>]| -> Vec<std::result::Result<OcpSolution, String>> {
        match TruthSolver::new(disc, cfg) {
            Ok(mut solver) => chunk
                .iter()
                .map(|mu| solver.solve(mu).map_err(|e| e.to_string()))
                .collect(),
            Err(e) => chunk.iter().map(|_| Err(e.to_string())).collect(),
        }
    };
    if threads <= 1 || mus.len() <= 1 {
        run_chunk(mus)
    } else {
        mus.par_chunks(chunk_size)
            .flat_map_iter(run_chunk)
            .collect()
    }
}
