//! Affine parameter decomposition of the optimality systems.
//!
//! Every operator of both problems is a sum of parameter-independent spatial
//! blocks times scalar coefficient functions of the parameters.  This module
//! fixes the coefficient-group numbering shared by the full-order assembler
//! and the reduced-order projection, builds the block placements of the
//! monolithic system, and precomputes the right-hand-side vectors (target
//! data, essential-value rows, and the corrections that move lifted boundary
//! columns to the right-hand side under symmetric elimination).
//!
//! Essential velocity conditions are imposed symmetrically and keep the full
//! dimension: constrained rows and columns are zeroed, a unit diagonal entry
//! is added, and the right-hand side carries the boundary values, so the
//! system stays symmetric and its dimension stays
//! `nt * (2 n_velocity + 2 n_pressure + n_control)`.

use nalgebra::DVector;

use crate::error::Result;
use crate::fem::{inflow_amplitude, target_amplitude};
use crate::ocp::{BlockIndex, Discretization, ProblemConfig, ProblemId, Var};
use crate::sparse::{CsrMatrix, KktAssembler, Placement};

// Coefficient groups of the system matrix.
pub const G_MASS_CH: usize = 0;
pub const G_MASS_BR: usize = 1;
pub const G_STIFF_XX_CH: usize = 2;
pub const G_STIFF_YY_CH: usize = 3;
pub const G_STIFF_BR: usize = 4;
pub const G_DIV_Y_CH: usize = 5;
pub const G_DIV_REST: usize = 6;
pub const G_OBS: usize = 7;
pub const G_CTRL_MASS: usize = 8;
pub const G_CTRL_TANGENT: usize = 9;
pub const G_CTRL_COUPLING: usize = 10;
/// Constant-one group used by the relinearized convection blocks.
pub const G_ONE: usize = 11;
pub const N_MAT_GROUPS: usize = 12;

// Right-hand-side groups: one per matrix group (essential-value corrections
// inherit the matrix coefficient times the lift amplitude), plus the target
// data term and the essential-value rows.
pub const GR_TARGET: usize = N_MAT_GROUPS;
pub const GR_LIFT: usize = N_MAT_GROUPS + 1;
pub const N_RHS_GROUPS: usize = N_MAT_GROUPS + 2;

/// Matrix coefficients at a parameter point.
///
/// For the time-dependent problem `mu = (viscosity, stretch, target
/// amplitude)`; the stretch enters through the affine geometry factors.  For
/// the steady convective problem `mu = (inflow amplitude,)` on the reference
/// geometry.
pub fn theta_mat(cfg: &ProblemConfig, mu: &[f64]) -> [f64; N_MAT_GROUPS] {
    let mut th = [0.0; N_MAT_GROUPS];
    match cfg.problem {
        ProblemId::StokesTd => {
            let (nu_visc, stretch) = (mu[0], mu[1]);
            th[G_MASS_CH] = stretch;
            th[G_MASS_BR] = 1.0;
            th[G_STIFF_XX_CH] = nu_visc / stretch;
            th[G_STIFF_YY_CH] = nu_visc * stretch;
            th[G_STIFF_BR] = nu_visc;
            th[G_DIV_Y_CH] = stretch;
            th[G_DIV_REST] = 1.0;
        }
        ProblemId::NsSteady => {
            th[G_STIFF_XX_CH] = cfg.eta;
            th[G_STIFF_YY_CH] = cfg.eta;
            th[G_STIFF_BR] = cfg.eta;
            th[G_DIV_Y_CH] = 1.0;
            th[G_DIV_REST] = 1.0;
        }
    }
    th[G_OBS] = 1.0;
    th[G_CTRL_MASS] = 1.0;
    th[G_CTRL_TANGENT] = 1.0;
    th[G_CTRL_COUPLING] = 1.0;
    th[G_ONE] = 1.0;
    th
}

/// Right-hand-side coefficients at a parameter point.
pub fn theta_rhs(cfg: &ProblemConfig, mu: &[f64]) -> [f64; N_RHS_GROUPS] {
    let mat = theta_mat(cfg, mu);
    let amp_l = inflow_amplitude(cfg.problem, mu);
    let mut th = [0.0; N_RHS_GROUPS];
    for g in 0..N_MAT_GROUPS {
        th[g] = mat[g] * amp_l;
    }
    th[GR_TARGET] = target_amplitude(cfg.problem, mu);
    th[GR_LIFT] = amp_l;
    th
}

/// Time-node footprint of a right-hand-side vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsTime {
    /// All time nodes.
    All,
    /// All nodes except the first (time coupling of the constant lift).
    AllButFirst,
    /// Only the first node (initial state).
    First,
}

/// One affine right-hand-side contribution.
#[derive(Debug, Clone)]
pub struct RhsTerm {
    pub group: usize,
    pub var: Var,
    pub time: RhsTime,
    pub vec: DVector<f64>,
}

/// Index of a spatial matrix in [`KktStructure::spatial`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialSlot {
    MassCh,
    MassBr,
    StiffXxCh,
    StiffYyCh,
    StiffBr,
    DivYCh,
    DivRest,
    Obs,
    CtrlMass,
    CtrlTangent,
    CtrlCoupling,
    /// Convection second derivative tested with the adjoint velocity
    /// (steady convective problem only, refreshed per Newton iterate).
    ConvHessian,
    /// Sum of both convection linearizations around the current state
    /// (steady convective problem only, refreshed per Newton iterate).
    ConvSum,
}

impl SpatialSlot {
    pub fn index(self) -> usize {
        match self {
            SpatialSlot::MassCh => 0,
            SpatialSlot::MassBr => 1,
            SpatialSlot::StiffXxCh => 2,
            SpatialSlot::StiffYyCh => 3,
            SpatialSlot::StiffBr => 4,
            SpatialSlot::DivYCh => 5,
            SpatialSlot::DivRest => 6,
            SpatialSlot::Obs => 7,
            SpatialSlot::CtrlMass => 8,
            SpatialSlot::CtrlTangent => 9,
            SpatialSlot::CtrlCoupling => 10,
            SpatialSlot::ConvHessian => 11,
            SpatialSlot::ConvSum => 12,
        }
    }
}

/// Number of spatial slots (the last two are used by the steady problem).
pub const N_SPATIAL: usize = 13;

/// Time-pattern of a block placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimePattern {
    Diag,
    /// Row node `k`, column node `k - 1`.
    Sub,
    /// Row node `k`, column node `k + 1`.
    Super,
}

/// One parameter-affine block of the monolithic system.
#[derive(Debug, Clone)]
pub struct Block {
    pub slot: SpatialSlot,
    pub row: Var,
    pub col: Var,
    pub transpose: bool,
    pub pattern: TimePattern,
    /// Parameter-independent factor (time step, penalty weights, signs).
    pub scale: f64,
    pub group: usize,
}

/// The fully analyzed affine structure of one problem on one mesh.
pub struct KktStructure {
    pub index: BlockIndex,
    pub dt: f64,
    /// Spatial matrices by [`SpatialSlot`]: essential rows/columns zeroed.
    pub spatial: Vec<CsrMatrix>,
    /// Essential dofs of the monolithic vector (unit diagonal rows).
    pub unit_diag: Vec<usize>,
    pub rhs_terms: Vec<RhsTerm>,
    blocks: Vec<Block>,
    has_convection: bool,
}

impl KktStructure {
    pub fn new(disc: &Discretization, cfg: &ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        let index = disc.block_index(cfg.nt);
        let dt = cfg.dt();
        let nv = disc.layout.n_velocity;
        let vel_mask = &disc.layout.dirichlet_mask;
        let has_convection = cfg.problem == ProblemId::NsSteady;

        // Essential rows and columns are zeroed once; corrections below are
        // computed from the raw matrices.
        let zz = |m: &CsrMatrix| m.zero_rows_cols(Some(vel_mask), Some(vel_mask));
        let zc = |m: &CsrMatrix| m.zero_rows_cols(None, Some(vel_mask));
        let zr = |m: &CsrMatrix| m.zero_rows_cols(Some(vel_mask), None);
        // The convection slots must expose their full (field-independent)
        // sparsity pattern up front so the analyzed union pattern can absorb
        // every later relinearization; assembling at the zero field yields
        // exactly that pattern with zero values.
        let (conv_hess, conv_sum) = if has_convection {
            let zero_field = vec![0.0; nv];
            let (c0, cp0) = crate::fem::assemble_convection(&zero_field, &disc.mesh, &disc.layout)?;
            let sum0 = CsrMatrix::linear_combination(&[(1.0, &c0), (1.0, &cp0)])?;
            let h0 = crate::fem::assemble_convection_hessian(&zero_field, &disc.mesh, &disc.layout)?;
            (zz(&h0), zz(&sum0))
        } else {
            let empty = CsrMatrix::from_triplets(nv, nv, &[])?;
            (empty.clone(), empty)
        };
        let spatial = vec![
            zz(&disc.mass_ch),
            zz(&disc.mass_br),
            zz(&disc.stiff_xx_ch),
            zz(&disc.stiff_yy_ch),
            zz(&disc.stiff_br),
            zc(&disc.div_y_ch),
            zc(&disc.div_rest),
            zz(&disc.obs_mass),
            disc.control_mass.clone(),
            disc.control_tangent.clone(),
            zr(&disc.control_coupling),
            conv_hess,
            conv_sum,
        ];

        let mut blocks = Vec::new();
        let mut push = |slot: SpatialSlot,
                        row: Var,
                        col: Var,
                        transpose: bool,
                        pattern: TimePattern,
                        scale: f64,
                        group: usize| {
            blocks.push(Block {
                slot,
                row,
                col,
                transpose,
                pattern,
                scale,
                group,
            });
        };

        use SpatialSlot as S;
        use TimePattern as T;
        let mass_slots = [(S::MassCh, G_MASS_CH), (S::MassBr, G_MASS_BR)];
        let stiff_slots = [
            (S::StiffXxCh, G_STIFF_XX_CH),
            (S::StiffYyCh, G_STIFF_YY_CH),
            (S::StiffBr, G_STIFF_BR),
        ];
        let div_slots = [(S::DivYCh, G_DIV_Y_CH), (S::DivRest, G_DIV_REST)];

        // Gradient rows with respect to the state velocity.
        push(S::Obs, Var::V, Var::V, false, T::Diag, dt, G_OBS);
        for (s, g) in stiff_slots {
            push(s, Var::V, Var::W, false, T::Diag, 1.0, g);
        }
        for (s, g) in div_slots {
            push(s, Var::V, Var::Q, true, T::Diag, -1.0, g);
        }
        if cfg.problem == ProblemId::StokesTd {
            for (s, g) in mass_slots {
                push(s, Var::V, Var::W, false, T::Diag, 1.0 / dt, g);
                push(s, Var::V, Var::W, false, T::Super, -1.0 / dt, g);
            }
        }
        if has_convection {
            push(S::ConvHessian, Var::V, Var::V, false, T::Diag, 1.0, G_ONE);
            push(S::ConvSum, Var::V, Var::W, true, T::Diag, 1.0, G_ONE);
        }
        // Gradient rows with respect to the state pressure.
        for (s, g) in div_slots {
            push(s, Var::P, Var::W, false, T::Diag, -1.0, g);
        }
        // Gradient rows with respect to the control.
        push(S::CtrlMass, Var::U, Var::U, false, T::Diag, cfg.alpha * dt, G_CTRL_MASS);
        push(
            S::CtrlTangent,
            Var::U,
            Var::U,
            false,
            T::Diag,
            cfg.alpha_grad * dt,
            G_CTRL_TANGENT,
        );
        push(S::CtrlCoupling, Var::U, Var::W, true, T::Diag, -1.0, G_CTRL_COUPLING);
        // State momentum rows (tested with the adjoint velocity).
        for (s, g) in stiff_slots {
            push(s, Var::W, Var::V, false, T::Diag, 1.0, g);
        }
        if cfg.problem == ProblemId::StokesTd {
            for (s, g) in mass_slots {
                push(s, Var::W, Var::V, false, T::Diag, 1.0 / dt, g);
                push(s, Var::W, Var::V, false, T::Sub, -1.0 / dt, g);
            }
        }
        if has_convection {
            push(S::ConvSum, Var::W, Var::V, false, T::Diag, 1.0, G_ONE);
        }
        for (s, g) in div_slots {
            push(s, Var::W, Var::P, true, T::Diag, -1.0, g);
        }
        push(S::CtrlCoupling, Var::W, Var::U, false, T::Diag, -1.0, G_CTRL_COUPLING);
        // State continuity rows.
        for (s, g) in div_slots {
            push(s, Var::Q, Var::V, false, T::Diag, -1.0, g);
        }

        // Essential dofs: state and adjoint velocity at every time node.
        let mut unit_diag = Vec::new();
        for k in 0..index.nt {
            for &d in &disc.layout.dirichlet_dofs {
                unit_diag.push(index.dof(Var::V, k, d));
                unit_diag.push(index.dof(Var::W, k, d));
            }
        }

        let rhs_terms = build_rhs_terms(disc, cfg, dt, vel_mask)?;

        Ok(KktStructure {
            index,
            dt,
            spatial,
            unit_diag,
            rhs_terms,
            blocks,
            has_convection,
        })
    }

    /// References to the spatial matrices in slot order, with the convection
    /// slots overridden when the caller supplies refreshed linearizations.
    pub fn spatial_refs<'a>(
        &'a self,
        hessian: Option<&'a CsrMatrix>,
        conv_sum: Option<&'a CsrMatrix>,
    ) -> Vec<&'a CsrMatrix> {
        let mut refs: Vec<&CsrMatrix> = self.spatial.iter().collect();
        if let Some(h) = hessian {
            refs[SpatialSlot::ConvHessian.index()] = h;
        }
        if let Some(c) = conv_sum {
            refs[SpatialSlot::ConvSum.index()] = c;
        }
        refs
    }

    /// Expand the block list into placements and build the slot-mapped
    /// assembler (pattern analysis and symbolic factorization happen here).
    pub fn assembler(&self) -> Result<KktAssembler> {
        let mut placements = Vec::new();
        let nt = self.index.nt;
        for b in &self.blocks {
            let pairs: Vec<(usize, usize)> = match b.pattern {
                TimePattern::Diag => (0..nt).map(|k| (k, k)).collect(),
                TimePattern::Sub => (1..nt).map(|k| (k, k - 1)).collect(),
                TimePattern::Super => (0..nt.saturating_sub(1)).map(|k| (k, k + 1)).collect(),
            };
            for (kr, kc) in pairs {
                placements.push(Placement {
                    spatial: b.slot.index(),
                    row_off: self.index.slice_offset(b.row, kr),
                    col_off: self.index.slice_offset(b.col, kc),
                    transpose: b.transpose,
                    group: b.group,
                    scale: b.scale,
                });
            }
        }
        let refs = self.spatial_refs(None, None);
        KktAssembler::new(
            self.index.total(),
            &refs,
            placements,
            &self.unit_diag,
            N_MAT_GROUPS,
        )
    }

    /// Assemble the right-hand side at the given coefficients.
    pub fn assemble_rhs(&self, theta: &[f64; N_RHS_GROUPS]) -> DVector<f64> {
        let mut rhs = DVector::zeros(self.index.total());
        for term in &self.rhs_terms {
            let coeff = theta[term.group];
            if coeff == 0.0 {
                continue;
            }
            let ks: Vec<usize> = match term.time {
                RhsTime::All => (0..self.index.nt).collect(),
                RhsTime::AllButFirst => (1..self.index.nt).collect(),
                RhsTime::First => vec![0],
            };
            for k in ks {
                let off = self.index.slice_offset(term.var, k);
                for i in 0..term.vec.len() {
                    rhs[off + i] += coeff * term.vec[i];
                }
            }
        }
        rhs
    }

    pub fn has_convection(&self) -> bool {
        self.has_convection
    }

    /// Affine blocks of the system matrix (used by the reduced projection).
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }
}

/// Build every affine right-hand-side vector: target data on the state
/// gradient rows, essential values on the constrained rows, corrections from
/// eliminated essential columns, and (when starting from the lifted state)
/// the initial-condition load.
fn build_rhs_terms(
    disc: &Discretization,
    cfg: &ProblemConfig,
    dt: f64,
    vel_mask: &[bool],
) -> Result<Vec<RhsTerm>> {
    let nv = disc.layout.n_velocity;
    let mut terms = Vec::new();

    let mask_free = |mut v: DVector<f64>| {
        for i in 0..nv {
            if vel_mask[i] {
                v[i] = 0.0;
            }
        }
        v
    };

    // Target data: dt * (obs mass) * target on the state gradient rows.
    let mut obs_t = DVector::zeros(nv);
    disc.obs_mass
        .matvec(disc.unit_target.as_slice(), obs_t.as_mut_slice());
    terms.push(RhsTerm {
        group: GR_TARGET,
        var: Var::V,
        time: RhsTime::All,
        vec: mask_free(obs_t) * dt,
    });

    // Essential values: lift values on the constrained state velocity rows.
    let mut lift_rows = DVector::zeros(nv);
    for i in 0..nv {
        if vel_mask[i] {
            lift_rows[i] = disc.unit_lift[i];
        }
    }
    terms.push(RhsTerm {
        group: GR_LIFT,
        var: Var::V,
        time: RhsTime::All,
        vec: lift_rows,
    });

    // Corrections from eliminated essential columns: for a block `scale * A`
    // with state-velocity columns, move `-scale * A * lift` to the rhs of its
    // row block.  The lift is supported on constrained dofs only, so the raw
    // product captures exactly the eliminated columns.
    let lift = &disc.unit_lift;
    let correction = |m: &CsrMatrix, scale: f64| -> DVector<f64> {
        let mut out = DVector::zeros(m.nrows());
        m.matvec_add(scale, lift.as_slice(), out.as_mut_slice());
        out
    };

    let stiff = [
        (&disc.stiff_xx_ch, G_STIFF_XX_CH),
        (&disc.stiff_yy_ch, G_STIFF_YY_CH),
        (&disc.stiff_br, G_STIFF_BR),
    ];
    let mass = [(&disc.mass_ch, G_MASS_CH), (&disc.mass_br, G_MASS_BR)];
    let div = [(&disc.div_y_ch, G_DIV_Y_CH), (&disc.div_rest, G_DIV_REST)];

    // State momentum rows: viscous columns at all nodes.
    for (m, g) in stiff {
        terms.push(RhsTerm {
            group: g,
            var: Var::W,
            time: RhsTime::All,
            vec: mask_free(correction(m, -1.0)),
        });
    }
    // Observation columns on the state gradient rows (identically zero for
    // the template because the lift and the observation line are disjoint,
    // kept for structural completeness).
    terms.push(RhsTerm {
        group: G_OBS,
        var: Var::V,
        time: RhsTime::All,
        vec: mask_free(correction(&disc.obs_mass, -dt)),
    });
    // Continuity rows: divergence columns at all nodes.
    for (m, g) in div {
        let mut out = DVector::zeros(disc.layout.n_pressure);
        m.matvec_add(1.0, lift.as_slice(), out.as_mut_slice());
        terms.push(RhsTerm {
            group: g,
            var: Var::Q,
            time: RhsTime::All,
            vec: out,
        });
    }
    if cfg.problem == ProblemId::StokesTd {
        // Time-coupling columns of the constant-in-time lift: the diagonal
        // mass column contributes at every node, the subdiagonal at nodes
        // after the first; together they cancel except at the first node,
        // where the initial state enters.
        for (m, g) in mass {
            terms.push(RhsTerm {
                group: g,
                var: Var::W,
                time: RhsTime::All,
                vec: mask_free(correction(m, -1.0 / dt)),
            });
            terms.push(RhsTerm {
                group: g,
                var: Var::W,
                time: RhsTime::AllButFirst,
                vec: mask_free(correction(m, 1.0 / dt)),
            });
            if !cfg.zero_initial_state {
                // Initial state equal to the lifted profile.
                terms.push(RhsTerm {
                    group: g,
                    var: Var::W,
                    time: RhsTime::First,
                    vec: mask_free(correction(m, 1.0 / dt)),
                });
            }
        }
    }
    Ok(terms)
}
