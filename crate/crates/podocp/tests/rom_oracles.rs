//! Independent oracles for the reduced-order layer.
//!
//! The reference values come from full-order objects only: congruence
//! products with the assembled monolithic matrix, direct application of the
//! full convection operators to reconstructed fields, the full cost
//! functional on reconstructed trajectories, and truth solves at training
//! points (the span-reproduction property).

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use podocp::fem::{apply_per_slice, assemble_convection, inflow_amplitude, spacetime_norm};
use podocp::geometry::build_bifurcation_mesh;
use podocp::instrument::full_order_ops;
use podocp::ocp::affine::{theta_rhs, KktStructure};
use podocp::ocp::{
    evaluate_cost, Discretization, NsSteadySolver, ProblemConfig, ProblemId, StokesTdSolver, Var,
};
use podocp::pod::{build_reduced_basis, collect_snapshots, sample_training_set, PodConfig, ReducedBasis};
use podocp::rom::{project, reconstruct, ReducedModel};
use podocp::sparse::CsrMatrix;

/// POD setup that keeps every snapshot direction (for span reproduction).
fn keep_all(n_max: usize) -> PodConfig {
    PodConfig {
        eps_tol: 0.0,
        n_max,
        min_rel_eig: 0.0,
    }
}

struct Setup {
    disc: Discretization,
    cfg: ProblemConfig,
    basis: ReducedBasis,
    model: ReducedModel,
    train: Vec<Vec<f64>>,
}

fn stokes_setup(h: f64, nt: usize, n_train: usize, seed: u64) -> Setup {
    let mesh = build_bifurcation_mesh(h).unwrap();
    let disc = Discretization::new(mesh, ProblemId::StokesTd).unwrap();
    let mut cfg = ProblemConfig::new(ProblemId::StokesTd);
    cfg.nt = nt;
    let train = sample_training_set(&cfg.param_box, n_train, seed);
    let snaps = collect_snapshots(&disc, &cfg, &train).unwrap();
    assert!(snaps.failures.is_empty());
    let basis = build_reduced_basis(&disc, &cfg, &snaps, &keep_all(n_train)).unwrap();
    assert_eq!(basis.n, n_train, "training directions must all be retained");
    assert_eq!(basis.dropped, 0);
    let structure = KktStructure::new(&disc, &cfg).unwrap();
    let model = project(&disc, &cfg, &structure, &basis).unwrap();
    Setup {
        disc,
        cfg,
        basis,
        model,
        train,
    }
}

fn ns_setup(h: f64, n_train: usize, seed: u64) -> Setup {
    let mesh = build_bifurcation_mesh(h).unwrap();
    let disc = Discretization::new(mesh, ProblemId::NsSteady).unwrap();
    let cfg = ProblemConfig::new(ProblemId::NsSteady);
    let train = sample_training_set(&cfg.param_box, n_train, seed);
    let snaps = collect_snapshots(&disc, &cfg, &train).unwrap();
    assert!(snaps.failures.is_empty());
    let basis = build_reduced_basis(&disc, &cfg, &snaps, &keep_all(n_train)).unwrap();
    assert_eq!(basis.n, n_train);
    assert_eq!(basis.dropped, 0);
    let structure = KktStructure::new(&disc, &cfg).unwrap();
    let model = project(&disc, &cfg, &structure, &basis).unwrap();
    Setup {
        disc,
        cfg,
        basis,
        model,
        train,
    }
}

/// Scatter the aggregated bases into one monolithic-layout matrix whose
/// columns follow the reduced ordering (V, P, U, W, Q blocks).
fn embed_basis(basis: &ReducedBasis, disc: &Discretization, nt: usize) -> DMatrix<f64> {
    let index = disc.block_index(nt);
    let dim = basis.total_dim();
    let mut z = DMatrix::zeros(index.total(), dim);
    let mut col = 0usize;
    let mut put = |mat: &DMatrix<f64>, var: Var, col: &mut usize| {
        let d = index.var_dim(var);
        for j in 0..mat.ncols() {
            for k in 0..nt {
                let off = index.slice_offset(var, k);
                for i in 0..d {
                    z[(off + i, *col)] = mat[(k * d + i, j)];
                }
            }
            *col += 1;
        }
    };
    put(&basis.velocity, Var::V, &mut col);
    put(&basis.pressure, Var::P, &mut col);
    put(&basis.control, Var::U, &mut col);
    put(&basis.velocity, Var::W, &mut col);
    put(&basis.pressure, Var::Q, &mut col);
    assert_eq!(col, dim);
    z
}

/// Trajectory-norm relative error between a reconstructed and a truth field.
fn rel_err(gram: &CsrMatrix, nt: usize, dt: f64, got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    let g: Vec<f64> = got.as_slice().to_vec();
    let w: Vec<f64> = want.as_slice().to_vec();
    let d: Vec<f64> = g.iter().zip(&w).map(|(a, b)| a - b).collect();
    let scale = spacetime_norm(gram, nt, dt, &w).max(1e-14);
    spacetime_norm(gram, nt, dt, &d) / scale
}

#[test]
fn reduced_operator_matches_full_congruence() {
    let s = stokes_setup(0.5, 3, 3, 101);
    let mut solver = StokesTdSolver::new(&s.disc, &s.cfg).unwrap();
    let z = embed_basis(&s.basis, &s.disc, s.cfg.nt);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let mu: Vec<f64> = s
            .cfg
            .param_box
            .lo
            .iter()
            .zip(&s.cfg.param_box.hi)
            .map(|(&l, &h)| l + (h - l) * rng.random::<f64>())
            .collect();
        let (kr, br) = s.model.assemble(&mu);

        solver.assemble(&mu).unwrap();
        let kf = solver.assembler().to_csr();
        let kz = kf.mul_dense(&z);
        let want_k = z.transpose() * kz;
        let bf = solver.structure().assemble_rhs(&theta_rhs(&s.cfg, &mu));
        let want_b = z.transpose() * bf;

        let scale_k = want_k.norm().max(1e-14);
        assert!(
            (&kr - &want_k).norm() <= 1e-10 * scale_k,
            "operator congruence mismatch {:.3e}",
            (&kr - &want_k).norm() / scale_k
        );
        let scale_b = want_b.norm().max(1e-14);
        assert!(
            (&br - &want_b).norm() <= 1e-10 * scale_b,
            "load congruence mismatch {:.3e}",
            (&br - &want_b).norm() / scale_b
        );
        // The projected time-dependent operator stays symmetric.
        let asym = (&kr - kr.transpose()).norm();
        assert!(asym <= 1e-10 * scale_k, "asymmetry {asym:.3e}");
    }
}

#[test]
fn stokes_reproduces_training_points() {
    let s = stokes_setup(0.5, 4, 4, 103);
    let mut solver = StokesTdSolver::new(&s.disc, &s.cfg).unwrap();
    let dt = s.cfg.dt();
    let nt = s.cfg.nt;
    for mu in &s.train {
        let truth = solver.solve(mu).unwrap();
        let red = s.model.solve(mu).unwrap();
        let fields = reconstruct(&s.basis, &s.disc, &s.cfg, mu, &red.coeffs).unwrap();
        let ev = rel_err(&s.disc.velocity_gram, nt, dt, &fields.v, &truth.v);
        let ep = rel_err(&s.disc.pressure_mass, nt, dt, &fields.p, &truth.p);
        let eu = rel_err(&s.disc.control_gram, nt, dt, &fields.u, &truth.u);
        let ew = rel_err(&s.disc.velocity_gram, nt, dt, &fields.w, &truth.w);
        let eq = rel_err(&s.disc.pressure_mass, nt, dt, &fields.q, &truth.q);
        for (name, e) in [("v", ev), ("p", ep), ("u", eu), ("w", ew), ("q", eq)] {
            assert!(e <= 1e-8, "{name} reproduction error {e:.3e} at {mu:?}");
        }
        let jerr = (red.cost - truth.cost).abs() / truth.cost.abs().max(1e-12);
        assert!(jerr <= 1e-8, "cost reproduction error {jerr:.3e}");
        assert!(red.residual <= 1e-10, "reduced residual {:.3e}", red.residual);
    }

    // Zero coefficients reconstruct to the lifted state and nothing else.
    let zero = DVector::zeros(s.model.dim());
    let f0 = reconstruct(&s.basis, &s.disc, &s.cfg, &s.train[0], &zero).unwrap();
    let amp = inflow_amplitude(ProblemId::StokesTd, &s.train[0]);
    for k in 0..nt {
        for i in 0..s.disc.layout.n_velocity {
            assert_eq!(f0.v[(i, k)], amp * s.disc.unit_lift[i]);
        }
    }
    assert_eq!(f0.p.norm(), 0.0);
    assert_eq!(f0.u.norm(), 0.0);
    assert_eq!(f0.w.norm(), 0.0);
    assert_eq!(f0.q.norm(), 0.0);
}

#[test]
fn projected_convection_matches_full_application() {
    let s = ns_setup(0.5, 2, 107);
    let z = &s.basis.velocity;
    let m = z.ncols();
    let nv = s.disc.layout.n_velocity;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a_v = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let a_w = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0 - 1.0);

    for amp in [0.0, 1.3] {
        // Full-order fields for the reference computation.
        let mut v_full = z * &a_v;
        for i in 0..nv {
            v_full[i] += amp * s.disc.unit_lift[i];
        }
        let w_full = z * &a_w;
        let (conv, conv_prime) =
            assemble_convection(v_full.as_slice(), &s.disc.mesh, &s.disc.layout).unwrap();

        // Reference V rows: ((v·grad) phi + (phi·grad) v, w) for each basis phi.
        let mut full_v = vec![0.0; nv];
        conv.tr_matvec_add(1.0, w_full.as_slice(), &mut full_v);
        conv_prime.tr_matvec_add(1.0, w_full.as_slice(), &mut full_v);
        let want_v = z.transpose() * DVector::from_column_slice(&full_v);

        // Reference W rows: ((v·grad) v, phi).
        let mut full_w = vec![0.0; nv];
        conv.matvec_add(1.0, v_full.as_slice(), &mut full_w);
        let want_w = z.transpose() * DVector::from_column_slice(&full_w);

        let (got_v, got_w) = s.model.convection_residual(&a_v, &a_w, amp);
        let sv = want_v.norm().max(1e-14);
        let sw = want_w.norm().max(1e-14);
        assert!(
            (&got_v - &want_v).norm() <= 1e-10 * sv,
            "amp {amp}: V-row mismatch {:.3e}",
            (&got_v - &want_v).norm() / sv
        );
        assert!(
            (&got_w - &want_w).norm() <= 1e-10 * sw,
            "amp {amp}: W-row mismatch {:.3e}",
            (&got_w - &want_w).norm() / sw
        );
    }
}

#[test]
fn ns_reproduces_training_points() {
    let s = ns_setup(0.5, 3, 109);
    let mut solver = NsSteadySolver::new(&s.disc, &s.cfg).unwrap();
    for mu in &s.train {
        let truth = solver.solve(mu).unwrap();
        let red = s.model.solve(mu).unwrap();
        assert!(red.iterations >= 1, "convective solve must iterate");
        assert!(red.residual <= s.cfg.newton_tol);
        let fields = reconstruct(&s.basis, &s.disc, &s.cfg, mu, &red.coeffs).unwrap();
        let ev = rel_err(&s.disc.velocity_gram, 1, 1.0, &fields.v, &truth.v);
        let ep = rel_err(&s.disc.pressure_mass, 1, 1.0, &fields.p, &truth.p);
        let eu = rel_err(&s.disc.control_gram, 1, 1.0, &fields.u, &truth.u);
        let ew = rel_err(&s.disc.velocity_gram, 1, 1.0, &fields.w, &truth.w);
        let eq = rel_err(&s.disc.pressure_mass, 1, 1.0, &fields.q, &truth.q);
        for (name, e) in [("v", ev), ("p", ep), ("u", eu), ("w", ew), ("q", eq)] {
            assert!(e <= 1e-8, "{name} reproduction error {e:.3e} at {mu:?}");
        }
        let jerr = (red.cost - truth.cost).abs() / truth.cost.abs().max(1e-12);
        assert!(jerr <= 1e-8, "cost reproduction error {jerr:.3e}");
    }
}

#[test]
fn reduced_cost_matches_full_functional() {
    let s = stokes_setup(0.5, 3, 3, 113);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let coeffs = DVector::from_fn(s.model.dim(), |_, _| 0.1 * (rng.random::<f64>() * 2.0 - 1.0));
    let mu = s.train[1].clone();
    let fields = reconstruct(&s.basis, &s.disc, &s.cfg, &mu, &coeffs).unwrap();
    let want = evaluate_cost(&s.disc, &s.cfg, &mu, &fields.v, &fields.u);
    let got = s.model.cost(&mu, &coeffs);
    assert!(
        (got - want).abs() <= 1e-10 * want.abs().max(1.0),
        "cost factor mismatch: reduced {got:.12e} vs full {want:.12e}"
    );

    let n = ns_setup(0.5, 2, 115);
    let coeffs = DVector::from_fn(n.model.dim(), |_, _| 0.1 * (rng.random::<f64>() * 2.0 - 1.0));
    let mu = n.train[0].clone();
    let fields = reconstruct(&n.basis, &n.disc, &n.cfg, &mu, &coeffs).unwrap();
    let want = evaluate_cost(&n.disc, &n.cfg, &mu, &fields.v, &fields.u);
    let got = n.model.cost(&mu, &coeffs);
    assert!(
        (got - want).abs() <= 1e-10 * want.abs().max(1.0),
        "cost factor mismatch: reduced {got:.12e} vs full {want:.12e}"
    );
}

#[test]
fn online_solves_touch_no_full_order_objects() {
    let s = stokes_setup(0.5, 3, 3, 117);
    let n = ns_setup(0.5, 2, 119);
    let mu_s = s.train[0].clone();
    let mu_n = n.train[0].clone();
    // Warm up once so lazily cached state cannot be blamed.
    s.model.solve(&mu_s).unwrap();
    n.model.solve(&mu_n).unwrap();
    let before = full_order_ops();
    let a = s.model.solve(&mu_s).unwrap();
    let b = n.model.solve(&mu_n).unwrap();
    let after = full_order_ops();
    assert_eq!(
        before, after,
        "reduced solves performed {} full-order operations",
        after - before
    );
    assert!(a.cost.is_finite() && b.cost.is_finite());
}

#[test]
fn ns_zero_inflow_gives_zero_solution() {
    let s = ns_setup(0.5, 2, 121);
    // Amplitude zero lies outside the configured box; the solver warns about
    // extrapolation but the data, and hence the solution, are exactly zero.
    let red = s.model.solve(&[0.0]).unwrap();
    assert!(red.coeffs.norm() <= 1e-12, "coefficients {:.3e}", red.coeffs.norm());
    assert!(red.cost.abs() <= 1e-24);
    assert_eq!(red.iterations, 0);
}

#[test]
fn galerkin_error_is_bounded_by_projection_error() {
    let s = stokes_setup(0.5, 3, 5, 123);
    let mut solver = StokesTdSolver::new(&s.disc, &s.cfg).unwrap();
    let nt = s.cfg.nt;
    let dt = s.cfg.dt();
    let test_set = sample_training_set(&s.cfg.param_box, 5, 999);

    // Trajectory-product projection residual onto an aggregated basis.
    let proj_err = |basis_mat: &DMatrix<f64>, gram: &CsrMatrix, field: &DMatrix<f64>| -> f64 {
        let x: Vec<f64> = field.as_slice().to_vec();
        let mut gx = vec![0.0; x.len()];
        apply_per_slice(gram, nt, &x, &mut gx);
        let gx = DVector::from_column_slice(&gx) * dt;
        let coeffs = basis_mat.transpose() * gx;
        let recon = basis_mat * coeffs;
        let res: Vec<f64> = x.iter().zip(recon.iter()).map(|(a, b)| a - b).collect();
        spacetime_norm(gram, nt, dt, &res)
    };

    for mu in &test_set {
        let truth = solver.solve(mu).unwrap();
        let red = s.model.solve(mu).unwrap();
        let fields = reconstruct(&s.basis, &s.disc, &s.cfg, mu, &red.coeffs).unwrap();

        let amp = inflow_amplitude(ProblemId::StokesTd, mu);
        let mut v_hom = truth.v.clone();
        for k in 0..nt {
            for i in 0..s.disc.layout.n_velocity {
                v_hom[(i, k)] -= amp * s.disc.unit_lift[i];
            }
        }
        let best = proj_err(&s.basis.velocity, &s.disc.velocity_gram, &v_hom)
            + proj_err(&s.basis.pressure, &s.disc.pressure_mass, &truth.p)
            + proj_err(&s.basis.control, &s.disc.control_gram, &truth.u)
            + proj_err(&s.basis.velocity, &s.disc.velocity_gram, &truth.w)
            + proj_err(&s.basis.pressure, &s.disc.pressure_mass, &truth.q);

        let diff: Vec<f64> = fields
            .v
            .as_slice()
            .iter()
            .zip(truth.v.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let err_v = spacetime_norm(&s.disc.velocity_gram, nt, dt, &diff);
        let scale = spacetime_norm(&s.disc.velocity_gram, nt, dt, &truth.v.as_slice().to_vec());
        assert!(
            err_v <= 100.0 * best + 1e-12 * scale,
            "Galerkin error {err_v:.3e} exceeds 100x best approximation {best:.3e} at {mu:?}"
        );
    }
}

#[test]
fn truncated_basis_still_solves() {
    let s = stokes_setup(0.5, 3, 4, 127);
    let small = s.basis.truncate(&s.disc, 2).unwrap();
    assert_eq!(small.total_dim(), 26);
    let structure = KktStructure::new(&s.disc, &s.cfg).unwrap();
    let model = project(&s.disc, &s.cfg, &structure, &small).unwrap();
    assert_eq!(model.dim(), 26);
    let red = model.solve(&s.train[0]).unwrap();
    assert!(red.residual <= 1e-10);
    assert!(red.cost.is_finite());
}
