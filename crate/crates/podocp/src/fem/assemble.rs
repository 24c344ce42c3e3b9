//! Quadrature-based assembly of all bilinear and trilinear forms.
//!
//! Domain forms accept a subdomain selector so that parameter-dependent
//! operators can be split into the blocks of the affine decomposition.
//! The default triangle rule integrates every assembled integrand exactly
//! (total degree at most five for the convection terms on affine triangles).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::layout::DofLayout;
use crate::fem::shape;
use crate::geometry::{BoundaryTag, Mesh, Subdomain};
use crate::quadrature;
use crate::sparse::{CooBuilder, CsrMatrix};

/// Which subdomains a domain form integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainSel {
    All,
    Channel,
    Branches,
}

impl DomainSel {
    fn accepts(self, sub: Subdomain) -> bool {
        match self {
            DomainSel::All => true,
            DomainSel::Channel => sub == Subdomain::Channel,
            DomainSel::Branches => sub != Subdomain::Channel,
        }
    }
}

/// Bilinear forms over triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainForm {
    /// `(v, w)`: vector velocity mass.
    VelocityMass,
    /// `(grad v, grad w)`: full velocity stiffness.
    VelocityStiffness,
    /// `(d1 v, d1 w)`: x-derivative part of the stiffness.
    VelocityStiffnessXx,
    /// `(d2 v, d2 w)`: y-derivative part of the stiffness.
    VelocityStiffnessYy,
    /// `(p, q)`: pressure mass.
    PressureMass,
    /// `(q, div v)`: rows pressure, columns velocity.
    Divergence,
    /// `(q, d1 v_1)` part of the divergence.
    DivergenceX,
    /// `(q, d2 v_2)` part of the divergence.
    DivergenceY,
}

/// Bilinear forms over boundary or observation facets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryForm {
    /// Velocity trace mass on the observation line (velocity x velocity).
    ObservationMass,
    /// Control trace mass on the control boundary (control x control).
    ControlMass,
    /// Tangential-gradient form on the control boundary (control x control).
    ControlTangentGradient,
    /// Control-to-momentum coupling (velocity x control).
    ControlCoupling,
}

struct ElementGeometry {
    /// Physical gradients of the quadratic basis at each quadrature point.
    grads: Vec<[[f64; 2]; 6]>,
    /// Quadratic basis values at each quadrature point.
    vals: Vec<[f64; 6]>,
    /// Linear basis values at each quadrature point.
    p1_vals: Vec<[f64; 3]>,
    /// Quadrature weight times Jacobian determinant per point.
    wdet: Vec<f64>,
}

fn element_geometry(mesh: &Mesh, tri: usize, rule: &[quadrature::TriPoint]) -> ElementGeometry {
    let [a, b, c] = mesh.triangles[tri];
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let pc = mesh.vertices[c];
    let j = [[pb[0] - pa[0], pc[0] - pa[0]], [pb[1] - pa[1], pc[1] - pa[1]]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    // inv(J)^T rows scaled by 1/det.
    let inv_t = [
        [j[1][1] / det, -j[1][0] / det],
        [-j[0][1] / det, j[0][0] / det],
    ];
    let mut grads = Vec::with_capacity(rule.len());
    let mut vals = Vec::with_capacity(rule.len());
    let mut p1_vals = Vec::with_capacity(rule.len());
    let mut wdet = Vec::with_capacity(rule.len());
    for q in rule {
        let g_ref = shape::p2_grads(q.x, q.y);
        let mut g = [[0.0; 2]; 6];
        for i in 0..6 {
            for d in 0..2 {
                g[i][d] = inv_t[d][0] * g_ref[i][0] + inv_t[d][1] * g_ref[i][1];
            }
        }
        grads.push(g);
        vals.push(shape::p2_values(q.x, q.y));
        p1_vals.push(shape::p1_values(q.x, q.y));
        wdet.push(q.w * det.abs());
    }
    ElementGeometry {
        grads,
        vals,
        p1_vals,
        wdet,
    }
}

/// Assemble a domain form over the selected subdomains.
pub fn assemble_domain_form(
    form: DomainForm,
    mesh: &Mesh,
    layout: &DofLayout,
    sel: DomainSel,
) -> Result<CsrMatrix> {
    let rule = quadrature::triangle_rule_default();
    let (nrows, ncols) = match form {
        DomainForm::VelocityMass
        | DomainForm::VelocityStiffness
        | DomainForm::VelocityStiffnessXx
        | DomainForm::VelocityStiffnessYy => (layout.n_velocity, layout.n_velocity),
        DomainForm::PressureMass => (layout.n_pressure, layout.n_pressure),
        DomainForm::Divergence | DomainForm::DivergenceX | DomainForm::DivergenceY => {
            (layout.n_pressure, layout.n_velocity)
        }
    };
    let mut coo = CooBuilder::new(nrows, ncols);
    for t in 0..mesh.n_triangles() {
        if !sel.accepts(mesh.subdomain[t]) {
            continue;
        }
        let geo = element_geometry(mesh, t, &rule);
        let nodes = layout.tri_p2[t];
        let tri = mesh.triangles[t];
        match form {
            DomainForm::VelocityMass => {
                let mut local = [[0.0; 6]; 6];
                for (q, &w) in geo.wdet.iter().enumerate() {
                    let v = geo.vals[q];
                    for i in 0..6 {
                        for j in 0..6 {
                            local[i][j] += w * v[i] * v[j];
                        }
                    }
                }
                scatter_scalar_per_component(&mut coo, layout, &nodes, &local);
            }
            DomainForm::VelocityStiffness
            | DomainForm::VelocityStiffnessXx
            | DomainForm::VelocityStiffnessYy => {
                let mut local = [[0.0; 6]; 6];
                for (q, &w) in geo.wdet.iter().enumerate() {
                    let g = geo.grads[q];
                    for i in 0..6 {
                        for j in 0..6 {
                            let prod = match form {
                                DomainForm::VelocityStiffness => {
                                    g[i][0] * g[j][0] + g[i][1] * g[j][1]
                                }
                                DomainForm::VelocityStiffnessXx => g[i][0] * g[j][0],
                                _ => g[i][1] * g[j][1],
                            };
                            local[i][j] += w * prod;
                        }
                    }
                }
                scatter_scalar_per_component(&mut coo, layout, &nodes, &local);
            }
            DomainForm::PressureMass => {
                for (q, &w) in geo.wdet.iter().enumerate() {
                    let v = geo.p1_vals[q];
                    for i in 0..3 {
                        for j in 0..3 {
                            coo.push(tri[i], tri[j], w * v[i] * v[j]);
                        }
                    }
                }
            }
            DomainForm::Divergence | DomainForm::DivergenceX | DomainForm::DivergenceY => {
                let comps: &[usize] = match form {
                    DomainForm::Divergence => &[0, 1],
                    DomainForm::DivergenceX => &[0],
                    _ => &[1],
                };
                for (q, &w) in geo.wdet.iter().enumerate() {
                    let pv = geo.p1_vals[q];
                    let g = geo.grads[q];
                    for i in 0..3 {
                        for j in 0..6 {
                            for &c in comps {
                                coo.push(
                                    tri[i],
                                    layout.vel_dof(nodes[j], c),
                                    w * pv[i] * g[j][c],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    coo.build()
}

fn scatter_scalar_per_component(
    coo: &mut CooBuilder,
    layout: &DofLayout,
    nodes: &[usize; 6],
    local: &[[f64; 6]; 6],
) {
    // Push every local entry, zeros included, so re-assembled matrices keep
    // one fixed sparsity pattern regardless of the field values.
    for i in 0..6 {
        for j in 0..6 {
            for c in 0..2 {
                coo.push(
                    layout.vel_dof(nodes[i], c),
                    layout.vel_dof(nodes[j], c),
                    local[i][j],
                );
            }
        }
    }
}

/// Assemble a boundary form over its natural facet set.
pub fn assemble_boundary_form(
    form: BoundaryForm,
    layout: &DofLayout,
) -> Result<CsrMatrix> {
    let rule = quadrature::edge_rule_default();
    let (nrows, ncols) = match form {
        BoundaryForm::ObservationMass => (layout.n_velocity, layout.n_velocity),
        BoundaryForm::ControlMass | BoundaryForm::ControlTangentGradient => {
            (layout.n_control, layout.n_control)
        }
        BoundaryForm::ControlCoupling => (layout.n_velocity, layout.n_control),
    };
    let mut coo = CooBuilder::new(nrows, ncols);
    let facets: Vec<_> = match form {
        BoundaryForm::ObservationMass => layout.observation_edges.clone(),
        _ => layout
            .boundary_edges
            .iter()
            .filter(|f| f.tag == Some(BoundaryTag::Control))
            .copied()
            .collect(),
    };
    for f in &facets {
        let mut local = [[0.0; 3]; 3];
        for &(t, w) in &rule {
            let (vi, scale) = match form {
                BoundaryForm::ControlTangentGradient => {
                    // d/ds = d/dt / length; ds = length dt.
                    (shape::edge_p2_derivs(t), w / f.length)
                }
                _ => (shape::edge_p2_values(t), w * f.length),
            };
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += scale * vi[i] * vi[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                for c in 0..2 {
                    let (row_vel, col_vel) = (
                        layout.vel_dof(f.nodes[i], c),
                        layout.vel_dof(f.nodes[j], c),
                    );
                    match form {
                        BoundaryForm::ObservationMass => {
                            coo.push(row_vel, col_vel, local[i][j]);
                        }
                        BoundaryForm::ControlMass | BoundaryForm::ControlTangentGradient => {
                            if let (Some(ri), Some(ci)) = (
                                layout.control_of_vel[row_vel],
                                layout.control_of_vel[col_vel],
                            ) {
                                coo.push(ri as usize, ci as usize, local[i][j]);
                            }
                        }
                        BoundaryForm::ControlCoupling => {
                            if let Some(ci) = layout.control_of_vel[col_vel] {
                                coo.push(row_vel, ci as usize, local[i][j]);
                            }
                        }
                    }
                }
            }
        }
    }
    coo.build()
}

/// Velocity field values and gradient at a quadrature point.
fn field_at(
    geo: &ElementGeometry,
    q: usize,
    nodes: &[usize; 6],
    field: &[f64],
) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut v = [0.0; 2];
    let mut grad = [[0.0; 2]; 2]; // grad[d][e] = d v_d / d x_e
    for i in 0..6 {
        for d in 0..2 {
            let coeff = field[2 * nodes[i] + d];
            v[d] += geo.vals[q][i] * coeff;
            for e in 0..2 {
                grad[d][e] += geo.grads[q][i][e] * coeff;
            }
        }
    }
    (v, grad)
}

/// Assemble both convection linearizations around a velocity field `v`:
/// `C[i][j] = ((v . grad) phi_j, phi_i)` and
/// `Cp[i][j] = ((phi_j . grad) v, phi_i)`.
pub fn assemble_convection(
    field: &[f64],
    mesh: &Mesh,
    layout: &DofLayout,
) -> Result<(CsrMatrix, CsrMatrix)> {
    if field.len() != layout.n_velocity {
        return Err(Error::invalid("convection field has wrong dimension"));
    }
    let rule = quadrature::triangle_rule_default();
    let n = layout.n_velocity;
    let mut coo_c = CooBuilder::new(n, n);
    let mut coo_cp = CooBuilder::new(n, n);
    for t in 0..mesh.n_triangles() {
        let geo = element_geometry(mesh, t, &rule);
        let nodes = layout.tri_p2[t];
        let mut local_c = [[0.0; 6]; 6];
        let mut local_cp = [[[0.0; 2]; 2]; 36];
        for (q, &w) in geo.wdet.iter().enumerate() {
            let (v, grad_v) = field_at(&geo, q, &nodes, field);
            for i in 0..6 {
                for j in 0..6 {
                    // (v . grad) phi_j is diagonal in the component index.
                    let adv = v[0] * geo.grads[q][j][0] + v[1] * geo.grads[q][j][1];
                    local_c[i][j] += w * geo.vals[q][i] * adv;
                    // ((e_c phi_j) . grad) v has components phi_j dv_d/dx_c.
                    let base = w * geo.vals[q][i] * geo.vals[q][j];
                    for d in 0..2 {
                        for c in 0..2 {
                            local_cp[6 * i + j][d][c] += base * grad_v[d][c];
                        }
                    }
                }
            }
        }
        scatter_scalar_per_component(&mut coo_c, layout, &nodes, &local_c);
        for i in 0..6 {
            for j in 0..6 {
                for d in 0..2 {
                    for c in 0..2 {
                        // Zeros included: keeps the pattern field-independent.
                        coo_cp.push(
                            layout.vel_dof(nodes[i], d),
                            layout.vel_dof(nodes[j], c),
                            local_cp[6 * i + j][d][c],
                        );
                    }
                }
            }
        }
    }
    Ok((coo_c.build()?, coo_cp.build()?))
}

/// Assemble the symmetric second derivative of the convection term tested
/// against a fixed field `w`:
/// `H[i][j] = ((phi_i . grad) phi_j, w) + ((phi_j . grad) phi_i, w)`.
pub fn assemble_convection_hessian(
    wfield: &[f64],
    mesh: &Mesh,
    layout: &DofLayout,
) -> Result<CsrMatrix> {
    if wfield.len() != layout.n_velocity {
        return Err(Error::invalid("hessian field has wrong dimension"));
    }
    let rule = quadrature::triangle_rule_default();
    let n = layout.n_velocity;
    let mut coo = CooBuilder::new(n, n);
    for t in 0..mesh.n_triangles() {
        let geo = element_geometry(mesh, t, &rule);
        let nodes = layout.tri_p2[t];
        let mut local = [[[[0.0; 2]; 2]; 6]; 6];
        for (q, &wq) in geo.wdet.iter().enumerate() {
            let mut wv = [0.0; 2];
            for i in 0..6 {
                for d in 0..2 {
                    wv[d] += geo.vals[q][i] * wfield[2 * nodes[i] + d];
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    for ci in 0..2 {
                        for cj in 0..2 {
                            // ((e_ci phi_i) . grad)(e_cj phi_j) . w
                            //   = phi_i (d phi_j / d x_ci) w_cj, plus i <-> j.
                            local[i][j][ci][cj] += wq
                                * (geo.vals[q][i] * geo.grads[q][j][ci] * wv[cj]
                                    + geo.vals[q][j] * geo.grads[q][i][cj] * wv[ci]);
                        }
                    }
                }
            }
        }
        // Zeros included: keeps the pattern field-independent.
        for i in 0..6 {
            for j in 0..6 {
                for ci in 0..2 {
                    for cj in 0..2 {
                        coo.push(
                            layout.vel_dof(nodes[i], ci),
                            layout.vel_dof(nodes[j], cj),
                            local[i][j][ci][cj],
                        );
                    }
                }
            }
        }
    }
    coo.build()
}

/// Trilinear convection value `((a . grad) b, c)` for discrete fields.
pub fn trilinear(a: &[f64], b: &[f64], c: &[f64], mesh: &Mesh, layout: &DofLayout) -> f64 {
    let rule = quadrature::triangle_rule_default();
    let mut acc = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = element_geometry(mesh, t, &rule);
        let nodes = layout.tri_p2[t];
        for (q, &w) in geo.wdet.iter().enumerate() {
            let (av, _) = field_at(&geo, q, &nodes, a);
            let (cv, _) = field_at(&geo, q, &nodes, c);
            let (_, gb) = field_at(&geo, q, &nodes, b);
            let mut val = 0.0;
            for d in 0..2 {
                val += (av[0] * gb[d][0] + av[1] * gb[d][1]) * cv[d];
            }
            acc += w * val;
        }
    }
    acc
}

/// Evaluate a velocity field and a pressure field at a physical point of a
/// given triangle (used by verification tests and exports).
pub fn evaluate_in_triangle(
    mesh: &Mesh,
    layout: &DofLayout,
    tri: usize,
    point: [f64; 2],
    velocity: Option<&[f64]>,
    pressure: Option<&[f64]>,
) -> ([f64; 2], f64) {
    let [a, b, c] = mesh.triangles[tri];
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let pc = mesh.vertices[c];
    let j = [[pb[0] - pa[0], pc[0] - pa[0]], [pb[1] - pa[1], pc[1] - pa[1]]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let rhs = [point[0] - pa[0], point[1] - pa[1]];
    let x = (j[1][1] * rhs[0] - j[0][1] * rhs[1]) / det;
    let y = (-j[1][0] * rhs[0] + j[0][0] * rhs[1]) / det;
    let v2 = shape::p2_values(x, y);
    let v1 = shape::p1_values(x, y);
    let nodes = layout.tri_p2[tri];
    let mut vel = [0.0; 2];
    if let Some(vf) = velocity {
        for i in 0..6 {
            for d in 0..2 {
                vel[d] += v2[i] * vf[2 * nodes[i] + d];
            }
        }
    }
    let mut p = 0.0;
    if let Some(pf) = pressure {
        let tri_v = mesh.triangles[tri];
        for i in 0..3 {
            p += v1[i] * pf[tri_v[i]];
        }
    }
    (vel, p)
}

/// Nodal interpolation of an analytic velocity field.
pub fn interpolate_velocity(
    layout: &DofLayout,
    f: impl Fn([f64; 2]) -> [f64; 2],
) -> DVector<f64> {
    let mut out = DVector::zeros(layout.n_velocity);
    for (n, &p) in layout.p2_coords.iter().enumerate() {
        let v = f(p);
        out[2 * n] = v[0];
        out[2 * n + 1] = v[1];
    }
    out
}

/// Nodal interpolation of an analytic pressure field.
pub fn interpolate_pressure(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> DVector<f64> {
    DVector::from_iterator(mesh.n_vertices(), mesh.vertices.iter().map(|&p| f(p)))
}

/// Physical coordinates of a quadrature point from its linear basis values.
fn physical_point(mesh: &Mesh, tri: usize, p1: &[f64; 3]) -> [f64; 2] {
    let [a, b, c] = mesh.triangles[tri];
    let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
    [
        p1[0] * pa[0] + p1[1] * pb[0] + p1[2] * pc[0],
        p1[0] * pa[1] + p1[1] * pb[1] + p1[2] * pc[1],
    ]
}

/// Assemble the velocity load vector of an analytic body force with the
/// high-order rule (used by verification against manufactured solutions).
pub fn assemble_velocity_load(
    mesh: &Mesh,
    layout: &DofLayout,
    f: impl Fn([f64; 2]) -> [f64; 2],
) -> DVector<f64> {
    let rule = quadrature::triangle_rule_fine();
    let mut out = DVector::zeros(layout.n_velocity);
    for t in 0..mesh.n_triangles() {
        let geo = element_geometry(mesh, t, &rule);
        let nodes = layout.tri_p2[t];
        for (q, &w) in geo.wdet.iter().enumerate() {
            let fx = f(physical_point(mesh, t, &geo.p1_vals[q]));
            for i in 0..6 {
                for d in 0..2 {
                    out[layout.vel_dof(nodes[i], d)] += w * geo.vals[q][i] * fx[d];
                }
            }
        }
    }
    out
}

/// `L2` and `H1`-seminorm errors of a discrete velocity field against an
/// analytic solution, integrated with the high-order rule.
pub fn velocity_error(
    field: &[f64],
    mesh: &Mesh,
    layout: &DofLayout,
    exact: impl Fn([f64; 2]) -> [f64; 2],
    exact_grad: impl Fn([f64; 2]) -> [[f64; 2]; 2],
) -> (f64, f64) {
    let rule = quadrature::triangle_rule_fine();
    let (mut l2, mut h1) = (0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        let geo = element_geometry(mesh, t, &rule);
        let nodes = layout.tri_p2[t];
        for (q, &w) in geo.wdet.iter().enumerate() {
            let x = physical_point(mesh, t, &geo.p1_vals[q]);
            let (vh, gh) = field_at(&geo, q, &nodes, field);
            let ve = exact(x);
            let ge = exact_grad(x);
            for d in 0..2 {
                let dv = vh[d] - ve[d];
                l2 += w * dv * dv;
                for e in 0..2 {
                    let dg = gh[d][e] - ge[d][e];
                    h1 += w * dg * dg;
                }
            }
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// `L2` error of a discrete pressure field against an analytic solution.
pub fn pressure_error(
    field: &[f64],
    mesh: &Mesh,
    exact: impl Fn([f64; 2]) -> f64,
) -> f64 {
    let rule = quadrature::triangle_rule_fine();
    let mut l2 = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = element_geometry(mesh, t, &rule);
        let tri_v = mesh.triangles[t];
        for (q, &w) in geo.wdet.iter().enumerate() {
            let x = physical_point(mesh, t, &geo.p1_vals[q]);
            let mut ph = 0.0;
            for i in 0..3 {
                ph += geo.p1_vals[q][i] * field[tri_v[i]];
            }
            let d = ph - exact(x);
            l2 += w * d * d;
        }
    }
    l2.sqrt()
}
