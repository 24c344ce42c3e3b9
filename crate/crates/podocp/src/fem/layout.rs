//! Degree-of-freedom layout of the Taylor-Hood pair on a triangle mesh.
//!
//! Velocity: continuous piecewise quadratics, two components, dof index
//! `2 * node + component`.  Pressure: continuous piecewise linears on the
//! vertices.  Control: the velocity trace on the control boundary, indexed by
//! the control nodes that are not constrained by the no-slip walls.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Mesh};

/// One boundary or observation facet with its quadratic trace nodes.
#[derive(Debug, Clone, Copy)]
pub struct EdgeFacet {
    /// Global quadratic nodes: `[end a, end b, midpoint]`.
    pub nodes: [usize; 3],
    pub length: f64,
    /// Physical tag; `None` marks interior observation facets.
    pub tag: Option<BoundaryTag>,
}

/// Dof numbering and boundary classification for one mesh.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub n_vertices: usize,
    /// Quadratic node count: vertices first, edge midpoints after.
    pub n_p2: usize,
    /// Coordinates of every quadratic node.
    pub p2_coords: Vec<[f64; 2]>,
    /// Per-triangle quadratic connectivity in reference-local order.
    pub tri_p2: Vec<[usize; 6]>,
    /// Velocity dof count (`2 * n_p2`).
    pub n_velocity: usize,
    /// Pressure dof count (`n_vertices`).
    pub n_pressure: usize,
    /// Control dof count.
    pub n_control: usize,
    /// Velocity dof -> control dof (if the node carries control).
    pub control_of_vel: Vec<Option<u32>>,
    /// Control dof -> velocity dof.
    pub vel_of_control: Vec<usize>,
    /// Velocity dofs with essential (inlet/wall) data.
    pub dirichlet_mask: Vec<bool>,
    pub dirichlet_dofs: Vec<usize>,
    /// Quadratic nodes on the inlet that are not wall-constrained.
    pub inlet_nodes: Vec<usize>,
    /// Tagged boundary facets with trace data.
    pub boundary_edges: Vec<EdgeFacet>,
    /// Observation-line facets with trace data.
    pub observation_edges: Vec<EdgeFacet>,
}

impl DofLayout {
    #[inline]
    pub fn vel_dof(&self, node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    /// Mask over velocity dofs covering every tagged boundary node (inlet,
    /// walls, and control alike); used by fully constrained verification
    /// problems.
    pub fn full_boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_velocity];
        for f in &self.boundary_edges {
            for &n in &f.nodes {
                mask[self.vel_dof(n, 0)] = true;
                mask[self.vel_dof(n, 1)] = true;
            }
        }
        mask
    }
}

/// Number the quadratic nodes and classify boundary dofs.
pub fn build_layout(mesh: &Mesh) -> Result<DofLayout> {
    mesh.validate()?;
    let nv = mesh.n_vertices();

    // Global edge table in sorted-key order (deterministic).
    let mut edge_set = std::collections::BTreeSet::<(usize, usize)>::new();
    for tri in &mesh.triangles {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            edge_set.insert((a.min(b), a.max(b)));
        }
    }
    let edge_mid: std::collections::BTreeMap<(usize, usize), usize> = edge_set
        .iter()
        .enumerate()
        .map(|(k, &e)| (e, nv + k))
        .collect();
    let n_p2 = nv + edge_mid.len();

    let mut p2_coords = mesh.vertices.clone();
    p2_coords.resize(n_p2, [0.0, 0.0]);
    for (&(a, b), &m) in &edge_mid {
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        p2_coords[m] = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
    }

    let mid = |a: usize, b: usize| edge_mid[&(a.min(b), a.max(b))];
    let tri_p2: Vec<[usize; 6]> = mesh
        .triangles
        .iter()
        .map(|&[a, b, c]| [a, b, c, mid(a, b), mid(b, c), mid(c, a)])
        .collect();

    let facet_len = |a: usize, b: usize| {
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
    };
    let boundary_edges: Vec<EdgeFacet> = mesh
        .boundary
        .iter()
        .map(|f| EdgeFacet {
            nodes: [f.vertices[0], f.vertices[1], mid(f.vertices[0], f.vertices[1])],
            length: facet_len(f.vertices[0], f.vertices[1]),
            tag: Some(f.tag),
        })
        .collect();
    let observation_edges: Vec<EdgeFacet> = mesh
        .observation
        .iter()
        .map(|f| EdgeFacet {
            nodes: [f[0], f[1], mid(f[0], f[1])],
            length: facet_len(f[0], f[1]),
            tag: None,
        })
        .collect();

    // Node sets per tag.  A node on both a wall and the inlet (channel inlet
    // corners) or both a wall and a control segment (branch outlet corners)
    // is wall-constrained: the no-slip condition wins, so the node is neither
    // a lifted inlet node nor a control node.
    let mut wall_nodes = std::collections::BTreeSet::new();
    let mut inlet_all = std::collections::BTreeSet::new();
    let mut control_all = std::collections::BTreeSet::new();
    for f in &boundary_edges {
        let target = match f.tag.expect("tagged by construction") {
            BoundaryTag::Wall => &mut wall_nodes,
            BoundaryTag::Inlet => &mut inlet_all,
            BoundaryTag::Control => &mut control_all,
        };
        for n in f.nodes {
            target.insert(n);
        }
    }
    let inlet_nodes: Vec<usize> = inlet_all.difference(&wall_nodes).copied().collect();
    let control_nodes: Vec<usize> = control_all.difference(&wall_nodes).copied().collect();

    let n_velocity = 2 * n_p2;
    let mut dirichlet_mask = vec![false; n_velocity];
    for &n in wall_nodes.iter().chain(inlet_all.iter()) {
        dirichlet_mask[2 * n] = true;
        dirichlet_mask[2 * n + 1] = true;
    }
    let dirichlet_dofs: Vec<usize> = (0..n_velocity).filter(|&d| dirichlet_mask[d]).collect();

    let mut control_of_vel = vec![None; n_velocity];
    let mut vel_of_control = Vec::with_capacity(2 * control_nodes.len());
    for &n in &control_nodes {
        for comp in 0..2 {
            let vd = 2 * n + comp;
            if dirichlet_mask[vd] {
                return Err(Error::invalid(
                    "control node unexpectedly carries essential data",
                ));
            }
            control_of_vel[vd] = Some(vel_of_control.len() as u32);
            vel_of_control.push(vd);
        }
    }
    let n_control = vel_of_control.len();

    Ok(DofLayout {
        n_vertices: nv,
        n_p2,
        p2_coords,
        tri_p2,
        n_velocity,
        n_pressure: nv,
        n_control,
        control_of_vel,
        vel_of_control,
        dirichlet_mask,
        dirichlet_dofs,
        inlet_nodes,
        boundary_edges,
        observation_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_bifurcation_mesh, Subdomain};

    fn single_triangle() -> Mesh {
        Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            subdomain: vec![Subdomain::Channel],
            vertex_subdomain: vec![Subdomain::Channel; 3],
            boundary: vec![
                crate::geometry::BoundaryFacet {
                    vertices: [0, 1],
                    tag: BoundaryTag::Wall,
                },
                crate::geometry::BoundaryFacet {
                    vertices: [1, 2],
                    tag: BoundaryTag::Wall,
                },
                crate::geometry::BoundaryFacet {
                    vertices: [2, 0],
                    tag: BoundaryTag::Wall,
                },
            ],
            observation: vec![],
            h_target: 1.0,
            h_max: std::f64::consts::SQRT_2,
        }
    }

    #[test]
    fn single_triangle_dof_counts() {
        let layout = build_layout(&single_triangle()).unwrap();
        assert_eq!(layout.n_p2, 6);
        assert_eq!(layout.n_velocity, 12);
        assert_eq!(layout.n_pressure, 3);
        assert_eq!(layout.n_control, 0);
        assert_eq!(layout.dirichlet_dofs.len(), 12);
    }

    #[test]
    fn template_layout_is_consistent() {
        let mesh = build_bifurcation_mesh(0.5).unwrap();
        let layout = build_layout(&mesh).unwrap();
        assert_eq!(layout.n_pressure, mesh.n_vertices());
        // Euler: edges = vertices + triangles - 1 for a simply connected
        // planar triangulation (one connected boundary component).
        let n_edges = layout.n_p2 - mesh.n_vertices();
        assert_eq!(n_edges, mesh.n_vertices() + mesh.n_triangles() - 1);

        // Control columns: nb + 1 = 3 vertices and nb = 2 midpoints per
        // outlet, minus the two wall corners -> 3 nodes, both components.
        assert_eq!(layout.n_control, 2 * 2 * 3);

        // Every control dof is free, every inlet/wall node constrained.
        for &vd in &layout.vel_of_control {
            assert!(!layout.dirichlet_mask[vd]);
        }
        // Inlet nodes exclude the two channel corners at x2 = 0 and 2.
        for &n in &layout.inlet_nodes {
            let y = layout.p2_coords[n][1];
            assert!(y > 0.0 && y < 2.0);
            assert!(layout.p2_coords[n][0].abs() < 1e-14);
        }
        // Midpoint coordinates bisect their facet ends.
        for f in &layout.boundary_edges {
            let [a, b, m] = f.nodes;
            for d in 0..2 {
                let expect = 0.5 * (layout.p2_coords[a][d] + layout.p2_coords[b][d]);
                assert!((layout.p2_coords[m][d] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn refinement_scales_counts() {
        let coarse = build_layout(&build_bifurcation_mesh(0.5).unwrap()).unwrap();
        let fine = build_layout(&build_bifurcation_mesh(0.25).unwrap()).unwrap();
        assert!(fine.n_velocity > 3 * coarse.n_velocity);
        assert!(fine.n_pressure > 3 * coarse.n_pressure);
    }
}
