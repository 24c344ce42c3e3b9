//! Bifurcation domain: mesh template, parametric stretch map, and the scalar
//! factors of the affine geometry decomposition.
//!
//! The reference domain is a horizontal channel `[0, 4] x [0, 2]` that splits
//! at `x = 4` into two straight branches of length 3 and width 1, inclined at
//! +45 and -45 degrees.  Both branches end in vertical outlet segments of
//! length 1 where the boundary control acts.  Velocity observations live on
//! the vertical line `x = 2` inside the channel.
//!
//! The geometric parameter stretches the channel horizontally by `mu2`
//! (`x -> mu2 * x`) and translates both branches rigidly by
//! `((mu2 - 1) * 4, 0)` so they stay attached.  Because the map is affine on
//! each subdomain, all bilinear forms on the deformed domain are weighted
//! combinations of reference-domain matrices; [`affine_geometry_factors`]
//! returns the weights.

use crate::error::{Error, Result};

/// Channel length of the reference template.
pub const CHANNEL_LENGTH: f64 = 4.0;
/// Channel height of the reference template.
pub const CHANNEL_HEIGHT: f64 = 2.0;
/// Branch length along its axis.
pub const BRANCH_LENGTH: f64 = 3.0;
/// Branch width (vertical extent of the inclined parallelogram).
pub const BRANCH_WIDTH: f64 = 1.0;
/// Position of the observation line inside the channel.
pub const OBSERVATION_X: f64 = 2.0;

const COS45: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Physical boundary classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Inflow segment `{0} x [0, 2]`.
    Inlet,
    /// No-slip walls (channel top/bottom and branch sides).
    Wall,
    /// Control segments: the two vertical outlet ends of the branches.
    Control,
}

/// Subdomain labels used by the piecewise-affine geometry map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subdomain {
    Channel,
    UpperBranch,
    LowerBranch,
}

impl Subdomain {
    pub fn index(self) -> usize {
        match self {
            Subdomain::Channel => 0,
            Subdomain::UpperBranch => 1,
            Subdomain::LowerBranch => 2,
        }
    }
}

/// One straight boundary facet (edge of a triangle) with its tag.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Conforming triangle mesh of the bifurcation template.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Subdomain label per triangle.
    pub subdomain: Vec<Subdomain>,
    /// Subdomain label per vertex (welded vertices count as channel).
    pub vertex_subdomain: Vec<Subdomain>,
    pub boundary: Vec<BoundaryFacet>,
    /// Interior facets on the observation line, not part of the boundary.
    pub observation: Vec<[usize; 2]>,
    /// Requested mesh width.
    pub h_target: f64,
    /// Largest edge length actually realized.
    pub h_max: f64,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of a triangle (positive for counter-clockwise order).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let pc = self.vertices[c];
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Check structural soundness: positive areas, boundary facets belonging
    /// to exactly one triangle, observation facets to exactly two, no
    /// duplicated vertex coordinates.
    pub fn validate(&self) -> Result<()> {
        if self.triangles.len() != self.subdomain.len() {
            return Err(Error::invalid("subdomain label count mismatch"));
        }
        if self.vertices.len() != self.vertex_subdomain.len() {
            return Err(Error::invalid("vertex subdomain label count mismatch"));
        }
        for t in 0..self.n_triangles() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::invalid(format!(
                    "triangle {t} is degenerate or clockwise"
                )));
            }
        }
        // Count how many triangles contain each undirected edge.
        let mut edge_count = std::collections::BTreeMap::<(usize, usize), usize>::new();
        for tri in &self.triangles {
            for e in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = (e.0.min(e.1), e.0.max(e.1));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for f in &self.boundary {
            let key = (
                f.vertices[0].min(f.vertices[1]),
                f.vertices[0].max(f.vertices[1]),
            );
            if edge_count.get(&key).copied() != Some(1) {
                return Err(Error::invalid(format!(
                    "boundary facet {:?} is not a boundary edge",
                    f.vertices
                )));
            }
        }
        for f in &self.observation {
            let key = (f[0].min(f[1]), f[0].max(f[1]));
            if edge_count.get(&key).copied() != Some(2) {
                return Err(Error::invalid(format!(
                    "observation facet {f:?} is not an interior edge"
                )));
            }
        }
        // Every boundary edge of the triangulation must carry a tag.
        let tagged: std::collections::BTreeSet<(usize, usize)> = self
            .boundary
            .iter()
            .map(|f| {
                (
                    f.vertices[0].min(f.vertices[1]),
                    f.vertices[0].max(f.vertices[1]),
                )
            })
            .collect();
        for (&key, &count) in &edge_count {
            if count == 1 && !tagged.contains(&key) {
                return Err(Error::invalid(format!("untagged boundary edge {key:?}")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.vertices {
            if !seen.insert((v[0].to_bits(), v[1].to_bits())) {
                return Err(Error::invalid(format!("duplicate vertex at {v:?}")));
            }
        }
        Ok(())
    }
}

/// Piecewise-affine deformation of the template: channel stretch by `mu2`
/// with rigid branch translation keeping the junction attached.
#[derive(Debug, Clone, Copy)]
pub struct GeometricMap {
    pub mu2: f64,
}

impl GeometricMap {
    pub fn apply(&self, sub: Subdomain, p: [f64; 2]) -> [f64; 2] {
        match sub {
            Subdomain::Channel => [self.mu2 * p[0], p[1]],
            Subdomain::UpperBranch | Subdomain::LowerBranch => {
                [p[0] + (self.mu2 - 1.0) * CHANNEL_LENGTH, p[1]]
            }
        }
    }

    /// Jacobian of the map on the given subdomain (constant there).
    pub fn jacobian(&self, sub: Subdomain) -> [[f64; 2]; 2] {
        match sub {
            Subdomain::Channel => [[self.mu2, 0.0], [0.0, 1.0]],
            _ => [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn det(&self, sub: Subdomain) -> f64 {
        match sub {
            Subdomain::Channel => self.mu2,
            _ => 1.0,
        }
    }
}

/// Build the deformation map for a channel stretch factor.
///
/// Any positive factor is accepted; values outside the calibrated range
/// `[1, 2]` are allowed but logged as a warning.
pub fn stretch_map(mu2: f64) -> Result<GeometricMap> {
    if !(mu2 > 0.0) || !mu2.is_finite() {
        return Err(Error::invalid(format!(
            "stretch factor must be positive and finite, got {mu2}"
        )));
    }
    if !(1.0..=2.0).contains(&mu2) {
        log::warn!("stretch factor {mu2} outside the calibrated range [1, 2]");
    }
    Ok(GeometricMap { mu2 })
}

/// Apply a deformation map to every vertex, keeping the connectivity.
pub fn deform_mesh(mesh: &Mesh, map: &GeometricMap) -> Mesh {
    let mut out = mesh.clone();
    for (v, sub) in out.vertices.iter_mut().zip(&mesh.vertex_subdomain) {
        *v = map.apply(*sub, *v);
    }
    out.h_max = measure_h_max(&out);
    out
}

/// Scalar weights of the affine geometry decomposition at stretch `mu2`.
///
/// Forms assembled on the channel pull back to the reference channel with
/// these weights; branch and boundary contributions are unaffected (weight
/// one) because branches move rigidly and all tagged boundary segments are
/// vertical lines, invariant under the horizontal stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoFactors {
    /// Velocity/pressure mass on the channel: `mu2`.
    pub mass_ch: f64,
    /// d/dx-d/dx stiffness on the channel: `1 / mu2`.
    pub stiff_xx_ch: f64,
    /// d/dy-d/dy stiffness on the channel: `mu2`.
    pub stiff_yy_ch: f64,
    /// `q * d(v_y)/dy` divergence part on the channel: `mu2`
    /// (the d/dx part has weight one).
    pub div_y_ch: f64,
}

pub fn affine_geometry_factors(mu2: f64) -> Result<GeoFactors> {
    let map = stretch_map(mu2)?;
    let m = map.mu2;
    Ok(GeoFactors {
        mass_ch: m,
        stiff_xx_ch: 1.0 / m,
        stiff_yy_ch: m,
        div_y_ch: m,
    })
}

impl GeoFactors {
    /// Named view used by reports and logs.
    pub fn list(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("mass_channel", self.mass_ch),
            ("stiffness_xx_channel", self.stiff_xx_ch),
            ("stiffness_yy_channel", self.stiff_yy_ch),
            ("divergence_y_channel", self.div_y_ch),
        ]
    }
}

fn measure_h_max(mesh: &Mesh) -> f64 {
    let mut h: f64 = 0.0;
    for tri in &mesh.triangles {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            h = h.max(((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt());
        }
    }
    h
}

/// Build the structured template mesh with target width `h`.
///
/// Element counts are chosen by rounding so that every geometric feature
/// (channel height and length, branch width and length) is covered by at
/// least two elements; a width too coarse for that is rejected.
pub fn build_bifurcation_mesh(h: f64) -> Result<Mesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!(
            "mesh width must be positive and finite, got {h}"
        )));
    }
    let half_height = (BRANCH_WIDTH / h).round() as usize;
    if half_height < 2 {
        return Err(Error::MeshResolution(format!(
            "width {h} puts fewer than two elements across a branch of width {BRANCH_WIDTH}"
        )));
    }
    let ny = 2 * half_height; // channel height 2
    let nx = 2 * ((CHANNEL_LENGTH / 2.0 / h).round() as usize).max(1); // channel length 4, even
    let nb = half_height; // branch width 1
    let na = ((BRANCH_LENGTH / h).round() as usize).max(2); // branch length 3

    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut vertex_subdomain: Vec<Subdomain> = Vec::new();

    // Channel grid, column-major: id(i, j) = i * (ny + 1) + j.
    for i in 0..=nx {
        let x = CHANNEL_LENGTH * i as f64 / nx as f64;
        for j in 0..=ny {
            let y = CHANNEL_HEIGHT * j as f64 / ny as f64;
            vertices.push([x, y]);
            vertex_subdomain.push(Subdomain::Channel);
        }
    }
    let chan_id = |i: usize, j: usize| i * (ny + 1) + j;

    // Branch grids: column 0 is welded onto the channel outlet line x = 4.
    // Upper branch spans [1, 2] on that line, lower branch [0, 1].
    let base_upper = vertices.len();
    for i in 1..=na {
        let a = BRANCH_LENGTH * i as f64 / na as f64;
        for j in 0..=nb {
            let b = BRANCH_WIDTH * j as f64 / nb as f64;
            vertices.push([CHANNEL_LENGTH + a * COS45, BRANCH_WIDTH + a * COS45 + b]);
            vertex_subdomain.push(Subdomain::UpperBranch);
        }
    }
    let base_lower = vertices.len();
    for i in 1..=na {
        let a = BRANCH_LENGTH * i as f64 / na as f64;
        for j in 0..=nb {
            let b = BRANCH_WIDTH * j as f64 / nb as f64;
            vertices.push([CHANNEL_LENGTH + a * COS45, -a * COS45 + b]);
            vertex_subdomain.push(Subdomain::LowerBranch);
        }
    }
    let upper_id = |i: usize, j: usize| {
        if i == 0 {
            chan_id(nx, ny / 2 + j)
        } else {
            base_upper + (i - 1) * (nb + 1) + j
        }
    };
    let lower_id = |i: usize, j: usize| {
        if i == 0 {
            chan_id(nx, j)
        } else {
            base_lower + (i - 1) * (nb + 1) + j
        }
    };

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut subdomain: Vec<Subdomain> = Vec::new();

    for i in 0..nx {
        for j in 0..ny {
            let v00 = chan_id(i, j);
            let v10 = chan_id(i + 1, j);
            let v01 = chan_id(i, j + 1);
            let v11 = chan_id(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            subdomain.push(Subdomain::Channel);
            subdomain.push(Subdomain::Channel);
        }
    }
    // Branch cells are parallelograms; split along the shorter diagonal so
    // the 45-degree shear does not produce thin triangles.
    for i in 0..na {
        for j in 0..nb {
            let v00 = upper_id(i, j);
            let v10 = upper_id(i + 1, j);
            let v01 = upper_id(i, j + 1);
            let v11 = upper_id(i + 1, j + 1);
            triangles.push([v00, v10, v01]);
            triangles.push([v10, v11, v01]);
            subdomain.push(Subdomain::UpperBranch);
            subdomain.push(Subdomain::UpperBranch);
        }
    }
    for i in 0..na {
        for j in 0..nb {
            let v00 = lower_id(i, j);
            let v10 = lower_id(i + 1, j);
            let v01 = lower_id(i, j + 1);
            let v11 = lower_id(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            subdomain.push(Subdomain::LowerBranch);
            subdomain.push(Subdomain::LowerBranch);
        }
    }

    let mut boundary: Vec<BoundaryFacet> = Vec::new();
    // Inlet x = 0.
    for j in 0..ny {
        boundary.push(BoundaryFacet {
            vertices: [chan_id(0, j), chan_id(0, j + 1)],
            tag: BoundaryTag::Inlet,
        });
    }
    // Channel walls y = 0 and y = 2.
    for i in 0..nx {
        boundary.push(BoundaryFacet {
            vertices: [chan_id(i, 0), chan_id(i + 1, 0)],
            tag: BoundaryTag::Wall,
        });
        boundary.push(BoundaryFacet {
            vertices: [chan_id(i, ny), chan_id(i + 1, ny)],
            tag: BoundaryTag::Wall,
        });
    }
    // Branch side walls.
    for i in 0..na {
        boundary.push(BoundaryFacet {
            vertices: [upper_id(i, 0), upper_id(i + 1, 0)],
            tag: BoundaryTag::Wall,
        });
        boundary.push(BoundaryFacet {
            vertices: [upper_id(i, nb), upper_id(i + 1, nb)],
            tag: BoundaryTag::Wall,
        });
        boundary.push(BoundaryFacet {
            vertices: [lower_id(i, 0), lower_id(i + 1, 0)],
            tag: BoundaryTag::Wall,
        });
        boundary.push(BoundaryFacet {
            vertices: [lower_id(i, nb), lower_id(i + 1, nb)],
            tag: BoundaryTag::Wall,
        });
    }
    // Control segments: the vertical outlet ends of both branches.
    for j in 0..nb {
        boundary.push(BoundaryFacet {
            vertices: [upper_id(na, j), upper_id(na, j + 1)],
            tag: BoundaryTag::Control,
        });
        boundary.push(BoundaryFacet {
            vertices: [lower_id(na, j), lower_id(na, j + 1)],
            tag: BoundaryTag::Control,
        });
    }
    // Observation line: interior vertical facets at x = 2.
    let mut observation = Vec::new();
    for j in 0..ny {
        observation.push([chan_id(nx / 2, j), chan_id(nx / 2, j + 1)]);
    }

    let mut mesh = Mesh {
        vertices,
        triangles,
        subdomain,
        vertex_subdomain,
        boundary,
        observation,
        h_target: h,
        h_max: 0.0,
    };
    mesh.h_max = measure_h_max(&mesh);
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_template_counts() {
        let mesh = build_bifurcation_mesh(0.5).unwrap();
        // Channel 9 x 5 grid, two branches with 6 new columns of 3 vertices.
        assert_eq!(mesh.n_vertices(), 45 + 2 * 18);
        // Channel 8 x 4 x 2 triangles plus 2 x (6 x 2 x 2) branch triangles.
        assert_eq!(mesh.n_triangles(), 64 + 48);
        mesh.validate().unwrap();
    }

    #[test]
    fn template_area_and_boundary_lengths() {
        let mesh = build_bifurcation_mesh(0.25).unwrap();
        let area = mesh.total_area();
        let exact = CHANNEL_LENGTH * CHANNEL_HEIGHT + 2.0 * BRANCH_LENGTH * COS45 * BRANCH_WIDTH;
        assert!((area - exact).abs() < 1e-12, "{area} vs {exact}");

        let seg_len = |v: &[usize; 2]| {
            let a = mesh.vertices[v[0]];
            let b = mesh.vertices[v[1]];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let mut len_by_tag = std::collections::HashMap::new();
        for f in &mesh.boundary {
            *len_by_tag.entry(f.tag).or_insert(0.0) += seg_len(&f.vertices);
        }
        assert!((len_by_tag[&BoundaryTag::Inlet] - 2.0).abs() < 1e-12);
        assert!((len_by_tag[&BoundaryTag::Control] - 2.0).abs() < 1e-12);
        // Walls: channel top/bottom 4 + 4 and four branch sides of length 3.
        assert!((len_by_tag[&BoundaryTag::Wall] - 20.0).abs() < 1e-12);
        let obs_len: f64 = mesh.observation.iter().map(seg_len).sum();
        assert!((obs_len - 2.0).abs() < 1e-12);
        for f in &mesh.observation {
            assert!((mesh.vertices[f[0]][0] - OBSERVATION_X).abs() < 1e-12);
        }
    }

    #[test]
    fn too_coarse_width_is_rejected() {
        match build_bifurcation_mesh(0.8) {
            Err(Error::MeshResolution(_)) => {}
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_width_is_rejected() {
        assert!(build_bifurcation_mesh(0.0).is_err());
        assert!(build_bifurcation_mesh(-1.0).is_err());
        assert!(build_bifurcation_mesh(f64::NAN).is_err());
    }

    #[test]
    fn stretch_scales_channel_area_only() {
        let mesh = build_bifurcation_mesh(0.5).unwrap();
        let map = stretch_map(1.7).unwrap();
        let deformed = deform_mesh(&mesh, &map);
        deformed.validate().unwrap();
        let channel_area: f64 = (0..deformed.n_triangles())
            .filter(|&t| deformed.subdomain[t] == Subdomain::Channel)
            .map(|t| deformed.signed_area(t))
            .sum();
        assert!((channel_area - 1.7 * 8.0).abs() < 1e-12);
        let branch_area: f64 = (0..deformed.n_triangles())
            .filter(|&t| deformed.subdomain[t] != Subdomain::Channel)
            .map(|t| deformed.signed_area(t))
            .sum();
        assert!((branch_area - 3.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn junction_stays_attached_under_stretch() {
        let mesh = build_bifurcation_mesh(0.5).unwrap();
        let map = stretch_map(2.0).unwrap();
        // The weld line x = 4 maps consistently from both sides.
        for (v, &sub) in mesh.vertices.iter().zip(&mesh.vertex_subdomain) {
            if (v[0] - CHANNEL_LENGTH).abs() < 1e-12 && sub == Subdomain::Channel {
                let via_channel = map.apply(Subdomain::Channel, *v);
                let via_branch = map.apply(Subdomain::UpperBranch, *v);
                assert!((via_channel[0] - via_branch[0]).abs() < 1e-12);
                assert!((via_channel[1] - via_branch[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn geometry_factors_match_map_jacobian() {
        let f = affine_geometry_factors(1.5).unwrap();
        assert_eq!(f.mass_ch, 1.5);
        assert!((f.stiff_xx_ch - 1.0 / 1.5).abs() < 1e-15);
        assert_eq!(f.stiff_yy_ch, 1.5);
        assert_eq!(f.div_y_ch, 1.5);
        // Identity map: every factor is one.
        let id = affine_geometry_factors(1.0).unwrap();
        for (_, v) in id.list() {
            assert_eq!(v, 1.0);
        }
        assert!(affine_geometry_factors(0.0).is_err());
    }
}
