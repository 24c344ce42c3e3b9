//! Artifact persistence and export.
//!
//! # Binary container format (`PODC`, version 1)
//!
//! Snapshot sets, reduced bases, and reduced models are stored in one
//! deterministic binary container so that re-running an offline phase with
//! identical configuration and seeds reproduces the file byte for byte:
//!
//! ```text
//! magic   8 bytes   "PODCBIN1"
//! count   u32 LE    number of named sections
//! section (repeated, sorted by name):
//!   name_len u32 LE, name bytes (UTF-8)
//!   kind     u8      0 = UTF-8 text, 1 = f64 matrix
//!   text:    len u64 LE, bytes
//!   matrix:  rows u64 LE, cols u64 LE, rows*cols f64 LE (column-major)
//! ```
//!
//! Every artifact carries a `meta` text section holding a JSON record with
//! the identifying dimensions (problem id, time nodes, training parameters,
//! inner-product convention) next to the numeric payload sections.  No
//! timestamps or environment data enter the container.
//!
//! # Other writers
//!
//! * legacy ASCII VTK unstructured grids for meshes (triangles plus tagged
//!   boundary/observation line cells) and for solution fields (point data
//!   on the vertices, one file per requested time node),
//! * a plain-text mesh dump for fixtures,
//! * Matrix Market dumps of sparse matrices for debugging and oracles,
//! * eigenvalue-decay CSV tables,
//! * JSON run records for individual solves.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::DofLayout;
use crate::geometry::{BoundaryTag, Mesh};
use crate::ocp::{ProblemConfig, ProblemId};
use crate::pod::{PodSpectrum, ReducedBasis, SnapshotSet};
use crate::rom::ReducedModel;
use crate::sparse::CsrMatrix;

const MAGIC: &[u8; 8] = b"PODCBIN1";

/// One named payload of a [`Container`].
#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Text(String),
    Matrix(DMatrix<f64>),
}

/// Deterministic named-section archive (see the module docs for the wire
/// format).  Sections are kept sorted by name.
#[derive(Debug, Clone, Default)]
pub struct Container {
    sections: BTreeMap<String, Section>,
    /// Where the container was read from (empty for in-memory containers);
    /// only used to label section-access errors.
    origin: String,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn put_text(&mut self, name: &str, text: impl Into<String>) {
        self.sections.insert(name.to_string(), Section::Text(text.into()));
    }

    pub fn put_matrix(&mut self, name: &str, mat: &DMatrix<f64>) {
        self.sections.insert(name.to_string(), Section::Matrix(mat.clone()));
    }

    pub fn put_vector(&mut self, name: &str, vec: &DVector<f64>) {
        let mat = DMatrix::from_column_slice(vec.len(), 1, vec.as_slice());
        self.sections.insert(name.to_string(), Section::Matrix(mat));
    }

    pub fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string(value)
            .map_err(|e| Error::invalid(format!("serializing section {name}: {e}")))?;
        self.put_text(name, text);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(|s| s.as_str())
    }

    fn malformed(&self, reason: String) -> Error {
        Error::MalformedArtifact {
            path: self.origin.clone(),
            reason,
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.sections.get(name) {
            Some(Section::Text(t)) => Ok(t),
            Some(_) => Err(self.malformed(format!("section `{name}` is not text"))),
            None => Err(self.malformed(format!("missing section `{name}`"))),
        }
    }

    pub fn matrix(&self, name: &str) -> Result<&DMatrix<f64>> {
        match self.sections.get(name) {
            Some(Section::Matrix(m)) => Ok(m),
            Some(_) => Err(self.malformed(format!("section `{name}` is not a matrix"))),
            None => Err(self.malformed(format!("missing section `{name}`"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<DVector<f64>> {
        let m = self.matrix(name)?;
        if m.ncols() != 1 {
            return Err(self.malformed(format!(
                "section `{name}` has {} columns, expected 1",
                m.ncols()
            )));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    pub fn json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        serde_json::from_str(self.text(name)?)
            .map_err(|e| self.malformed(format!("section `{name}`: {e}")))
    }

    /// Serialize to the documented byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, section) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match section {
                Section::Text(t) => {
                    out.push(0);
                    out.extend_from_slice(&(t.len() as u64).to_le_bytes());
                    out.extend_from_slice(t.as_bytes());
                }
                Section::Matrix(m) => {
                    out.push(1);
                    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
                    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
                    for v in m.as_slice() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    /// Parse the documented byte layout.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = ByteReader {
            bytes,
            pos: 0,
            origin,
        };
        if r.take(8)? != MAGIC {
            return Err(r.bad("bad magic, not a PODC container"));
        }
        let count = r.u32()? as usize;
        let mut sections = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = match std::str::from_utf8(r.take(name_len)?) {
                Ok(n) => n.to_string(),
                Err(_) => return Err(r.bad("section name is not UTF-8")),
            };
            let kind = r.take(1)?[0];
            let section = match kind {
                0 => {
                    let len = r.u64()? as usize;
                    match std::str::from_utf8(r.take(len)?) {
                        Ok(t) => Section::Text(t.to_string()),
                        Err(_) => {
                            return Err(r.bad(format!("text section `{name}` is not UTF-8")))
                        }
                    }
                }
                1 => {
                    let rows = r.u64()? as usize;
                    let cols = r.u64()? as usize;
                    let n = match rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) {
                        Some(n) => n,
                        None => return Err(r.bad(format!("section `{name}` dimensions overflow"))),
                    };
                    let data: Vec<f64> = r
                        .take(n)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Section::Matrix(DMatrix::from_column_slice(rows, cols, &data))
                }
                k => return Err(r.bad(format!("unknown section kind {k}"))),
            };
            sections.insert(name, section);
        }
        if r.pos != bytes.len() {
            return Err(r.bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Container {
            sections,
            origin: origin.to_string(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Container::from_bytes(&bytes, &path.display().to_string())
    }
}

/// Bounds-checked cursor over a byte slice.
struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> ByteReader<'a> {
    fn bad(&self, reason: impl Into<String>) -> Error {
        Error::MalformedArtifact {
            path: self.origin.to_string(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()) {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.bad(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

// ---------------------------------------------------------------------------
// Snapshot set persistence.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SnapshotMeta {
    kind: String,
    problem: ProblemId,
    nt: usize,
    dt: f64,
    /// Inner products the snapshots are meant to be compressed in.
    inner_products: Vec<String>,
    mu: Vec<Vec<f64>>,
    costs: Vec<f64>,
    failures: Vec<(Vec<f64>, String)>,
}

/// Inner-product convention shared by every artifact of this crate.
fn inner_product_ids() -> Vec<String> {
    ["velocity:h1", "pressure:l2", "control:h1_trace"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn save_snapshots(path: impl AsRef<Path>, snaps: &SnapshotSet) -> Result<()> {
    let mut c = Container::new();
    c.put_json(
        "meta",
        &SnapshotMeta {
            kind: "snapshot_set".into(),
            problem: snaps.problem,
            nt: snaps.nt,
            dt: snaps.dt,
            inner_products: inner_product_ids(),
            mu: snaps.mu.clone(),
            costs: snaps.costs.clone(),
            failures: snaps.failures.clone(),
        },
    )?;
    c.put_matrix("v", &snaps.v);
    c.put_matrix("p", &snaps.p);
    c.put_matrix("u", &snaps.u);
    c.put_matrix("w", &snaps.w);
    c.put_matrix("q", &snaps.q);
    c.write(path)
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotSet> {
    let c = Container::read(&path)?;
    let meta: SnapshotMeta = c.json("meta")?;
    if meta.kind != "snapshot_set" {
        return Err(Error::MalformedArtifact {
            path: path.as_ref().display().to_string(),
            reason: format!("artifact is a `{}`, expected a snapshot set", meta.kind),
        });
    }
    Ok(SnapshotSet {
        problem: meta.problem,
        nt: meta.nt,
        dt: meta.dt,
        mu: meta.mu,
        v: c.matrix("v")?.clone(),
        p: c.matrix("p")?.clone(),
        u: c.matrix("u")?.clone(),
        w: c.matrix("w")?.clone(),
        q: c.matrix("q")?.clone(),
        costs: meta.costs,
        failures: meta.failures,
    })
}

// ---------------------------------------------------------------------------
// Reduced basis persistence.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    kind: String,
    problem: ProblemId,
    nt: usize,
    dt: f64,
    n: usize,
    dropped: usize,
    inner_products: Vec<String>,
    spectra: Vec<PodSpectrum>,
}

pub fn save_basis(path: impl AsRef<Path>, basis: &ReducedBasis) -> Result<()> {
    let mut c = Container::new();
    c.put_json(
        "meta",
        &BasisMeta {
            kind: "reduced_basis".into(),
            problem: basis.problem,
            nt: basis.nt,
            dt: basis.dt,
            n: basis.n,
            dropped: basis.dropped,
            inner_products: inner_product_ids(),
            spectra: basis.spectra.clone(),
        },
    )?;
    c.put_matrix("v_modes", &basis.v_modes);
    c.put_matrix("w_modes", &basis.w_modes);
    c.put_matrix("sup_v", &basis.sup_v);
    c.put_matrix("sup_w", &basis.sup_w);
    c.put_matrix("p_modes", &basis.p_modes);
    c.put_matrix("q_modes", &basis.q_modes);
    c.put_matrix("u_modes", &basis.u_modes);
    c.put_matrix("velocity", &basis.velocity);
    c.put_matrix("pressure", &basis.pressure);
    c.put_matrix("control", &basis.control);
    c.write(path)
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<ReducedBasis> {
    let c = Container::read(&path)?;
    let meta: BasisMeta = c.json("meta")?;
    if meta.kind != "reduced_basis" {
        return Err(Error::MalformedArtifact {
            path: path.as_ref().display().to_string(),
            reason: format!("artifact is a `{}`, expected a reduced basis", meta.kind),
        });
    }
    Ok(ReducedBasis {
        problem: meta.problem,
        nt: meta.nt,
        dt: meta.dt,
        n: meta.n,
        v_modes: c.matrix("v_modes")?.clone(),
        w_modes: c.matrix("w_modes")?.clone(),
        sup_v: c.matrix("sup_v")?.clone(),
        sup_w: c.matrix("sup_w")?.clone(),
        p_modes: c.matrix("p_modes")?.clone(),
        q_modes: c.matrix("q_modes")?.clone(),
        u_modes: c.matrix("u_modes")?.clone(),
        velocity: c.matrix("velocity")?.clone(),
        pressure: c.matrix("pressure")?.clone(),
        control: c.matrix("control")?.clone(),
        spectra: meta.spectra,
        dropped: meta.dropped,
    })
}

// ---------------------------------------------------------------------------
// Reduced model persistence.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: String,
    problem: ProblemId,
    cfg: ProblemConfig,
    n: usize,
    m_v: usize,
    m_p: usize,
    m_u: usize,
    n_mats: usize,
    n_rhs: usize,
    n_conv: usize,
    c_ll: f64,
    c_lt: f64,
    c_tt: f64,
}

pub fn save_model(path: impl AsRef<Path>, model: &ReducedModel) -> Result<()> {
    let mut c = Container::new();
    c.put_json(
        "meta",
        &ModelMeta {
            kind: "reduced_model".into(),
            problem: model.problem,
            cfg: model.cfg.clone(),
            n: model.n,
            m_v: model.m_v,
            m_p: model.m_p,
            m_u: model.m_u,
            n_mats: model.mats.len(),
            n_rhs: model.rhs.len(),
            n_conv: model.conv.len(),
            c_ll: model.c_ll,
            c_lt: model.c_lt,
            c_tt: model.c_tt,
        },
    )?;
    for (g, m) in model.mats.iter().enumerate() {
        c.put_matrix(&format!("mat_{g:02}"), m);
    }
    for (g, v) in model.rhs.iter().enumerate() {
        c.put_vector(&format!("rhs_{g:02}"), v);
    }
    for (i, m) in model.conv.iter().enumerate() {
        c.put_matrix(&format!("conv_{i:04}"), m);
    }
    c.put_matrix("conv_l1", &model.conv_l1);
    c.put_matrix("conv_l2", &model.conv_l2);
    c.put_vector("conv_ll", &model.conv_ll);
    c.put_matrix("q_obs", &model.q_obs);
    c.put_vector("l_obs", &model.l_obs);
    c.put_vector("l_tgt", &model.l_tgt);
    c.put_matrix("q_u", &model.q_u);
    c.write(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ReducedModel> {
    let c = Container::read(&path)?;
    let meta: ModelMeta = c.json("meta")?;
    if meta.kind != "reduced_model" {
        return Err(Error::MalformedArtifact {
            path: path.as_ref().display().to_string(),
            reason: format!("artifact is a `{}`, expected a reduced model", meta.kind),
        });
    }
    let mut mats = Vec::with_capacity(meta.n_mats);
    for g in 0..meta.n_mats {
        mats.push(c.matrix(&format!("mat_{g:02}"))?.clone());
    }
    let mut rhs = Vec::with_capacity(meta.n_rhs);
    for g in 0..meta.n_rhs {
        rhs.push(c.vector(&format!("rhs_{g:02}"))?);
    }
    let mut conv = Vec::with_capacity(meta.n_conv);
    for i in 0..meta.n_conv {
        conv.push(c.matrix(&format!("conv_{i:04}"))?.clone());
    }
    Ok(ReducedModel {
        problem: meta.problem,
        cfg: meta.cfg,
        n: meta.n,
        m_v: meta.m_v,
        m_p: meta.m_p,
        m_u: meta.m_u,
        mats,
        rhs,
        conv,
        conv_l1: c.matrix("conv_l1")?.clone(),
        conv_l2: c.matrix("conv_l2")?.clone(),
        conv_ll: c.vector("conv_ll")?,
        q_obs: c.matrix("q_obs")?.clone(),
        l_obs: c.vector("l_obs")?,
        l_tgt: c.vector("l_tgt")?,
        c_ll: meta.c_ll,
        c_lt: meta.c_lt,
        c_tt: meta.c_tt,
        q_u: c.matrix("q_u")?.clone(),
    })
}

// ---------------------------------------------------------------------------
// VTK export (legacy ASCII unstructured grid).
// ---------------------------------------------------------------------------

fn tag_code(tag: Option<BoundaryTag>) -> i64 {
    match tag {
        Some(BoundaryTag::Inlet) => 10,
        Some(BoundaryTag::Wall) => 11,
        Some(BoundaryTag::Control) => 12,
        None => 13, // observation line
    }
}

/// Render a mesh as a legacy VTK unstructured grid: triangle cells carrying
/// their subdomain label, plus boundary and observation facets as line cells
/// carrying a tag code (10 inlet, 11 wall, 12 control, 13 observation).
pub fn mesh_vtk_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("bifurcation mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    s.push_str(&format!("POINTS {} double\n", mesh.n_vertices()));
    for v in &mesh.vertices {
        s.push_str(&format!("{:.17e} {:.17e} 0.0\n", v[0], v[1]));
    }
    let n_tri = mesh.n_triangles();
    let n_line = mesh.boundary.len() + mesh.observation.len();
    let n_cells = n_tri + n_line;
    s.push_str(&format!("CELLS {} {}\n", n_cells, 4 * n_tri + 3 * n_line));
    for t in &mesh.triangles {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    for f in &mesh.boundary {
        s.push_str(&format!("2 {} {}\n", f.vertices[0], f.vertices[1]));
    }
    for f in &mesh.observation {
        s.push_str(&format!("2 {} {}\n", f[0], f[1]));
    }
    s.push_str(&format!("CELL_TYPES {n_cells}\n"));
    for _ in 0..n_tri {
        s.push_str("5\n");
    }
    for _ in 0..n_line {
        s.push_str("3\n");
    }
    s.push_str(&format!("CELL_DATA {n_cells}\nSCALARS tag int 1\nLOOKUP_TABLE default\n"));
    for sub in &mesh.subdomain {
        s.push_str(&format!("{}\n", sub.index()));
    }
    for f in &mesh.boundary {
        s.push_str(&format!("{}\n", tag_code(Some(f.tag))));
    }
    for _ in &mesh.observation {
        s.push_str(&format!("{}\n", tag_code(None)));
    }
    s
}

pub fn write_mesh_vtk(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    write_text(path, &mesh_vtk_string(mesh))
}

/// Plain-text mesh dump (vertices, cells with subdomain labels, tagged
/// facets) for test fixtures and quick inspection.
pub fn mesh_text_dump(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "vertices {}\ntriangles {}\nboundary {}\nobservation {}\n",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.boundary.len(),
        mesh.observation.len()
    ));
    for v in &mesh.vertices {
        s.push_str(&format!("v {:.17e} {:.17e}\n", v[0], v[1]));
    }
    for (t, tri) in mesh.triangles.iter().enumerate() {
        s.push_str(&format!(
            "t {} {} {} {}\n",
            tri[0],
            tri[1],
            tri[2],
            mesh.subdomain[t].index()
        ));
    }
    for f in &mesh.boundary {
        s.push_str(&format!(
            "b {} {} {}\n",
            f.vertices[0],
            f.vertices[1],
            tag_code(Some(f.tag))
        ));
    }
    for f in &mesh.observation {
        s.push_str(&format!("o {} {}\n", f[0], f[1]));
    }
    s
}

pub fn write_mesh_text(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    write_text(path, &mesh_text_dump(mesh))
}

/// Render one spatial slice of a solution as VTK point data on the mesh
/// vertices: each velocity-sized field becomes a 3-component vector (third
/// component zero), each pressure-sized field a scalar.  Velocity fields are
/// sampled at the vertex nodes of the quadratic space.
pub fn fields_vtk_string(
    mesh: &Mesh,
    layout: &DofLayout,
    vectors: &[(&str, &[f64])],
    scalars: &[(&str, &[f64])],
) -> Result<String> {
    let nv = mesh.n_vertices();
    for (name, f) in vectors {
        if f.len() != layout.n_velocity {
            return Err(Error::invalid(format!(
                "vector field `{name}` has {} entries, expected {}",
                f.len(),
                layout.n_velocity
            )));
        }
    }
    for (name, f) in scalars {
        if f.len() != layout.n_pressure {
            return Err(Error::invalid(format!(
                "scalar field `{name}` has {} entries, expected {}",
                f.len(),
                layout.n_pressure
            )));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("solution fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    s.push_str(&format!("POINTS {nv} double\n"));
    for v in &mesh.vertices {
        s.push_str(&format!("{:.17e} {:.17e} 0.0\n", v[0], v[1]));
    }
    let n_tri = mesh.n_triangles();
    s.push_str(&format!("CELLS {} {}\n", n_tri, 4 * n_tri));
    for t in &mesh.triangles {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    s.push_str(&format!("CELL_TYPES {n_tri}\n"));
    for _ in 0..n_tri {
        s.push_str("5\n");
    }
    s.push_str(&format!("POINT_DATA {nv}\n"));
    for (name, f) in vectors {
        s.push_str(&format!("VECTORS {name} double\n"));
        for i in 0..nv {
            s.push_str(&format!("{:.17e} {:.17e} 0.0\n", f[2 * i], f[2 * i + 1]));
        }
    }
    for (name, f) in scalars {
        s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
        for i in 0..nv {
            s.push_str(&format!("{:.17e}\n", f[i]));
        }
    }
    Ok(s)
}

pub fn write_fields_vtk(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    layout: &DofLayout,
    vectors: &[(&str, &[f64])],
    scalars: &[(&str, &[f64])],
) -> Result<()> {
    write_text(path, &fields_vtk_string(mesh, layout, vectors, scalars)?)
}

// ---------------------------------------------------------------------------
// Matrix Market dump.
// ---------------------------------------------------------------------------

/// Dump a sparse matrix in Matrix Market coordinate format (general,
/// one-based indices) for external inspection.
pub fn matrix_market_string(mat: &CsrMatrix) -> String {
    let entries: Vec<(usize, usize, f64)> = mat.iter().collect();
    let mut s = String::new();
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    s.push_str(&format!("{} {} {}\n", mat.nrows(), mat.ncols(), entries.len()));
    for (r, c, v) in entries {
        s.push_str(&format!("{} {} {:.17e}\n", r + 1, c + 1, v));
    }
    s
}

pub fn write_matrix_market(path: impl AsRef<Path>, mat: &CsrMatrix) -> Result<()> {
    write_text(path, &matrix_market_string(mat))
}

// ---------------------------------------------------------------------------
// CSV and JSON reports.
// ---------------------------------------------------------------------------

/// Eigenvalue-decay table: one row per retained-or-not mode and variable,
/// with the relative cumulative energy.
pub fn eigen_decay_csv(labels: &[&str], spectra: &[PodSpectrum]) -> String {
    let mut s = String::from("variable,n,eigenvalue,cumulative_energy\n");
    for (label, spectrum) in labels.iter().zip(spectra) {
        for (i, lam) in spectrum.eigenvalues.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{:.17e},{:.17e}\n",
                label,
                i + 1,
                lam,
                spectrum.energy_fraction(i + 1)
            ));
        }
    }
    s
}

pub fn write_eigen_decay_csv(
    path: impl AsRef<Path>,
    labels: &[&str],
    spectra: &[PodSpectrum],
) -> Result<()> {
    write_text(path, &eigen_decay_csv(labels, spectra))
}

/// Record of one solve (truth or reduced), written as JSON next to exported
/// fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: ProblemId,
    pub reduced: bool,
    pub mu: Vec<f64>,
    pub cost: f64,
    pub residual: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
}

pub fn write_run_record(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let text = serde_json::to_string_pretty(record)
        .map_err(|e| Error::invalid(format!("serializing run record: {e}")))?;
    write_text(path, &text)
}

/// Write a UTF-8 file, mapping failures to [`Error::Io`].
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_bifurcation_mesh;
    use crate::ocp::Discretization;

    fn sample_container() -> Container {
        let mut c = Container::new();
        c.put_text("meta", "{\"kind\":\"probe\"}");
        c.put_matrix("m", &DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        c.put_vector("v", &DVector::from_column_slice(&[-1.0, 0.5]));
        c
    }

    #[test]
    fn container_round_trips_and_is_deterministic() {
        let c = sample_container();
        let bytes = c.to_bytes();
        assert_eq!(bytes, c.to_bytes(), "serialization must be deterministic");
        let back = Container::from_bytes(&bytes, "test").unwrap();
        assert_eq!(back.text("meta").unwrap(), "{\"kind\":\"probe\"}");
        assert_eq!(back.matrix("m").unwrap(), c.matrix("m").unwrap());
        assert_eq!(back.vector("v").unwrap(), DVector::from_column_slice(&[-1.0, 0.5]));
        assert_eq!(bytes, back.to_bytes(), "re-serialization must be identical");
    }

    #[test]
    fn container_rejects_corruption() {
        let c = sample_container();
        let mut bytes = c.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Container::from_bytes(&bytes, "test"),
            Err(Error::MalformedArtifact { .. })
        ));
        let bytes = c.to_bytes();
        assert!(matches!(
            Container::from_bytes(&bytes[..bytes.len() - 1], "test"),
            Err(Error::MalformedArtifact { .. })
        ));
        let mut extended = c.to_bytes();
        extended.push(0);
        assert!(matches!(
            Container::from_bytes(&extended, "test"),
            Err(Error::MalformedArtifact { .. })
        ));
    }

    #[test]
    fn mesh_vtk_has_consistent_counts() {
        let mesh = build_bifurcation_mesh(0.5).unwrap();
        let vtk = mesh_vtk_string(&mesh);
        assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(vtk.contains(&format!("POINTS {} double", mesh.n_vertices())));
        let n_cells = mesh.n_triangles() + mesh.boundary.len() + mesh.observation.len();
        assert!(vtk.contains(&format!("CELL_TYPES {n_cells}")));
        assert!(vtk.contains(&format!("CELL_DATA {n_cells}")));
        // One tag per cell.
        let tag_lines = vtk.split("LOOKUP_TABLE default\n").nth(1).unwrap();
        assert_eq!(tag_lines.trim_end().lines().count(), n_cells);
    }

    #[test]
    fn fields_vtk_checks_dimensions() {
        let mesh = build_bifurcation_mesh(0.5).unwrap();
        let disc = Discretization::new(mesh, ProblemId::NsSteady).unwrap();
        let vel = vec![0.0; disc.layout.n_velocity];
        let pres = vec![0.0; disc.layout.n_pressure];
        let ok = fields_vtk_string(&disc.mesh, &disc.layout, &[("velocity", &vel)], &[("pressure", &pres)]);
        assert!(ok.is_ok());
        let bad = fields_vtk_string(&disc.mesh, &disc.layout, &[("velocity", &pres)], &[]);
        assert!(bad.is_err());
    }

    #[test]
    fn matrix_market_counts_entries() {
        let m = CsrMatrix::identity(3);
        let s = matrix_market_string(&m);
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines.next().unwrap(), "3 3 3");
        assert_eq!(lines.count(), 3);
    }
}
