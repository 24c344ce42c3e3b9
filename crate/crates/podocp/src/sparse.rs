//! Sparse matrix storage and direct solvers.
//!
//! Assembly produces [`CsrMatrix`] values (compressed sparse row, duplicate
//! triplets summed, explicit zeros kept so that sparsity patterns are stable
//! across re-assembly).  Large saddle-point systems are factorized through
//! faer's sparse LU with partial pivoting; symmetric positive definite Gram
//! matrices go through sparse Cholesky.  [`KktAssembler`] supports the
//! many-solves-one-pattern workload of parametrized runs: the union sparsity
//! pattern and the symbolic factorization are computed once, and every
//! subsequent assembly only scatters values into preallocated slots.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::instrument::record_full_order_op;

/// Sparse matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from triplets; duplicate entries are summed, explicit zeros kept.
    pub fn from_triplets(nrows: usize, ncols: usize, trips: &[(u32, u32, f64)]) -> Result<Self> {
        for &(r, c, _) in trips {
            if r as usize >= nrows || c as usize >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({r}, {c}) outside {nrows} x {ncols} matrix"
                )));
            }
        }
        // Counting sort by row, then sort each row segment by column and
        // compact duplicates.  Deterministic for any triplet order.
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in trips {
            counts[r as usize + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut order: Vec<(u32, f64)> = vec![(0, 0.0); trips.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in trips {
            let slot = cursor[r as usize];
            order[slot] = (c, v);
            cursor[r as usize] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut vals = Vec::with_capacity(trips.len());
        row_ptr.push(0usize);
        for r in 0..nrows {
            let seg = &mut order[counts[r]..counts[r + 1]];
            seg.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < seg.len() {
                let c = seg[i].0;
                let mut v = 0.0;
                while i < seg.len() && seg[i].0 == c {
                    v += seg[i].1;
                    i += 1;
                }
                col_idx.push(c);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Iterate stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k] as usize, self.vals[k]))
        })
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        record_full_order_op();
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k] as usize];
            }
            y[r] = acc;
        }
    }

    /// `y += alpha * A x`.
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        record_full_order_op();
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k] as usize];
            }
            y[r] += alpha * acc;
        }
    }

    /// `y += alpha * A^T x`.
    pub fn tr_matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        record_full_order_op();
        for r in 0..self.nrows {
            let xr = alpha * x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k] as usize] += self.vals[k] * xr;
            }
        }
    }

    /// Dense product `A B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols);
        record_full_order_op();
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            for r in 0..self.nrows {
                let mut acc = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[k] * col[self.col_idx[k] as usize];
                }
                out[(r, j)] = acc;
            }
        }
        out
    }

    /// Bilinear value `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let mut row_acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row_acc += self.vals[k] * y[self.col_idx[k] as usize];
            }
            acc += x[r] * row_acc;
        }
        acc
    }

    /// Transposed copy.
    pub fn transpose(&self) -> CsrMatrix {
        let trips: Vec<(u32, u32, f64)> = self
            .iter()
            .map(|(r, c, v)| (c as u32, r as u32, v))
            .collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trips).expect("transpose is in range")
    }

    /// Weighted sum of matrices with identical shape.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<CsrMatrix> {
        let (nrows, ncols) = match terms.first() {
            Some((_, m)) => (m.nrows, m.ncols),
            None => return Err(Error::invalid("linear combination of no matrices")),
        };
        let mut trips = Vec::new();
        for (alpha, m) in terms {
            if m.nrows != nrows || m.ncols != ncols {
                return Err(Error::invalid("matrix shape mismatch in linear combination"));
            }
            trips.extend(m.iter().map(|(r, c, v)| (r as u32, c as u32, alpha * v)));
        }
        CsrMatrix::from_triplets(nrows, ncols, &trips)
    }

    /// Copy with the masked rows and columns zeroed out (pattern preserved).
    pub fn zero_rows_cols(&self, row_mask: Option<&[bool]>, col_mask: Option<&[bool]>) -> CsrMatrix {
        let mut out = self.clone();
        if let Some(mask) = row_mask {
            assert_eq!(mask.len(), self.nrows);
            for r in 0..self.nrows {
                if mask[r] {
                    for k in out.row_ptr[r]..out.row_ptr[r + 1] {
                        out.vals[k] = 0.0;
                    }
                }
            }
        }
        if let Some(mask) = col_mask {
            assert_eq!(mask.len(), self.ncols);
            for k in 0..out.vals.len() {
                if mask[out.col_idx[k] as usize] {
                    out.vals[k] = 0.0;
                }
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `A - A^T` (square matrices).
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let at = self.transpose();
        let diff = CsrMatrix::linear_combination(&[(1.0, self), (-1.0, &at)])
            .expect("shapes match by construction");
        diff.frobenius()
    }

    /// Convert to faer column-major storage.
    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let t = self.transpose();
        // CSR arrays of A^T are exactly the CSC arrays of A.
        let col_ptr: Vec<usize> = t.row_ptr.clone();
        let row_idx: Vec<usize> = t.col_idx.iter().map(|&c| c as usize).collect();
        let sym = SymbolicSparseColMat::new_checked(self.nrows, self.ncols, col_ptr, None, row_idx);
        SparseColMat::new(sym, t.vals)
    }
}

/// Triplet collector used by assembly loops.
#[derive(Debug, Default)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    trips: Vec<(u32, u32, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooBuilder {
            nrows,
            ncols,
            trips: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.trips.push((r as u32, c as u32, v));
    }

    pub fn build(self) -> Result<CsrMatrix> {
        record_full_order_op();
        CsrMatrix::from_triplets(self.nrows, self.ncols, &self.trips)
    }
}

fn vec_to_faer(b: &[f64]) -> Mat<f64> {
    Mat::from_fn(b.len(), 1, |i, _| b[i])
}

/// Sparse LU factorization (partial pivoting) of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("LU factorization requires a square matrix"));
        }
        record_full_order_op();
        let fa = a.to_faer();
        let sym = SymbolicLu::try_new(fa.symbolic()).map_err(|_| Error::SingularSystem {
            context: "sparse LU symbolic analysis".into(),
        })?;
        let lu = Lu::try_new_with_symbolic(sym, fa.rb()).map_err(|_| Error::SingularSystem {
            context: "sparse LU numeric factorization".into(),
        })?;
        Ok(SparseLu { n: a.nrows(), lu })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        record_full_order_op();
        let mut fb = vec_to_faer(b);
        self.lu.solve_in_place(fb.rb_mut());
        for i in 0..self.n {
            b[i] = fb[(i, 0)];
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        self.solve_in_place(out.as_mut_slice());
        out
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SparseLlt {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SparseLlt {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("Cholesky requires a square matrix"));
        }
        record_full_order_op();
        let fa = a.to_faer();
        let sym = SymbolicLlt::try_new(fa.symbolic(), faer::Side::Lower).map_err(|_| {
            Error::NotPositiveDefinite {
                context: "sparse Cholesky symbolic analysis".into(),
            }
        })?;
        let llt = Llt::try_new_with_symbolic(sym, fa.rb(), faer::Side::Lower).map_err(|_| {
            Error::NotPositiveDefinite {
                context: "sparse Cholesky factorization".into(),
            }
        })?;
        Ok(SparseLlt { n: a.nrows(), llt })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        record_full_order_op();
        let mut fb = vec_to_faer(b);
        self.llt.solve_in_place(fb.rb_mut());
        for i in 0..self.n {
            b[i] = fb[(i, 0)];
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        self.solve_in_place(out.as_mut_slice());
        out
    }

    /// Solve for every column of a dense right-hand side.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n);
        record_full_order_op();
        let mut fb = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)]);
        self.llt.solve_in_place(fb.rb_mut());
        DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| fb[(i, j)])
    }
}

/// One block of a repeated sparse assembly: a spatial matrix placed at an
/// offset inside a larger system, optionally transposed, with a scalar
/// multiplier chosen per assembly through its coefficient group.
#[derive(Debug, Clone)]
pub struct Placement {
    /// Index into the spatial-matrix slice handed to [`KktAssembler`].
    pub spatial: usize,
    pub row_off: usize,
    pub col_off: usize,
    pub transpose: bool,
    /// Coefficient group; the multiplier for the group is supplied per call.
    pub group: usize,
    /// Static multiplier folded into every assembly (signs, time-step powers).
    pub scale: f64,
}

/// Repeated assembler for one fixed sparsity pattern.
///
/// Built once from the placement list; afterwards [`KktAssembler::assemble`]
/// only scatters values and [`KktAssembler::factor`] reuses the cached
/// symbolic LU.  The sparsity pattern of every spatial matrix must stay
/// identical across calls (guaranteed by [`CsrMatrix::from_triplets`] keeping
/// explicit zeros for fixed assembly loops).
pub struct KktAssembler {
    dim: usize,
    n_groups: usize,
    placements: Vec<Placement>,
    /// Flat slot array; placement `p` owns `slots[offsets[p]..offsets[p+1]]`,
    /// one slot per stored entry of its spatial matrix in CSR order.
    slots: Vec<u32>,
    offsets: Vec<usize>,
    /// Slots of the unit diagonal entries (constrained rows).
    diag_slots: Vec<u32>,
    spatial_nnz: Vec<usize>,
    symbolic: SymbolicSparseColMat<usize>,
    sym_lu: SymbolicLu<usize>,
    vals: Vec<f64>,
}

impl KktAssembler {
    /// Analyze the union pattern of all placements plus unit diagonal entries.
    pub fn new(
        dim: usize,
        spatial: &[&CsrMatrix],
        placements: Vec<Placement>,
        unit_diag: &[usize],
        n_groups: usize,
    ) -> Result<Self> {
        let mut total = unit_diag.len();
        for pl in &placements {
            let m = spatial
                .get(pl.spatial)
                .ok_or_else(|| Error::invalid("placement references missing spatial matrix"))?;
            let (nr, nc) = if pl.transpose {
                (m.ncols(), m.nrows())
            } else {
                (m.nrows(), m.ncols())
            };
            if pl.row_off + nr > dim || pl.col_off + nc > dim {
                return Err(Error::invalid("placement exceeds system dimension"));
            }
            if pl.group >= n_groups {
                return Err(Error::invalid("placement group out of range"));
            }
            total += m.nnz();
        }
        // Tag every placed entry, sort all (col-major key, tag) pairs once,
        // then assign value slots in pattern order.
        let mut entries: Vec<(u64, u32)> = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(placements.len() + 1);
        let dim64 = dim as u64;
        let mut tag: u32 = 0;
        for pl in &placements {
            offsets.push(tag as usize);
            let m = spatial[pl.spatial];
            for (r, c, _) in m.iter() {
                let (gr, gc) = if pl.transpose {
                    (pl.row_off + c, pl.col_off + r)
                } else {
                    (pl.row_off + r, pl.col_off + c)
                };
                entries.push(((gc as u64) * dim64 + gr as u64, tag));
                tag += 1;
            }
        }
        offsets.push(tag as usize);
        for &d in unit_diag {
            if d >= dim {
                return Err(Error::invalid("unit diagonal entry exceeds dimension"));
            }
            entries.push(((d as u64) * dim64 + d as u64, tag));
            tag += 1;
        }
        entries.sort_unstable_by_key(|&(k, _)| k);

        let mut slots_flat = vec![0u32; entries.len()];
        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx: Vec<usize> = Vec::new();
        let mut prev_key = u64::MAX;
        for &(key, t) in &entries {
            if key != prev_key {
                let col = (key / dim64) as usize;
                let row = (key % dim64) as usize;
                col_ptr[col + 1] += 1;
                row_idx.push(row);
                prev_key = key;
            }
            slots_flat[t as usize] = (row_idx.len() - 1) as u32;
        }
        for c in 0..dim {
            col_ptr[c + 1] += col_ptr[c];
        }
        let nnz = row_idx.len();
        let symbolic = SymbolicSparseColMat::new_checked(dim, dim, col_ptr, None, row_idx);
        let sym_lu = SymbolicLu::try_new(symbolic.as_ref()).map_err(|_| Error::SingularSystem {
            context: "system symbolic analysis".into(),
        })?;

        let n_pl = offsets[placements.len()];
        let diag_slots = slots_flat[n_pl..].to_vec();
        slots_flat.truncate(n_pl);
        Ok(KktAssembler {
            dim,
            n_groups,
            spatial_nnz: spatial.iter().map(|m| m.nnz()).collect(),
            placements,
            slots: slots_flat,
            offsets,
            diag_slots,
            symbolic,
            sym_lu,
            vals: vec![0.0; nnz],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Scatter values for the given spatial matrices and group multipliers.
    ///
    /// `spatial` must match the slice used at construction in patterns;
    /// values may differ (e.g. re-linearized convection blocks).
    pub fn assemble(&mut self, spatial: &[&CsrMatrix], group_coeff: &[f64]) -> Result<()> {
        if group_coeff.len() != self.n_groups {
            return Err(Error::invalid("coefficient group count mismatch"));
        }
        for (idx, m) in spatial.iter().enumerate() {
            if self.spatial_nnz.get(idx).copied() != Some(m.nnz()) {
                return Err(Error::invalid(
                    "spatial matrix pattern changed between assemblies",
                ));
            }
        }
        record_full_order_op();
        self.vals.fill(0.0);
        for (p, pl) in self.placements.iter().enumerate() {
            let coeff = group_coeff[pl.group] * pl.scale;
            if coeff == 0.0 {
                continue;
            }
            let m = spatial[pl.spatial];
            let slots = &self.slots[self.offsets[p]..self.offsets[p + 1]];
            for (k, (_, _, v)) in m.iter().enumerate() {
                self.vals[slots[k] as usize] += coeff * v;
            }
        }
        for &s in &self.diag_slots {
            self.vals[s as usize] += 1.0;
        }
        Ok(())
    }

    /// Factor the currently assembled values.
    pub fn factor(&self) -> Result<KktFactor> {
        record_full_order_op();
        let mat = SparseColMat::new(self.symbolic.clone(), self.vals.clone());
        let lu = Lu::try_new_with_symbolic(self.sym_lu.clone(), mat.rb()).map_err(|_| {
            Error::SingularSystem {
                context: "system LU factorization".into(),
            }
        })?;
        Ok(KktFactor { n: self.dim, lu })
    }

    /// `y = K x` with the currently assembled values.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        record_full_order_op();
        y.fill(0.0);
        let col_ptr = self.symbolic.col_ptr();
        let row_idx = self.symbolic.row_idx();
        for c in 0..self.dim {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in col_ptr[c]..col_ptr[c + 1] {
                y[row_idx[k]] += self.vals[k] * xc;
            }
        }
    }

    /// Frobenius norm of `K - K^T` for the currently assembled values.
    pub fn asymmetry(&self) -> f64 {
        self.to_csr().asymmetry()
    }

    /// Expand the currently assembled values into an explicit matrix.
    pub fn to_csr(&self) -> CsrMatrix {
        let col_ptr = self.symbolic.col_ptr();
        let row_idx = self.symbolic.row_idx();
        let mut trips = Vec::with_capacity(self.vals.len());
        for c in 0..self.dim {
            for k in col_ptr[c]..col_ptr[c + 1] {
                trips.push((row_idx[k] as u32, c as u32, self.vals[k]));
            }
        }
        CsrMatrix::from_triplets(self.dim, self.dim, &trips).expect("pattern is in range")
    }
}

/// LU factor of an assembled system.
pub struct KktFactor {
    n: usize,
    lu: Lu<usize, f64>,
}

impl KktFactor {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        record_full_order_op();
        let mut fb = vec_to_faer(b);
        self.lu.solve_in_place(fb.rb_mut());
        for i in 0..self.n {
            b[i] = fb[(i, 0)];
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        self.solve_in_place(out.as_mut_slice());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_duplicates_are_summed() {
        let trips = vec![(0u32, 0u32, 1.0), (0, 0, 2.0), (1, 1, 3.0), (0, 1, 0.0)];
        let m = CsrMatrix::from_triplets(2, 2, &trips).unwrap();
        assert_eq!(m.nnz(), 3); // explicit zero kept
        let mut y = vec![0.0; 2];
        m.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 3.0]);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        let trips = vec![(2u32, 0u32, 1.0)];
        assert!(CsrMatrix::from_triplets(2, 2, &trips).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let trips = vec![(0u32, 1u32, 2.0), (1, 0, -1.0), (1, 2, 4.0)];
        let m = CsrMatrix::from_triplets(2, 3, &trips).unwrap();
        let t = m.transpose();
        assert_eq!(t.nrows(), 3);
        let tt = t.transpose();
        for ((r1, c1, v1), (r2, c2, v2)) in m.iter().zip(tt.iter()) {
            assert_eq!((r1, c1), (r2, c2));
            assert_eq!(v1, v2);
        }
    }

    #[test]
    fn lu_solves_saddle_point_system() {
        // [[2, 1], [1, 0]] has a zero diagonal entry and needs pivoting.
        let trips = vec![(0u32, 0u32, 2.0), (0, 1, 1.0), (1, 0, 1.0)];
        let m = CsrMatrix::from_triplets(2, 2, &trips).unwrap();
        let lu = SparseLu::factor(&m).unwrap();
        let x = lu.solve_vec(&DVector::from_vec(vec![3.0, 1.0]));
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn llt_solves_spd_system() {
        let trips = vec![(0u32, 0u32, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)];
        let m = CsrMatrix::from_triplets(2, 2, &trips).unwrap();
        let llt = SparseLlt::factor(&m).unwrap();
        let x = llt.solve_vec(&DVector::from_vec(vec![5.0, 4.0]));
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn assembler_matches_direct_construction() {
        // Two 2x2 blocks placed diagonally plus a transposed coupling.
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)]).unwrap();
        let b = CsrMatrix::from_triplets(2, 2, &[(0, 0, 5.0), (1, 0, 6.0)]).unwrap();
        let placements = vec![
            Placement {
                spatial: 0,
                row_off: 0,
                col_off: 0,
                transpose: false,
                group: 0,
                scale: 1.0,
            },
            Placement {
                spatial: 1,
                row_off: 0,
                col_off: 2,
                transpose: false,
                group: 1,
                scale: 1.0,
            },
            Placement {
                spatial: 1,
                row_off: 2,
                col_off: 0,
                transpose: true,
                group: 1,
                scale: 1.0,
            },
        ];
        let mut asm = KktAssembler::new(4, &[&a, &b], placements, &[2, 3], 2).unwrap();
        asm.assemble(&[&a, &b], &[2.0, -1.0]).unwrap();
        let full = asm.to_csr();
        // group 0 doubles block a, group 1 negates block b and its transpose
        let expect = [
            (0, 0, 2.0),
            (0, 1, 4.0),
            (1, 1, 6.0),
            (0, 2, -5.0),
            (1, 2, -6.0),
            (2, 0, -5.0),
            (2, 1, -6.0),
            (2, 2, 1.0),
            (3, 3, 1.0),
        ];
        for (r, c, v) in expect {
            let got: f64 = full
                .iter()
                .find(|&(rr, cc, _)| rr == r && cc == c)
                .map(|(_, _, vv)| vv)
                .unwrap_or(0.0);
            assert!((got - v).abs() < 1e-15, "entry ({r},{c}) = {got}, want {v}");
        }
        assert!(full.asymmetry() > 0.0); // block a is not symmetric
        let factor = asm.factor().unwrap();
        let rhs = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let x = factor.solve_vec(&rhs);
        let mut y = vec![0.0; 4];
        asm.matvec(x.as_slice(), &mut y);
        for i in 0..4 {
            assert!((y[i] - rhs[i]).abs() < 1e-12);
        }
    }
}
