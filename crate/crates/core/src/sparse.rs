//! Sparse storage, products, and a direct LU factorization with partial
//! pivoting for the symmetric indefinite saddle-point systems.
//!
//! The numeric factorization is delegated to `faer`'s sparse LU (COLAMD
//! column ordering, supernodal or simplicial kernels, partial row
//! pivoting, sequential execution). Every factorization is verified with a
//! probe solve; every solve is verified against the relative residual
//! target [`RESIDUAL_TOLERANCE`], with up to [`MAX_REFINEMENT_STEPS`] steps
//! of iterative refinement. Refinement continues past the target while the
//! residual keeps halving.

use alloc::vec;
use alloc::vec::Vec;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::lu::simplicial::{factorize_simplicial_numeric_lu, factorize_simplicial_numeric_lu_scratch, SimplicialLu};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, MatMut};

use crate::error::{Error, Result};

/// Relative residual `|Ax - b| / |b|` every solve must reach.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

pub const MAX_REFINEMENT_STEPS: usize = 4;

/// Coordinate-format accumulator. Duplicate entries are summed on compression.
#[derive(Clone, Debug, Default)]
pub struct TripletMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletMatrix {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        TripletMatrix {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Appends `block` with its top-left corner at `(row_offset, col_offset)`.
    pub fn push_block(&mut self, row_offset: usize, col_offset: usize, block: &CscMatrix) {
        for (r, c, v) in block.iter() {
            self.push(row_offset + r, col_offset + c, v);
        }
    }

    /// Appends the transpose of `block` with its top-left corner at
    /// `(row_offset, col_offset)`.
    pub fn push_block_transposed(&mut self, row_offset: usize, col_offset: usize, block: &CscMatrix) {
        for (r, c, v) in block.iter() {
            self.push(row_offset + c, col_offset + r, v);
        }
    }

    pub fn extend(&mut self, other: &TripletMatrix) {
        self.entries.extend_from_slice(&other.entries);
    }

    /// Sorts by (column, row), sums duplicates and drops nothing else; the
    /// result does not depend on insertion order beyond floating point
    /// summation order within a duplicate group, which follows insertion.
    pub fn to_csc(&self) -> CscMatrix {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&k| (self.entries[k].1, self.entries[k].0, k));
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::with_capacity(order.len());
        let mut values: Vec<f64> = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = self.entries[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr,
            row_idx,
            values,
        }
    }
}

/// Compressed sparse column matrix with sorted, unique row indices per column.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn identity(n: usize) -> Self {
        CscMatrix {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut t = TripletMatrix::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.to_csc()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entries of column `c` as (row, value) pairs.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// All stored entries as (row, col, value), column by column.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| self.column(c).map(move |(r, v)| (r, c, v)))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> CscMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension");
        let mut y = vec![0.0; self.nrows];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// `y = A^T x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "mul_transpose_vec dimension");
        (0..self.ncols)
            .map(|c| self.column(c).map(|(r, v)| v * x[r]).sum())
            .collect()
    }

    /// `x^T A y` for square or rectangular `A`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut t = TripletMatrix::with_capacity(self.ncols, self.nrows, self.nnz());
        for (r, c, v) in self.iter() {
            t.push(c, r, v);
        }
        t.to_csc()
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        self.iter().map(|(r, c, v)| libm::fabs(v - self.get(c, r))).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| libm::fabs(*v)).fold(0.0, f64::max)
    }

    /// Principal or rectangular submatrix selecting `rows` and `cols`
    /// (global indices, each list sorted ascending).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CscMatrix {
        let mut row_map = vec![usize::MAX; self.nrows];
        for (local, &g) in rows.iter().enumerate() {
            row_map[g] = local;
        }
        let mut col_ptr = Vec::with_capacity(cols.len() + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for &g in cols {
            for (r, v) in self.column(g) {
                let local = row_map[r];
                if local != usize::MAX {
                    row_idx.push(local);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            nrows: rows.len(),
            ncols: cols.len(),
            col_ptr,
            row_idx,
            values,
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let symbolic = SymbolicSparseColMat::new_checked(self.nrows, self.ncols, self.col_ptr.clone(), None, self.row_idx.clone());
        Ok(SparseColMat::new(symbolic, self.values.clone()))
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// A named contiguous range of unknowns in a block system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

/// Ordered block structure of a monolithic system.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockLayout {
    blocks: Vec<Block>,
}

impl BlockLayout {
    pub fn new() -> Self {
        BlockLayout::default()
    }

    pub fn push(&mut self, name: &'static str, len: usize) -> usize {
        let offset = self.total();
        self.blocks.push(Block { name, offset, len });
        offset
    }

    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len)
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn range(&self, name: &str) -> core::ops::Range<usize> {
        let b = self.block(name).expect("unknown block");
        b.offset..b.offset + b.len
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }
}

/// A monolithic symmetric saddle-point system with its block layout.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub layout: BlockLayout,
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
}

impl SaddleSystem {
    pub fn new(layout: BlockLayout, matrix: CscMatrix, rhs: Vec<f64>) -> Result<Self> {
        let n = layout.total();
        for (what, found) in [("saddle rows", matrix.nrows()), ("saddle columns", matrix.ncols()), ("saddle rhs", rhs.len())] {
            if found != n {
                return Err(Error::DimensionMismatch { what, expected: n, found });
            }
        }
        Ok(SaddleSystem { layout, matrix, rhs })
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        factorize(&self.matrix)?.solve(&self.rhs)
    }
}

/// Direct LU factorization of a square sparse matrix.
pub struct Factorization {
    matrix: CscMatrix,
    lu: Lu<usize, f64>,
}

impl core::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Factorization")
            .field("n", &self.matrix.nrows())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

/// Factorizes `matrix`, detecting structural singularity from the pivot
/// search and numerical singularity from a probe solve.
pub fn factorize(matrix: &CscMatrix) -> Result<Factorization> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "factorize (square matrix)",
            expected: n,
            found: matrix.ncols(),
        });
    }
    let faer_matrix = matrix.to_faer()?;
    let symbolic = SymbolicLu::try_new(faer_matrix.symbolic()).map_err(|_| Error::Backend("symbolic LU"))?;
    let lu = match Lu::try_new_with_symbolic(symbolic, faer_matrix.as_ref()) {
        Ok(lu) => lu,
        Err(faer::sparse::linalg::LuError::SymbolicSingular { index }) => {
            // index refers to the column-permuted matrix
            let pivot = locate_deficient_pivot(matrix).unwrap_or(index);
            return Err(Error::Singular { pivot });
        }
        Err(_) => return Err(Error::Backend("numeric LU")),
    };
    let fact = Factorization {
        matrix: matrix.clone(),
        lu,
    };
    if n > 0 {
        let expected: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
        let b = matrix.mul_vec(&expected);
        let ok = match fact.raw_solve(&b) {
            Some(x) => {
                let r = fact.residual(&x, &b);
                r.is_finite() && r <= RESIDUAL_TOLERANCE
            }
            None => false,
        };
        if !ok {
            let pivot = locate_deficient_pivot(matrix).unwrap_or(n - 1);
            return Err(Error::Singular { pivot });
        }
    }
    Ok(fact)
}

/// Reruns the factorization with the simplicial kernel and returns the
/// original column index of the smallest relative pivot, if that pivot is
/// numerically zero.
fn locate_deficient_pivot(matrix: &CscMatrix) -> Option<usize> {
    use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuSymbolicParams};
    use faer::sparse::linalg::SupernodalThreshold;

    let n = matrix.nrows();
    let a = matrix.to_faer().ok()?;
    let params = LuSymbolicParams {
        supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SIMPLICIAL,
        ..Default::default()
    };
    let symbolic = factorize_symbolic_lu(a.symbolic(), params).ok()?;
    let col_perm = symbolic.col_perm();
    let (fwd, _) = col_perm.arrays();
    let mut row_perm = vec![0usize; n];
    let mut row_perm_inv = vec![0usize; n];
    let mut lu = SimplicialLu::<usize, f64>::new();
    let mut mem = MemBuffer::new(factorize_simplicial_numeric_lu_scratch::<usize, f64>(n, n));
    let stack = MemStack::new(&mut mem);
    let scale = matrix.max_abs().max(f64::MIN_POSITIVE);
    match factorize_simplicial_numeric_lu(&mut row_perm, &mut row_perm_inv, &mut lu, a.as_ref(), col_perm, stack) {
        Ok(()) => {}
        Err(faer::sparse::linalg::LuError::SymbolicSingular { index }) => return fwd.get(index).copied(),
        Err(_) => return None,
    }
    let u = lu.u_factor_unsorted();
    let mut worst: Option<(usize, f64)> = None;
    for j in 0..n {
        let rows = u.symbolic().row_idx_of_col_raw(j);
        let vals = u.val_of_col(j);
        let diag = rows.iter().zip(vals).find(|(r, _)| **r == j).map_or(0.0, |(_, v)| libm::fabs(*v));
        let rel = diag / scale;
        if !rel.is_finite() || worst.is_none_or(|(_, w)| rel < w) {
            worst = Some((j, rel));
        }
    }
    match worst {
        Some((j, rel)) if !(rel > 1e3 * f64::EPSILON * n as f64) || !rel.is_finite() => fwd.get(j).copied(),
        _ => None,
    }
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    fn raw_solve_many(&self, rhs: &mut [f64], ncols: usize) -> bool {
        let n = self.dim();
        let mat = MatMut::from_column_major_slice_mut(rhs, n, ncols);
        self.lu.solve_in_place_with_conj(Conj::No, mat);
        rhs.iter().all(|v| v.is_finite())
    }

    fn raw_solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let mut x = b.to_vec();
        self.raw_solve_many(&mut x, 1).then_some(x)
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        norm2(&r) / norm2(b)
    }

    fn refine(&self, x: &mut [f64], b: &[f64]) -> Result<()> {
        let mut residual = self.residual(x, b);
        for _ in 0..MAX_REFINEMENT_STEPS {
            if !residual.is_finite() {
                break;
            }
            let ax = self.matrix.mul_vec(x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            if !self.raw_solve_many(&mut r, 1) {
                break;
            }
            let candidate: Vec<f64> = x.iter().zip(&r).map(|(x, d)| x + d).collect();
            let next = self.residual(&candidate, b);
            if !(next < residual) {
                break;
            }
            x.copy_from_slice(&candidate);
            let stalled = next > 0.5 * residual;
            residual = next;
            if stalled && residual <= RESIDUAL_TOLERANCE {
                break;
            }
        }
        if residual <= RESIDUAL_TOLERANCE {
            Ok(())
        } else {
            Err(Error::Inaccurate { residual })
        }
    }

    /// Solves `A x = b`; a zero right-hand side returns zero exactly.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.solve_many(&[b])?;
        Ok(out.pop().unwrap())
    }

    /// Solves for several right-hand sides with one triangular sweep.
    pub fn solve_many(&self, rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        for b in rhs {
            if b.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "solve rhs",
                    expected: n,
                    found: b.len(),
                });
            }
        }
        let mut buffer = Vec::with_capacity(n * rhs.len());
        for b in rhs {
            buffer.extend_from_slice(b);
        }
        if n > 0 {
            self.raw_solve_many(&mut buffer, rhs.len());
        }
        let mut out = Vec::with_capacity(rhs.len());
        for (k, b) in rhs.iter().enumerate() {
            if b.iter().all(|v| *v == 0.0) {
                out.push(vec![0.0; n]);
                continue;
            }
            let mut x = buffer[k * n..(k + 1) * n].to_vec();
            self.refine(&mut x, b)?;
            out.push(x);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = TripletMatrix::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 2.0);
        t.push(0, 0, 3.0);
        let m = t.to_csc();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let f = factorize(&CscMatrix::identity(5)).unwrap();
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn permutation_matrix_needs_pivoting() {
        let m = CscMatrix::from_dense(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let f = factorize(&m).unwrap();
        let x = f.solve(&[1.0, 2.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let m = CscMatrix::from_dense(&[&[2.0, 1.0], &[1.0, 0.0]]);
        let f = factorize(&m).unwrap();
        assert_eq!(f.solve(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn structurally_singular_is_reported() {
        let m = CscMatrix::from_dense(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 2.0]]);
        match factorize(&m) {
            Err(Error::Singular { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn numerically_singular_is_reported() {
        let m = CscMatrix::from_dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(factorize(&m), Err(Error::Singular { .. })));
    }

    #[test]
    fn multiple_rhs_match_single_solves() {
        let m = CscMatrix::from_dense(&[&[4.0, 1.0, 0.0], &[1.0, 0.0, 2.0], &[0.0, 2.0, -1.0]]);
        let f = factorize(&m).unwrap();
        let b1 = [1.0, 2.0, 3.0];
        let b2 = [-1.0, 0.5, 0.0];
        let many = f.solve_many(&[&b1, &b2]).unwrap();
        assert_eq!(many[0], f.solve(&b1).unwrap());
        assert_eq!(many[1], f.solve(&b2).unwrap());
    }

    #[test]
    fn submatrix_selects_entries() {
        let m = CscMatrix::from_dense(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
        let s = m.submatrix(&[0, 2], &[1, 2]);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(1, 1), 9.0);
        assert_eq!(s.get(1, 0), 8.0);
    }

    #[test]
    fn block_layout_offsets() {
        let mut l = BlockLayout::new();
        assert_eq!(l.push("u", 4), 0);
        assert_eq!(l.push("p", 2), 4);
        assert_eq!(l.total(), 6);
        assert_eq!(l.range("p"), 4..6);
    }
}
