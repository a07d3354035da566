//! Minimal sparse storage for assembly plus a thin wrapper over faer's sparse
//! Cholesky factorization.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{ColMut, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Coordinate-format accumulator. Duplicates are summed on conversion.
#[derive(Clone, Debug, Default)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.entries.iter().copied())
    }
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from triplets, summing duplicates and dropping entries that sum to zero.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        t.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        let mut k = 0;
        while k < t.len() {
            let (i, j, mut v) = t[k];
            k += 1;
            while k < t.len() && t[k].0 == i && t[k].1 == j {
                v += t[k].2;
                k += 1;
            }
            if v != 0.0 {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
            }
        }
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    /// `y += A x`
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi += self.row(i).map(|(j, v)| v * x[j]).sum::<f64>();
        }
    }

    /// `y = A^T x`
    pub fn mul_transpose_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_transpose_vec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Linear combination `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        CsrMatrix::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets()
                .map(|(i, j, v)| (i, j, a * v))
                .chain(other.triplets().map(|(i, j, v)| (i, j, b * v))),
        )
    }

    /// Extracts `A[rows, cols]`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                let c = col_map[j];
                if c != usize::MAX {
                    t.push((r, c, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Input(format!("sparse conversion failed: {e:?}")))
    }

    /// MatrixMarket coordinate text (1-based). Symmetric matrices store the
    /// lower triangle only.
    pub fn to_matrix_market(&self, symmetric: bool) -> String {
        let kind = if symmetric { "symmetric" } else { "general" };
        let entries: Vec<(usize, usize, f64)> = self.triplets().filter(|&(i, j, _)| !symmetric || j <= i).collect();
        let mut out = format!("%%MatrixMarket matrix coordinate real {kind}\n");
        let _ = writeln!(out, "{} {} {}", self.nrows, self.ncols, entries.len());
        for (i, j, v) in entries {
            let _ = writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v);
        }
        out
    }
}

/// MatrixMarket text for a dense matrix.
pub fn dense_matrix_market(m: &DMatrix<f64>, symmetric: bool) -> String {
    let mut t = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                t.push((i, j, m[(i, j)]));
            }
        }
    }
    CsrMatrix::from_triplets(m.nrows(), m.ncols(), t).to_matrix_market(symmetric)
}

/// Parses MatrixMarket coordinate text produced by [`CsrMatrix::to_matrix_market`].
pub fn parse_matrix_market(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Input("empty MatrixMarket text".into()))?;
    if !header.starts_with("%%MatrixMarket matrix coordinate real") {
        return Err(Error::Input(format!("unsupported MatrixMarket header: {header}")));
    }
    let symmetric = header.ends_with("symmetric");
    let mut lines = lines.filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let parse_err = |l: &str| Error::Input(format!("bad MatrixMarket line: {l}"));
    let size = lines.next().ok_or_else(|| Error::Input("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| parse_err(size)))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(parse_err(size));
    }
    let mut t = Vec::with_capacity(dims[2] * 2);
    for line in lines {
        let mut it = line.split_whitespace();
        let (i, j, v) = match (it.next(), it.next(), it.next()) {
            (Some(i), Some(j), Some(v)) => (
                i.parse::<usize>().map_err(|_| parse_err(line))? - 1,
                j.parse::<usize>().map_err(|_| parse_err(line))? - 1,
                v.parse::<f64>().map_err(|_| parse_err(line))?,
            ),
            _ => return Err(parse_err(line)),
        };
        t.push((i, j, v));
        if symmetric && i != j {
            t.push((j, i, v));
        }
    }
    Ok(CsrMatrix::from_triplets(dims[0], dims[1], t))
}

/// Sparse Cholesky factorization of an SPD matrix.
pub struct SpdFactor {
    dim: usize,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdFactor").field("dim", &self.dim).finish()
    }
}

impl SpdFactor {
    pub fn new(a: &CsrMatrix, context: &str) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Input(format!("{context}: matrix is not square")));
        }
        if a.nrows == 0 {
            return Ok(Self { dim: 0, llt: None });
        }
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|_| Error::NotPositiveDefinite {
                context: context.to_string(),
            })?;
        Ok(Self {
            dim: a.nrows,
            llt: Some(llt),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.dim);
        if let Some(llt) = &self.llt {
            llt.solve_in_place(ColMut::from_slice_mut(rhs));
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Dense Cholesky for the (small) coarse problem.
#[derive(Clone, Debug)]
pub struct DenseSpdFactor {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl DenseSpdFactor {
    pub fn new(a: DMatrix<f64>, context: &str) -> Result<Self> {
        if a.nrows() == 0 {
            return Ok(Self { chol: None });
        }
        let chol = a.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            context: context.to_string(),
        })?;
        Ok(Self { chol: Some(chol) })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(c) => c.solve(&nalgebra::DVector::from_column_slice(rhs)).as_slice().to_vec(),
            None => Vec::new(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
