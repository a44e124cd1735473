//! Dense matrices over GF(2^m), Cauchy matrices and erasure-system solving.
//!
//! Indexing is 0-based throughout. [`GfMatrix::slice_inclusive`] accepts the
//! 1-based inclusive `[i1:i2, j1:j2]` ranges used when transcribing block
//! formulas, and converts them to `block(i1 - 1, j1 - 1, ..)`.

use std::fmt;

use thiserror::Error;

use crate::gf::{Field, FieldError, Gf};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operands belong to different fields")]
    FieldMismatch,
    #[error("matrix is singular")]
    Singular,
    #[error("evaluation point {0:?} appears more than once")]
    DuplicateEvaluationPoint(Gf),
    #[error("redundancy {r} outside ({lo}, {hi}]")]
    RedundancyOutOfRange { r: usize, lo: isize, hi: usize },
    #[error("{unknowns} unknowns but the system has rank {rank}")]
    Underdetermined { unknowns: usize, rank: usize },
    #[error("inconsistent linear system")]
    Unsolvable,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, PartialEq, Eq)]
pub struct GfMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Gf>,
    field: Field,
}

impl fmt::Debug for GfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GfMatrix {}x{} over {:?}", self.rows, self.cols, self.field)?;
        for i in 0..self.rows {
            let row: Vec<String> =
                self.row(i).iter().map(|&v| self.field.power_notation(v)).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl GfMatrix {
    pub fn zeros(field: &Field, rows: usize, cols: usize) -> Self {
        GfMatrix { rows, cols, data: vec![Gf::ZERO; rows * cols], field: field.clone() }
    }

    pub fn identity(field: &Field, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.set(i, i, Gf::ONE);
        }
        m
    }

    pub fn from_fn(
        field: &Field,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Gf,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        GfMatrix { rows, cols, data, field: field.clone() }
    }

    pub fn from_rows(field: &Field, rows: &[Vec<Gf>]) -> Result<Self, MatrixError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(MatrixError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for &v in row {
                if !field.contains(v) {
                    return Err(FieldError::OutOfRange { value: v.0 as u32, m: field.m() }.into());
                }
            }
            data.extend_from_slice(row);
        }
        Ok(GfMatrix { rows: rows.len(), cols, data, field: field.clone() })
    }

    pub fn row_vector(field: &Field, v: &[Gf]) -> Self {
        GfMatrix { rows: 1, cols: v.len(), data: v.to_vec(), field: field.clone() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Gf {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Gf) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Gf] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Gf> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<Gf>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    /// `nrows x ncols` block whose top-left entry is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nrows: usize, ncols: usize) -> Self {
        assert!(
            r0 + nrows <= self.rows && c0 + ncols <= self.cols,
            "block ({r0},{c0})+{nrows}x{ncols} out of bounds for {}x{}",
            self.rows,
            self.cols
        );
        Self::from_fn(&self.field, nrows, ncols, |i, j| self.get(r0 + i, c0 + j))
    }

    /// `M[i1:i2, j1:j2]` with 1-based inclusive bounds. An empty range is
    /// written with `i2 = i1 - 1`.
    pub fn slice_inclusive(&self, i1: usize, i2: usize, j1: usize, j2: usize) -> Self {
        assert!(i1 >= 1 && j1 >= 1, "slice bounds are 1-based");
        self.block(i1 - 1, j1 - 1, (i2 + 1).saturating_sub(i1), (j2 + 1).saturating_sub(j1))
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(&self.field, self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(&self.field, rows.len(), self.cols, |i, j| self.get(rows[i], j))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(&self.field, self.cols, self.rows, |i, j| self.get(j, i))
    }

    fn check_field(&self, other: &GfMatrix) -> Result<(), MatrixError> {
        if self.field == other.field {
            Ok(())
        } else {
            Err(MatrixError::FieldMismatch)
        }
    }

    pub fn mul_mat(&self, other: &GfMatrix) -> Result<GfMatrix, MatrixError> {
        self.check_field(other)?;
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = &self.field;
        let mut out = GfMatrix::zeros(f, self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + f.mul(a, other.get(l, j));
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v * self`.
    pub fn left_mul(&self, v: &[Gf]) -> Result<Vec<Gf>, MatrixError> {
        if v.len() != self.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "vector of length {} times {}x{}",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let f = &self.field;
        let mut out = vec![Gf::ZERO; self.cols];
        for (i, &a) in v.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += f.mul(a, self.get(i, j));
            }
        }
        Ok(out)
    }

    /// Matrix times column vector: `self * v^T`.
    pub fn right_mul(&self, v: &[Gf]) -> Result<Vec<Gf>, MatrixError> {
        if v.len() != self.cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let f = &self.field;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(Gf::ZERO, |acc, (&a, &b)| acc + f.mul(a, b)))
            .collect())
    }

    pub fn add(&self, other: &GfMatrix) -> Result<GfMatrix, MatrixError> {
        self.check_field(other)?;
        if self.shape() != other.shape() {
            return Err(MatrixError::DimensionMismatch(format!(
                "{:?} plus {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(GfMatrix { rows: self.rows, cols: self.cols, data, field: self.field.clone() })
    }

    /// Side-by-side concatenation.
    pub fn hstack(parts: &[&GfMatrix]) -> Result<GfMatrix, MatrixError> {
        let first = parts
            .first()
            .ok_or_else(|| MatrixError::DimensionMismatch("hstack of nothing".to_string()))?;
        let rows = first.rows;
        for p in parts {
            first.check_field(p)?;
            if p.rows != rows {
                return Err(MatrixError::DimensionMismatch(format!(
                    "hstack row counts {} and {}",
                    rows, p.rows
                )));
            }
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = GfMatrix::zeros(&first.field, rows, cols);
        let mut c0 = 0;
        for p in parts {
            out.paste(0, c0, p);
            c0 += p.cols;
        }
        Ok(out)
    }

    /// Vertical concatenation.
    pub fn vstack(parts: &[&GfMatrix]) -> Result<GfMatrix, MatrixError> {
        let first = parts
            .first()
            .ok_or_else(|| MatrixError::DimensionMismatch("vstack of nothing".to_string()))?;
        let cols = first.cols;
        for p in parts {
            first.check_field(p)?;
            if p.cols != cols {
                return Err(MatrixError::DimensionMismatch(format!(
                    "vstack column counts {} and {}",
                    cols, p.cols
                )));
            }
        }
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        Ok(GfMatrix { rows, cols, data, field: first.field.clone() })
    }

    /// Writes `src` into `self` with its top-left corner at `(r0, c0)`.
    pub fn paste(&mut self, r0: usize, c0: usize, src: &GfMatrix) {
        assert!(r0 + src.rows <= self.rows && c0 + src.cols <= self.cols);
        for i in 0..src.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + src.cols].copy_from_slice(src.row(i));
        }
    }

    /// Reduces to reduced row echelon form in place, pivoting on the first
    /// nonzero entry of each column. Only the first `ncols` columns are used
    /// for pivots. Returns the pivot columns.
    fn reduce(&mut self, ncols: usize) -> Vec<usize> {
        let f = self.field.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..ncols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| !self.get(i, c).is_zero()) else {
                continue;
            };
            if p != r {
                for j in 0..self.cols {
                    self.data.swap(p * self.cols + j, r * self.cols + j);
                }
            }
            let inv = f.inv(self.get(r, c)).expect("pivot is nonzero");
            for j in 0..self.cols {
                let v = f.mul(self.get(r, j), inv);
                self.set(r, j, v);
            }
            for i in 0..self.rows {
                if i == r {
                    continue;
                }
                let factor = self.get(i, c);
                if factor.is_zero() {
                    continue;
                }
                for j in 0..self.cols {
                    let v = self.get(i, j) + f.mul(factor, self.get(r, j));
                    self.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let n = m.cols;
        m.reduce(n).len()
    }

    /// Solves `self * x^T = b^T` for a system with a unique solution.
    ///
    /// The matrix may be rectangular; inconsistency is reported before rank
    /// deficiency.
    pub fn solve(&self, b: &[Gf]) -> Result<Vec<Gf>, MatrixError> {
        if b.len() != self.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} system with right-hand side of length {}",
                self.rows,
                self.cols,
                b.len()
            )));
        }
        let n = self.cols;
        let rhs =
            GfMatrix { rows: self.rows, cols: 1, data: b.to_vec(), field: self.field.clone() };
        let mut aug = GfMatrix::hstack(&[self, &rhs])?;
        let pivots = aug.reduce(n);
        let rank = pivots.len();
        if (rank..aug.rows).any(|i| !aug.get(i, n).is_zero()) {
            return Err(MatrixError::Unsolvable);
        }
        if rank < n {
            return Err(MatrixError::Underdetermined { unknowns: n, rank });
        }
        let mut x = vec![Gf::ZERO; n];
        for (i, &c) in pivots.iter().enumerate() {
            x[c] = aug.get(i, n);
        }
        Ok(x)
    }

    /// Gaussian solve of a square system; rank deficiency is `Singular`.
    pub fn gaussian_solve(&self, b: &[Gf]) -> Result<Vec<Gf>, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "gaussian_solve needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        match self.solve(b) {
            Err(MatrixError::Underdetermined { .. }) | Err(MatrixError::Unsolvable) => {
                Err(MatrixError::Singular)
            }
            other => other,
        }
    }

    /// Solves `x * self = w` for the row vector `x`.
    pub fn solve_left(&self, w: &[Gf]) -> Result<Vec<Gf>, MatrixError> {
        self.transpose().solve(w)
    }

    pub fn inverse(&self) -> Result<GfMatrix, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::DimensionMismatch("inverse of non-square matrix".into()));
        }
        let n = self.rows;
        let mut aug = GfMatrix::hstack(&[self, &GfMatrix::identity(&self.field, n)])?;
        if aug.reduce(n).len() < n {
            return Err(MatrixError::Singular);
        }
        Ok(aug.block(0, n, n, n))
    }
}

/// `Y(a_1..a_s; b_1..b_t)`, the matrix with entries `1 / (a_i - b_j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CauchyMatrix {
    a: Vec<Gf>,
    b: Vec<Gf>,
    matrix: GfMatrix,
}

impl CauchyMatrix {
    pub fn new(field: &Field, a: &[Gf], b: &[Gf]) -> Result<Self, MatrixError> {
        let mut seen = vec![false; field.order()];
        for &p in a.iter().chain(b) {
            if !field.contains(p) {
                return Err(FieldError::OutOfRange { value: p.0 as u32, m: field.m() }.into());
            }
            if std::mem::replace(&mut seen[p.0 as usize], true) {
                return Err(MatrixError::DuplicateEvaluationPoint(p));
            }
        }
        let matrix = GfMatrix::from_fn(field, a.len(), b.len(), |i, j| {
            field.inv(a[i] - b[j]).expect("points are distinct")
        });
        Ok(CauchyMatrix { a: a.to_vec(), b: b.to_vec(), matrix })
    }

    pub fn row_points(&self) -> &[Gf] {
        &self.a
    }

    pub fn col_points(&self) -> &[Gf] {
        &self.b
    }

    pub fn matrix(&self) -> &GfMatrix {
        &self.matrix
    }

    pub fn field(&self) -> &Field {
        self.matrix.field()
    }
}

/// The matrix `[A ; -I_r 0_{r x (t-r)}]^T` for an `s x t` Cauchy matrix `A`.
///
/// It has shape `t x (s + r)` and every `t` of its columns are linearly
/// independent, so it is a parity-check matrix of an `(s+r, s+r-t, t+1)` code.
/// Requires `t - s < r <= t`.
pub fn cauchy_parity_matrix(a: &CauchyMatrix, r: usize) -> Result<GfMatrix, MatrixError> {
    let (s, t) = a.matrix.shape();
    let lo = t as isize - s as isize;
    if (r as isize) <= lo || r > t || r == 0 {
        return Err(MatrixError::RedundancyOutOfRange { r, lo, hi: t });
    }
    Ok(stack_parity(&a.matrix, r))
}

/// `[top ; -I_r 0]^T` without the redundancy-range check.
pub(crate) fn stack_parity(top: &GfMatrix, r: usize) -> GfMatrix {
    let field = top.field();
    let t = top.cols();
    let mut lower = GfMatrix::zeros(field, r, t);
    for i in 0..r {
        lower.set(i, i, Gf::ONE);
    }
    GfMatrix::vstack(&[top, &lower]).expect("widths agree").transpose()
}

/// Fills the erased (`None`) positions of `word` so that `h * word^T = syndrome^T`.
///
/// Known positions are returned unchanged. Fails with `Underdetermined` when
/// the erased columns of `h` do not have full column rank and with
/// `Unsolvable` when no assignment satisfies the system.
pub fn solve_erasures(
    h: &GfMatrix,
    word: &[Option<Gf>],
    syndrome: &[Gf],
) -> Result<Vec<Gf>, MatrixError> {
    if word.len() != h.cols() || syndrome.len() != h.rows() {
        return Err(MatrixError::DimensionMismatch(format!(
            "parity-check {}x{} with word {} and syndrome {}",
            h.rows(),
            h.cols(),
            word.len(),
            syndrome.len()
        )));
    }
    let f = h.field();
    let erased: Vec<usize> = (0..word.len()).filter(|&j| word[j].is_none()).collect();
    let mut rhs = syndrome.to_vec();
    for (j, sym) in word.iter().enumerate() {
        if let Some(v) = sym {
            for (i, r) in rhs.iter_mut().enumerate() {
                *r += f.mul(h.get(i, j), *v);
            }
        }
    }
    let mut out: Vec<Gf> = word.iter().map(|s| s.unwrap_or(Gf::ZERO)).collect();
    if erased.is_empty() {
        if rhs.iter().any(|v| !v.is_zero()) {
            return Err(MatrixError::Unsolvable);
        }
        return Ok(out);
    }
    let x = h.select_columns(&erased).solve(&rhs)?;
    for (&j, v) in erased.iter().zip(x) {
        out[j] = v;
    }
    Ok(out)
}
