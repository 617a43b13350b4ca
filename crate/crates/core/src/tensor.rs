//! Dense third-order tensors and column-major matrices.
//!
//! Element `(i, j, k)` of an `I x J x K` tensor lives at linear index
//! `i + I*j + I*J*k`. The mode-n unfolding places mode-n fibers as columns;
//! the remaining two indices are ordered with the lower-numbered mode varying
//! fastest, so the mode-1 unfolding is a plain reinterpretation of the buffer.

use std::fmt;

use crate::error::{Error, Result};

/// Tensor mode, 1-based like the usual `×_n` notation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn from_index(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            other => Err(Error::InvalidMode(other)),
        }
    }

    /// Zero-based axis.
    pub fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        Mode::from_index(n)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.axis() + 1)
    }
}

/// Dense column-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let out_col = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for q in 0..self.cols {
                let b = rhs.data[q + rhs.rows * j];
                if b == 0.0 {
                    continue;
                }
                let a_col = &self.data[q * self.rows..(q + 1) * self.rows];
                for (o, &a) in out_col.iter_mut().zip(a_col) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * rhs`.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::dims(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Matrix::from_fn(self.cols, rhs.cols, |i, j| {
            dot(self.column(i), rhs.column(j))
        }))
    }

    /// `self * rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        self.matmul(&rhs.transpose())
    }

    /// `self * selfᵀ`.
    pub fn gram_rows(&self) -> Matrix {
        self.matmul_t(self).expect("shapes agree")
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(format!(
                "axpy on {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        axpy(&mut self.data, s, &other.data);
        Ok(())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keeps the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Matrix {
        self.column_range(0, n)
    }

    pub fn column_range(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        Matrix {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    /// Horizontal concatenation.
    pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let mut data = Vec::new();
        let mut cols = 0;
        for b in blocks {
            if b.rows != rows {
                return Err(Error::dims("hstack with differing row counts"));
            }
            data.extend_from_slice(&b.data);
            cols += b.cols;
        }
        Ok(Matrix { rows, cols, data })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + self.rows * j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + self.rows * j]
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (br, bc) = b.shape();
    Matrix::from_fn(a.rows * br, a.cols * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Dense third-order tensor in mode-1-fastest layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::dims(format!(
                "tensor {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [ni, nj, nk] = dims;
        let mut data = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { dims, data }
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Self {
        Tensor3 {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self, mode: Mode) -> usize {
        self.dims[mode.axis()]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index_of(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index_of(i, j, k);
        self.data[idx] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn squared_norm(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dims(format!(
                "axpy on {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        axpy(&mut self.data, s, &other.data);
        Ok(())
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// Mode-n unfolding: `(I, JK)`, `(J, IK)` or `(K, IJ)`.
    pub fn unfold(&self, mode: Mode) -> Matrix {
        let [ni, nj, nk] = self.dims;
        match mode {
            Mode::One => Matrix {
                rows: ni,
                cols: nj * nk,
                data: self.data.clone(),
            },
            Mode::Two => {
                let mut m = Matrix::zeros(nj, ni * nk);
                for k in 0..nk {
                    for j in 0..nj {
                        for i in 0..ni {
                            m.data[j + nj * (i + ni * k)] = self.data[i + ni * (j + nj * k)];
                        }
                    }
                }
                m
            }
            Mode::Three => {
                let mut m = Matrix::zeros(nk, ni * nj);
                for k in 0..nk {
                    for (col, &v) in self.data[k * ni * nj..(k + 1) * ni * nj]
                        .iter()
                        .enumerate()
                    {
                        m.data[k + nk * col] = v;
                    }
                }
                m
            }
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
        let [ni, nj, nk] = dims;
        let expected = match mode {
            Mode::One => (ni, nj * nk),
            Mode::Two => (nj, ni * nk),
            Mode::Three => (nk, ni * nj),
        };
        if m.shape() != expected {
            return Err(Error::dims(format!(
                "cannot fold {:?} matrix along mode {mode} into {dims:?}",
                m.shape()
            )));
        }
        let mut t = Tensor3::zeros(dims);
        match mode {
            Mode::One => t.data.copy_from_slice(&m.data),
            Mode::Two => {
                for k in 0..nk {
                    for j in 0..nj {
                        for i in 0..ni {
                            t.data[i + ni * (j + nj * k)] = m.data[j + nj * (i + ni * k)];
                        }
                    }
                }
            }
            Mode::Three => {
                for k in 0..nk {
                    for col in 0..ni * nj {
                        t.data[k * ni * nj + col] = m.data[k + nk * col];
                    }
                }
            }
        }
        Ok(t)
    }

    /// `self ×_n u`; `u.cols()` must equal the mode-n dimension.
    pub fn mode_product(&self, u: &Matrix, mode: Mode) -> Result<Tensor3> {
        let [ni, nj, nk] = self.dims;
        let n_in = self.dims[mode.axis()];
        if u.cols != n_in {
            return Err(Error::dims(format!(
                "mode-{mode} product of {:?} tensor with {}x{} matrix",
                self.dims, u.rows, u.cols
            )));
        }
        let p = u.rows;
        let mut out_dims = self.dims;
        out_dims[mode.axis()] = p;
        let mut out = Tensor3::zeros(out_dims);
        match mode {
            Mode::One => {
                // each mode-1 fiber is a contiguous column
                for col in 0..nj * nk {
                    let src = &self.data[col * ni..(col + 1) * ni];
                    let dst = &mut out.data[col * p..(col + 1) * p];
                    for (q, &x) in src.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        axpy(dst, x, u.column(q));
                    }
                }
            }
            Mode::Two => {
                for k in 0..nk {
                    for q in 0..nj {
                        let src = &self.data[ni * (q + nj * k)..ni * (q + nj * k + 1)];
                        for pp in 0..p {
                            let w = u[(pp, q)];
                            if w == 0.0 {
                                continue;
                            }
                            let off = ni * (pp + p * k);
                            axpy(&mut out.data[off..off + ni], w, src);
                        }
                    }
                }
            }
            Mode::Three => {
                let slab = ni * nj;
                for q in 0..nk {
                    let src = &self.data[q * slab..(q + 1) * slab];
                    for pp in 0..p {
                        let w = u[(pp, q)];
                        if w == 0.0 {
                            continue;
                        }
                        axpy(&mut out.data[pp * slab..(pp + 1) * slab], w, src);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `unfold(self, n) * unfold(other, n)ᵀ`, i.e. contraction over the two
    /// modes other than `n`. Those two dimensions must agree.
    pub fn mode_gram(&self, other: &Tensor3, mode: Mode) -> Result<Matrix> {
        let a = mode.axis();
        for ax in 0..3 {
            if ax != a && self.dims[ax] != other.dims[ax] {
                return Err(Error::dims(format!(
                    "mode-{mode} contraction of {:?} with {:?}",
                    self.dims, other.dims
                )));
            }
        }
        let [ni, nj, nk] = self.dims;
        let p = self.dims[a];
        let q = other.dims[a];
        let mut g = Matrix::zeros(p, q);
        match mode {
            Mode::One => {
                let oi = other.dims[0];
                for col in 0..nj * nk {
                    let x = &self.data[col * ni..(col + 1) * ni];
                    let y = &other.data[col * oi..(col + 1) * oi];
                    for (b, &yb) in y.iter().enumerate() {
                        if yb == 0.0 {
                            continue;
                        }
                        axpy(g.column_mut(b), yb, x);
                    }
                }
            }
            Mode::Two => {
                let oj = other.dims[1];
                for k in 0..nk {
                    for aa in 0..nj {
                        let x = &self.data[ni * (aa + nj * k)..ni * (aa + nj * k + 1)];
                        for b in 0..oj {
                            let y = &other.data[ni * (b + oj * k)..ni * (b + oj * k + 1)];
                            g[(aa, b)] += dot(x, y);
                        }
                    }
                }
            }
            Mode::Three => {
                let slab = ni * nj;
                for aa in 0..nk {
                    let x = &self.data[aa * slab..(aa + 1) * slab];
                    for b in 0..other.dims[2] {
                        let y = &other.data[b * slab..(b + 1) * slab];
                        g[(aa, b)] = dot(x, y);
                    }
                }
            }
        }
        Ok(g)
    }

    /// `self ×_1 a ×_2 b ×_3 c`, contracting the smallest intermediate first.
    pub fn multilinear(&self, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
        self.mode_product(c, Mode::Three)?
            .mode_product(b, Mode::Two)?
            .mode_product(a, Mode::One)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
