//! Dense factorizations backed by nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

const SVD_MAX_ITER: usize = 10_000;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.data())
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_col_major(m.nrows(), m.ncols(), m.as_slice().to_vec()).expect("shape from nalgebra")
}

/// Top-k singular triplets `(U_k, s_k, V_k)` in descending order.
#[derive(Clone, Debug)]
pub struct SingularTriplets {
    pub u: Matrix,
    pub values: Vec<f64>,
    pub v: Matrix,
}

fn svd(m: &Matrix, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::dims("singular values of an empty matrix"));
    }
    SVD::try_new(to_na(m), vectors, vectors, f64::EPSILON, SVD_MAX_ITER).ok_or(
        Error::NoConvergence {
            iterations: SVD_MAX_ITER,
        },
    )
}

/// Singular values in nonincreasing order; `min(rows, cols)` of them.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = svd(m, false)?.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn sigma_max(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix, which is
/// also its largest singular value.
pub fn sym_sigma_max(m: &Matrix) -> f64 {
    if m.rows() == 0 {
        return 0.0;
    }
    if m.rows() == 1 {
        return m[(0, 0)].abs();
    }
    SymmetricEigen::new(to_na(m))
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Leading `k` singular triplets.
pub fn top_singular_triplets(m: &Matrix, k: usize) -> Result<SingularTriplets> {
    let r = m.rows().min(m.cols());
    if k > r {
        return Err(Error::arg(format!(
            "requested {k} singular triplets of a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let dec = svd(m, true)?;
    let (u, vt) = match (&dec.u, &dec.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => unreachable!("vectors requested"),
    };
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let order = &order[..k];
    let u_k = Matrix::from_fn(m.rows(), k, |i, j| u[(i, order[j])]);
    let v_k = Matrix::from_fn(m.cols(), k, |i, j| vt[(order[j], i)]);
    let values = order.iter().map(|&j| dec.singular_values[j]).collect();
    Ok(SingularTriplets {
        u: u_k,
        values,
        v: v_k,
    })
}

/// Solves `(g + ridge·I) x = rhs` for symmetric positive definite `g`.
/// Returns `None` when the Cholesky factorization fails.
pub fn solve_spd(g: &Matrix, rhs: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let n = g.rows();
    let mut a = to_na(g);
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    let chol = a.cholesky()?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Some(x.as_slice().to_vec())
}

/// Thin QR orthonormal basis of the columns.
pub fn orthonormal_basis(m: &Matrix) -> Matrix {
    let q = to_na(m).qr().q();
    from_na(&q.columns(0, m.cols().min(m.rows())).into_owned())
}

/// The `k` right singular vectors with the smallest singular values, as
/// columns. Requires `rows >= cols`.
pub fn smallest_right_singular_vectors(m: &Matrix, k: usize) -> Result<Matrix> {
    if m.rows() < m.cols() || k > m.cols() {
        return Err(Error::arg(format!(
            "null-space basis of size {k} from a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let dec = svd(m, true)?;
    let vt = dec.v_t.as_ref().expect("vectors requested");
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&a, &b| dec.singular_values[a].total_cmp(&dec.singular_values[b]));
    Ok(Matrix::from_fn(m.cols(), k, |i, j| vt[(order[j], i)]))
}

/// Real parts of the eigenvalues of a square matrix, ascending.
pub fn real_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    if m.rows() != m.cols() {
        return Err(Error::dims(format!("eigenvalues of a {}x{} matrix", m.rows(), m.cols())));
    }
    let schur = Schur::try_new(to_na(m), f64::EPSILON, SVD_MAX_ITER).ok_or(Error::NoConvergence {
        iterations: SVD_MAX_ITER,
    })?;
    let mut ev: Vec<f64> = schur.complex_eigenvalues().iter().map(|c| c.re).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Moore-Penrose pseudo-inverse.
pub fn pseudo_inverse(m: &Matrix) -> Result<Matrix> {
    let dec = svd(m, true)?;
    let tol = f64::EPSILON * m.rows().max(m.cols()) as f64 * dec.singular_values.max();
    dec.pseudo_inverse(tol)
        .map(|p| from_na(&p))
        .map_err(|e| Error::arg(e.to_string()))
}
