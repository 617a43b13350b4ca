//! Smoothness penalties on the factor matrices and the core penalty.
//!
//! Spatial factors `A_r`, `B_r` carry the nonconvex total-variation penalty
//! `φ_{p,ε}(H A) = Σ ((H A)_{ij}² + ε)^{p/2}`, handled through its quadratic
//! majorizer `Σ w_i x_i² + const` with `w_i = (p/2)(x_{t,i}² + ε)^{(p-2)/2}`.
//! Spectral factors `C_r` carry the Tikhonov penalty `‖H3 C‖²_F`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LmnModel;
use crate::tensor::Matrix;

fn default_p() -> f64 {
    0.5
}

fn default_epsilon() -> f64 {
    0.01
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegConfig {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            lambda: 0.0,
            eta: 0.0,
            p: default_p(),
            epsilon: default_epsilon(),
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.eta >= 0.0) {
            return Err(Error::arg("lambda and eta must be nonnegative"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::arg(format!("p = {} outside (0, 1]", self.p)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::arg(format!("epsilon = {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

/// `(n-1) x n` first-difference matrix, `H(i,i) = 1`, `H(i,i+1) = -1`.
pub fn build_h1(n: usize) -> Result<Matrix> {
    if n < 2 {
        return Err(Error::arg(format!("first differences need n >= 2, got {n}")));
    }
    let mut h = Matrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        h[(i, i)] = 1.0;
        h[(i, i + 1)] = -1.0;
    }
    Ok(h)
}

pub fn build_h2(n: usize) -> Result<Matrix> {
    build_h1(n)
}

/// `(K-2) x K` second-difference matrix with stencil `[1, -2, 1]`.
pub fn build_h3(k: usize) -> Result<Matrix> {
    if k < 3 {
        return Err(Error::arg(format!("second differences need K >= 3, got {k}")));
    }
    let mut h = Matrix::zeros(k - 2, k);
    for i in 0..k - 2 {
        h[(i, i)] = 1.0;
        h[(i, i + 1)] = -2.0;
        h[(i, i + 2)] = 1.0;
    }
    Ok(h)
}

/// `Σ (x² + ε)^{p/2}` over all entries.
pub fn phi_p_eps_slice(x: &[f64], p: f64, epsilon: f64) -> f64 {
    x.iter().map(|v| (v * v + epsilon).powf(p / 2.0)).sum()
}

pub fn phi_p_eps(x: &Matrix, p: f64, epsilon: f64) -> f64 {
    phi_p_eps_slice(x.data(), p, epsilon)
}

/// Majorizer weights `(p/2)(x_t² + ε)^{(p-2)/2}`.
pub fn majorizer_weights(x_t: &[f64], p: f64, epsilon: f64) -> Vec<f64> {
    x_t.iter()
        .map(|v| 0.5 * p * (v * v + epsilon).powf((p - 2.0) / 2.0))
        .collect()
}

/// Value of the quadratic majorizer built at `x_t`, evaluated at `x`.
pub fn majorizer_value(x: &[f64], x_t: &[f64], p: f64, epsilon: f64) -> f64 {
    let w = majorizer_weights(x_t, p, epsilon);
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| {
            let c = (2.0 - p) / 2.0 * (2.0 / p * wi).powf(p / (p - 2.0)) + epsilon * wi;
            wi * xi * xi + c
        })
        .sum()
}

/// `H1 X`: first differences down each column.
pub fn first_differences(x: &Matrix) -> Matrix {
    let n = x.rows();
    if n < 2 {
        return Matrix::zeros(0, x.cols());
    }
    Matrix::from_fn(n - 1, x.cols(), |i, j| x[(i, j)] - x[(i + 1, j)])
}

/// `H1ᵀ Y` for `Y` with `n-1` rows.
pub fn first_differences_adjoint(y: &Matrix) -> Matrix {
    let n = y.rows() + 1;
    Matrix::from_fn(n, y.cols(), |i, j| {
        let mut s = 0.0;
        if i < n - 1 {
            s += y[(i, j)];
        }
        if i > 0 {
            s -= y[(i - 1, j)];
        }
        s
    })
}

/// `H3 X`: second differences down each column.
pub fn second_differences(x: &Matrix) -> Matrix {
    let n = x.rows();
    if n < 3 {
        return Matrix::zeros(0, x.cols());
    }
    Matrix::from_fn(n - 2, x.cols(), |i, j| {
        x[(i, j)] - 2.0 * x[(i + 1, j)] + x[(i + 2, j)]
    })
}

/// `H3ᵀ Y` for `Y` with `n-2` rows.
pub fn second_differences_adjoint(y: &Matrix) -> Matrix {
    let n = y.rows() + 2;
    Matrix::from_fn(n, y.cols(), |i, j| {
        let mut s = 0.0;
        if i < n - 2 {
            s += y[(i, j)];
        }
        if i >= 1 && i - 1 < n - 2 {
            s -= 2.0 * y[(i - 1, j)];
        }
        if i >= 2 {
            s += y[(i - 2, j)];
        }
        s
    })
}

/// `φ_{p,ε}(H1 X)`.
pub fn tv_penalty(x: &Matrix, p: f64, epsilon: f64) -> f64 {
    phi_p_eps(&first_differences(x), p, epsilon)
}

/// Majorized TV term `Σ w_i (H1 X)_i² + const` with weights at `anchor`.
pub fn tv_majorizer(x: &Matrix, anchor: &Matrix, p: f64, epsilon: f64) -> f64 {
    majorizer_value(
        first_differences(x).data(),
        first_differences(anchor).data(),
        p,
        epsilon,
    )
}

/// Gradient of the majorized TV term, `2 H1ᵀ diag(w) H1 X`, with `w` the
/// majorizer weights of `H1 X`. At `X` itself this is also the gradient of
/// `φ_{p,ε}(H1 X)`.
pub fn tv_majorizer_gradient(x: &Matrix, weights: &Matrix) -> Matrix {
    let mut d = first_differences(x);
    for (v, w) in d.data_mut().iter_mut().zip(weights.data()) {
        *v *= 2.0 * w;
    }
    first_differences_adjoint(&d)
}

/// Majorizer weights of `H1 X` as an `(n-1) x cols` matrix.
pub fn tv_weights(x: &Matrix, p: f64, epsilon: f64) -> Matrix {
    let d = first_differences(x);
    Matrix::from_col_major(d.rows(), d.cols(), majorizer_weights(d.data(), p, epsilon))
        .expect("same shape")
}

/// `‖H3 C‖²_F`.
pub fn tikhonov(c: &Matrix, h3: &Matrix) -> Result<f64> {
    let hc = h3.matmul(c)?;
    Ok(hc.data().iter().map(|v| v * v).sum())
}

/// `½ Σ_r ‖D_r‖²_F` over cores that are not frozen.
pub fn core_penalty(model: &LmnModel) -> f64 {
    model
        .terms
        .iter()
        .filter(|t| !t.core_frozen)
        .map(|t| 0.5 * t.core.squared_norm())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_special_shape, ModelKind, Ranks};
    use crate::tensor::{kron, Tensor3};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn first_difference_matrices() {
        assert_eq!(build_h1(2).unwrap(), Matrix::from_rows(&[&[1.0, -1.0]]));
        assert_eq!(
            build_h2(3).unwrap(),
            Matrix::from_rows(&[&[1.0, -1.0, 0.0], &[0.0, 1.0, -1.0]])
        );
        let c = Matrix::from_fn(5, 1, |_, _| 4.2);
        assert!(build_h1(5).unwrap().matmul(&c).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(build_h1(1).is_err());
    }

    #[test]
    fn second_difference_matrices() {
        assert_eq!(
            build_h3(5).unwrap(),
            Matrix::from_rows(&[
                &[1.0, -2.0, 1.0, 0.0, 0.0],
                &[0.0, 1.0, -2.0, 1.0, 0.0],
                &[0.0, 0.0, 1.0, -2.0, 1.0],
            ])
        );
        assert_eq!(build_h3(3).unwrap(), Matrix::from_rows(&[&[1.0, -2.0, 1.0]]));
        let affine = Matrix::from_fn(6, 1, |t, _| 0.3 + 1.7 * t as f64);
        let out = build_h3(6).unwrap().matmul(&affine).unwrap();
        assert!(out.data().iter().all(|v| v.abs() < 1e-14));
        assert!(build_h3(2).is_err());
    }

    #[test]
    fn matrix_free_operators_match_dense() {
        let x = random_matrix(7, 3, 1);
        let h1 = build_h1(7).unwrap();
        let h3 = build_h3(7).unwrap();
        assert!(first_differences(&x).sub(&h1.matmul(&x).unwrap()).unwrap().frobenius_norm() < 1e-14);
        assert!(second_differences(&x).sub(&h3.matmul(&x).unwrap()).unwrap().frobenius_norm() < 1e-14);
        let y1 = random_matrix(6, 3, 2);
        let y3 = random_matrix(5, 3, 3);
        assert!(first_differences_adjoint(&y1)
            .sub(&h1.t_matmul(&y1).unwrap())
            .unwrap()
            .frobenius_norm()
            < 1e-14);
        assert!(second_differences_adjoint(&y3)
            .sub(&h3.t_matmul(&y3).unwrap())
            .unwrap()
            .frobenius_norm()
            < 1e-14);
    }

    #[test]
    fn kronecker_form_matches_matrix_free() {
        // H̃1 = H1 ⊗ I_L acts on the row-major vectorization of A.
        let (n, l) = (6, 3);
        let a = random_matrix(n, l, 4);
        let w = random_matrix(n - 1, l, 5);
        let w = Matrix::from_fn(n - 1, l, |i, j| w[(i, j)].abs() + 0.1);
        let ht = kron(&build_h1(n).unwrap(), &Matrix::identity(l));
        let vec_a = Matrix::from_fn(n * l, 1, |idx, _| a[(idx / l, idx % l)]);
        let diag = Matrix::from_fn((n - 1) * l, (n - 1) * l, |p, q| {
            if p == q {
                w[(p / l, p % l)]
            } else {
                0.0
            }
        });
        let dense = ht
            .t_matmul(&diag.matmul(&ht.matmul(&vec_a).unwrap()).unwrap())
            .unwrap()
            .scaled(2.0);
        let free = tv_majorizer_gradient(&a, &w);
        for idx in 0..n * l {
            assert_relative_eq!(dense[(idx, 0)], free[(idx / l, idx % l)], epsilon = 1e-13);
        }
    }

    #[test]
    fn phi_examples() {
        let z = Matrix::zeros(2, 2);
        assert_relative_eq!(phi_p_eps(&z, 0.5, 0.01), 4.0 * 0.01f64.powf(0.25), max_relative = 1e-12);
        assert_relative_eq!(phi_p_eps(&z, 0.5, 0.01), 1.2649111, max_relative = 1e-7);
        let one = Matrix::from_rows(&[&[1.0]]);
        assert!((phi_p_eps(&one, 1.0, 1e-12) - 1.0).abs() < 1e-6);
        let x = random_matrix(3, 3, 6);
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += (x[(i, j)].powi(2) + 0.01).powf(0.25);
            }
        }
        assert_relative_eq!(phi_p_eps(&x, 0.5, 0.01), s, max_relative = 1e-14);
        assert_relative_eq!(phi_p_eps(&x.scaled(-1.0), 0.5, 0.01), s, max_relative = 1e-14);
    }

    #[test]
    fn weights_at_zero() {
        let w = majorizer_weights(&[0.0, 0.0], 0.5, 0.01);
        let expected = 0.25 * 0.01f64.powf(-0.75);
        assert_relative_eq!(w[0], expected, max_relative = 1e-12);
        assert_relative_eq!(w[1], 7.9057, max_relative = 1e-4);
    }

    #[test]
    fn majorizer_touches_and_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(p, eps) in &[(0.5, 1e-2), (1.0, 1e-4)] {
            let xt: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert_relative_eq!(
                majorizer_value(&xt, &xt, p, eps),
                phi_p_eps_slice(&xt, p, eps),
                max_relative = 1e-12
            );
            for _ in 0..50 {
                let x: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
                let gap = majorizer_value(&x, &xt, p, eps) - phi_p_eps_slice(&x, p, eps);
                assert!(gap >= -1e-10, "gap {gap}");
            }
        }
    }

    #[test]
    fn tikhonov_examples() {
        let h3 = build_h3(3).unwrap();
        let affine = Matrix::from_fn(3, 2, |i, j| 1.0 + (j as f64 + 1.0) * i as f64);
        assert_eq!(tikhonov(&affine, &h3).unwrap(), 0.0);
        let e1 = Matrix::from_rows(&[&[1.0], &[0.0], &[0.0]]);
        assert_eq!(tikhonov(&e1, &h3).unwrap(), 1.0);
        let c = random_matrix(6, 2, 8);
        let h3 = build_h3(6).unwrap();
        let hc = h3.matmul(&c).unwrap().frobenius_norm();
        assert_relative_eq!(tikhonov(&c, &h3).unwrap(), hc * hc, max_relative = 1e-14);
        assert!(tikhonov(&c, &build_h3(5).unwrap()).is_err());
    }

    #[test]
    fn core_penalty_examples() {
        let mut m = make_special_shape(ModelKind::Lmn, [4, 4, 4], &[Ranks::new(2, 2, 2)], 1).unwrap();
        m.terms[0].core = Tensor3::zeros([2, 2, 2]);
        assert_eq!(core_penalty(&m), 0.0);
        m.terms[0].core = Tensor3::filled([2, 2, 2], 1.0);
        assert_eq!(core_penalty(&m), 4.0);

        let m = make_special_shape(ModelKind::Lmn, [4, 4, 4], &[Ranks::new(2, 2, 2); 3], 2).unwrap();
        let mut s = 0.0;
        for t in &m.terms {
            for v in t.core.data() {
                s += v * v;
            }
        }
        assert_relative_eq!(core_penalty(&m), 0.5 * s, max_relative = 1e-14);

        let ll1 = make_special_shape(ModelKind::Ll1, [4, 4, 4], &crate::model::ll1_ranks(2, 2), 3).unwrap();
        assert_eq!(core_penalty(&ll1), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(RegConfig::default().validate().is_ok());
        assert!(RegConfig { p: 1.5, ..Default::default() }.validate().is_err());
        assert!(RegConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(RegConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        let parsed: RegConfig = serde_json::from_str(r#"{"lambda": 0.1}"#).unwrap();
        assert_eq!(parsed.p, 0.5);
        assert!(serde_json::from_str::<RegConfig>(r#"{"lamda": 0.1}"#).is_err());
    }
}
