#![allow(dead_code)]

use lmn_fusion::degradation::{contiguous_windows, DegradationPreset, DegradationSet};
use lmn_fusion::model::Ranks;
use lmn_fusion::solver::{Block, Params, Problem};
use lmn_fusion::synth::SyntheticSpec;
use lmn_fusion::{Matrix, Tensor3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_tensor(dims: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| StandardNormal.sample(rng))
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `‖a − b‖ / ‖b‖`, or `‖a − b‖` when `b` vanishes.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let base: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// The 24×24×32, ratio 2, eight-band, two-term (3,3,3) instance.
pub fn desk_spec(seed: u64, snr_db: Option<f64>) -> SyntheticSpec {
    SyntheticSpec {
        dims_sri: [24, 24, 32],
        ratio: 2,
        k_m: 8,
        r: 2,
        ranks: Ranks::new(3, 3, 3),
        snr_db,
        seed,
        degradation: None,
    }
}

/// Ratio-2 blur and contiguous band windows on a small SRI.
pub fn small_degradation(dims: [usize; 3], k_m: usize) -> DegradationSet {
    let preset = DegradationPreset {
        blur_size: 3,
        blur_sigma: None,
        ratio: 2,
        band_windows: contiguous_windows(dims[2], k_m).unwrap(),
    };
    DegradationSet::from_preset(&preset, dims).unwrap()
}

/// Identity spatial and spectral operators.
pub fn identity_degradation(dims: [usize; 3]) -> DegradationSet {
    let preset = DegradationPreset {
        blur_size: 1,
        blur_sigma: None,
        ratio: 1,
        band_windows: (0..dims[2]).map(|k| vec![k]).collect(),
    };
    DegradationSet::from_preset(&preset, dims).unwrap()
}

/// Central differences of the majorized block objective.
pub fn fd_gradient(problem: &Problem, params: &Params, r: usize, block: Block, anchor: Option<&Matrix>) -> Vec<f64> {
    let n = params.block(r, block).len();
    (0..n)
        .map(|i| {
            let x = params.block(r, block)[i];
            let h = 1e-6 * (1.0 + x.abs());
            let mut plus = params.clone();
            plus.block_mut(r, block)[i] = x + h;
            let mut minus = params.clone();
            minus.block_mut(r, block)[i] = x - h;
            let fp = problem.block_objective(&plus, r, block, anchor).unwrap();
            let fm = problem.block_objective(&minus, r, block, anchor).unwrap();
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn block_shape(params: &Params, r: usize, block: Block) -> (usize, usize) {
    let t = &params.model.terms[r];
    match block {
        Block::A => t.a.shape(),
        Block::B => t.b.shape(),
        Block::C => t.c.shape(),
        Block::D => (t.core.numel(), 1),
        Block::ATilde => params.hsi_terms.as_ref().unwrap()[r].a_tilde.shape(),
        Block::BTilde => params.hsi_terms.as_ref().unwrap()[r].b_tilde.shape(),
    }
}

/// Relative gradient error per (term, block), with A/B majorizers anchored
/// at a random point near the current value.
pub fn gradient_errors(problem: &Problem, params: &Params, seed: u64) -> Vec<(usize, Block, f64)> {
    let mut r_anchor = rng(seed);
    let mut out = Vec::new();
    for r in 0..params.model.num_terms() {
        for &block in params.blocks() {
            let (rows, cols) = block_shape(params, r, block);
            let anchor = matches!(block, Block::A | Block::B).then(|| {
                let x = Matrix::from_col_major(rows, cols, params.block(r, block).to_vec()).unwrap();
                let mut a = gaussian_matrix(rows, cols, &mut r_anchor).scaled(0.3);
                a.axpy(1.0, &x).unwrap();
                a
            });
            let g = problem.gradient(params, r, block, anchor.as_ref()).unwrap();
            let fd = fd_gradient(problem, params, r, block, anchor.as_ref());
            out.push((r, block, rel_err(&g, &fd)));
        }
    }
    out
}

/// A random matrix shifted towards the identity, hence well conditioned.
pub fn nonsingular(n: usize, r: &mut ChaCha8Rng) -> Matrix {
    let mut m = gaussian_matrix(n, n, r).scaled(0.3);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    m
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn inverse(m: &Matrix) -> Matrix {
    let n = m.rows();
    let mut a = m.clone();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs())).unwrap();
        for j in 0..n {
            let (t, u) = (a[(col, j)], inv[(col, j)]);
            a[(col, j)] = a[(piv, j)];
            a[(piv, j)] = t;
            inv[(col, j)] = inv[(piv, j)];
            inv[(piv, j)] = u;
        }
        let d = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in (0..n).filter(|&i| i != col) {
            let f = a[(i, col)];
            for j in 0..n {
                a[(i, j)] -= f * a[(col, j)];
                inv[(i, j)] -= f * inv[(col, j)];
            }
        }
    }
    inv
}
