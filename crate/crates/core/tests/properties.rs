mod common;

use common::*;
use lmn_fusion::degradation::{add_noise, build_spatial, build_spectral, degrade_spatial, degrade_spectral};
use lmn_fusion::linalg::sigma_max;
use lmn_fusion::metrics::{compute_metrics, nre, rmse, rsnr_db, sam};
use lmn_fusion::model::{make_special_shape, ModelKind, Ranks};
use lmn_fusion::regularization::{
    build_h1, build_h2, build_h3, majorizer_value, majorizer_weights, phi_p_eps_slice,
};
use lmn_fusion::solver::extrapolation_next;
use lmn_fusion::synth::unfolding_spectrum;
use lmn_fusion::tensor::kron;
use lmn_fusion::{Matrix, Mode, Tensor3};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = [usize; 3]> {
    (1usize..9, 1usize..8, 1usize..7).prop_map(|(i, j, k)| [i, j, k])
}

fn mode() -> impl Strategy<Value = Mode> {
    (1usize..4).prop_map(|n| Mode::from_index(n).unwrap())
}

fn ranks() -> impl Strategy<Value = Vec<Ranks>> {
    proptest::collection::vec((1usize..4, 1usize..4, 1usize..4).prop_map(|(l, m, n)| Ranks::new(l, m, n)), 1..4)
}

fn rel(a: &Tensor3, b: &Tensor3) -> f64 {
    rel_err(a.data(), b.data())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfold_fold_roundtrip_is_bitwise(d in dims(), m in mode(), seed in any::<u64>()) {
        let t = gaussian_tensor(d, &mut rng(seed));
        prop_assert_eq!(Tensor3::fold(&t.unfold(m), m, d).unwrap(), t);
    }

    #[test]
    fn mode_product_unfolds_to_matrix_product(d in dims(), m in mode(), rows in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = gaussian_tensor(d, &mut r);
        let u = gaussian_matrix(rows, t.dim(m), &mut r);
        let lhs = t.mode_product(&u, m).unwrap().unfold(m);
        let rhs = u.matmul(&t.unfold(m)).unwrap();
        prop_assert!(rel_err(lhs.data(), rhs.data()) <= 1e-12);
    }

    #[test]
    fn spatial_mode_products_commute(d in dims(), p in 1usize..6, q in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = gaussian_tensor(d, &mut r);
        let u = gaussian_matrix(p, d[0], &mut r);
        let v = gaussian_matrix(q, d[1], &mut r);
        let a = t.mode_product(&u, Mode::One).unwrap().mode_product(&v, Mode::Two).unwrap();
        let b = t.mode_product(&v, Mode::Two).unwrap().mode_product(&u, Mode::One).unwrap();
        prop_assert!(rel(&a, &b) <= 1e-12);
    }

    #[test]
    fn kronecker_spectral_norm_is_product(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = gaussian_matrix(3, 3, &mut r);
        let b = gaussian_matrix(3, 3, &mut r);
        let lhs = sigma_max(&kron(&a, &b)).unwrap();
        let rhs = sigma_max(&a).unwrap() * sigma_max(&b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs);
    }

    #[test]
    fn reconstruction_is_linear_in_each_factor(rk in ranks(), alpha in -3.0f64..3.0, which in 0usize..4, seed in any::<u64>()) {
        let model = make_special_shape(ModelKind::Lmn, [5, 6, 4], &rk, seed).unwrap();
        let r = seed as usize % rk.len();
        let mut scaled = model.clone();
        let t = &mut scaled.terms[r];
        match which {
            0 => t.a = t.a.scaled(alpha),
            1 => t.b = t.b.scaled(alpha),
            2 => t.c = t.c.scaled(alpha),
            _ => t.core = t.core.scaled(alpha),
        }
        let mut expected = model.reconstruct().unwrap();
        expected.axpy(alpha - 1.0, &model.reconstruct_term(r).unwrap()).unwrap();
        prop_assert!(rel(&scaled.reconstruct().unwrap(), &expected) <= 1e-12);
    }

    #[test]
    fn reconstruction_is_gauge_invariant(rk in ranks(), seed in any::<u64>()) {
        let model = make_special_shape(ModelKind::Lmn, [6, 5, 7], &rk, seed).unwrap();
        let mut r = rng(seed.wrapping_add(1));
        let mut moved = model.clone();
        for t in &mut moved.terms {
            let rk = t.ranks();
            let (ta, tb, tc) = (nonsingular(rk.l, &mut r), nonsingular(rk.m, &mut r), nonsingular(rk.n, &mut r));
            t.a = t.a.matmul(&ta).unwrap();
            t.b = t.b.matmul(&tb).unwrap();
            t.c = t.c.matmul(&tc).unwrap();
            t.core = t.core.multilinear(&inverse(&ta), &inverse(&tb), &inverse(&tc)).unwrap();
        }
        prop_assert!(rel(&moved.reconstruct().unwrap(), &model.reconstruct().unwrap()) <= 1e-10);
    }

    #[test]
    fn smoothness_penalty_ignores_signs(x in proptest::collection::vec(-5.0f64..5.0, 1..20), flips in any::<u32>(),
                                        p in 0.1f64..1.0, eps in 1e-4f64..1.0) {
        let flipped: Vec<f64> = x.iter().enumerate().map(|(i, v)| if flips >> (i % 32) & 1 == 1 { -v } else { *v }).collect();
        let (a, b) = (phi_p_eps_slice(&x, p, eps), phi_p_eps_slice(&flipped, p, eps));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn majorizer_dominates_and_touches(x_t in proptest::collection::vec(-3.0f64..3.0, 1..10), seed in any::<u64>(),
                                       p in 0.1f64..1.0, eps in 1e-4f64..1.0) {
        let mut r = rng(seed);
        let dir = gaussian_matrix(x_t.len(), 1, &mut r);
        let at = majorizer_value(&x_t, &x_t, p, eps);
        let phi_t = phi_p_eps_slice(&x_t, p, eps);
        prop_assert!((at - phi_t).abs() <= 1e-10 * phi_t);
        for s in [-2.0, -0.3, 0.01, 0.5, 4.0] {
            let x: Vec<f64> = x_t.iter().zip(dir.data()).map(|(a, d)| a + s * d).collect();
            prop_assert!(majorizer_value(&x, &x_t, p, eps) - phi_p_eps_slice(&x, p, eps) >= -1e-10);
        }
        let w = majorizer_weights(&x_t, p, eps);
        for (i, (&xi, wi)) in x_t.iter().zip(&w).enumerate() {
            let grad_phi = p * xi * (xi * xi + eps).powf(p / 2.0 - 1.0);
            prop_assert!((2.0 * wi * xi - grad_phi).abs() <= 1e-8, "entry {}", i);
        }
    }

    #[test]
    fn difference_operators_annihilate_polynomials(n in 3usize..12, c0 in -4.0f64..4.0, c1 in -4.0f64..4.0) {
        let constant = vec![c0; n];
        let affine: Vec<f64> = (0..n).map(|i| c0 + c1 * i as f64).collect();
        for h in [build_h1(n).unwrap(), build_h2(n).unwrap()] {
            let v = h.matmul(&Matrix::from_col_major(n, 1, constant.clone()).unwrap()).unwrap();
            prop_assert!(v.data().iter().all(|x| x.abs() <= 1e-12));
        }
        let v = build_h3(n).unwrap().matmul(&Matrix::from_col_major(n, 1, affine).unwrap()).unwrap();
        prop_assert!(v.data().iter().all(|x| x.abs() <= 1e-10));
    }

    #[test]
    fn metric_identities_and_ranges(d in dims(), seed in any::<u64>(), noise in 1e-3f64..1.0) {
        let mut r = rng(seed);
        let reference = gaussian_tensor(d, &mut r);
        let mut estimate = gaussian_tensor(d, &mut r).scaled(noise);
        estimate.axpy(1.0, &reference).unwrap();
        let m = compute_metrics(&reference, &estimate, 1).unwrap();
        prop_assert!(m.rmse >= 0.0 && m.nre >= 0.0);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&m.sam_rad));
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m.cc));
        let numel = reference.numel() as f64;
        let via_rmse = 20.0 * (reference.frobenius_norm() / (rmse(&reference, &estimate).unwrap() * numel.sqrt())).log10();
        let rs = rsnr_db(&reference, &estimate).unwrap();
        prop_assert!((rs - via_rmse).abs() <= 1e-9 * rs.abs().max(1.0));
        prop_assert!((rs + 20.0 * nre(&reference, &estimate).unwrap().log10()).abs() <= 1e-9 * rs.abs().max(1.0));
    }

    #[test]
    fn sam_ignores_positive_pixel_scaling(d in dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let reference = gaussian_tensor(d, &mut r);
        let estimate = gaussian_tensor(d, &mut r);
        let scales = gaussian_matrix(d[0], d[1], &mut r);
        let scaled = Tensor3::from_fn(d, |i, j, k| estimate.get(i, j, k) * (0.1 + scales[(i, j)].abs()));
        let (a, b) = (sam(&reference, &estimate).unwrap(), sam(&reference, &scaled).unwrap());
        prop_assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn degradation_preserves_constants_in_any_order(half in 1usize..6, ratio in 1usize..4, taps in 0usize..4,
                                                     k in 2usize..8, level in -3.0f64..3.0, seed in any::<u64>()) {
        let n = 2 * half * ratio;
        let size = 2 * taps + 1;
        let p1 = build_spatial(n, ratio, size, ratio as f64 / 2.0).unwrap();
        let p2 = build_spatial(n, ratio, size, 1.0).unwrap();
        let windows: Vec<Vec<usize>> = (0..k / 2).map(|w| vec![2 * w, 2 * w + 1]).collect();
        let pm = build_spectral(k, &windows).unwrap();
        let constant = Tensor3::filled([n, n, k], level);
        for out in [degrade_spatial(&constant, &p1, &p2).unwrap(), degrade_spectral(&constant, &pm).unwrap()] {
            prop_assert!(out.data().iter().all(|v| (v - level).abs() <= 1e-12));
        }
        let t = gaussian_tensor([n, n, k], &mut rng(seed));
        let a = degrade_spatial(&t, &p1, &p2).unwrap();
        let b = t.mode_product(&p2, Mode::Two).unwrap().mode_product(&p1, Mode::One).unwrap();
        prop_assert!(rel(&a, &b) <= 1e-12);
    }

    #[test]
    fn noise_is_seed_deterministic(d in dims(), seed in any::<u64>(), snr in 5.0f64..60.0) {
        let t = gaussian_tensor(d, &mut rng(seed));
        prop_assert_eq!(add_noise(&t, snr, seed).unwrap(), add_noise(&t, snr, seed).unwrap());
    }

    #[test]
    fn spectrum_energy_climbs_to_one(d in dims(), m in mode(), seed in any::<u64>()) {
        let t = gaussian_tensor(d, &mut rng(seed));
        let s = unfolding_spectrum(&t, m).unwrap();
        prop_assert!(s.energy.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((s.energy.last().unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn spectrum_of_a_term_reaches_full_energy_at_its_rank(l in 1usize..4, m in 1usize..4, n in 1usize..4, seed in any::<u64>()) {
        let term = make_special_shape(ModelKind::Lmn, [7, 8, 6], &[Ranks::new(l, m, n)], seed).unwrap().reconstruct().unwrap();
        for (mode, rank) in [(Mode::One, l), (Mode::Two, m), (Mode::Three, n)] {
            let s = unfolding_spectrum(&term, mode).unwrap();
            let first_full = s.energy.iter().position(|&e| e >= 1.0 - 1e-12).unwrap() + 1;
            // A generic core can have lower multilinear rank only when l·m·n forbids it.
            let expected = rank.min(match mode { Mode::One => m * n, Mode::Two => l * n, Mode::Three => l * m });
            prop_assert_eq!(first_full, expected);
        }
    }

    #[test]
    fn extrapolation_weights_stay_in_unit_interval(gamma in 1.0f64..1e6) {
        let (next, mu) = extrapolation_next(gamma);
        prop_assert!(next > gamma);
        prop_assert!((0.0..1.0).contains(&mu));
    }
}
