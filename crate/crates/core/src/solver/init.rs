//! Deterministic data-driven starting points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::degradation::DegradationSet;
use crate::error::{Error, Result};
use crate::linalg::{
    orthonormal_basis, pseudo_inverse, real_eigenvalues, smallest_right_singular_vectors, solve_spd,
    top_singular_triplets,
};
use crate::model::{HsiFactors, LmnModel, LmnTerm, Ranks};
use crate::regularization::RegConfig;
use crate::tensor::{norm, Matrix, Mode, Tensor3};

use super::problem::{Problem, TermVars};
use super::{Params, StepMode};

/// Successive projection: repeatedly picks the column with the largest
/// residual norm and projects it out of every column.
pub fn pure_pixels(m: &Matrix, count: usize) -> Result<Vec<usize>> {
    if count > m.cols() || count > m.rows() {
        return Err(Error::arg(format!(
            "cannot select {count} pure pixels from a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let mut res = m.clone();
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let (best, best_norm) = (0..res.cols())
            .map(|j| (j, norm(res.column(j))))
            .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        picked.push(best);
        if best_norm == 0.0 {
            continue;
        }
        let u: Vec<f64> = res.column(best).iter().map(|v| v / best_norm).collect();
        for j in 0..res.cols() {
            let col = res.column_mut(j);
            let proj: f64 = col.iter().zip(&u).map(|(a, b)| a * b).sum();
            for (c, ui) in col.iter_mut().zip(&u) {
                *c -= proj * ui;
            }
        }
    }
    Ok(picked)
}

/// Splits the leading `Σ widths` left singular vectors of `m` into blocks.
fn partitioned_subspace(m: &Matrix, widths: &[usize], what: &str) -> Result<Vec<Matrix>> {
    let total: usize = widths.iter().sum();
    if total > m.rows().min(m.cols()) {
        return Err(Error::arg(format!(
            "{what}: total rank {total} exceeds the {}x{} unfolding",
            m.rows(),
            m.cols()
        )));
    }
    let u = top_singular_triplets(m, total)?.u;
    let mut out = Vec::with_capacity(widths.len());
    let mut start = 0;
    for &w in widths {
        out.push(u.column_range(start, start + w));
        start += w;
    }
    Ok(out)
}

/// One pure pixel per term followed by leading singular directions of the
/// deflated spectra.
fn spectral_factors(y3: &Matrix, ranks: &[Ranks]) -> Result<Vec<Matrix>> {
    let k = y3.rows();
    if let Some(r) = ranks.iter().find(|r| r.n > k) {
        return Err(Error::arg(format!("spectral rank {} exceeds {k} bands", r.n)));
    }
    let pixels = pure_pixels(y3, ranks.len())?;
    let selected = Matrix::from_fn(k, pixels.len(), |i, j| y3[(i, pixels[j])]);
    let q = orthonormal_basis(&selected);
    let coeff = q.t_matmul(y3)?;
    let deflated = y3.sub(&q.matmul(&coeff)?)?;
    let extra_widths: Vec<usize> = ranks.iter().map(|r| r.n - 1).collect();
    let extra = partitioned_subspace(&deflated, &extra_widths, "spectral init")?;
    let mut out = Vec::with_capacity(ranks.len());
    for (r, (&px, ext)) in pixels.iter().zip(&extra).enumerate() {
        let mut pure = y3.column(px).to_vec();
        let n = norm(&pure);
        if n > 0.0 {
            pure.iter_mut().for_each(|v| *v /= n);
        } else {
            pure[r % k] = 1.0;
        }
        let first = Matrix::from_col_major(k, 1, pure)?;
        out.push(Matrix::hstack(&[&first, ext])?);
    }
    Ok(out)
}

/// Ridge least-squares fit of all free cores to `target` given HSI-side
/// spatial factors `(ha, hb)` and spectral factors of each term.
fn fit_cores(
    target: &Tensor3,
    sides: &[(Matrix, Matrix, Matrix)],
    ranks: &[Ranks],
    frozen: &[bool],
    seed: u64,
) -> Result<Vec<Tensor3>> {
    let free: Vec<usize> = (0..ranks.len()).filter(|&r| !frozen[r]).collect();
    let offsets: Vec<usize> = free
        .iter()
        .scan(0, |acc, &r| {
            let o = *acc;
            *acc += ranks[r].l * ranks[r].m * ranks[r].n;
            Some(o)
        })
        .collect();
    let n: usize = free.iter().map(|&r| ranks[r].l * ranks[r].m * ranks[r].n).sum();
    let mut cores: Vec<Tensor3> = ranks.iter().map(|r| Tensor3::zeros(r.core_dims())).collect();
    if n == 0 {
        return Ok(cores);
    }
    let mut gram = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for (bi, &r) in free.iter().enumerate() {
        let (ha, hb, c) = &sides[r];
        let proj = target.multilinear(&ha.transpose(), &hb.transpose(), &c.transpose())?;
        rhs[offsets[bi]..offsets[bi] + proj.numel()].copy_from_slice(proj.data());
        for (bj, &s) in free.iter().enumerate() {
            let (ha2, hb2, c2) = &sides[s];
            let ga = ha.t_matmul(ha2)?;
            let gb = hb.t_matmul(hb2)?;
            let gc = c.t_matmul(c2)?;
            let [l1, m1, n1] = ranks[r].core_dims();
            let [l2, m2, n2] = ranks[s].core_dims();
            for k2 in 0..n2 {
                for j2 in 0..m2 {
                    for i2 in 0..l2 {
                        let col = offsets[bj] + i2 + l2 * (j2 + m2 * k2);
                        for k1 in 0..n1 {
                            for j1 in 0..m1 {
                                for i1 in 0..l1 {
                                    let row = offsets[bi] + i1 + l1 * (j1 + m1 * k1);
                                    gram.data_mut()[row + n * col] =
                                        ga[(i1, i2)] * gb[(j1, j2)] * gc[(k1, k2)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let scale = (0..n).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
    let solution = solve_spd(&gram, &rhs, 1e-10 * scale.max(f64::MIN_POSITIVE))
        .filter(|x| x.iter().all(|v| v.is_finite()));
    match solution {
        Some(x) => {
            for (bi, &r) in free.iter().enumerate() {
                let len = cores[r].numel();
                cores[r].data_mut().copy_from_slice(&x[offsets[bi]..offsets[bi] + len]);
            }
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = target.frobenius_norm() / (target.numel() as f64).sqrt();
            for &r in &free {
                for v in cores[r].data_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = s * z;
                }
            }
        }
    }
    Ok(cores)
}

fn identity_core(l: usize) -> Tensor3 {
    Tensor3::from_fn([l, l, 1], |p, q, _| if p == q { 1.0 } else { 0.0 })
}

fn check_frozen(ranks: &[Ranks], frozen: &[bool]) -> Result<()> {
    if frozen.len() != ranks.len() {
        return Err(Error::arg("one frozen flag per term is required"));
    }
    for (r, (rk, &f)) in ranks.iter().zip(frozen).enumerate() {
        if f && (rk.l != rk.m || rk.n != 1) {
            return Err(Error::arg(format!("term {r}: frozen cores must be L×L×1, got {rk:?}")));
        }
    }
    Ok(())
}

fn assemble(
    problem: &Problem,
    ranks: &[Ranks],
    frozen: &[bool],
    a: Vec<Matrix>,
    b: Vec<Matrix>,
    c: Vec<Matrix>,
    hsi: Option<Vec<HsiFactors>>,
    on_msi: bool,
    seed: u64,
) -> Result<Params> {
    let mut terms: Vec<LmnTerm> = (0..ranks.len())
        .map(|r| LmnTerm {
            core: if frozen[r] {
                identity_core(ranks[r].l)
            } else {
                Tensor3::zeros(ranks[r].core_dims())
            },
            a: a[r].clone(),
            b: b[r].clone(),
            c: c[r].clone(),
            core_frozen: frozen[r],
        })
        .collect();
    let mut params = Params {
        model: LmnModel::new(terms.clone())?,
        hsi_terms: hsi,
    };
    let (target, sides) = match problem.y_h().filter(|_| !on_msi) {
        Some(y_h) => {
            let mut sides = Vec::new();
            for r in 0..ranks.len() {
                let t = TermVars::from_params(&params, r);
                let (ha, hb) = problem.hsi_side(&t)?.expect("HSI present");
                sides.push((ha, hb, t.c));
            }
            (y_h.clone(), sides)
        }
        None if problem.has_hsi() => {
            let pm = problem.spectral_operator();
            let sides = terms
                .iter()
                .map(|t| Ok((t.a.clone(), t.b.clone(), pm.matmul(&t.c)?)))
                .collect::<Result<Vec<_>>>()?;
            (problem.y_m().clone(), sides)
        }
        None => (
            problem.y_m().clone(),
            terms.iter().map(|t| (t.a.clone(), t.b.clone(), t.c.clone())).collect(),
        ),
    };
    let mut target = target;
    for r in (0..ranks.len()).filter(|&r| frozen[r]) {
        let (ha, hb, c) = &sides[r];
        target.axpy(-1.0, &terms[r].core.multilinear(ha, hb, c)?)?;
    }
    let cores = fit_cores(&target, &sides, ranks, frozen, seed)?;
    for (t, core) in terms.iter_mut().zip(cores) {
        if !t.core_frozen {
            t.core = core;
        }
    }
    params.model = LmnModel::new(terms)?;
    Ok(params)
}

/// Splits the leading mode-1/mode-2 singular subspaces of `y` into per-term
/// blocks by jointly block-diagonalizing the compressed frontal slices.
///
/// With `G_k = Uᵀ Y_k V = Ā S_k B̄ᵀ` and every `S_k` block diagonal, the
/// pairs `(X, Y)` solving `X G_k = G_k Y` for all `k` are
/// `(Ā Λ Ā⁻¹, B̄⁻ᵀ Λ B̄ᵀ)` with `Λ` constant on each block. The eigenspaces of
/// a generic such `X` (and of `Yᵀ`) are the per-term subspaces, paired by
/// eigenvalue. Returns `None` when the slices do not determine the split.
fn block_split(y: &Tensor3, ranks: &[Ranks], seed: u64) -> Result<Option<(Vec<Matrix>, Vec<Matrix>)>> {
    let ls: Vec<usize> = ranks.iter().map(|r| r.l).collect();
    let ms: Vec<usize> = ranks.iter().map(|r| r.m).collect();
    let (n, m) = (ls.iter().sum::<usize>(), ms.iter().sum::<usize>());
    let u = partitioned_subspace(&y.unfold(Mode::One), &[n], "mode-1 init")?.remove(0);
    let v = partitioned_subspace(&y.unfold(Mode::Two), &[m], "mode-2 init")?.remove(0);
    if ranks.len() == 1 {
        return Ok(Some((vec![u], vec![v])));
    }
    let k = y.dims()[2];
    let nvars = n * n + m * m;
    if k * n * m < nvars {
        return Ok(None);
    }
    let g = y
        .mode_product(&u.transpose(), Mode::One)?
        .mode_product(&v.transpose(), Mode::Two)?;
    let scale = g.frobenius_norm();
    if scale == 0.0 {
        return Ok(None);
    }
    let g = g.scaled(1.0 / scale);
    let system = intertwining_system(&g, &g)?;
    let null = smallest_right_singular_vectors(&system, ranks.len())?;

    let nterms = ranks.len();
    let xs: Vec<Matrix> = (0..nterms)
        .map(|c| Matrix::from_col_major(n, n, (0..n * n).map(|i| null[(i, c)]).collect()))
        .collect::<Result<_>>()?;
    let ys: Vec<Matrix> = (0..nterms)
        .map(|c| Ok(Matrix::from_col_major(m, m, (0..m * m).map(|i| null[(n * n + i, c)]).collect())?.transpose()))
        .collect::<Result<_>>()?;
    let basis = Matrix::from_fn(n * n, nterms, |i, c| null[(i, c)]);
    let coords = pseudo_inverse(&basis)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Matrix, Matrix, Vec<f64>, Vec<usize>)> = None;
    for _ in 0..8 {
        let z: Vec<f64> = (0..nterms).map(|_| StandardNormal.sample(&mut rng)).collect();
        let combine = |parts: &[Matrix]| {
            let mut acc = Matrix::zeros(parts[0].rows(), parts[0].cols());
            for (p, &zc) in parts.iter().zip(&z) {
                acc.axpy(zc, p).expect("equal shapes");
            }
            acc
        };
        let (x, yt) = (combine(&xs), combine(&ys));
        // Multiplication by `x` within the solution algebra, in the basis `xs`.
        let mut action = Matrix::zeros(nterms, nterms);
        for (j, xj) in xs.iter().enumerate() {
            let prod = x.matmul(xj)?;
            let col = coords.matmul(&Matrix::from_col_major(n * n, 1, prod.into_data())?)?;
            action.column_mut(j).copy_from_slice(col.data());
        }
        let Ok(centers) = real_eigenvalues(&action) else {
            continue;
        };
        let Some((quality, assignment)) = assign_clusters(&x, &yt, &centers, &ls, &ms)? else {
            continue;
        };
        if best.as_ref().is_none_or(|b| quality > b.0) {
            best = Some((quality, x, yt, centers, assignment));
        }
    }
    let Some((_, x, yt, centers, assignment)) = best else {
        return Ok(None);
    };
    let mut a = Vec::with_capacity(nterms);
    let mut b = Vec::with_capacity(nterms);
    for (r, &cluster) in assignment.iter().enumerate() {
        a.push(u.matmul(&eigenspace(&x, &centers, cluster, ls[r])?)?);
        b.push(v.matmul(&eigenspace(&yt, &centers, cluster, ms[r])?)?);
    }
    Ok(Some((a, b)))
}

/// Spectral projector of `x` onto the eigenvalue `centers[g]`, assuming the
/// spectrum is exactly `centers`.
fn projector(x: &Matrix, centers: &[f64], g: usize) -> Result<Matrix> {
    let n = x.rows();
    let mut p = Matrix::identity(n);
    for (h, &c) in centers.iter().enumerate() {
        if h == g {
            continue;
        }
        let mut shifted = x.clone();
        for i in 0..n {
            shifted.data_mut()[i + n * i] -= c;
        }
        p = shifted.matmul(&p)?.scaled(1.0 / (centers[g] - c));
    }
    Ok(p)
}

fn trace(m: &Matrix) -> f64 {
    (0..m.rows().min(m.cols())).map(|i| m[(i, i)]).sum()
}

/// Matches eigenvalue clusters to terms by the ranks of their projectors.
/// Returns the relative separation of the centers and the cluster of each
/// term.
fn assign_clusters(
    x: &Matrix,
    yt: &Matrix,
    centers: &[f64],
    ls: &[usize],
    ms: &[usize],
) -> Result<Option<(f64, Vec<usize>)>> {
    let nterms = ls.len();
    let spread = centers.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let mut sorted = centers.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let min_gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(spread > 0.0 && min_gap > 1e-8 * spread) {
        return Ok(None);
    }
    let mut dims = Vec::with_capacity(nterms);
    for g in 0..nterms {
        let (tx, ty) = (trace(&projector(x, centers, g)?), trace(&projector(yt, centers, g)?));
        if !((tx - tx.round()).abs() < 0.25 && (ty - ty.round()).abs() < 0.25) {
            return Ok(None);
        }
        dims.push((tx.round() as i64, ty.round() as i64));
    }
    let mut taken = vec![false; nterms];
    let mut assignment = Vec::with_capacity(nterms);
    for r in 0..nterms {
        let Some(g) = (0..nterms).find(|&g| !taken[g] && dims[g] == (ls[r] as i64, ms[r] as i64)) else {
            return Ok(None);
        };
        taken[g] = true;
        assignment.push(g);
    }
    Ok(Some((min_gap / spread, assignment)))
}

/// Orthonormal basis of the invariant subspace of `x` belonging to the
/// eigenvalue `centers[g]`.
fn eigenspace(x: &Matrix, centers: &[f64], g: usize, dim: usize) -> Result<Matrix> {
    Ok(top_singular_triplets(&projector(x, centers, g)?, dim)?.u)
}

/// Per-term spectral subspaces from the diagonal blocks of
/// `y ×1 pinv([a_1 … a_R]) ×2 pinv([b_1 … b_R])`.
fn slab_spectra(y: &Tensor3, a: &[Matrix], b: &[Matrix], ranks: &[Ranks]) -> Result<Option<Vec<Matrix>>> {
    let a_all = Matrix::hstack(&a.iter().collect::<Vec<_>>())?;
    let b_all = Matrix::hstack(&b.iter().collect::<Vec<_>>())?;
    let z = y
        .mode_product(&pseudo_inverse(&a_all)?, Mode::One)?
        .mode_product(&pseudo_inverse(&b_all)?, Mode::Two)?;
    let k = y.dims()[2];
    let (mut off_l, mut off_m) = (0, 0);
    let mut out = Vec::with_capacity(ranks.len());
    for rk in ranks {
        if rk.n > k.min(rk.l * rk.m) {
            return Ok(None);
        }
        let slab = Tensor3::from_fn([rk.l, rk.m, k], |i, j, kk| z.get(off_l + i, off_m + j, kk));
        out.push(top_singular_triplets(&slab.unfold(Mode::Three), rk.n)?.u);
        off_l += rk.l;
        off_m += rk.m;
    }
    Ok(Some(out))
}

/// Linear system whose nullspace holds the pairs `(X, Y)` with
/// `X left_k = right_k Y` for every frontal slice `k`. `X` is stored first,
/// both column-major.
fn intertwining_system(left: &Tensor3, right: &Tensor3) -> Result<Matrix> {
    let [n, m, k] = left.dims();
    let [n2, m2, k2] = right.dims();
    if k != k2 || n != n2 {
        return Err(Error::dims(format!(
            "slices {:?} and {:?} cannot be intertwined",
            left.dims(),
            right.dims()
        )));
    }
    let rows = k * n * m;
    let mut system = Matrix::zeros(rows, n * n + m2 * m);
    let data = system.data_mut();
    for kk in 0..k {
        for j in 0..m {
            for i in 0..n {
                let row = kk * n * m + i + n * j;
                for p in 0..n {
                    data[row + rows * (i + n * p)] += left.get(p, j, kk);
                }
                for q in 0..m2 {
                    data[row + rows * (n * n + q + m2 * j)] -= right.get(i, q, kk);
                }
            }
        }
    }
    Ok(system)
}

/// Re-expresses the HSI-side spatial factors in the basis of the cores,
/// which were fitted on the MSI. Each diagonal block `S` of
/// `y_h ×1 pinv([Ã]) ×2 pinv([B̃])` equals `T ×1 Θ ×2 Φ` with
/// `T = D_r ×3 C_r`, so `Θ⁻¹ S_k = T_k Φᵀ` is a homogeneous linear system.
fn align_hsi_factors(y_h: &Tensor3, params: &Params) -> Result<Vec<HsiFactors>> {
    let hsi = params.hsi_terms.as_ref().expect("blind parameters");
    let at = Matrix::hstack(&hsi.iter().map(|h| &h.a_tilde).collect::<Vec<_>>())?;
    let bt = Matrix::hstack(&hsi.iter().map(|h| &h.b_tilde).collect::<Vec<_>>())?;
    let z = y_h
        .mode_product(&pseudo_inverse(&at)?, Mode::One)?
        .mode_product(&pseudo_inverse(&bt)?, Mode::Two)?;
    let k = y_h.dims()[2];
    let (mut off_l, mut off_m) = (0, 0);
    let mut out = Vec::with_capacity(hsi.len());
    for (term, h) in params.model.terms.iter().zip(hsi) {
        let [l, m, _] = term.core.dims();
        let slab = Tensor3::from_fn([l, m, k], |i, j, kk| z.get(off_l + i, off_m + j, kk));
        off_l += l;
        off_m += m;
        let target = term.core.mode_product(&term.c, Mode::Three)?;
        if k * l * m < l * l + m * m {
            out.push(h.clone());
            continue;
        }
        let null = smallest_right_singular_vectors(&intertwining_system(&slab, &target)?, 1)?;
        let w = null.column(0);
        let theta = pseudo_inverse(&Matrix::from_col_major(l, l, w[..l * l].to_vec())?)?;
        let phi = Matrix::from_col_major(m, m, w[l * l..].to_vec())?.transpose();
        let fitted = target.multilinear(&theta, &phi, &Matrix::identity(k))?;
        let energy = fitted.squared_norm();
        let scale = if energy > 0.0 { slab.data().iter().zip(fitted.data()).map(|(a, b)| a * b).sum::<f64>() / energy } else { 0.0 };
        let candidate = HsiFactors {
            a_tilde: h.a_tilde.matmul(&theta)?,
            b_tilde: h.b_tilde.matmul(&phi.scaled(scale))?,
        };
        out.push(if scale != 0.0 && candidate.a_tilde.is_finite() && candidate.b_tilde.is_finite() {
            candidate
        } else {
            h.clone()
        });
    }
    Ok(out)
}

fn subspace_overlap(x: &Matrix, y: &Matrix) -> Result<f64> {
    let qx = orthonormal_basis(x);
    let qy = orthonormal_basis(y);
    Ok(qx.t_matmul(&qy)?.frobenius_norm())
}

/// Index-based split of the singular subspaces and pure-pixel spectra.
fn baseline_factors(
    y_m: &Tensor3,
    spectral_src: &Tensor3,
    ranks: &[Ranks],
) -> Result<(Vec<Matrix>, Vec<Matrix>, Vec<Matrix>)> {
    let ls: Vec<usize> = ranks.iter().map(|r| r.l).collect();
    let ms: Vec<usize> = ranks.iter().map(|r| r.m).collect();
    Ok((
        partitioned_subspace(&y_m.unfold(Mode::One), &ls, "mode-1 init")?,
        partitioned_subspace(&y_m.unfold(Mode::Two), &ms, "mode-2 init")?,
        spectral_factors(&spectral_src.unfold(Mode::Three), ranks)?,
    ))
}

fn init_from_problem(
    problem: &Problem,
    ranks: &[Ranks],
    frozen: &[bool],
    seed: u64,
) -> Result<Params> {
    if ranks.is_empty() {
        return Err(Error::arg("at least one term is required"));
    }
    check_frozen(ranks, frozen)?;
    let y_m = problem.y_m();
    let spectral_src = problem.y_h().unwrap_or(y_m);
    let msi_split = block_split(y_m, ranks, seed)?;

    if problem.is_blind() {
        let y_h = problem.y_h().expect("blind has HSI");
        let hsi_split = block_split(y_h, ranks, seed.wrapping_add(1))?;
        if let (Some((a, b)), Some((at, bt))) = (&msi_split, &hsi_split) {
            if let (Some(pmc), Some(c_h)) = (slab_spectra(y_m, a, b, ranks)?, slab_spectra(y_h, at, bt, ranks)?) {
                let pm = problem.spectral_operator();
                let mut taken = vec![false; ranks.len()];
                let mut order = vec![usize::MAX; ranks.len()];
                let mut scores = Vec::new();
                for (r, pmc_r) in pmc.iter().enumerate() {
                    for (g, c_g) in c_h.iter().enumerate() {
                        if ranks[r] == ranks[g] {
                            scores.push((subspace_overlap(&pm.matmul(c_g)?, pmc_r)?, r, g));
                        }
                    }
                }
                scores.sort_by(|x, y| y.0.total_cmp(&x.0));
                for (_, r, g) in scores {
                    if order[r] == usize::MAX && !taken[g] {
                        order[r] = g;
                        taken[g] = true;
                    }
                }
                let hsi = order
                    .iter()
                    .map(|&g| HsiFactors {
                        a_tilde: at[g].clone(),
                        b_tilde: bt[g].clone(),
                    })
                    .collect();
                let c = order.iter().map(|&g| c_h[g].clone()).collect();
                let mut params =
                    assemble(problem, ranks, frozen, a.clone(), b.clone(), c, Some(hsi), true, seed)?;
                let aligned = align_hsi_factors(y_h, &params)?;
                params.hsi_terms = Some(aligned);
                return Ok(params);
            }
        }
        let (a, b, c) = baseline_factors(y_m, spectral_src, ranks)?;
        let ls: Vec<usize> = ranks.iter().map(|r| r.l).collect();
        let ms: Vec<usize> = ranks.iter().map(|r| r.m).collect();
        let at = partitioned_subspace(&y_h.unfold(Mode::One), &ls, "HSI mode-1 init")?;
        let bt = partitioned_subspace(&y_h.unfold(Mode::Two), &ms, "HSI mode-2 init")?;
        let hsi = at
            .into_iter()
            .zip(bt)
            .map(|(a_tilde, b_tilde)| HsiFactors { a_tilde, b_tilde })
            .collect();
        return assemble(problem, ranks, frozen, a, b, c, Some(hsi), false, seed);
    }

    if let Some((a, b)) = msi_split {
        let spectra = match problem.spatial_operators() {
            Some((p1, p2)) => {
                let pa = a.iter().map(|x| p1.matmul(x)).collect::<Result<Vec<_>>>()?;
                let pb = b.iter().map(|x| p2.matmul(x)).collect::<Result<Vec<_>>>()?;
                slab_spectra(spectral_src, &pa, &pb, ranks)?
            }
            None => slab_spectra(spectral_src, &a, &b, ranks)?,
        };
        if let Some(c) = spectra {
            return assemble(problem, ranks, frozen, a, b, c, None, false, seed);
        }
    }
    let (a, b, c) = baseline_factors(y_m, spectral_src, ranks)?;
    assemble(problem, ranks, frozen, a, b, c, None, false, seed)
}

/// Starting point for the known-operator problem: `A_r`, `B_r` from the
/// leading singular subspaces of the MSI unfoldings, `C_r` from pure pixels
/// of the HSI, cores by least squares on the HSI.
pub fn initialize(
    y_h: &Tensor3,
    y_m: &Tensor3,
    deg: &DegradationSet,
    ranks: &[Ranks],
    seed: u64,
) -> Result<LmnModel> {
    let problem = Problem::known(y_h, y_m, deg, RegConfig::default(), StepMode::ExactSigma)?;
    Ok(init_from_problem(&problem, ranks, &vec![false; ranks.len()], seed)?.model)
}

/// As [`initialize`], additionally seeding `Ã_r`, `B̃_r` from the HSI
/// unfoldings.
pub fn initialize_blind(
    y_h: &Tensor3,
    y_m: &Tensor3,
    pm: &Matrix,
    ranks: &[Ranks],
    seed: u64,
) -> Result<Params> {
    let problem = Problem::blind(y_h, y_m, pm, RegConfig::default(), StepMode::ExactSigma)?;
    init_from_problem(&problem, ranks, &vec![false; ranks.len()], seed)
}

/// Starting point for fitting one tensor. Terms flagged in `frozen` get an
/// identity `L×L×1` core that is never refit.
pub fn initialize_single(data: &Tensor3, ranks: &[Ranks], frozen: &[bool], seed: u64) -> Result<LmnModel> {
    let problem = Problem::single(data, RegConfig::default(), StepMode::ExactSigma)?;
    Ok(init_from_problem(&problem, ranks, frozen, seed)?.model)
}
