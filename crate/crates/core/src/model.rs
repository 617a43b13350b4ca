//! Rank-(L,M,N) block-term models and their classical special cases.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::tensor::{Matrix, Tensor3};

/// Multilinear rank `(L, M, N)` of one block term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ranks {
    pub l: usize,
    pub m: usize,
    pub n: usize,
}

impl Ranks {
    pub const fn new(l: usize, m: usize, n: usize) -> Self {
        Ranks { l, m, n }
    }

    pub fn core_dims(&self) -> [usize; 3] {
        [self.l, self.m, self.n]
    }
}

impl From<(usize, usize, usize)> for Ranks {
    fn from((l, m, n): (usize, usize, usize)) -> Self {
        Ranks { l, m, n }
    }
}

/// One block term `D ×1 A ×2 B ×3 C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LmnTerm {
    pub core: Tensor3,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Frozen cores are never touched by the solvers (LL1 shape).
    pub core_frozen: bool,
}

impl LmnTerm {
    pub fn ranks(&self) -> Ranks {
        let [l, m, n] = self.core.dims();
        Ranks { l, m, n }
    }

    pub fn ambient_dims(&self) -> [usize; 3] {
        [self.a.rows(), self.b.rows(), self.c.rows()]
    }

    fn validate(&self) -> Result<()> {
        let r = self.ranks();
        if self.a.cols() != r.l || self.b.cols() != r.m || self.c.cols() != r.n {
            return Err(Error::dims(format!(
                "factor widths ({}, {}, {}) do not match core {:?}",
                self.a.cols(),
                self.b.cols(),
                self.c.cols(),
                self.core.dims()
            )));
        }
        let [i, j, k] = self.ambient_dims();
        if r.l > i || r.m > j || r.n > k {
            return Err(Error::dims(format!(
                "ranks {r:?} exceed ambient dims {:?}",
                self.ambient_dims()
            )));
        }
        Ok(())
    }

    pub fn tensor(&self) -> Result<Tensor3> {
        self.core.multilinear(&self.a, &self.b, &self.c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmnModel {
    pub terms: Vec<LmnTerm>,
}

impl LmnModel {
    pub fn new(terms: Vec<LmnTerm>) -> Result<Self> {
        let model = LmnModel { terms };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .terms
            .first()
            .ok_or_else(|| Error::arg("a model needs at least one term"))?;
        let dims = first.ambient_dims();
        for (r, t) in self.terms.iter().enumerate() {
            t.validate()?;
            if t.ambient_dims() != dims {
                return Err(Error::dims(format!(
                    "term {r} has ambient dims {:?}, expected {dims:?}",
                    t.ambient_dims()
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.terms[0].ambient_dims()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn ranks(&self) -> Vec<Ranks> {
        self.terms.iter().map(LmnTerm::ranks).collect()
    }

    /// `Σ_r D_r ×1 A_r ×2 B_r ×3 C_r`.
    pub fn reconstruct(&self) -> Result<Tensor3> {
        self.validate()?;
        let mut out = Tensor3::zeros(self.dims());
        for t in &self.terms {
            out.axpy(1.0, &t.tensor()?)?;
        }
        Ok(out)
    }

    /// The single material tensor `T_r`.
    pub fn reconstruct_term(&self, r: usize) -> Result<Tensor3> {
        let term = self.terms.get(r).ok_or_else(|| {
            Error::arg(format!("term {r} out of range for R = {}", self.terms.len()))
        })?;
        term.tensor()
    }

    pub fn num_params(&self) -> usize {
        let [i, j, k] = self.dims();
        self.terms
            .iter()
            .map(|t| {
                let r = t.ranks();
                let core = if t.core_frozen { 0 } else { r.l * r.m * r.n };
                i * r.l + j * r.m + k * r.n + core
            })
            .sum()
    }

    /// Adds Gaussian noise of relative Frobenius size `relative` to every
    /// factor and free core.
    pub fn perturbed(&self, relative: f64, seed: u64) -> LmnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for t in &mut out.terms {
            perturb_slice(t.a.data_mut(), relative, &mut rng);
            perturb_slice(t.b.data_mut(), relative, &mut rng);
            perturb_slice(t.c.data_mut(), relative, &mut rng);
            if !t.core_frozen {
                perturb_slice(t.core.data_mut(), relative, &mut rng);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.terms.iter().all(|t| {
            t.core.is_finite() && t.a.is_finite() && t.b.is_finite() && t.c.is_finite()
        })
    }
}

/// HSI-side spatial factors `Ã_r`, `B̃_r` standing in for `P1 A_r`, `P2 B_r`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiFactors {
    pub a_tilde: Matrix,
    pub b_tilde: Matrix,
}

/// Parameters of the semi-blind problem (unknown spatial degradation).
#[derive(Clone, Debug, PartialEq)]
pub struct SemiBlindModel {
    pub base: LmnModel,
    pub hsi_terms: Vec<HsiFactors>,
}

impl SemiBlindModel {
    pub fn new(base: LmnModel, hsi_terms: Vec<HsiFactors>) -> Result<Self> {
        let m = SemiBlindModel { base, hsi_terms };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.hsi_terms.len() != self.base.terms.len() {
            return Err(Error::dims(format!(
                "{} HSI factor pairs for {} terms",
                self.hsi_terms.len(),
                self.base.terms.len()
            )));
        }
        let (ih, jh) = self.hsi_spatial_dims();
        for (r, (h, t)) in self.hsi_terms.iter().zip(&self.base.terms).enumerate() {
            let rk = t.ranks();
            if h.a_tilde.cols() != rk.l || h.b_tilde.cols() != rk.m {
                return Err(Error::dims(format!("term {r}: HSI factor ranks differ from core")));
            }
            if h.a_tilde.rows() != ih || h.b_tilde.rows() != jh {
                return Err(Error::dims(format!("term {r}: inconsistent HSI spatial dims")));
            }
        }
        Ok(())
    }

    /// The exact semi-blind parameters of `base`: `Ã_r = P1 A_r`, `B̃_r = P2 B_r`.
    pub fn from_known(base: &LmnModel, p1: &Matrix, p2: &Matrix) -> Result<Self> {
        let hsi_terms = base
            .terms
            .iter()
            .map(|t| {
                Ok(HsiFactors {
                    a_tilde: p1.matmul(&t.a)?,
                    b_tilde: p2.matmul(&t.b)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SemiBlindModel::new(base.clone(), hsi_terms)
    }

    /// As [`LmnModel::perturbed`], including the HSI-side factors.
    pub fn perturbed(&self, relative: f64, seed: u64) -> SemiBlindModel {
        let mut out = SemiBlindModel {
            base: self.base.perturbed(relative, seed),
            hsi_terms: self.hsi_terms.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for h in &mut out.hsi_terms {
            perturb_slice(h.a_tilde.data_mut(), relative, &mut rng);
            perturb_slice(h.b_tilde.data_mut(), relative, &mut rng);
        }
        out
    }

    pub fn hsi_spatial_dims(&self) -> (usize, usize) {
        let h = &self.hsi_terms[0];
        (h.a_tilde.rows(), h.b_tilde.rows())
    }

    /// `Σ_r D_r ×1 Ã_r ×2 B̃_r ×3 C_r`, the model's HSI.
    pub fn reconstruct_hsi(&self) -> Result<Tensor3> {
        let (ih, jh) = self.hsi_spatial_dims();
        let mut out = Tensor3::zeros([ih, jh, self.base.dims()[2]]);
        for (t, h) in self.base.terms.iter().zip(&self.hsi_terms) {
            out.axpy(1.0, &t.core.multilinear(&h.a_tilde, &h.b_tilde, &t.c)?)?;
        }
        Ok(out)
    }
}

/// Classical tensor models expressible as block-term shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cpd,
    Tucker,
    Ll1,
    Lmn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cpd => "cpd",
            ModelKind::Tucker => "tucker",
            ModelKind::Ll1 => "ll1",
            ModelKind::Lmn => "lmn",
        }
    }
}

/// CPD with `f` rank-one terms.
pub fn cpd_ranks(f: usize) -> Vec<Ranks> {
    vec![Ranks::new(1, 1, 1); f]
}

/// LL1 with `r` terms of spatial rank `l`.
pub fn ll1_ranks(r: usize, l: usize) -> Vec<Ranks> {
    vec![Ranks::new(l, l, 1); r]
}

/// Rejects rank lists that the given model kind cannot take on `dims`.
pub fn check_rank_spec(kind: ModelKind, dims: [usize; 3], ranks: &[Ranks]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::arg("rank specification has no terms"));
    }
    let illegal = |why: &str| Err(Error::arg(format!("illegal {} ranks {ranks:?}: {why}", kind.name())));
    for r in ranks {
        if r.l == 0 || r.m == 0 || r.n == 0 {
            return illegal("ranks must be positive");
        }
        if r.l > dims[0] || r.m > dims[1] || r.n > dims[2] {
            return illegal("rank exceeds dimension");
        }
    }
    match kind {
        ModelKind::Cpd if ranks.iter().any(|r| *r != Ranks::new(1, 1, 1)) => {
            illegal("every CPD term is rank (1,1,1)")
        }
        ModelKind::Tucker if ranks.len() != 1 => illegal("Tucker has exactly one term"),
        ModelKind::Ll1 if ranks.iter().any(|r| r.l != r.m || r.n != 1) => {
            illegal("LL1 terms are (L, L, 1)")
        }
        _ => Ok(()),
    }
}

fn perturb_slice(x: &mut [f64], relative: f64, rng: &mut ChaCha8Rng) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    for v in x {
        let z: f64 = StandardNormal.sample(rng);
        *v += relative * rms * z;
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn gaussian_tensor(dims: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| StandardNormal.sample(rng))
}

/// Random model whose reconstruction realizes the requested classical model.
/// LL1 terms carry frozen `L×L×1` identity cores.
pub fn make_special_shape(
    kind: ModelKind,
    dims: [usize; 3],
    ranks: &[Ranks],
    seed: u64,
) -> Result<LmnModel> {
    check_rank_spec(kind, dims, ranks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [i, j, k] = dims;
    let terms = ranks
        .iter()
        .map(|r| {
            let a = gaussian_matrix(i, r.l, &mut rng);
            let b = gaussian_matrix(j, r.m, &mut rng);
            let c = gaussian_matrix(k, r.n, &mut rng);
            let (core, core_frozen) = match kind {
                ModelKind::Ll1 => (
                    Tensor3::from_fn([r.l, r.l, 1], |p, q, _| if p == q { 1.0 } else { 0.0 }),
                    true,
                ),
                ModelKind::Cpd => (Tensor3::filled([1, 1, 1], 1.0), false),
                _ => (gaussian_tensor(r.core_dims(), &mut rng), false),
            };
            LmnTerm {
                core,
                a,
                b,
                c,
                core_frozen,
            }
        })
        .collect();
    LmnModel::new(terms)
}

/// Free-parameter count of a model shape.
pub fn count_params(kind: ModelKind, dims: [usize; 3], ranks: &[Ranks]) -> usize {
    let [i, j, k] = dims;
    match kind {
        ModelKind::Lmn => ranks
            .iter()
            .map(|r| i * r.l + j * r.m + k * r.n + r.l * r.m * r.n)
            .sum(),
        ModelKind::Cpd => ranks.len() * (i + j + k),
        ModelKind::Tucker => ranks
            .iter()
            .map(|r| i * r.l + j * r.m + k * r.n + r.l * r.m * r.n)
            .sum(),
        ModelKind::Ll1 => ranks.iter().map(|r| (i + j) * r.l).sum::<usize>() + k * ranks.len(),
    }
}

/// One inequality of a recoverability condition set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: usize,
    pub rhs: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverabilityReport {
    pub blind: bool,
    pub conditions: Vec<Condition>,
    pub all_hold: bool,
}

impl RecoverabilityReport {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Evaluates the sufficient conditions for exact SRI recovery with uniform
/// ranks. With `blind`, the semi-blind conditions are appended.
pub fn check_recoverability(
    dims_sri: [usize; 3],
    dims_hsi: (usize, usize),
    k_m: usize,
    ranks: &[Ranks],
    blind: bool,
) -> Result<RecoverabilityReport> {
    let first = *ranks
        .first()
        .ok_or_else(|| Error::arg("no ranks given"))?;
    if ranks.iter().any(|r| *r != first) {
        return Err(Error::arg(
            "recoverability conditions assume uniform ranks across terms",
        ));
    }
    let Ranks { l, m, n } = first;
    if l == 0 || m == 0 {
        return Err(Error::arg("ranks must be positive"));
    }
    let r = ranks.len();
    let [i_m, j_m, _] = dims_sri;
    let (i_h, j_h) = dims_hsi;
    let floor_n = (l.div_ceil(m) + m.div_ceil(l)).max(3);
    let ge = |name: &str, lhs: usize, rhs: usize| Condition {
        name: name.to_string(),
        lhs,
        rhs,
        holds: lhs >= rhs,
    };
    let mut conditions = vec![
        ge("I_H*J_H >= L*M*R", i_h * j_h, l * m * r),
        ge("I_M >= L*R", i_m, l * r),
        ge("J_M >= M*R", j_m, m * r),
        ge("L*M >= N", l * m, n),
        ge("N >= max(ceil(L/M)+ceil(M/L), 3)", n, floor_n),
    ];
    if blind {
        conditions.push(ge("K_M >= 2N", k_m, 2 * n));
        conditions.push(ge("I_H >= L*R", i_h, l * r));
        conditions.push(ge("J_H >= M*R", j_h, m * r));
    }
    let all_hold = conditions.iter().all(|c| c.holds);
    Ok(RecoverabilityReport {
        blind,
        conditions,
        all_hold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermManifest {
    pub ranks: [usize; 3],
    pub core_frozen: bool,
    pub core: String,
    pub a: String,
    pub b: String,
    pub c: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_tilde: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_tilde: Option<String>,
}

/// JSON manifest of a saved model; factor blobs are T3B1 files referenced by
/// paths relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub num_terms: usize,
    pub dims: [usize; 3],
    pub terms: Vec<TermManifest>,
}

fn save_terms(
    dir: &Path,
    stem: &str,
    model: &LmnModel,
    hsi: Option<&[HsiFactors]>,
) -> Result<ModelManifest> {
    let mut terms = Vec::new();
    for (r, t) in model.terms.iter().enumerate() {
        let name = |part: &str| format!("{stem}_t{r}_{part}.t3b");
        io::write_tensor(&dir.join(name("core")), &t.core)?;
        io::write_matrix(&dir.join(name("a")), &t.a)?;
        io::write_matrix(&dir.join(name("b")), &t.b)?;
        io::write_matrix(&dir.join(name("c")), &t.c)?;
        let (mut a_tilde, mut b_tilde) = (None, None);
        if let Some(h) = hsi.map(|h| &h[r]) {
            io::write_matrix(&dir.join(name("a_tilde")), &h.a_tilde)?;
            io::write_matrix(&dir.join(name("b_tilde")), &h.b_tilde)?;
            a_tilde = Some(name("a_tilde"));
            b_tilde = Some(name("b_tilde"));
        }
        let rk = t.ranks();
        terms.push(TermManifest {
            ranks: [rk.l, rk.m, rk.n],
            core_frozen: t.core_frozen,
            core: name("core"),
            a: name("a"),
            b: name("b"),
            c: name("c"),
            a_tilde,
            b_tilde,
        });
    }
    let manifest = ModelManifest {
        num_terms: model.terms.len(),
        dims: model.dims(),
        terms,
    };
    io::write_json(&dir.join(format!("{stem}.json")), &manifest)?;
    Ok(manifest)
}

fn load_terms(manifest_path: &Path) -> Result<(LmnModel, Option<Vec<HsiFactors>>)> {
    let manifest: ModelManifest = io::read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    if manifest.terms.len() != manifest.num_terms {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            reason: "num_terms disagrees with the term list".into(),
        });
    }
    let mut terms = Vec::new();
    let mut hsi = Vec::new();
    for tm in &manifest.terms {
        let core = io::read_tensor(&dir.join(&tm.core))?;
        if core.dims() != tm.ranks {
            return Err(Error::Format {
                path: manifest_path.display().to_string(),
                reason: format!("core dims {:?} differ from ranks {:?}", core.dims(), tm.ranks),
            });
        }
        terms.push(LmnTerm {
            core,
            a: io::read_matrix(&dir.join(&tm.a))?,
            b: io::read_matrix(&dir.join(&tm.b))?,
            c: io::read_matrix(&dir.join(&tm.c))?,
            core_frozen: tm.core_frozen,
        });
        if let (Some(at), Some(bt)) = (&tm.a_tilde, &tm.b_tilde) {
            hsi.push(HsiFactors {
                a_tilde: io::read_matrix(&dir.join(at))?,
                b_tilde: io::read_matrix(&dir.join(bt))?,
            });
        }
    }
    let model = LmnModel::new(terms)?;
    if model.dims() != manifest.dims {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            reason: "factor shapes disagree with manifest dims".into(),
        });
    }
    let hsi = match hsi.len() {
        0 => None,
        n if n == model.terms.len() => Some(hsi),
        _ => {
            return Err(Error::Format {
                path: manifest_path.display().to_string(),
                reason: "HSI factors present for only some terms".into(),
            })
        }
    };
    Ok((model, hsi))
}

impl LmnModel {
    /// Writes `<stem>.json` plus one T3B1 blob per factor into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<ModelManifest> {
        save_terms(dir, stem, self, None)
    }

    pub fn load(manifest_path: &Path) -> Result<LmnModel> {
        Ok(load_terms(manifest_path)?.0)
    }
}

impl SemiBlindModel {
    pub fn save(&self, dir: &Path, stem: &str) -> Result<ModelManifest> {
        save_terms(dir, stem, &self.base, Some(&self.hsi_terms))
    }

    pub fn load(manifest_path: &Path) -> Result<SemiBlindModel> {
        match load_terms(manifest_path)? {
            (base, Some(hsi)) => SemiBlindModel::new(base, hsi),
            _ => Err(Error::Format {
                path: manifest_path.display().to_string(),
                reason: "manifest carries no HSI factors".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn outer3(a: &[f64], b: &[f64], c: &[f64]) -> Tensor3 {
        Tensor3::from_fn([a.len(), b.len(), c.len()], |i, j, k| a[i] * b[j] * c[k])
    }

    fn rel(a: &Tensor3, b: &Tensor3) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    /// Five nested loops straight from the definition.
    fn loop_term(t: &LmnTerm) -> Tensor3 {
        let r = t.ranks();
        Tensor3::from_fn(t.ambient_dims(), |i, j, k| {
            let mut s = 0.0;
            for l in 0..r.l {
                for m in 0..r.m {
                    for n in 0..r.n {
                        s += t.core.get(l, m, n) * t.a[(i, l)] * t.b[(j, m)] * t.c[(k, n)];
                    }
                }
            }
            s
        })
    }

    #[test]
    fn rank_one_term_is_outer_product() {
        let a = Matrix::from_rows(&[&[1.0], &[2.0]]);
        let b = Matrix::from_rows(&[&[3.0], &[-1.0], &[0.5]]);
        let c = Matrix::from_rows(&[&[2.0], &[4.0]]);
        let model = LmnModel::new(vec![LmnTerm {
            core: Tensor3::filled([1, 1, 1], 1.0),
            a: a.clone(),
            b: b.clone(),
            c: c.clone(),
            core_frozen: false,
        }])
        .unwrap();
        let expected = outer3(a.data(), b.data(), c.data());
        assert_eq!(model.reconstruct().unwrap(), expected);
        assert_eq!(model.reconstruct_term(0).unwrap(), expected);
    }

    #[test]
    fn zero_cores_give_zero() {
        let mut m = make_special_shape(ModelKind::Lmn, [4, 5, 6], &[Ranks::new(2, 3, 2); 2], 1).unwrap();
        for t in &mut m.terms {
            t.core = Tensor3::zeros(t.core.dims());
        }
        assert_eq!(m.reconstruct().unwrap().frobenius_norm(), 0.0);
        assert_eq!(m.reconstruct_term(1).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn reconstruct_matches_loop_oracle() {
        let m = make_special_shape(ModelKind::Lmn, [4, 5, 6], &[Ranks::new(2, 3, 2); 2], 2).unwrap();
        let mut oracle = Tensor3::zeros([4, 5, 6]);
        for t in &m.terms {
            oracle.axpy(1.0, &loop_term(t)).unwrap();
        }
        assert!(rel(&m.reconstruct().unwrap(), &oracle) <= 1e-12);
        assert!(rel(&m.reconstruct_term(1).unwrap(), &loop_term(&m.terms[1])) <= 1e-12);
        assert!(m.reconstruct_term(2).is_err());
    }

    #[test]
    fn single_term_equals_reconstruction() {
        let m = make_special_shape(ModelKind::Tucker, [3, 4, 5], &[Ranks::new(2, 2, 3)], 3).unwrap();
        assert_eq!(m.reconstruct().unwrap(), m.reconstruct_term(0).unwrap());
    }

    #[test]
    fn cpd_shape_matches_outer_product() {
        let m = make_special_shape(ModelKind::Cpd, [2, 2, 2], &cpd_ranks(1), 4).unwrap();
        let t = &m.terms[0];
        let expected = outer3(t.a.data(), t.b.data(), t.c.data());
        assert!(rel(&m.reconstruct().unwrap(), &expected) <= 1e-12);
    }

    #[test]
    fn ll1_shape_matches_matrix_outer_vector() {
        let m = make_special_shape(ModelKind::Ll1, [4, 4, 3], &ll1_ranks(1, 2), 5).unwrap();
        let t = &m.terms[0];
        assert!(t.core_frozen);
        let ab = t.a.matmul_t(&t.b).unwrap();
        let expected = Tensor3::from_fn([4, 4, 3], |i, j, k| ab[(i, j)] * t.c[(k, 0)]);
        assert!(rel(&m.reconstruct().unwrap(), &expected) <= 1e-12);
    }

    #[test]
    fn illegal_rank_specs() {
        assert!(make_special_shape(ModelKind::Cpd, [3, 3, 3], &[Ranks::new(2, 1, 1)], 0).is_err());
        assert!(make_special_shape(ModelKind::Tucker, [3, 3, 3], &[Ranks::new(1, 1, 1); 2], 0).is_err());
        assert!(make_special_shape(ModelKind::Ll1, [3, 3, 3], &[Ranks::new(2, 1, 1)], 0).is_err());
        assert!(make_special_shape(ModelKind::Lmn, [3, 3, 3], &[Ranks::new(4, 1, 1)], 0).is_err());
        assert!(make_special_shape(ModelKind::Lmn, [3, 3, 3], &[], 0).is_err());
    }

    #[test]
    fn param_counts() {
        let urban = [200, 200, 162];
        assert_eq!(count_params(ModelKind::Lmn, urban, &[Ranks::new(14, 14, 5); 4]), 29560);
        assert_eq!(count_params(ModelKind::Cpd, urban, &cpd_ranks(52)), 29224);
        assert_eq!(count_params(ModelKind::Lmn, [1, 1, 1], &[Ranks::new(1, 1, 1)]), 4);
        assert_eq!(count_params(ModelKind::Tucker, urban, &[Ranks::new(51, 54, 3)]), 29748);
        assert_eq!(count_params(ModelKind::Ll1, urban, &ll1_ranks(4, 18)), 29448);
    }

    #[test]
    fn num_params_agrees_with_count() {
        let ranks = [Ranks::new(3, 3, 2); 3];
        let m = make_special_shape(ModelKind::Lmn, [24, 24, 16], &ranks, 9).unwrap();
        assert_eq!(m.num_params(), count_params(ModelKind::Lmn, [24, 24, 16], &ranks));
    }

    #[test]
    fn recoverability_desk_instance() {
        let rep = check_recoverability([24, 24, 32], (12, 12), 8, &[Ranks::new(3, 3, 3); 2], false).unwrap();
        assert!(rep.all_hold);
        let c = rep.condition("I_H*J_H >= L*M*R").unwrap();
        assert_eq!((c.lhs, c.rhs), (144, 18));
        assert_eq!(rep.conditions.len(), 5);

        let rep = check_recoverability([24, 24, 32], (12, 12), 8, &[Ranks::new(3, 3, 2); 2], false).unwrap();
        assert!(!rep.condition("N >= max(ceil(L/M)+ceil(M/L), 3)").unwrap().holds);
        assert!(!rep.all_hold);

        let rep = check_recoverability([24, 24, 32], (12, 12), 5, &[Ranks::new(3, 3, 3); 2], true).unwrap();
        assert!(!rep.condition("K_M >= 2N").unwrap().holds);

        let mixed = [Ranks::new(3, 3, 3), Ranks::new(2, 3, 3)];
        assert!(check_recoverability([24, 24, 32], (12, 12), 8, &mixed, false).is_err());
    }

    #[test]
    fn reconstruct_is_linear_in_a() {
        let m = make_special_shape(ModelKind::Lmn, [5, 4, 6], &[Ranks::new(2, 2, 2); 2], 6).unwrap();
        let base = m.reconstruct().unwrap();
        let t0 = m.reconstruct_term(0).unwrap();
        let mut scaled = m.clone();
        scaled.terms[0].a = scaled.terms[0].a.scaled(3.0);
        let mut expected = base.clone();
        expected.axpy(2.0, &t0).unwrap();
        assert_relative_eq!(
            scaled.reconstruct().unwrap().sub(&expected).unwrap().frobenius_norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_special_shape(ModelKind::Ll1, [5, 4, 6], &ll1_ranks(2, 2), 7).unwrap();
        m.save(dir.path(), "model").unwrap();
        let back = LmnModel::load(&dir.path().join("model.json")).unwrap();
        assert_eq!(back, m);
        assert!(SemiBlindModel::load(&dir.path().join("model.json")).is_err());
    }
}
