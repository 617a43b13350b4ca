//! Objective, block gradients and Lipschitz bounds of the coupled fusion
//! problem.

use std::borrow::Cow;

use crate::degradation::DegradationSet;
use crate::error::{Error, Result};
use crate::linalg::sym_sigma_max;
use crate::regularization::{
    build_h1, build_h3, tikhonov, tv_majorizer, tv_majorizer_gradient, tv_penalty, tv_weights,
    RegConfig,
};
use crate::tensor::{Matrix, Mode, Tensor3};

use super::{matrix_of, Block, Params, StepMode};

struct HsiSide<'a> {
    y: &'a Tensor3,
    /// `(P1, P2, σmax(P1ᵀP1), σmax(P2ᵀP2))`; `None` when the spatial
    /// degradation is unknown.
    spatial: Option<(&'a Matrix, &'a Matrix, f64, f64)>,
}

/// Data, operators and regularization of one fusion problem.
///
/// The objective is
/// `½‖Y_H − Σ_r D_r ×1 P1A_r ×2 P2B_r ×3 C_r‖² + ½‖Y_M − Σ_r D_r ×1 A_r ×2 B_r ×3 PM C_r‖²
///  + λ Σ_r (φ(H1 A_r) + φ(H2 B_r) + ‖H3 C_r‖²) + η Σ_r ½‖D_r‖²`.
/// Without spatial operators the HSI term uses the free factors `Ã_r`, `B̃_r`.
pub struct Problem<'a> {
    y_m: &'a Tensor3,
    pm: Cow<'a, Matrix>,
    hsi: Option<HsiSide<'a>>,
    reg: RegConfig,
    step_mode: StepMode,
    pm_norm: f64,
    h3: Option<Matrix>,
    h3_norm: f64,
    h1_norm: f64,
    h2_norm: f64,
}

/// Owned copy of one term's blocks, used as a scratch evaluation point.
#[derive(Clone, Debug)]
pub(crate) struct TermVars {
    pub d: Tensor3,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub hsi: Option<(Matrix, Matrix)>,
    pub frozen: bool,
}

impl TermVars {
    pub fn from_params(params: &Params, r: usize) -> Self {
        let t = &params.model.terms[r];
        TermVars {
            d: t.core.clone(),
            a: t.a.clone(),
            b: t.b.clone(),
            c: t.c.clone(),
            hsi: params
                .hsi_terms
                .as_ref()
                .map(|h| (h[r].a_tilde.clone(), h[r].b_tilde.clone())),
            frozen: t.core_frozen,
        }
    }

    pub fn block(&self, block: Block) -> &[f64] {
        match block {
            Block::A => self.a.data(),
            Block::B => self.b.data(),
            Block::C => self.c.data(),
            Block::D => self.d.data(),
            Block::ATilde => self.hsi.as_ref().expect("blind term").0.data(),
            Block::BTilde => self.hsi.as_ref().expect("blind term").1.data(),
        }
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        match block {
            Block::A => self.a.data_mut(),
            Block::B => self.b.data_mut(),
            Block::C => self.c.data_mut(),
            Block::D => self.d.data_mut(),
            Block::ATilde => self.hsi.as_mut().expect("blind term").0.data_mut(),
            Block::BTilde => self.hsi.as_mut().expect("blind term").1.data_mut(),
        }
    }

    pub fn block_matrix(&self, block: Block) -> Option<Matrix> {
        let (rows, cols) = match block {
            Block::A => self.a.shape(),
            Block::B => self.b.shape(),
            Block::C => self.c.shape(),
            Block::D => return None,
            Block::ATilde => self.hsi.as_ref()?.0.shape(),
            Block::BTilde => self.hsi.as_ref()?.1.shape(),
        };
        Some(matrix_of(self.block(block), rows, cols))
    }
}

fn gram_norm(m: &Matrix) -> f64 {
    sym_sigma_max(&m.t_matmul(m).expect("square gram"))
}

fn difference_norm(n: usize) -> f64 {
    build_h1(n).map(|h| gram_norm(&h)).unwrap_or(0.0)
}

/// `σmax(2 H1ᵀ diag(w_l) H1)` maximized over the columns `l` of `w`.
fn tv_lipschitz_exact(weights: &Matrix) -> f64 {
    let n = weights.rows() + 1;
    let mut best = 0.0f64;
    for l in 0..weights.cols() {
        let w = weights.column(l);
        let mut m = Matrix::zeros(n, n);
        for (i, &wi) in w.iter().enumerate() {
            m.data_mut()[i + n * i] += wi;
            m.data_mut()[(i + 1) + n * (i + 1)] += wi;
            m.data_mut()[(i + 1) + n * i] -= wi;
            m.data_mut()[i + n * (i + 1)] -= wi;
        }
        best = best.max(2.0 * sym_sigma_max(&m));
    }
    best
}

impl<'a> Problem<'a> {
    /// Known spatial and spectral degradation.
    pub fn known(
        y_h: &'a Tensor3,
        y_m: &'a Tensor3,
        deg: &'a DegradationSet,
        reg: RegConfig,
        step_mode: StepMode,
    ) -> Result<Self> {
        let spatial = (&deg.p1, &deg.p2, gram_norm(&deg.p1), gram_norm(&deg.p2));
        Self::build(y_m, Cow::Borrowed(&deg.pm), Some((y_h, Some(spatial))), reg, step_mode)
    }

    /// Known spectral response, unknown spatial degradation.
    pub fn blind(
        y_h: &'a Tensor3,
        y_m: &'a Tensor3,
        pm: &'a Matrix,
        reg: RegConfig,
        step_mode: StepMode,
    ) -> Result<Self> {
        Self::build(y_m, Cow::Borrowed(pm), Some((y_h, None)), reg, step_mode)
    }

    /// Plain fit of one tensor: the MSI term with identity operators and no
    /// HSI term.
    pub fn single(y: &'a Tensor3, reg: RegConfig, step_mode: StepMode) -> Result<Self> {
        let pm = Matrix::identity(y.dims()[2]);
        Self::build(y, Cow::Owned(pm), None, reg, step_mode)
    }

    #[allow(clippy::type_complexity)]
    fn build(
        y_m: &'a Tensor3,
        pm: Cow<'a, Matrix>,
        hsi: Option<(&'a Tensor3, Option<(&'a Matrix, &'a Matrix, f64, f64)>)>,
        reg: RegConfig,
        step_mode: StepMode,
    ) -> Result<Self> {
        reg.validate()?;
        let [im, jm, km] = y_m.dims();
        let kh = pm.cols();
        if pm.rows() != km {
            return Err(Error::dims(format!(
                "spectral operator has {} rows, MSI has {km} bands",
                pm.rows()
            )));
        }
        if let Some((y_h, spatial)) = &hsi {
            let [ih, jh, k] = y_h.dims();
            if k != kh {
                return Err(Error::dims(format!(
                    "HSI has {k} bands, spectral operator expects {kh}"
                )));
            }
            if let Some((p1, p2, _, _)) = spatial {
                if p1.shape() != (ih, im) || p2.shape() != (jh, jm) {
                    return Err(Error::dims(format!(
                        "spatial operators {:?}, {:?} do not map {im}x{jm} onto {ih}x{jh}",
                        p1.shape(),
                        p2.shape()
                    )));
                }
            }
        }
        let h3 = if kh >= 3 { Some(build_h3(kh)?) } else { None };
        if h3.is_none() && reg.lambda > 0.0 {
            return Err(Error::arg("spectral smoothing needs at least 3 bands"));
        }
        Ok(Problem {
            y_m,
            pm_norm: gram_norm(&pm),
            pm,
            hsi: hsi.map(|(y, spatial)| HsiSide { y, spatial }),
            reg,
            step_mode,
            h3_norm: h3.as_ref().map(gram_norm).unwrap_or(0.0),
            h3,
            h1_norm: difference_norm(im),
            h2_norm: difference_norm(jm),
        })
    }

    pub fn reg(&self) -> &RegConfig {
        &self.reg
    }

    pub fn is_blind(&self) -> bool {
        matches!(&self.hsi, Some(h) if h.spatial.is_none())
    }

    pub fn has_hsi(&self) -> bool {
        self.hsi.is_some()
    }

    pub(crate) fn y_h(&self) -> Option<&Tensor3> {
        self.hsi.as_ref().map(|h| h.y)
    }

    pub(crate) fn spectral_operator(&self) -> &Matrix {
        &self.pm
    }

    pub(crate) fn spatial_operators(&self) -> Option<(&Matrix, &Matrix)> {
        match &self.hsi {
            Some(HsiSide {
                spatial: Some((p1, p2, _, _)),
                ..
            }) => Some((*p1, *p2)),
            _ => None,
        }
    }

    pub(crate) fn y_m(&self) -> &Tensor3 {
        self.y_m
    }

    pub fn sri_dims(&self) -> [usize; 3] {
        let [im, jm, _] = self.y_m.dims();
        [im, jm, self.pm.cols()]
    }

    pub fn check_params(&self, params: &Params) -> Result<()> {
        params.model.validate()?;
        if params.model.dims() != self.sri_dims() {
            return Err(Error::dims(format!(
                "model dims {:?} differ from problem dims {:?}",
                params.model.dims(),
                self.sri_dims()
            )));
        }
        match (self.is_blind(), &params.hsi_terms) {
            (true, None) => Err(Error::arg("blind problem needs HSI-side factors")),
            (false, Some(_)) => Err(Error::arg("HSI-side factors given for a known-operator problem")),
            (true, Some(_)) => {
                let sb = params.clone().into_semi_blind()?;
                let [ih, jh, _] = self.y_h().expect("hsi").dims();
                if sb.hsi_spatial_dims() != (ih, jh) {
                    return Err(Error::dims(format!(
                        "HSI factors have spatial dims {:?}, HSI is {ih}x{jh}",
                        sb.hsi_spatial_dims()
                    )));
                }
                Ok(())
            }
            (false, None) => Ok(()),
        }
    }

    /// `(P1A, P2B)` or `(Ã, B̃)`.
    pub(crate) fn hsi_side(&self, t: &TermVars) -> Result<Option<(Matrix, Matrix)>> {
        match &self.hsi {
            None => Ok(None),
            Some(HsiSide {
                spatial: Some((p1, p2, _, _)),
                ..
            }) => Ok(Some((p1.matmul(&t.a)?, p2.matmul(&t.b)?))),
            Some(HsiSide { spatial: None, .. }) => Ok(Some(
                t.hsi
                    .clone()
                    .ok_or_else(|| Error::arg("blind problem needs HSI-side factors"))?,
            )),
        }
    }

    /// Contributions of one term to the HSI and MSI.
    pub(crate) fn contributions(&self, t: &TermVars) -> Result<(Option<Tensor3>, Tensor3)> {
        let xm = t.d.multilinear(&t.a, &t.b, &self.pm.matmul(&t.c)?)?;
        let xh = match self.hsi_side(t)? {
            Some((ha, hb)) => Some(t.d.multilinear(&ha, &hb, &t.c)?),
            None => None,
        };
        Ok((xh, xm))
    }

    /// Regularization of one term, with the TV parts evaluated exactly.
    pub(crate) fn term_penalty(&self, t: &TermVars) -> Result<f64> {
        let mut f = 0.0;
        if self.reg.lambda > 0.0 {
            let (p, e) = (self.reg.p, self.reg.epsilon);
            let tik = tikhonov(&t.c, self.h3.as_ref().expect("checked at build"))?;
            f += self.reg.lambda * (tv_penalty(&t.a, p, e) + tv_penalty(&t.b, p, e) + tik);
        }
        if !t.frozen {
            f += 0.5 * self.reg.eta * t.d.squared_norm();
        }
        Ok(f)
    }

    /// Data misfit given the total model HSI and MSI.
    pub(crate) fn data_misfit(&self, xh: Option<&Tensor3>, xm: &Tensor3) -> Result<f64> {
        let mut f = 0.5 * self.y_m.sub(xm)?.squared_norm();
        if let (Some(h), Some(xh)) = (&self.hsi, xh) {
            f += 0.5 * h.y.sub(xh)?.squared_norm();
        }
        Ok(f)
    }

    /// Full objective with the exact TV penalty.
    pub fn objective(&self, params: &Params) -> Result<f64> {
        self.check_params(params)?;
        let [ih, jh] = match self.y_h() {
            Some(y) => [y.dims()[0], y.dims()[1]],
            None => [0, 0],
        };
        let kh = self.pm.cols();
        let mut xh = self.y_h().map(|_| Tensor3::zeros([ih, jh, kh]));
        let mut xm = Tensor3::zeros(self.y_m.dims());
        let mut pen = 0.0;
        for r in 0..params.model.num_terms() {
            let t = TermVars::from_params(params, r);
            let (h, m) = self.contributions(&t)?;
            xm.axpy(1.0, &m)?;
            if let (Some(acc), Some(h)) = (xh.as_mut(), h) {
                acc.axpy(1.0, &h)?;
            }
            pen += self.term_penalty(&t)?;
        }
        Ok(self.data_misfit(xh.as_ref(), &xm)? + pen)
    }

    /// `Y − Σ_{s≠r} X_s` for the HSI and MSI.
    pub(crate) fn residuals_excluding(
        &self,
        params: &Params,
        r: usize,
    ) -> Result<(Option<Tensor3>, Tensor3)> {
        let mut rh = self.y_h().cloned();
        let mut rm = self.y_m.clone();
        for s in 0..params.model.num_terms() {
            if s == r {
                continue;
            }
            let (h, m) = self.contributions(&TermVars::from_params(params, s))?;
            rm.axpy(-1.0, &m)?;
            if let (Some(acc), Some(h)) = (rh.as_mut(), h) {
                acc.axpy(-1.0, &h)?;
            }
        }
        Ok((rh, rm))
    }

    /// Objective restricted to block `block` of term `r`, all else fixed.
    /// With `anchor`, the TV penalty of an A/B block is replaced by its
    /// majorizer built at `anchor`.
    pub fn block_objective(
        &self,
        params: &Params,
        r: usize,
        block: Block,
        anchor: Option<&Matrix>,
    ) -> Result<f64> {
        self.check_params(params)?;
        let (rh, rm) = self.residuals_excluding(params, r)?;
        let t = TermVars::from_params(params, r);
        let (xh, xm) = self.contributions(&t)?;
        let mut f = 0.5 * rm.sub(&xm)?.squared_norm();
        if let (Some(rh), Some(xh)) = (rh, xh) {
            f += 0.5 * rh.sub(&xh)?.squared_norm();
        }
        let (lambda, p, e) = (self.reg.lambda, self.reg.p, self.reg.epsilon);
        f += match block {
            Block::A | Block::B if lambda > 0.0 => {
                let x = t.block_matrix(block).expect("matrix block");
                lambda
                    * match anchor {
                        Some(a) => tv_majorizer(&x, a, p, e),
                        None => tv_penalty(&x, p, e),
                    }
            }
            Block::C if lambda > 0.0 => lambda * tikhonov(&t.c, self.h3.as_ref().expect("h3"))?,
            Block::D if !t.frozen => 0.5 * self.reg.eta * t.d.squared_norm(),
            _ => 0.0,
        };
        Ok(f)
    }

    /// Gradient of [`Self::block_objective`] in the flat layout of
    /// [`Params::block`]. Without `anchor` the TV weights are built at the
    /// current block value.
    pub fn gradient(
        &self,
        params: &Params,
        r: usize,
        block: Block,
        anchor: Option<&Matrix>,
    ) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let (rh, rm) = self.residuals_excluding(params, r)?;
        let t = TermVars::from_params(params, r);
        Ok(self.grad_lip(&t, rh.as_ref(), &rm, block, anchor)?.0)
    }

    /// Lipschitz bound of the block gradient at the current point.
    pub fn lipschitz(&self, params: &Params, r: usize, block: Block) -> Result<f64> {
        self.check_params(params)?;
        let (rh, rm) = self.residuals_excluding(params, r)?;
        let t = TermVars::from_params(params, r);
        Ok(self.grad_lip(&t, rh.as_ref(), &rm, block, None)?.1)
    }

    fn tv_lipschitz(&self, weights: &Matrix, mode: Mode) -> f64 {
        match self.step_mode {
            StepMode::ExactSigma => tv_lipschitz_exact(weights),
            StepMode::UpperBound => {
                let h = if mode == Mode::One { self.h1_norm } else { self.h2_norm };
                let wmax = weights.data().iter().fold(0.0f64, |m, &w| m.max(w));
                2.0 * h * wmax
            }
        }
    }

    /// Gradient and Lipschitz bound of one block at the point `t`, given the
    /// residuals that exclude the term.
    pub(crate) fn grad_lip(
        &self,
        t: &TermVars,
        rh: Option<&Tensor3>,
        rm: &Tensor3,
        block: Block,
        anchor: Option<&Matrix>,
    ) -> Result<(Vec<f64>, f64)> {
        match block {
            Block::A => self.spatial_grad(t, rh, rm, Mode::One, anchor),
            Block::B => self.spatial_grad(t, rh, rm, Mode::Two, anchor),
            Block::ATilde => self.hsi_factor_grad(t, rh, Mode::One),
            Block::BTilde => self.hsi_factor_grad(t, rh, Mode::Two),
            Block::C => self.spectral_grad(t, rh, rm),
            Block::D => self.core_grad(t, rh, rm),
        }
    }

    fn spatial_grad(
        &self,
        t: &TermVars,
        rh: Option<&Tensor3>,
        rm: &Tensor3,
        mode: Mode,
        anchor: Option<&Matrix>,
    ) -> Result<(Vec<f64>, f64)> {
        let (x, other, other_mode) = match mode {
            Mode::One => (&t.a, &t.b, Mode::Two),
            _ => (&t.b, &t.a, Mode::One),
        };
        let pmc = self.pm.matmul(&t.c)?;
        let ut = t.d.mode_product(other, other_mode)?.mode_product(&pmc, Mode::Three)?;
        let gu = ut.mode_gram(&ut, mode)?;
        let mut g = x.matmul(&gu)?.sub(&rm.mode_gram(&ut, mode)?)?;
        let mut lip = sym_sigma_max(&gu);

        if let (Some(HsiSide { spatial: Some((p1, p2, n1, n2)), .. }), Some(rh)) = (&self.hsi, rh) {
            let (p, p_other, pn) = match mode {
                Mode::One => (*p1, *p2, *n1),
                _ => (*p2, *p1, *n2),
            };
            let vt = t
                .d
                .mode_product(&p_other.matmul(other)?, other_mode)?
                .mode_product(&t.c, Mode::Three)?;
            let gv = vt.mode_gram(&vt, mode)?;
            let inner = p.matmul(x)?.matmul(&gv)?.sub(&rh.mode_gram(&vt, mode)?)?;
            g.axpy(1.0, &p.t_matmul(&inner)?)?;
            lip += pn * sym_sigma_max(&gv);
        }

        if self.reg.lambda > 0.0 {
            let w = tv_weights(anchor.unwrap_or(x), self.reg.p, self.reg.epsilon);
            g.axpy(self.reg.lambda, &tv_majorizer_gradient(x, &w))?;
            lip += self.reg.lambda * self.tv_lipschitz(&w, mode);
        }
        Ok((g.into_data(), lip))
    }

    fn hsi_factor_grad(&self, t: &TermVars, rh: Option<&Tensor3>, mode: Mode) -> Result<(Vec<f64>, f64)> {
        let (ha, hb) = t
            .hsi
            .as_ref()
            .ok_or_else(|| Error::arg("HSI-side factor block on a known-operator problem"))?;
        let rh = rh.ok_or_else(|| Error::arg("HSI-side factor block without HSI data"))?;
        let (x, other, other_mode) = match mode {
            Mode::One => (ha, hb, Mode::Two),
            _ => (hb, ha, Mode::One),
        };
        let vt = t.d.mode_product(other, other_mode)?.mode_product(&t.c, Mode::Three)?;
        let gv = vt.mode_gram(&vt, mode)?;
        let g = x.matmul(&gv)?.sub(&rh.mode_gram(&vt, mode)?)?;
        Ok((g.into_data(), sym_sigma_max(&gv)))
    }

    fn spectral_grad(&self, t: &TermVars, rh: Option<&Tensor3>, rm: &Tensor3) -> Result<(Vec<f64>, f64)> {
        let vt = t.d.mode_product(&t.a, Mode::One)?.mode_product(&t.b, Mode::Two)?;
        let gv = vt.mode_gram(&vt, Mode::Three)?;
        let inner = self.pm.matmul(&t.c)?.matmul(&gv)?.sub(&rm.mode_gram(&vt, Mode::Three)?)?;
        let mut g = self.pm.t_matmul(&inner)?;
        let mut lip = self.pm_norm * sym_sigma_max(&gv);

        if let (Some((ha, hb)), Some(rh)) = (self.hsi_side(t)?, rh) {
            let ut = t.d.mode_product(&ha, Mode::One)?.mode_product(&hb, Mode::Two)?;
            let gu = ut.mode_gram(&ut, Mode::Three)?;
            g.axpy(1.0, &t.c.matmul(&gu)?)?;
            g.axpy(-1.0, &rh.mode_gram(&ut, Mode::Three)?)?;
            lip += sym_sigma_max(&gu);
        }

        if self.reg.lambda > 0.0 {
            let h3 = self.h3.as_ref().expect("h3");
            g.axpy(2.0 * self.reg.lambda, &h3.t_matmul(&h3.matmul(&t.c)?)?)?;
            lip += 2.0 * self.reg.lambda * self.h3_norm;
        }
        Ok((g.into_data(), lip))
    }

    fn core_grad(&self, t: &TermVars, rh: Option<&Tensor3>, rm: &Tensor3) -> Result<(Vec<f64>, f64)> {
        let pmc = self.pm.matmul(&t.c)?;
        let diff = t.d.multilinear(&t.a, &t.b, &pmc)?.sub(rm)?;
        let mut g = diff.multilinear(&t.a.transpose(), &t.b.transpose(), &pmc.transpose())?;
        let mut lip = gram_norm(&t.a) * gram_norm(&t.b) * gram_norm(&pmc);

        if let (Some((ha, hb)), Some(rh)) = (self.hsi_side(t)?, rh) {
            let diff = t.d.multilinear(&ha, &hb, &t.c)?.sub(rh)?;
            g.axpy(
                1.0,
                &diff.multilinear(&ha.transpose(), &hb.transpose(), &t.c.transpose())?,
            )?;
            lip += gram_norm(&ha) * gram_norm(&hb) * gram_norm(&t.c);
        }

        if self.reg.eta > 0.0 {
            g.axpy(self.reg.eta, &t.d)?;
            lip += self.reg.eta;
        }
        Ok((g.into_data(), lip))
    }
}
