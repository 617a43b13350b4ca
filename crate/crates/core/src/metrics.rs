//! Reconstruction quality metrics for spectral images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor3};

/// RSNR reported for an exact reconstruction.
pub const RSNR_CAP_DB: f64 = 300.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rsnr_db: f64,
    pub ssim: f64,
    pub cc: f64,
    pub ergas: f64,
    pub rmse: f64,
    pub sam_rad: f64,
    pub nre: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "rsnr_db,ssim,cc,ergas,rmse,sam_rad,nre";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.rsnr_db, self.ssim, self.cc, self.ergas, self.rmse, self.sam_rad, self.nre
        )
    }
}

fn check_pair(reference: &Tensor3, estimate: &Tensor3) -> Result<()> {
    if reference.dims() != estimate.dims() {
        return Err(Error::dims(format!(
            "reference {:?} vs estimate {:?}",
            reference.dims(),
            estimate.dims()
        )));
    }
    if reference.squared_norm() == 0.0 {
        return Err(Error::arg("reference tensor is identically zero"));
    }
    Ok(())
}

/// `‖est − ref‖_F / ‖ref‖_F`.
pub fn nre(reference: &Tensor3, estimate: &Tensor3) -> Result<f64> {
    check_pair(reference, estimate)?;
    Ok(estimate.sub(reference)?.frobenius_norm() / reference.frobenius_norm())
}

/// `10 log10(‖ref‖² / ‖ref − est‖²)`, capped at [`RSNR_CAP_DB`].
pub fn rsnr_db(reference: &Tensor3, estimate: &Tensor3) -> Result<f64> {
    check_pair(reference, estimate)?;
    let err = estimate.sub(reference)?.squared_norm();
    if err == 0.0 {
        return Ok(RSNR_CAP_DB);
    }
    Ok((10.0 * (reference.squared_norm() / err).log10()).min(RSNR_CAP_DB))
}

pub fn rmse(reference: &Tensor3, estimate: &Tensor3) -> Result<f64> {
    check_pair(reference, estimate)?;
    Ok(estimate.sub(reference)?.frobenius_norm() / (reference.numel() as f64).sqrt())
}

fn bands(t: &Tensor3) -> std::slice::Chunks<'_, f64> {
    let [i, j, _] = t.dims();
    t.data().chunks(i * j)
}

/// Band-averaged Pearson correlation. Bands with zero variance in either
/// image are skipped.
pub fn cc(reference: &Tensor3, estimate: &Tensor3) -> Result<f64> {
    check_pair(reference, estimate)?;
    let mut total = 0.0;
    let mut used = 0usize;
    for (x, y) in bands(reference).zip(bands(estimate)) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            let (da, db) = (a - mx, b - my);
            sxy += da * db;
            sxx += da * da;
            syy += db * db;
        }
        if sxx > 0.0 && syy > 0.0 {
            total += (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
            used += 1;
        }
    }
    if used == 0 {
        return Ok(if reference == estimate { 1.0 } else { 0.0 });
    }
    Ok(total / used as f64)
}

/// `(100/d) sqrt(mean_k (RMSE_k / mean_k)²)`; bands with zero mean are skipped.
pub fn ergas(reference: &Tensor3, estimate: &Tensor3, ratio: usize) -> Result<f64> {
    check_pair(reference, estimate)?;
    if ratio == 0 {
        return Err(Error::arg("ERGAS ratio must be positive"));
    }
    let mut acc = 0.0;
    let mut used = 0usize;
    for (x, y) in bands(reference).zip(bands(estimate)) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        if mean == 0.0 {
            continue;
        }
        let mse = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        acc += mse / (mean * mean);
        used += 1;
    }
    if used == 0 {
        return Ok(0.0);
    }
    Ok(100.0 / ratio as f64 * (acc / used as f64).sqrt())
}

/// Mean spectral angle over pixels with nonzero fibers in both images.
pub fn sam(reference: &Tensor3, estimate: &Tensor3) -> Result<f64> {
    check_pair(reference, estimate)?;
    let [ni, nj, nk] = reference.dims();
    let slab = ni * nj;
    let mut total = 0.0;
    let mut used = 0usize;
    let (x, y) = (reference.data(), estimate.data());
    for px in 0..slab {
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for k in 0..nk {
            let (a, b) = (x[px + slab * k], y[px + slab * k]);
            xy += a * b;
            xx += a * a;
            yy += b * b;
        }
        if xx == 0.0 || yy == 0.0 {
            continue;
        }
        let cos = (xy / (xx.sqrt() * yy.sqrt())).clamp(-1.0, 1.0);
        total += if xx == yy && xy == xx { 0.0 } else { cos.acos() };
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

fn ssim_taps(size: usize) -> Vec<f64> {
    let h = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|t| {
            let x = t as f64 - h;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / s).collect()
}

/// Window length used for an `ni x nj` band: 11, shrunk to the largest odd
/// size that fits.
pub fn ssim_window(ni: usize, nj: usize) -> usize {
    let fit = SSIM_WINDOW.min(ni).min(nj);
    if fit % 2 == 0 {
        fit - 1
    } else {
        fit
    }
}

/// Valid-mode separable filtering of an `ni x nj` column-major band.
fn filter_valid(band: &[f64], ni: usize, nj: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let w = taps.len();
    let (oi, oj) = (ni + 1 - w, nj + 1 - w);
    let mut rows = vec![0.0; oi * nj];
    for j in 0..nj {
        for i in 0..oi {
            rows[i + oi * j] = dot(taps, &band[j * ni + i..j * ni + i + w]);
        }
    }
    let mut out = vec![0.0; oi * oj];
    for j in 0..oj {
        for i in 0..oi {
            out[i + oi * j] = (0..w).map(|t| taps[t] * rows[i + oi * (j + t)]).sum();
        }
    }
    (out, oi, oj)
}

/// Band-averaged SSIM with an 11×11 Gaussian window (std 1.5) and
/// stabilizers `(0.01 R)²`, `(0.03 R)²`, `R` the reference dynamic range.
pub fn ssim(reference: &Tensor3, estimate: &Tensor3) -> Result<f64> {
    check_pair(reference, estimate)?;
    let [ni, nj, _] = reference.dims();
    let (lo, hi) = reference
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut range = hi - lo;
    if range == 0.0 {
        range = hi.abs();
    }
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let taps = ssim_taps(ssim_window(ni, nj));
    let mut total = 0.0;
    let mut nbands = 0usize;
    for (x, y) in bands(reference).zip(bands(estimate)) {
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
        let (mx, oi, oj) = filter_valid(x, ni, nj, &taps);
        let (my, _, _) = filter_valid(y, ni, nj, &taps);
        let (exx, _, _) = filter_valid(&xx, ni, nj, &taps);
        let (eyy, _, _) = filter_valid(&yy, ni, nj, &taps);
        let (exy, _, _) = filter_valid(&xy, ni, nj, &taps);
        let mut band_sum = 0.0;
        for p in 0..oi * oj {
            let vx = exx[p] - mx[p] * mx[p];
            let vy = eyy[p] - my[p] * my[p];
            let cxy = exy[p] - mx[p] * my[p];
            let num = (2.0 * mx[p] * my[p] + c1) * (2.0 * cxy + c2);
            let den = (mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2);
            band_sum += num / den;
        }
        total += band_sum / (oi * oj) as f64;
        nbands += 1;
    }
    Ok(total / nbands as f64)
}

/// All metrics for a reconstruction; `ratio` is the spatial downsampling
/// factor used by ERGAS.
pub fn compute_metrics(reference: &Tensor3, estimate: &Tensor3, ratio: usize) -> Result<MetricsReport> {
    Ok(MetricsReport {
        rsnr_db: rsnr_db(reference, estimate)?,
        ssim: ssim(reference, estimate)?,
        cc: cc(reference, estimate)?,
        ergas: ergas(reference, estimate, ratio)?,
        rmse: rmse(reference, estimate)?,
        sam_rad: sam(reference, estimate)?,
        nre: nre(reference, estimate)?,
    })
}
