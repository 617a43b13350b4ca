//! Spatial blur/decimation and spectral band aggregation operators, plus
//! SNR-calibrated Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{Matrix, Mode, Tensor3};

fn default_blur_size() -> usize {
    9
}

/// On-disk degradation preset. `blur_size` defaults to 9 and `blur_sigma`
/// to `ratio / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationPreset {
    #[serde(default = "default_blur_size")]
    pub blur_size: usize,
    #[serde(default)]
    pub blur_sigma: Option<f64>,
    pub ratio: usize,
    pub band_windows: Vec<Vec<usize>>,
}

impl DegradationPreset {
    /// Default blur with contiguous equal-width band windows.
    pub fn standard(ratio: usize, k_h: usize, k_m: usize) -> Result<Self> {
        Ok(DegradationPreset {
            blur_size: default_blur_size(),
            blur_sigma: None,
            ratio,
            band_windows: contiguous_windows(k_h, k_m)?,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.blur_sigma.unwrap_or(self.ratio as f64 / 2.0)
    }
}

/// `P1`, `P2`, `PM` together with the parameters that generated them.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationSet {
    pub p1: Matrix,
    pub p2: Matrix,
    pub pm: Matrix,
    pub blur_size: usize,
    pub blur_sigma: f64,
    pub ratio: usize,
    pub band_windows: Vec<Vec<usize>>,
}

impl DegradationSet {
    /// Builds the operators for an `I_M x J_M x K_H` super-resolution image.
    pub fn from_preset(preset: &DegradationPreset, sri_dims: [usize; 3]) -> Result<Self> {
        let sigma = preset.sigma();
        let [i_m, j_m, k_h] = sri_dims;
        Ok(DegradationSet {
            p1: build_spatial(i_m, preset.ratio, preset.blur_size, sigma)?,
            p2: build_spatial(j_m, preset.ratio, preset.blur_size, sigma)?,
            pm: build_spectral(k_h, &preset.band_windows)?,
            blur_size: preset.blur_size,
            blur_sigma: sigma,
            ratio: preset.ratio,
            band_windows: preset.band_windows.clone(),
        })
    }

    pub fn preset(&self) -> DegradationPreset {
        DegradationPreset {
            blur_size: self.blur_size,
            blur_sigma: Some(self.blur_sigma),
            ratio: self.ratio,
            band_windows: self.band_windows.clone(),
        }
    }

    pub fn hsi_dims(&self) -> (usize, usize) {
        (self.p1.rows(), self.p2.rows())
    }

    pub fn msi_bands(&self) -> usize {
        self.pm.rows()
    }

    /// Smallest singular value above `1e-10` times the largest, per operator.
    pub fn check_full_row_rank(&self) -> Result<bool> {
        for p in [&self.p1, &self.p2, &self.pm] {
            if !has_full_row_rank(p)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn hsi(&self, sri: &Tensor3) -> Result<Tensor3> {
        degrade_spatial(sri, &self.p1, &self.p2)
    }

    pub fn msi(&self, sri: &Tensor3) -> Result<Tensor3> {
        degrade_spectral(sri, &self.pm)
    }
}

pub fn has_full_row_rank(p: &Matrix) -> Result<bool> {
    if p.rows() > p.cols() {
        return Ok(false);
    }
    let s = linalg::singular_values(p)?;
    let (max, min) = (s[0], s[s.len() - 1]);
    Ok(max > 0.0 && min > 1e-10 * max)
}

/// Contiguous, equally sized band windows splitting `k_h` bands into `k_m` groups.
pub fn contiguous_windows(k_h: usize, k_m: usize) -> Result<Vec<Vec<usize>>> {
    if k_m == 0 || k_m > k_h {
        return Err(Error::arg(format!("cannot split {k_h} bands into {k_m} windows")));
    }
    Ok((0..k_m)
        .map(|w| (w * k_h / k_m..(w + 1) * k_h / k_m).collect())
        .collect())
}

/// Normalized Gaussian taps of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size % 2 == 0 {
        return Err(Error::arg(format!("blur size {size} must be odd")));
    }
    if size == 1 {
        return Ok(vec![1.0]);
    }
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("blur sigma {sigma} must be positive")));
    }
    let h = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|t| {
            let x = t as f64 - h;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|v| v / s).collect())
}

/// Mirror index with edge repetition (`x[-1] = x[0]`).
fn reflect(mut m: isize, n: isize) -> usize {
    loop {
        if m < 0 {
            m = -m - 1;
        } else if m >= n {
            m = 2 * n - m - 1;
        } else {
            return m as usize;
        }
    }
}

/// `P = S·K`: symmetric-padded Gaussian blur followed by decimation keeping
/// samples `⌊ratio/2⌋ + t·ratio`.
pub fn build_spatial(n_hi: usize, ratio: usize, blur_size: usize, blur_sigma: f64) -> Result<Matrix> {
    if ratio == 0 || n_hi == 0 || n_hi % ratio != 0 {
        return Err(Error::arg(format!(
            "dimension {n_hi} is not divisible by ratio {ratio}"
        )));
    }
    let taps = gaussian_kernel(blur_size, blur_sigma)?;
    let half = (blur_size / 2) as isize;
    let n_lo = n_hi / ratio;
    let phase = ratio / 2;
    let mut p = Matrix::zeros(n_lo, n_hi);
    for t in 0..n_lo {
        let centre = (phase + t * ratio) as isize;
        for (s, &w) in taps.iter().enumerate() {
            let src = reflect(centre + s as isize - half, n_hi as isize);
            p[(t, src)] += w;
        }
    }
    Ok(p)
}

/// Row `k'` averages the bands listed in window `k'`.
pub fn build_spectral(k_h: usize, band_windows: &[Vec<usize>]) -> Result<Matrix> {
    if band_windows.is_empty() {
        return Err(Error::arg("no band windows"));
    }
    let mut pm = Matrix::zeros(band_windows.len(), k_h);
    for (row, w) in band_windows.iter().enumerate() {
        if w.is_empty() {
            return Err(Error::arg(format!("band window {row} is empty")));
        }
        if let Some(&bad) = w.iter().find(|&&b| b >= k_h) {
            return Err(Error::arg(format!(
                "band window {row} references band {bad} outside [0, {k_h})"
            )));
        }
        let v = 1.0 / w.len() as f64;
        for &b in w {
            pm[(row, b)] += v;
        }
    }
    Ok(pm)
}

/// `Y_H = Y_S ×1 P1 ×2 P2`.
pub fn degrade_spatial(sri: &Tensor3, p1: &Matrix, p2: &Matrix) -> Result<Tensor3> {
    sri.mode_product(p1, Mode::One)?.mode_product(p2, Mode::Two)
}

/// `Y_M = Y_S ×3 PM`.
pub fn degrade_spectral(sri: &Tensor3, pm: &Matrix) -> Result<Tensor3> {
    sri.mode_product(pm, Mode::Three)
}

/// Noise standard deviation giving `snr_db` relative to the mean signal power.
pub fn noise_sigma(t: &Tensor3, snr_db: f64) -> f64 {
    let power = t.squared_norm() / t.numel() as f64;
    (power * 10f64.powf(-snr_db / 10.0)).sqrt()
}

/// Adds i.i.d. Gaussian noise at `snr_db`. Each band draws from its own
/// ChaCha stream, so the output depends only on `(seed, dims)`.
pub fn add_noise(t: &Tensor3, snr_db: f64, seed: u64) -> Result<Tensor3> {
    if t.squared_norm() == 0.0 {
        return Err(Error::arg("SNR is undefined for an all-zero tensor"));
    }
    let sigma = noise_sigma(t, snr_db);
    let [ni, nj, _] = t.dims();
    let slab = ni * nj;
    let mut out = t.clone();
    for (k, band) in out.data_mut().chunks_mut(slab).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        for v in band {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    Ok(out)
}
