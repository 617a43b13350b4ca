//! Synthetic ground truth and diagnostic profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::degradation::{add_noise, DegradationPreset, DegradationSet};
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::model::{check_recoverability, make_special_shape, LmnModel, LmnTerm, ModelKind, Ranks, RecoverabilityReport};
use crate::regularization::{build_h1, build_h3};
use crate::tensor::{Matrix, Mode, Tensor3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dims_sri: [usize; 3],
    pub ratio: usize,
    pub k_m: usize,
    pub r: usize,
    pub ranks: Ranks,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to a 9-tap blur and contiguous band windows.
    #[serde(default)]
    pub degradation: Option<DegradationPreset>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let [i, j, k] = self.dims_sri;
        if self.ratio == 0 || i % self.ratio != 0 || j % self.ratio != 0 {
            return Err(Error::arg(format!(
                "spatial dims {i}x{j} not divisible by ratio {}",
                self.ratio
            )));
        }
        if self.r == 0 {
            return Err(Error::arg("at least one term is required"));
        }
        let rk = self.ranks;
        if rk.l == 0 || rk.m == 0 || rk.n == 0 || rk.l > i || rk.m > j || rk.n > k {
            return Err(Error::arg(format!("ranks {rk:?} infeasible for dims {:?}", self.dims_sri)));
        }
        if self.k_m == 0 || self.k_m > k {
            return Err(Error::arg(format!("K_M = {} outside 1..={k}", self.k_m)));
        }
        if let Some(p) = &self.degradation {
            if p.ratio != self.ratio || p.band_windows.len() != self.k_m {
                return Err(Error::arg(
                    "degradation preset disagrees with the spec's ratio or K_M",
                ));
            }
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<DegradationPreset> {
        match &self.degradation {
            Some(p) => Ok(p.clone()),
            None => DegradationPreset::standard(self.ratio, self.dims_sri[2], self.k_m),
        }
    }

    pub fn rank_list(&self) -> Vec<Ranks> {
        vec![self.ranks; self.r]
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub truth: LmnModel,
    pub sri: Tensor3,
    pub hsi: Tensor3,
    pub msi: Tensor3,
    pub degradation: DegradationSet,
    /// Conditions for the known-operator problem.
    pub conditions: RecoverabilityReport,
    /// Conditions for the semi-blind problem.
    pub blind_conditions: RecoverabilityReport,
}

/// Gaussian LMN ground truth, degraded HSI/MSI and the recoverability report.
/// The HSI and MSI noise streams are seeded with `seed + 1` and `seed + 2`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let ranks = spec.rank_list();
    let truth = make_special_shape(ModelKind::Lmn, spec.dims_sri, &ranks, spec.seed)?;
    let sri = truth.reconstruct()?;
    let degradation = DegradationSet::from_preset(&spec.preset()?, spec.dims_sri)?;
    let mut hsi = degradation.hsi(&sri)?;
    let mut msi = degradation.msi(&sri)?;
    if let Some(snr) = spec.snr_db {
        hsi = add_noise(&hsi, snr, spec.seed.wrapping_add(1))?;
        msi = add_noise(&msi, snr, spec.seed.wrapping_add(2))?;
    }
    let hsi_dims = degradation.hsi_dims();
    let conditions = check_recoverability(spec.dims_sri, hsi_dims, spec.k_m, &ranks, false)?;
    let blind_conditions = check_recoverability(spec.dims_sri, hsi_dims, spec.k_m, &ranks, true)?;
    Ok(SyntheticData {
        truth,
        sri,
        hsi,
        msi,
        degradation,
        conditions,
        blind_conditions,
    })
}

/// LMN tensor mimicking per-pixel endmember variability: nonnegative
/// abundance-like spatial factors, a smooth positive base spectrum per term
/// plus smaller smooth variation spectra, and a Gaussian core.
pub fn endmember_variability(dims: [usize; 3], ranks: &[Ranks], seed: u64) -> Result<LmnModel> {
    let [i, j, k] = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smooth = |amp: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let bumps: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.0..k as f64),
                    rng.random_range(0.1..0.4) * k as f64,
                    rng.random_range(0.3..1.0),
                )
            })
            .collect();
        (0..k)
            .map(|t| {
                amp * bumps
                    .iter()
                    .map(|(c, w, h)| h * (-((t as f64 - c) / w).powi(2)).exp())
                    .sum::<f64>()
            })
            .collect()
    };
    let mut terms = Vec::with_capacity(ranks.len());
    for rk in ranks {
        if rk.l > i || rk.m > j || rk.n > k {
            return Err(Error::arg(format!("ranks {rk:?} infeasible for dims {dims:?}")));
        }
        let a = Matrix::from_fn(i, rk.l, |_, _| rng.random_range(0.0..1.0));
        let b = Matrix::from_fn(j, rk.m, |_, _| rng.random_range(0.0..1.0));
        let mut cols = Vec::with_capacity(k * rk.n);
        for n in 0..rk.n {
            let amp = if n == 0 { 1.0 } else { 0.2 };
            let mut s = smooth(amp, &mut rng);
            if n > 0 {
                let shift = s.iter().sum::<f64>() / k as f64;
                s.iter_mut().for_each(|v| *v -= shift);
            }
            cols.extend(s);
        }
        let c = Matrix::from_col_major(k, rk.n, cols)?;
        let core = Tensor3::from_fn(rk.core_dims(), |_, _, _| StandardNormal.sample(&mut rng));
        terms.push(LmnTerm {
            core,
            a,
            b,
            c,
            core_frozen: false,
        });
    }
    LmnModel::new(terms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Cumulative squared-singular-value fractions.
    pub energy: Vec<f64>,
}

impl Spectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,singular_value,cumulative_energy\n");
        for (n, (v, e)) in self.values.iter().zip(&self.energy).enumerate() {
            s.push_str(&format!("{},{v},{e}\n", n + 1));
        }
        s
    }
}

pub fn unfolding_spectrum(t: &Tensor3, mode: Mode) -> Result<Spectrum> {
    let values = singular_values(&t.unfold(mode))?;
    let total: f64 = values.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    let energy = values
        .iter()
        .map(|v| {
            acc += v * v;
            if total > 0.0 {
                (acc / total).min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(Spectrum { values, energy })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessProfile {
    /// `|t ×1 H1|`, `|t ×2 H2|`, `|t ×3 H3|`.
    pub profiles: [Tensor3; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub mode: usize,
    pub max: f64,
    pub mean: f64,
    /// Mean of the profile divided by its largest value.
    pub normalized_mean: f64,
    pub near_zero: usize,
}

impl SmoothnessProfile {
    /// Each profile divided by its largest entry (zero profiles stay zero).
    pub fn normalized(&self) -> [Tensor3; 3] {
        self.profiles.clone().map(|p| {
            let m = p.data().iter().fold(0.0f64, |a, &v| a.max(v));
            if m > 0.0 {
                p.scaled(1.0 / m)
            } else {
                p
            }
        })
    }

    pub fn summaries(&self) -> Vec<ProfileSummary> {
        self.profiles
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let max = p.data().iter().fold(0.0f64, |a, &v| a.max(v));
                let mean = p.data().iter().sum::<f64>() / p.numel().max(1) as f64;
                ProfileSummary {
                    mode: n + 1,
                    max,
                    mean,
                    normalized_mean: if max > 0.0 { mean / max } else { 0.0 },
                    near_zero: sparsity_count(p, default_sparsity_threshold(p)),
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,max,mean,normalized_mean,near_zero\n");
        for p in self.summaries() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                p.mode, p.max, p.mean, p.normalized_mean, p.near_zero
            ));
        }
        s
    }
}

fn abs(t: Tensor3) -> Tensor3 {
    let dims = t.dims();
    Tensor3::from_vec(dims, t.into_data().into_iter().map(f64::abs).collect()).expect("same dims")
}

pub fn smoothness_profile(t: &Tensor3) -> Result<SmoothnessProfile> {
    let [i, j, k] = t.dims();
    if i < 2 || j < 2 || k < 3 {
        return Err(Error::dims(format!(
            "smoothness profile needs at least 2x2x3, got {:?}",
            t.dims()
        )));
    }
    Ok(SmoothnessProfile {
        profiles: [
            abs(t.mode_product(&build_h1(i)?, Mode::One)?),
            abs(t.mode_product(&build_h1(j)?, Mode::Two)?),
            abs(t.mode_product(&build_h3(k)?, Mode::Three)?),
        ],
    })
}

/// `1e-12 · max|t|`.
pub fn default_sparsity_threshold(t: &Tensor3) -> f64 {
    1e-12 * t.data().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Number of entries with `|x| ≤ threshold`.
pub fn sparsity_count(t: &Tensor3, threshold: f64) -> usize {
    t.data().iter().filter(|v| v.abs() <= threshold).count()
}
