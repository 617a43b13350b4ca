//! Run configurations. Relative paths resolve against the config file's
//! directory; every referenced input must exist when the config loads.

use std::fs;
use std::path::{Path, PathBuf};

use lmn_fusion::model::{cpd_ranks, ll1_ranks, ModelKind, Ranks};
use lmn_fusion::solver::SolverConfig;
use lmn_fusion::synth::SyntheticSpec;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub fn load<T: DeserializeOwned + Resolve>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config: T = serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.resolve(base)?;
    Ok(config)
}

/// Anchors relative paths at `base` and checks they exist.
pub trait Resolve {
    fn resolve(&mut self, base: &Path) -> CliResult<()>;
}

fn input(base: &Path, field: &str, path: &mut PathBuf) -> CliResult<()> {
    if path.is_relative() {
        *path = base.join(&*path);
    }
    if !path.exists() {
        return Err(CliError::MissingInput {
            field: field.to_string(),
            path: path.clone(),
        });
    }
    Ok(())
}

fn optional(base: &Path, field: &str, path: &mut Option<PathBuf>) -> CliResult<()> {
    match path {
        Some(p) => input(base, field, p),
        None => Ok(()),
    }
}

fn solver(config: &SolverConfig) -> CliResult<()> {
    config
        .validate()
        .map_err(|e| CliError::invalid(format!("solver: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Generate a random LMN ground truth.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Degrade an existing SRI instead.
    #[serde(default)]
    pub sri: Option<PathBuf>,
    /// Degradation preset; required with `sri`.
    #[serde(default)]
    pub degradation: Option<PathBuf>,
    /// Noise level applied to an input SRI.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Resolve for SimulateConfig {
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        optional(base, "sri", &mut self.sri)?;
        optional(base, "degradation", &mut self.degradation)?;
        match (&self.synthetic, &self.sri) {
            (Some(spec), None) => {
                if self.snr_db.is_some() || self.seed != 0 {
                    return Err(CliError::invalid(
                        "snr_db and seed belong inside `synthetic` for generated data",
                    ));
                }
                if spec.degradation.is_some() && self.degradation.is_some() {
                    return Err(CliError::invalid(
                        "degradation given both inline and as a preset path",
                    ));
                }
                spec.validate().map_err(|e| CliError::invalid(format!("synthetic: {e}")))
            }
            (None, Some(_)) if self.degradation.is_none() => {
                Err(CliError::invalid("`sri` requires a `degradation` preset"))
            }
            (None, Some(_)) => Ok(()),
            _ => Err(CliError::invalid("exactly one of `synthetic` and `sri` is required")),
        }
    }
}

/// Where the solver starts.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Subspace and pure-pixel initialization seeded by `solver.seed`.
    Standard,
    /// A saved model, optionally perturbed by `perturb` times each block's RMS.
    PerturbedTruth {
        model: PathBuf,
        #[serde(default)]
        perturb: f64,
    },
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig::Standard
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseConfig {
    pub hsi: PathBuf,
    pub msi: PathBuf,
    /// Degradation preset; in blind mode only its band windows are used.
    #[serde(default)]
    pub degradation: Option<PathBuf>,
    /// Spectral response for blind mode without a preset.
    #[serde(default)]
    pub band_windows: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub blind: bool,
    /// Number of terms; required with the standard initialization.
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub ranks: Option<Ranks>,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Ground-truth SRI for a metrics report.
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

fn check_operators(
    blind: bool,
    degradation: &Option<PathBuf>,
    band_windows: &Option<Vec<Vec<usize>>>,
) -> CliResult<()> {
    match (blind, degradation.is_some(), band_windows.is_some()) {
        (_, true, true) => Err(CliError::invalid(
            "give either `degradation` or `band_windows`, not both",
        )),
        (false, false, _) => Err(CliError::invalid("known-operator fusion requires `degradation`")),
        (true, false, false) => Err(CliError::invalid(
            "blind fusion requires `degradation` or `band_windows`",
        )),
        _ => Ok(()),
    }
}

impl Resolve for FuseConfig {
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        input(base, "hsi", &mut self.hsi)?;
        input(base, "msi", &mut self.msi)?;
        optional(base, "degradation", &mut self.degradation)?;
        optional(base, "reference", &mut self.reference)?;
        if let InitConfig::PerturbedTruth { model, perturb } = &mut self.init {
            input(base, "init.model", model)?;
            if !(*perturb >= 0.0) {
                return Err(CliError::invalid("init.perturb must be nonnegative"));
            }
        } else if self.r.is_none() || self.ranks.is_none() {
            return Err(CliError::invalid("standard initialization requires `r` and `ranks`"));
        }
        if self.r == Some(0) {
            return Err(CliError::invalid("`r` must be positive"));
        }
        check_operators(self.blind, &self.degradation, &self.band_windows)?;
        solver(&self.solver)
    }
}

/// Endmember-variability test tensor.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariabilitySpec {
    pub dims: [usize; 3],
    pub r: usize,
    pub ranks: Ranks,
    #[serde(default)]
    pub seed: u64,
}

/// One model shape to fit.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Cpd { f: usize },
    Tucker { ranks: Ranks },
    Ll1 { r: usize, l: usize },
    Lmn { r: usize, ranks: Ranks },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Cpd { .. } => ModelKind::Cpd,
            ModelSpec::Tucker { .. } => ModelKind::Tucker,
            ModelSpec::Ll1 { .. } => ModelKind::Ll1,
            ModelSpec::Lmn { .. } => ModelKind::Lmn,
        }
    }

    pub fn ranks(&self) -> Vec<Ranks> {
        match self {
            ModelSpec::Cpd { f } => cpd_ranks(*f),
            ModelSpec::Tucker { ranks } => vec![*ranks],
            ModelSpec::Ll1 { r, l } => ll1_ranks(*r, *l),
            ModelSpec::Lmn { r, ranks } => vec![*ranks; *r],
        }
    }

    /// CPD and LL1 terms keep fixed identity cores.
    pub fn frozen(&self) -> Vec<bool> {
        let fixed = matches!(self, ModelSpec::Cpd { .. } | ModelSpec::Ll1 { .. });
        vec![fixed; self.ranks().len()]
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Cpd { f } => format!("cpd(F={f})"),
            ModelSpec::Tucker { ranks: k } => format!("tucker({}x{}x{})", k.l, k.m, k.n),
            ModelSpec::Ll1 { r, l } => format!("ll1(R={r};L={l})"),
            ModelSpec::Lmn { r, ranks: k } => format!("lmn(R={r};{}x{}x{})", k.l, k.m, k.n),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<VariabilitySpec>,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Resolve for FitConfig {
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        optional(base, "input", &mut self.input)?;
        if self.input.is_some() == self.synthetic.is_some() {
            return Err(CliError::invalid("exactly one of `input` and `synthetic` is required"));
        }
        if self.models.is_empty() {
            return Err(CliError::invalid("`models` is empty"));
        }
        solver(&self.solver)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub reference: PathBuf,
    pub estimate: PathBuf,
    /// Spatial ratio used by ERGAS.
    #[serde(default = "one")]
    pub ratio: usize,
}

fn one() -> usize {
    1
}

impl Resolve for MetricsConfig {
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        input(base, "reference", &mut self.reference)?;
        input(base, "estimate", &mut self.estimate)?;
        if self.ratio == 0 {
            return Err(CliError::invalid("`ratio` must be positive"));
        }
        Ok(())
    }
}

/// A tensor file, or a saved model (one term or the full reconstruction).
#[derive(Debug)]
pub struct TensorSource<'c> {
    pub input: Option<&'c Path>,
    pub model: Option<&'c Path>,
    pub term: Option<usize>,
}

fn resolve_source(
    base: &Path,
    input_path: &mut Option<PathBuf>,
    model: &mut Option<PathBuf>,
    term: Option<usize>,
) -> CliResult<()> {
    optional(base, "input", input_path)?;
    optional(base, "model", model)?;
    if input_path.is_some() == model.is_some() {
        return Err(CliError::invalid("exactly one of `input` and `model` is required"));
    }
    if input_path.is_some() && term.is_some() {
        return Err(CliError::invalid("`term` applies only to `model`"));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub term: Option<usize>,
    /// Energy shortfall below which the cumulative energy counts as 1.
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
}

fn default_energy_tol() -> f64 {
    1e-10
}

impl SpectrumConfig {
    pub fn source(&self) -> TensorSource<'_> {
        TensorSource {
            input: self.input.as_deref(),
            model: self.model.as_deref(),
            term: self.term,
        }
    }
}

impl Resolve for SpectrumConfig {
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        if !(self.energy_tol >= 0.0 && self.energy_tol < 1.0) {
            return Err(CliError::invalid("`energy_tol` must lie in [0, 1)"));
        }
        resolve_source(base, &mut self.input, &mut self.model, self.term)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub term: Option<usize>,
}

impl SmoothnessConfig {
    pub fn source(&self) -> TensorSource<'_> {
        TensorSource {
            input: self.input.as_deref(),
            model: self.model.as_deref(),
            term: self.term,
        }
    }
}

impl Resolve for SmoothnessConfig {
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        resolve_source(base, &mut self.input, &mut self.model, self.term)
    }
}

/// Axes of a parameter sweep; an empty axis holds the base value. `l` sets
/// both spatial ranks.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub l: Vec<usize>,
    #[serde(default)]
    pub n: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub hsi: PathBuf,
    pub msi: PathBuf,
    pub reference: PathBuf,
    #[serde(default)]
    pub degradation: Option<PathBuf>,
    #[serde(default)]
    pub band_windows: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub blind: bool,
    pub r: usize,
    pub ranks: Ranks,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub grid: Grid,
}

impl Resolve for SweepConfig {
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        input(base, "hsi", &mut self.hsi)?;
        input(base, "msi", &mut self.msi)?;
        input(base, "reference", &mut self.reference)?;
        optional(base, "degradation", &mut self.degradation)?;
        check_operators(self.blind, &self.degradation, &self.band_windows)?;
        if self.r == 0 {
            return Err(CliError::invalid("`r` must be positive"));
        }
        solver(&self.solver)
    }
}
