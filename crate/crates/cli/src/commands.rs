use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use lmn_fusion::degradation::{add_noise, build_spectral, DegradationPreset, DegradationSet};
use lmn_fusion::io::{read_json, read_tensor, write_json, write_tensor, write_text};
use lmn_fusion::metrics::{compute_metrics, MetricsReport};
use lmn_fusion::model::{check_rank_spec, count_params, LmnModel, ModelKind, ModelManifest, Ranks, SemiBlindModel};
use lmn_fusion::solver::{fit, fit_blind, fit_single, initialize, initialize_blind, initialize_single, FitReport, StopReason};
use lmn_fusion::synth::{endmember_variability, generate, smoothness_profile, unfolding_spectrum};
use lmn_fusion::{Matrix, Mode, Tensor3};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    FitConfig, FuseConfig, InitConfig, MetricsConfig, SimulateConfig, SmoothnessConfig, SpectrumConfig, TensorSource,
};
use crate::error::{CliError, CliResult};

/// Output directory and verbosity shared by every command.
pub struct Context {
    pub out: PathBuf,
    pub verbose: bool,
}

impl Context {
    pub fn log(&self, msg: impl Display) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    /// Creates the output directory. Called only once all inputs validate.
    pub fn prepare(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|source| CliError::Output {
            path: self.out.clone(),
            source,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn metrics_csv(m: &MetricsReport) -> String {
    format!("{}\n{}\n", MetricsReport::CSV_HEADER, m.csv_row())
}

pub fn simulate(config: SimulateConfig, ctx: &Context) -> CliResult<()> {
    let preset: Option<DegradationPreset> = config.degradation.as_deref().map(read_json).transpose()?;
    if let Some(mut spec) = config.synthetic {
        if preset.is_some() {
            spec.degradation = preset;
            spec.validate()?;
        }
        let data = generate(&spec)?;
        ctx.log(format!(
            "generated {:?} SRI, HSI {:?}, MSI {:?}",
            data.sri.dims(),
            data.hsi.dims(),
            data.msi.dims()
        ));
        ctx.prepare()?;
        write_tensor(&ctx.path("Y_S.t3b"), &data.sri)?;
        write_tensor(&ctx.path("Y_H.t3b"), &data.hsi)?;
        write_tensor(&ctx.path("Y_M.t3b"), &data.msi)?;
        write_json(&ctx.path("degradation.json"), &data.degradation.preset())?;
        data.truth.save(&ctx.out, "truth_model")?;
        let report = serde_json::json!({ "known": data.conditions, "blind": data.blind_conditions });
        write_json(&ctx.path("conditions.json"), &report)?;
        ctx.log(format!(
            "conditions hold: known {}, blind {}",
            data.conditions.all_hold, data.blind_conditions.all_hold
        ));
        return Ok(());
    }
    let sri_path = config.sri.as_deref().expect("validated config has an SRI path");
    let sri = read_tensor(sri_path)?;
    let preset = preset.expect("validated config has a preset");
    let deg = DegradationSet::from_preset(&preset, sri.dims())?;
    let mut hsi = deg.hsi(&sri)?;
    let mut msi = deg.msi(&sri)?;
    if let Some(snr) = config.snr_db {
        hsi = add_noise(&hsi, snr, config.seed.wrapping_add(1))?;
        msi = add_noise(&msi, snr, config.seed.wrapping_add(2))?;
    }
    ctx.prepare()?;
    write_tensor(&ctx.path("Y_H.t3b"), &hsi)?;
    write_tensor(&ctx.path("Y_M.t3b"), &msi)?;
    write_json(&ctx.path("degradation.json"), &deg.preset())?;
    Ok(())
}

/// HSI, MSI and whatever operators the configuration supplies.
pub struct Observations {
    pub y_h: Tensor3,
    pub y_m: Tensor3,
    pub deg: Option<DegradationSet>,
    pub pm: Matrix,
    pub ratio: usize,
}

impl Observations {
    pub fn load(
        hsi: &Path,
        msi: &Path,
        degradation: Option<&Path>,
        band_windows: Option<&[Vec<usize>]>,
    ) -> CliResult<Self> {
        let y_h = read_tensor(hsi)?;
        let y_m = read_tensor(msi)?;
        let dims = [y_m.dims()[0], y_m.dims()[1], y_h.dims()[2]];
        let deg = match degradation {
            Some(p) => Some(DegradationSet::from_preset(&read_json(p)?, dims)?),
            None => None,
        };
        let pm = match (&deg, band_windows) {
            (Some(d), _) => d.pm.clone(),
            (None, Some(w)) => build_spectral(dims[2], w)?,
            (None, None) => return Err(CliError::invalid("no spectral response available")),
        };
        if pm.rows() != y_m.dims()[2] {
            return Err(lmn_fusion::Error::DimensionMismatch(format!(
                "spectral response yields {} bands, MSI has {}",
                pm.rows(),
                y_m.dims()[2]
            ))
            .into());
        }
        let ratio = match &deg {
            Some(d) => d.ratio,
            None => (y_m.dims()[0] / y_h.dims()[0].max(1)).max(1),
        };
        Ok(Observations {
            y_h,
            y_m,
            deg,
            pm,
            ratio,
        })
    }

    pub fn sri_dims(&self) -> [usize; 3] {
        [self.y_m.dims()[0], self.y_m.dims()[1], self.y_h.dims()[2]]
    }

    fn degradation(&self) -> CliResult<&DegradationSet> {
        self.deg
            .as_ref()
            .ok_or_else(|| CliError::invalid("this run needs a `degradation` preset"))
    }

    pub fn check_reference(&self, reference: &Tensor3) -> CliResult<()> {
        if reference.dims() != self.sri_dims() {
            return Err(lmn_fusion::Error::DimensionMismatch(format!(
                "reference {:?} vs SRI {:?}",
                reference.dims(),
                self.sri_dims()
            ))
            .into());
        }
        Ok(())
    }
}

pub enum Estimate {
    Known(LmnModel),
    Blind(SemiBlindModel),
}

impl Estimate {
    pub fn model(&self) -> &LmnModel {
        match self {
            Estimate::Known(m) => m,
            Estimate::Blind(m) => &m.base,
        }
    }

    fn save(&self, dir: &Path, stem: &str) -> CliResult<()> {
        match self {
            Estimate::Known(m) => m.save(dir, stem)?,
            Estimate::Blind(m) => m.save(dir, stem)?,
        };
        Ok(())
    }
}

/// Standard initialization followed by a fit.
pub fn fuse_standard(
    obs: &Observations,
    blind: bool,
    ranks: &[Ranks],
    solver: &lmn_fusion::solver::SolverConfig,
) -> CliResult<(Estimate, FitReport)> {
    let start = if blind {
        Estimate::Blind(initialize_blind(&obs.y_h, &obs.y_m, &obs.pm, ranks, solver.seed)?.into_semi_blind()?)
    } else {
        Estimate::Known(initialize(&obs.y_h, &obs.y_m, obs.degradation()?, ranks, solver.seed)?)
    };
    run_fit(obs, start, solver)
}

fn run_fit(
    obs: &Observations,
    start: Estimate,
    solver: &lmn_fusion::solver::SolverConfig,
) -> CliResult<(Estimate, FitReport)> {
    Ok(match start {
        Estimate::Known(m) => {
            let (m, report) = fit(&obs.y_h, &obs.y_m, obs.degradation()?, m, solver)?;
            (Estimate::Known(m), report)
        }
        Estimate::Blind(m) => {
            let (m, report) = fit_blind(&obs.y_h, &obs.y_m, &obs.pm, m, solver)?;
            (Estimate::Blind(m), report)
        }
    })
}

fn saved_start(path: &Path, perturb: f64, blind: bool, obs: &Observations, seed: u64) -> CliResult<Estimate> {
    let manifest: ModelManifest = read_json(path)?;
    let has_hsi = manifest.terms.iter().any(|t| t.a_tilde.is_some());
    let start = match (blind, has_hsi) {
        (true, true) => Estimate::Blind(SemiBlindModel::load(path)?),
        (true, false) => {
            let deg = obs.deg.as_ref().ok_or_else(|| {
                CliError::invalid("a blind start from a model without HSI factors needs `degradation`")
            })?;
            Estimate::Blind(SemiBlindModel::from_known(&LmnModel::load(path)?, &deg.p1, &deg.p2)?)
        }
        (false, _) => Estimate::Known(LmnModel::load(path)?),
    };
    if start.model().dims() != obs.sri_dims() {
        return Err(lmn_fusion::Error::DimensionMismatch(format!(
            "model {:?} vs SRI {:?}",
            start.model().dims(),
            obs.sri_dims()
        ))
        .into());
    }
    Ok(match start {
        Estimate::Known(m) => Estimate::Known(m.perturbed(perturb, seed)),
        Estimate::Blind(m) => Estimate::Blind(m.perturbed(perturb, seed)),
    })
}

pub fn fuse(config: FuseConfig, ctx: &Context) -> CliResult<()> {
    let obs = Observations::load(
        &config.hsi,
        &config.msi,
        config.degradation.as_deref(),
        config.band_windows.as_deref(),
    )?;
    let reference = config.reference.as_deref().map(read_tensor).transpose()?;
    if let Some(r) = &reference {
        obs.check_reference(r)?;
    }
    let (estimate, report) = match &config.init {
        InitConfig::Standard => {
            let ranks = vec![config.ranks.expect("validated"); config.r.expect("validated")];
            check_rank_spec(ModelKind::Lmn, obs.sri_dims(), &ranks)?;
            ctx.log(format!("initializing {} terms of ranks {:?}", ranks.len(), ranks[0]));
            fuse_standard(&obs, config.blind, &ranks, &config.solver)?
        }
        InitConfig::PerturbedTruth { model, perturb } => {
            let start = saved_start(model, *perturb, config.blind, &obs, config.solver.seed)?;
            run_fit(&obs, start, &config.solver)?
        }
    };
    ctx.log(format!(
        "{} iterations, stop {:?}, objective {:.6e}",
        report.iterations, report.stop_reason, report.final_objective
    ));
    let sri = estimate.model().reconstruct()?;
    let metrics = reference
        .as_ref()
        .map(|r| compute_metrics(r, &sri, obs.ratio))
        .transpose()?;
    ctx.prepare()?;
    write_tensor(&ctx.path("sri_estimate.t3b"), &sri)?;
    estimate.save(&ctx.out, "model")?;
    write_json(&ctx.path("fit_report.json"), &report)?;
    write_text(&ctx.path("trace.csv"), &report.trace_csv())?;
    if let Some(m) = metrics {
        ctx.log(format!("RSNR {:.3} dB, NRE {:.3e}", m.rsnr_db, m.nre));
        write_json(&ctx.path("metrics.json"), &m)?;
        write_text(&ctx.path("metrics.csv"), &metrics_csv(&m))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitRow {
    index: usize,
    label: String,
    kind: ModelKind,
    params: usize,
    nre: f64,
    iterations: usize,
    final_objective: f64,
    stop_reason: StopReason,
}

pub fn fit_models(config: FitConfig, ctx: &Context) -> CliResult<()> {
    let (data, generated) = match (&config.input, &config.synthetic) {
        (Some(p), _) => (read_tensor(p)?, false),
        (None, Some(s)) => (endmember_variability(s.dims, &vec![s.ranks; s.r], s.seed)?.reconstruct()?, true),
        (None, None) => unreachable!("validated config has a data source"),
    };
    for spec in &config.models {
        check_rank_spec(spec.kind(), data.dims(), &spec.ranks())
            .map_err(|e| CliError::invalid(format!("{}: {e}", spec.label())))?;
    }
    let fits = config
        .models
        .par_iter()
        .map(|spec| {
            let start = initialize_single(&data, &spec.ranks(), &spec.frozen(), config.solver.seed)?;
            Ok(fit_single(&data, start, &config.solver)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    ctx.prepare()?;
    if generated {
        write_tensor(&ctx.path("Y.t3b"), &data)?;
    }
    let mut rows = Vec::new();
    let mut csv = String::from("index,label,kind,params,nre,iterations,final_objective\n");
    for (index, (spec, (model, report))) in config.models.iter().zip(fits).enumerate() {
        model.save(&ctx.out, &format!("model_{index}"))?;
        let row = FitRow {
            index,
            label: spec.label(),
            kind: spec.kind(),
            params: count_params(spec.kind(), data.dims(), &spec.ranks()),
            nre: report.final_nre.unwrap_or(f64::NAN),
            iterations: report.iterations,
            final_objective: report.final_objective,
            stop_reason: report.stop_reason,
        };
        ctx.log(format!("{}: {} params, NRE {:.4e}", row.label, row.params, row.nre));
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.index,
            row.label,
            row.kind.name(),
            row.params,
            row.nre,
            row.iterations,
            row.final_objective
        ));
        rows.push(row);
    }
    write_text(&ctx.path("fit.csv"), &csv)?;
    write_json(&ctx.path("fit.json"), &rows)?;
    Ok(())
}

pub fn metrics(config: MetricsConfig, ctx: &Context) -> CliResult<()> {
    let reference = read_tensor(&config.reference)?;
    let estimate = read_tensor(&config.estimate)?;
    let m = compute_metrics(&reference, &estimate, config.ratio)?;
    ctx.prepare()?;
    write_json(&ctx.path("metrics.json"), &m)?;
    write_text(&ctx.path("metrics.csv"), &metrics_csv(&m))?;
    Ok(())
}

fn load_source(source: TensorSource) -> CliResult<Tensor3> {
    if let Some(p) = source.input {
        return Ok(read_tensor(p)?);
    }
    let model = LmnModel::load(source.model.expect("validated source"))?;
    match source.term {
        Some(r) if r >= model.num_terms() => Err(CliError::invalid(format!(
            "term {r} out of range for a {}-term model",
            model.num_terms()
        ))),
        Some(r) => Ok(model.reconstruct_term(r)?),
        None => Ok(model.reconstruct()?),
    }
}

#[derive(Serialize)]
struct ModeSpectrum {
    mode: usize,
    /// Smallest count of singular values whose energy reaches `1 − tol`.
    rank_index: usize,
    values: Vec<f64>,
    energy: Vec<f64>,
}

pub fn spectrum(config: SpectrumConfig, ctx: &Context) -> CliResult<()> {
    let t = load_source(config.source())?;
    let mut modes = Vec::new();
    for mode in Mode::ALL {
        let s = unfolding_spectrum(&t, mode)?;
        let rank_index = s
            .energy
            .iter()
            .position(|&e| e >= 1.0 - config.energy_tol)
            .map_or(s.energy.len(), |p| p + 1);
        modes.push((mode, s, rank_index));
    }
    ctx.prepare()?;
    let mut summary = Vec::new();
    for (mode, s, rank_index) in modes {
        let n = mode.axis() + 1;
        ctx.log(format!("mode {n}: energy reaches 1 at index {rank_index}"));
        write_text(&ctx.path(&format!("spectrum_mode{n}.csv")), &s.to_csv())?;
        summary.push(ModeSpectrum {
            mode: n,
            rank_index,
            values: s.values,
            energy: s.energy,
        });
    }
    write_json(&ctx.path("spectrum.json"), &summary)?;
    Ok(())
}

pub fn smoothness(config: SmoothnessConfig, ctx: &Context) -> CliResult<()> {
    let t = load_source(config.source())?;
    let profile = smoothness_profile(&t)?;
    ctx.prepare()?;
    for (n, p) in profile.normalized().iter().enumerate() {
        write_tensor(&ctx.path(&format!("profile_mode{}.t3b", n + 1)), p)?;
    }
    write_text(&ctx.path("smoothness.csv"), &profile.to_csv())?;
    write_json(&ctx.path("smoothness.json"), &profile.summaries())?;
    Ok(())
}
