//! CLIMB / BCLIMB: accelerated block-gradient fitting of coupled LMN models.

mod engine;
mod init;
mod problem;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HsiFactors, LmnModel, SemiBlindModel};
use crate::regularization::RegConfig;
use crate::tensor::Matrix;

pub use engine::{fit, fit_blind, fit_single, fit_with_observer, BlockEvent};
pub use init::{initialize, initialize_blind, initialize_single, pure_pixels};
pub use problem::Problem;

fn default_max_iter() -> usize {
    1000
}

fn default_rel_tol() -> f64 {
    1e-8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extrapolation {
    On,
    Off,
}

/// Order in which blocks of different terms are visited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// All blocks of term 1, then all blocks of term 2, ...
    PerTerm,
    /// Block A of every term (from a common snapshot), then block B, ...
    PerBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    ExactSigma,
    UpperBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_extrapolation")]
    pub extrapolation: Extrapolation,
    #[serde(default = "default_update_order")]
    pub update_order: UpdateOrder,
    #[serde(default = "default_step_mode")]
    pub step_mode: StepMode,
    #[serde(default)]
    pub reg: RegConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_extrapolation() -> Extrapolation {
    Extrapolation::On
}

fn default_update_order() -> UpdateOrder {
    UpdateOrder::PerTerm
}

fn default_step_mode() -> StepMode {
    StepMode::ExactSigma
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: default_max_iter(),
            rel_tol: default_rel_tol(),
            extrapolation: default_extrapolation(),
            update_order: default_update_order(),
            step_mode: default_step_mode(),
            reg: RegConfig::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// `max_iter = 0` is accepted and returns the starting point unchanged.
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::arg(format!("rel_tol = {} must be positive", self.rel_tol)));
        }
        self.reg.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RelTol,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub final_objective: f64,
    /// Objective at the start and after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// Elapsed milliseconds matching each trace entry.
    pub trace_wall_ms: Vec<f64>,
    pub wall_time_s: f64,
    pub stop_reason: StopReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_nre: Option<f64>,
}

impl FitReport {
    /// `iteration,objective,wall_ms` rows with a header.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective,wall_ms\n");
        for (it, (f, ms)) in self.objective_trace.iter().zip(&self.trace_wall_ms).enumerate() {
            s.push_str(&format!("{it},{f},{ms}\n"));
        }
        s
    }
}

/// The updatable parameter blocks of one term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    A,
    B,
    C,
    D,
    ATilde,
    BTilde,
}

impl Block {
    pub const KNOWN: [Block; 4] = [Block::A, Block::B, Block::C, Block::D];
    pub const BLIND: [Block; 6] = [
        Block::A,
        Block::B,
        Block::ATilde,
        Block::BTilde,
        Block::C,
        Block::D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::A => "A",
            Block::B => "B",
            Block::C => "C",
            Block::D => "D",
            Block::ATilde => "A_tilde",
            Block::BTilde => "B_tilde",
        }
    }
}

/// Model parameters, optionally with the HSI-side spatial factors used when
/// the spatial degradation is unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub model: LmnModel,
    pub hsi_terms: Option<Vec<HsiFactors>>,
}

impl From<LmnModel> for Params {
    fn from(model: LmnModel) -> Self {
        Params {
            model,
            hsi_terms: None,
        }
    }
}

impl From<SemiBlindModel> for Params {
    fn from(m: SemiBlindModel) -> Self {
        Params {
            model: m.base,
            hsi_terms: Some(m.hsi_terms),
        }
    }
}

impl Params {
    pub fn is_blind(&self) -> bool {
        self.hsi_terms.is_some()
    }

    pub fn into_semi_blind(self) -> Result<SemiBlindModel> {
        match self.hsi_terms {
            Some(h) => SemiBlindModel::new(self.model, h),
            None => Err(Error::arg("parameters carry no HSI-side factors")),
        }
    }

    pub fn blocks(&self) -> &'static [Block] {
        if self.is_blind() {
            &Block::BLIND
        } else {
            &Block::KNOWN
        }
    }

    /// Flat view of a block: column-major for matrices, mode-1-fastest for
    /// the core.
    pub fn block(&self, r: usize, block: Block) -> &[f64] {
        let t = &self.model.terms[r];
        match block {
            Block::A => t.a.data(),
            Block::B => t.b.data(),
            Block::C => t.c.data(),
            Block::D => t.core.data(),
            Block::ATilde => self.hsi(r).a_tilde.data(),
            Block::BTilde => self.hsi(r).b_tilde.data(),
        }
    }

    pub fn block_mut(&mut self, r: usize, block: Block) -> &mut [f64] {
        match block {
            Block::A => self.model.terms[r].a.data_mut(),
            Block::B => self.model.terms[r].b.data_mut(),
            Block::C => self.model.terms[r].c.data_mut(),
            Block::D => self.model.terms[r].core.data_mut(),
            Block::ATilde => self.hsi_mut(r).a_tilde.data_mut(),
            Block::BTilde => self.hsi_mut(r).b_tilde.data_mut(),
        }
    }

    fn hsi(&self, r: usize) -> &HsiFactors {
        &self.hsi_terms.as_ref().expect("blind parameters")[r]
    }

    fn hsi_mut(&mut self, r: usize) -> &mut HsiFactors {
        &mut self.hsi_terms.as_mut().expect("blind parameters")[r]
    }

    pub fn is_finite(&self) -> bool {
        self.model.is_finite()
            && self
                .hsi_terms
                .iter()
                .flatten()
                .all(|h| h.a_tilde.is_finite() && h.b_tilde.is_finite())
    }
}

/// Nesterov momentum recursion: `γ' = (1 + √(1 + 4γ²)) / 2`, `μ = (γ − 1) / γ'`.
pub fn extrapolation_next(gamma: f64) -> (f64, f64) {
    let next = 0.5 * (1.0 + (1.0 + 4.0 * gamma * gamma).sqrt());
    (next, (gamma - 1.0) / next)
}

pub(crate) fn matrix_of(block: &[f64], rows: usize, cols: usize) -> Matrix {
    Matrix::from_col_major(rows, cols, block.to_vec()).expect("block shape")
}
