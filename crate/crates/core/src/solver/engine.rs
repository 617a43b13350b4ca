//! The outer iteration: extrapolated block-gradient sweeps with Lipschitz
//! steps.

use std::time::Instant;

use rayon::prelude::*;

use crate::degradation::DegradationSet;
use crate::error::{Error, Result};
use crate::metrics::nre;
use crate::model::{LmnModel, SemiBlindModel};
use crate::tensor::{Matrix, Tensor3};

use super::problem::{Problem, TermVars};
use super::{extrapolation_next, Block, Extrapolation, FitReport, Params, SolverConfig, StopReason, UpdateOrder};

/// Relative objective level treated as an exact fit.
const OBJECTIVE_FLOOR: f64 = 1e-28;

/// Emitted after every block update.
pub struct BlockEvent<'e> {
    pub iteration: usize,
    pub term: usize,
    pub block: Block,
    pub params: &'e Params,
}

struct Contribution {
    hsi: Option<Tensor3>,
    msi: Tensor3,
}

struct Engine<'p, 'a> {
    problem: &'p Problem<'a>,
    config: SolverConfig,
    params: Params,
    blocks: &'static [Block],
    /// Extrapolated iterates, indexed `[term][block]`.
    extrapolated: Vec<Vec<Vec<f64>>>,
    gamma: Vec<Vec<f64>>,
    contrib: Vec<Contribution>,
    /// Objective values at or below this are roundoff.
    floor: f64,
}

/// Outcome of one block update of one term.
struct Step {
    value: Vec<f64>,
    extrapolated: Vec<f64>,
    gamma: f64,
}

impl<'p, 'a> Engine<'p, 'a> {
    fn new(problem: &'p Problem<'a>, params: Params, config: SolverConfig) -> Result<Self> {
        problem.check_params(&params)?;
        let blocks = params.blocks();
        let nterms = params.model.num_terms();
        let extrapolated = (0..nterms)
            .map(|r| blocks.iter().map(|&b| params.block(r, b).to_vec()).collect())
            .collect();
        let mut engine = Engine {
            problem,
            config,
            blocks,
            extrapolated,
            gamma: vec![vec![1.0; blocks.len()]; nterms],
            contrib: Vec::with_capacity(nterms),
            params,
            floor: OBJECTIVE_FLOOR
                * 0.5
                * (problem.y_m().squared_norm() + problem.y_h().map_or(0.0, |y| y.squared_norm())),
        };
        for r in 0..nterms {
            let c = engine.contribution(r)?;
            engine.contrib.push(c);
        }
        Ok(engine)
    }

    fn contribution(&self, r: usize) -> Result<Contribution> {
        let (hsi, msi) = self.problem.contributions(&TermVars::from_params(&self.params, r))?;
        Ok(Contribution { hsi, msi })
    }

    fn residuals(&self, r: usize) -> Result<(Option<Tensor3>, Tensor3)> {
        let mut rh = self.problem.y_h().cloned();
        let mut rm = self.problem.y_m().clone();
        for (s, c) in self.contrib.iter().enumerate() {
            if s == r {
                continue;
            }
            rm.axpy(-1.0, &c.msi)?;
            if let (Some(acc), Some(h)) = (rh.as_mut(), c.hsi.as_ref()) {
                acc.axpy(-1.0, h)?;
            }
        }
        Ok((rh, rm))
    }

    fn objective(&self) -> Result<f64> {
        let mut xm = Tensor3::zeros(self.problem.y_m().dims());
        let mut xh = self.problem.y_h().map(|y| Tensor3::zeros(y.dims()));
        let mut f = 0.0;
        for (r, c) in self.contrib.iter().enumerate() {
            xm.axpy(1.0, &c.msi)?;
            if let (Some(acc), Some(h)) = (xh.as_mut(), c.hsi.as_ref()) {
                acc.axpy(1.0, h)?;
            }
            f += self.problem.term_penalty(&TermVars::from_params(&self.params, r))?;
        }
        Ok(self.problem.data_misfit(xh.as_ref(), &xm)? + f)
    }

    /// Gradient step on block `bi` of term `r` from the extrapolated point,
    /// reading the other blocks from `params`.
    fn step(
        &self,
        r: usize,
        bi: usize,
        rh: Option<&Tensor3>,
        rm: &Tensor3,
        iteration: usize,
    ) -> Result<Option<Step>> {
        let block = self.blocks[bi];
        let mut t = TermVars::from_params(&self.params, r);
        if block == Block::D && t.frozen {
            return Ok(None);
        }
        let x_old = t.block(block).to_vec();
        let x_check = &self.extrapolated[r][bi];
        t.block_mut(block).copy_from_slice(x_check);
        let (g, lip) = self.problem.grad_lip(&t, rh, rm, block, None)?;
        let non_finite = || Error::NonFinite {
            block: block.name().to_string(),
            term: r,
            iteration,
        };
        if !lip.is_finite() {
            return Err(non_finite());
        }
        if lip <= 0.0 {
            return Ok(None);
        }
        let value: Vec<f64> = x_check.iter().zip(&g).map(|(x, g)| x - g / lip).collect();
        if value.iter().any(|v| !v.is_finite()) {
            return Err(non_finite());
        }
        let (gamma, mu) = match self.config.extrapolation {
            Extrapolation::On => extrapolation_next(self.gamma[r][bi]),
            Extrapolation::Off => (self.gamma[r][bi], 0.0),
        };
        let extrapolated = value
            .iter()
            .zip(&x_old)
            .map(|(x, old)| x + mu * (x - old))
            .collect();
        Ok(Some(Step {
            value,
            extrapolated,
            gamma,
        }))
    }

    fn apply(&mut self, r: usize, bi: usize, step: Option<Step>) {
        let block = self.blocks[bi];
        match step {
            Some(s) => {
                self.params.block_mut(r, block).copy_from_slice(&s.value);
                self.extrapolated[r][bi] = s.extrapolated;
                self.gamma[r][bi] = s.gamma;
            }
            None => {
                let current = self.params.block(r, block).to_vec();
                self.extrapolated[r][bi] = current;
            }
        }
    }

    fn sweep_per_term(&mut self, iteration: usize, observer: &mut dyn FnMut(&BlockEvent)) -> Result<()> {
        for r in 0..self.params.model.num_terms() {
            let (rh, rm) = self.residuals(r)?;
            for bi in 0..self.blocks.len() {
                let step = self.step(r, bi, rh.as_ref(), &rm, iteration)?;
                self.apply(r, bi, step);
                observer(&BlockEvent {
                    iteration,
                    term: r,
                    block: self.blocks[bi],
                    params: &self.params,
                });
            }
            self.contrib[r] = self.contribution(r)?;
        }
        Ok(())
    }

    fn sweep_per_block(&mut self, iteration: usize, observer: &mut dyn FnMut(&BlockEvent)) -> Result<()> {
        let nterms = self.params.model.num_terms();
        for bi in 0..self.blocks.len() {
            let steps: Vec<Result<Option<Step>>> = (0..nterms)
                .into_par_iter()
                .map(|r| {
                    let (rh, rm) = self.residuals(r)?;
                    self.step(r, bi, rh.as_ref(), &rm, iteration)
                })
                .collect();
            for (r, step) in steps.into_iter().enumerate() {
                self.apply(r, bi, step?);
            }
            let fresh: Vec<Result<Contribution>> =
                (0..nterms).into_par_iter().map(|r| self.contribution(r)).collect();
            self.contrib = fresh.into_iter().collect::<Result<_>>()?;
            for r in 0..nterms {
                observer(&BlockEvent {
                    iteration,
                    term: r,
                    block: self.blocks[bi],
                    params: &self.params,
                });
            }
        }
        Ok(())
    }

    fn run(mut self, observer: &mut dyn FnMut(&BlockEvent)) -> Result<(Params, FitReport)> {
        let start = Instant::now();
        let mut f_prev = self.objective()?;
        let mut trace = vec![f_prev];
        let mut wall = vec![start.elapsed().as_secs_f64() * 1e3];
        let mut stop_reason = StopReason::MaxIter;
        let mut iterations = 0;
        for it in 1..=self.config.max_iter {
            match self.config.update_order {
                UpdateOrder::PerTerm => self.sweep_per_term(it, observer)?,
                UpdateOrder::PerBlock => self.sweep_per_block(it, observer)?,
            }
            let f = self.objective()?;
            if !f.is_finite() {
                return Err(Error::NonFinite {
                    block: "objective".into(),
                    term: 0,
                    iteration: it,
                });
            }
            trace.push(f);
            wall.push(start.elapsed().as_secs_f64() * 1e3);
            iterations = it;
            let change = (f_prev - f).abs();
            if change == 0.0
                || change / f_prev.abs().max(f64::MIN_POSITIVE) < self.config.rel_tol
                || f <= self.floor
            {
                stop_reason = StopReason::RelTol;
                break;
            }
            f_prev = f;
        }
        let report = FitReport {
            iterations,
            final_objective: *trace.last().expect("nonempty trace"),
            objective_trace: trace,
            trace_wall_ms: wall,
            wall_time_s: start.elapsed().as_secs_f64(),
            stop_reason,
            final_nre: None,
        };
        Ok((self.params, report))
    }
}

/// Runs the solver on an arbitrary problem, calling `observer` after every
/// block update.
pub fn fit_with_observer(
    problem: &Problem,
    start: Params,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&BlockEvent),
) -> Result<(Params, FitReport)> {
    config.validate()?;
    if problem.reg() != &config.reg {
        return Err(Error::arg("problem and solver configuration disagree on regularization"));
    }
    Engine::new(problem, start, *config)?.run(observer)
}

/// CLIMB: known spatial and spectral degradation.
pub fn fit(
    y_h: &Tensor3,
    y_m: &Tensor3,
    deg: &DegradationSet,
    model0: LmnModel,
    config: &SolverConfig,
) -> Result<(LmnModel, FitReport)> {
    let problem = Problem::known(y_h, y_m, deg, config.reg, config.step_mode)?;
    let (p, report) = fit_with_observer(&problem, model0.into(), config, &mut |_| {})?;
    Ok((p.model, report))
}

/// BCLIMB: known spectral response `pm`, unknown spatial degradation.
pub fn fit_blind(
    y_h: &Tensor3,
    y_m: &Tensor3,
    pm: &Matrix,
    start: SemiBlindModel,
    config: &SolverConfig,
) -> Result<(SemiBlindModel, FitReport)> {
    let problem = Problem::blind(y_h, y_m, pm, config.reg, config.step_mode)?;
    let (p, report) = fit_with_observer(&problem, start.into(), config, &mut |_| {})?;
    Ok((p.into_semi_blind()?, report))
}

/// Fits one tensor; the report carries the final NRE against `data`.
pub fn fit_single(data: &Tensor3, model0: LmnModel, config: &SolverConfig) -> Result<(LmnModel, FitReport)> {
    let problem = Problem::single(data, config.reg, config.step_mode)?;
    let (p, mut report) = fit_with_observer(&problem, model0.into(), config, &mut |_| {})?;
    report.final_nre = Some(nre(data, &p.model.reconstruct()?)?);
    Ok((p.model, report))
}
