//! Parameter grid over (λ, η, L, N). Each row lives in its own directory and
//! is skipped when a matching result already exists.

use std::fs;
use std::path::Path;

use lmn_fusion::io::{read_json, read_tensor, write_json, write_text};
use lmn_fusion::metrics::{compute_metrics, MetricsReport};
use lmn_fusion::model::{check_rank_spec, ModelKind, Ranks};
use lmn_fusion::regularization::RegConfig;
use lmn_fusion::solver::SolverConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{fuse_standard, Context, Observations};
use crate::config::SweepConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct Point {
    lambda: f64,
    eta: f64,
    l: usize,
    m: usize,
    n: usize,
}

impl Point {
    fn matches(&self, other: &Point) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        close(self.lambda, other.lambda)
            && close(self.eta, other.eta)
            && (self.l, self.m, self.n) == (other.l, other.m, other.n)
    }

    fn ranks(&self) -> Ranks {
        Ranks::new(self.l, self.m, self.n)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RowRecord {
    row: usize,
    point: Point,
    iterations: usize,
    final_objective: f64,
    metrics: MetricsReport,
}

fn grid(config: &SweepConfig) -> Vec<Point> {
    let base = (config.solver.reg, config.ranks);
    let or_base = |v: &[f64], b: f64| if v.is_empty() { vec![b] } else { v.to_vec() };
    let or_base_n = |v: &[usize], b: usize| if v.is_empty() { vec![b] } else { v.to_vec() };
    let mut points = Vec::new();
    for &lambda in &or_base(&config.grid.lambda, base.0.lambda) {
        for &eta in &or_base(&config.grid.eta, base.0.eta) {
            for &l in &or_base_n(&config.grid.l, base.1.l) {
                let m = if config.grid.l.is_empty() { base.1.m } else { l };
                for &n in &or_base_n(&config.grid.n, base.1.n) {
                    points.push(Point { lambda, eta, l, m, n });
                }
            }
        }
    }
    points
}

fn row_solver(base: &SolverConfig, p: &Point) -> SolverConfig {
    SolverConfig {
        reg: RegConfig {
            lambda: p.lambda,
            eta: p.eta,
            ..base.reg
        },
        ..*base
    }
}

fn write_atomic(path: &Path, record: &RowRecord) -> CliResult<()> {
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, record)?;
    fs::rename(&tmp, path).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sweep(config: SweepConfig, ctx: &Context) -> CliResult<()> {
    let obs = Observations::load(
        &config.hsi,
        &config.msi,
        config.degradation.as_deref(),
        config.band_windows.as_deref(),
    )?;
    let reference = read_tensor(&config.reference)?;
    obs.check_reference(&reference)?;
    let points = grid(&config);
    for p in &points {
        row_solver(&config.solver, p)
            .validate()
            .map_err(|e| CliError::invalid(format!("grid point {p:?}: {e}")))?;
        check_rank_spec(ModelKind::Lmn, obs.sri_dims(), &vec![p.ranks(); config.r])
            .map_err(|e| CliError::invalid(format!("grid point {p:?}: {e}")))?;
    }
    ctx.prepare()?;
    let rows_dir = ctx.path("rows");
    let records = points
        .par_iter()
        .enumerate()
        .map(|(row, point)| {
            let dir = rows_dir.join(format!("row_{row:04}"));
            let path = dir.join("row.json");
            if let Ok(done) = read_json::<RowRecord>(&path) {
                if done.point.matches(point) {
                    ctx.log(format!("row {row}: reusing {}", path.display()));
                    return Ok(done);
                }
            }
            let solver = row_solver(&config.solver, point);
            let (estimate, report) = fuse_standard(&obs, config.blind, &vec![point.ranks(); config.r], &solver)?;
            let metrics = compute_metrics(&reference, &estimate.model().reconstruct()?, obs.ratio)?;
            let record = RowRecord {
                row,
                point: *point,
                iterations: report.iterations,
                final_objective: report.final_objective,
                metrics,
            };
            fs::create_dir_all(&dir).map_err(|source| CliError::Output {
                path: dir.clone(),
                source,
            })?;
            write_atomic(&path, &record)?;
            ctx.log(format!("row {row}: {point:?} RSNR {:.3} dB", metrics.rsnr_db));
            Ok(record)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut csv = format!("row,lambda,eta,l,m,n,iterations,{}\n", MetricsReport::CSV_HEADER);
    for r in &records {
        let p = r.point;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.row,
            p.lambda,
            p.eta,
            p.l,
            p.m,
            p.n,
            r.iterations,
            r.metrics.csv_row()
        ));
    }
    write_text(&ctx.path("sweep.csv"), &csv)?;
    Ok(())
}
