use std::collections::BTreeMap;
use std::path::Path;

use lowrank_lab::phases::{total_time_scaling, SweepPoint, MIN_SWEEP_POINTS};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, int, num};
use crate::config::{ExperimentConfig, RawConfig};
use crate::error::CliError;
use crate::run::{execute, SummaryRow, SUMMARY_HEADER};

pub const THREADS_ENV: &str = "LOWRANK_LAB_THREADS";

/// Worker count from the environment; rayon's default when unset.
fn threads() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Validation(format!(
                "{THREADS_ENV} must be a positive integer, got {s:?}"
            ))),
        },
    }
}

struct Job {
    row: usize,
    point_index: usize,
    point: Vec<(String, String)>,
    cfg: ExperimentConfig,
}

fn label(point: &[(String, String)], skip: Option<&str>) -> String {
    point
        .iter()
        .filter(|(k, _)| Some(k.as_str()) != skip)
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

enum RowResult {
    Done(SummaryRow),
    Failed {
        row: usize,
        seed: u64,
        point: String,
        message: String,
    },
}

impl RowResult {
    fn diverged(&self) -> bool {
        matches!(self, RowResult::Done(r) if r.status == "diverged")
    }
}

#[derive(Serialize)]
struct PointSummary {
    point: String,
    runs: usize,
    converged: usize,
    successes: usize,
    success_rate: f64,
    mean_tf: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    rows: usize,
    diverged: usize,
    failed: usize,
    points: Vec<PointSummary>,
}

/// Expands the grid, runs every row (concurrently, capped by
/// `LOWRANK_LAB_THREADS`) and merges results in grid order. Replicate `r`
/// of every grid point uses seed `seed + r`.
pub fn cmd_sweep(raw: &RawConfig, out: &Path) -> Result<(), CliError> {
    let hash = raw.hash();
    let grid = raw.grid();
    let mut jobs = Vec::new();
    for (point_index, point) in grid.iter().enumerate() {
        let base = raw.at(point)?;
        for r in 0..base.replicates {
            let mut cfg = base.clone();
            cfg.seed = base.seed.wrapping_add(r as u64);
            jobs.push(Job {
                row: jobs.len(),
                point_index,
                point: point.clone(),
                cfg,
            });
        }
    }
    std::fs::create_dir_all(out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads()?)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let results: Vec<RowResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| match execute(&job.cfg, job.cfg.lambda) {
                Ok(o) => RowResult::Done(SummaryRow::new(
                    job.row,
                    label(&job.point, None),
                    &job.cfg,
                    &o,
                )),
                Err(e) => RowResult::Failed {
                    row: job.row,
                    seed: job.cfg.seed,
                    point: label(&job.point, None),
                    message: e.to_string(),
                },
            })
            .collect()
    });

    let mut per_point: BTreeMap<usize, Vec<&RowResult>> = BTreeMap::new();
    for (job, res) in jobs.iter().zip(&results) {
        per_point.entry(job.point_index).or_default().push(res);
    }
    let points: Vec<PointSummary> = per_point
        .iter()
        .map(|(&i, rows)| {
            let done: Vec<&SummaryRow> = rows
                .iter()
                .filter_map(|r| match r {
                    RowResult::Done(s) => Some(s),
                    RowResult::Failed { .. } => None,
                })
                .collect();
            let tfs: Vec<f64> = done.iter().filter_map(|r| r.tf.map(|t| t as f64)).collect();
            let successes = done.iter().filter(|r| r.success).count();
            PointSummary {
                point: label(&grid[i], None),
                runs: rows.len(),
                converged: done.iter().filter(|r| r.status == "converged").count(),
                successes,
                success_rate: successes as f64 / rows.len() as f64,
                mean_tf: (!tfs.is_empty()).then(|| tfs.iter().sum::<f64>() / tfs.len() as f64),
            }
        })
        .collect();

    let mut csv = format!("{SUMMARY_HEADER},message\n");
    for (job, res) in jobs.iter().zip(&results) {
        let rate = points[job.point_index].success_rate;
        match res {
            RowResult::Done(r) => csv.push_str(&format!("{},\n", r.csv_line(rate))),
            RowResult::Failed {
                row,
                seed,
                point,
                message,
            } => csv.push_str(&format!(
                "{row},{seed},{point},,,,,error,,,,,,,,,false,false,{rate},{}\n",
                message.replace(',', ";")
            )),
        }
    }
    artifacts::write_csv(out, "sweep.csv", &hash, csv.as_bytes())?;

    if let Some(scaling) = scaling_table(raw, &jobs, &results) {
        artifacts::write_csv(out, "scaling.csv", &hash, scaling.as_bytes())?;
    }

    let diverged = results.iter().filter(|r| r.diverged()).count();
    let failed = results
        .iter()
        .filter(|r| matches!(r, RowResult::Failed { .. }))
        .count();
    let summary = Summary {
        rows: results.len(),
        diverged,
        failed,
        points,
    };
    artifacts::write_json(out, "summary.json", &hash, &summary)?;

    for p in &summary.points {
        let shown = if p.point.is_empty() {
            "(single point)"
        } else {
            &p.point
        };
        println!("{shown}: {}/{} succeeded", p.successes, p.runs);
    }
    if diverged > 0 {
        return Err(CliError::Divergence(format!(
            "{diverged} of {} rows diverged",
            results.len()
        )));
    }
    if failed > 0 {
        return Err(CliError::Validation(format!(
            "{failed} of {} rows failed",
            results.len()
        )));
    }
    Ok(())
}

/// `Tf` against `ln(1/δ)` for every group of rows sharing all settings but
/// `δ`, when `δ` is swept over at least four values.
fn scaling_table(raw: &RawConfig, jobs: &[Job], results: &[RowResult]) -> Option<String> {
    let deltas = raw
        .axes()
        .into_iter()
        .find(|(k, _)| *k == "delta")
        .map(|(_, v)| v.len())?;
    if deltas < MIN_SWEEP_POINTS {
        return None;
    }
    let mut groups: BTreeMap<(String, u64), Vec<SweepPoint>> = BTreeMap::new();
    for (job, res) in jobs.iter().zip(results) {
        let point = match res {
            RowResult::Done(r) => SweepPoint {
                delta: r.delta,
                tf: r.tf,
                t0: r.t0,
            },
            RowResult::Failed { .. } => SweepPoint {
                delta: f64::NAN,
                tf: None,
                t0: None,
            },
        };
        groups
            .entry((label(&job.point, Some("delta")), job.cfg.seed))
            .or_default()
            .push(point);
    }
    let mut csv = String::from("group,seed,slope,intercept,r2,n_used,n_excluded,note\n");
    for ((group, seed), pts) in &groups {
        match total_time_scaling(pts) {
            Ok(t) => csv.push_str(&format!(
                "{group},{seed},{},{},{},{},{},\n",
                t.fit.slope,
                t.fit.intercept,
                t.fit.r2,
                t.fit.n_used,
                int(Some(t.rows.iter().filter(|r| !r.used).count())),
            )),
            Err(e) => csv.push_str(&format!(
                "{group},{seed},{},{},{},,,{}\n",
                num(None),
                num(None),
                num(None),
                e.to_string().replace(',', ";")
            )),
        }
    }
    Some(csv)
}
