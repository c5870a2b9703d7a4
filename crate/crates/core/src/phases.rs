//! Two-stage structure of a recorded run: threshold crossings and
//! log-linear rate fits.

use serde::Serialize;

use crate::dynamics::{DiagnosticsRecord, Trajectory};
use crate::problem::ProblemInstance;
use crate::{LabError, Real, Result};

/// Minimum number of usable points for a log-linear rate fit.
pub const MIN_FIT_POINTS: usize = 10;
/// Minimum number of non-saturated sweep points for a scaling fit.
pub const MIN_SWEEP_POINTS: usize = 4;

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_used: usize,
    /// Points dropped because their value was non-positive or non-finite.
    pub n_dropped: usize,
}

impl FitResult {
    /// `exp(slope)`: the fitted per-step ratio of a log-linear fit.
    pub fn ratio(&self) -> f64 {
        self.slope.exp()
    }
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (slope, intercept, r2)
}

/// Least-squares fit of `y` against `x`.
pub fn fit_linear(points: &[(f64, f64)], min_points: usize) -> Result<FitResult> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if usable.len() < min_points {
        return Err(LabError::InsufficientData {
            needed: min_points,
            got: usable.len(),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = usable.iter().copied().unzip();
    let (slope, intercept, r2) = ols(&xs, &ys);
    Ok(FitResult {
        slope,
        intercept,
        r2,
        n_used: usable.len(),
        n_dropped: points.len() - usable.len(),
    })
}

/// Least-squares fit of `ln y` against `x`; non-positive `y` are dropped.
pub fn fit_log_linear(points: &[(f64, f64)]) -> Result<FitResult> {
    let logged: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|(x, y)| (*x, y.ln()))
        .collect();
    let mut fit = fit_linear(&logged, MIN_FIT_POINTS)?;
    fit.n_dropped += points.len() - logged.len();
    Ok(fit)
}

/// Slope of `ln(s_t/(σ_d − s_t))` over records with `t` in `window`, where
/// `s_t = σ_d(A_t)²`.
pub fn fit_growth_rate<T: Real>(
    records: &[DiagnosticsRecord<T>],
    inst: &ProblemInstance<T>,
    window: (usize, usize),
) -> Result<FitResult> {
    let sd = inst.sigma_d().as_f64();
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| {
            let s = r.sigma_d_a.as_f64().powi(2);
            (r.t as f64, s / (sd - s))
        })
        .collect();
    fit_log_linear(&pts)
}

/// Slope of `ln Δ_t` over records with `t` in `window`.
pub fn fit_decay_rate<T: Real>(
    records: &[DiagnosticsRecord<T>],
    window: (usize, usize),
) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t as f64, r.delta.as_f64()))
        .collect();
    fit_log_linear(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    /// First `t` with `σ_d(A_t) ≥ √(σ_d/2)`.
    pub t1: Option<usize>,
    /// Iterations after `t1` until `σ₁(P_t) ≤ σ_d/4`.
    pub t2: Option<usize>,
    pub t0: Option<usize>,
    /// First `t` with `f ≤ δ`.
    pub tf: Option<usize>,
    pub delta: f64,
    pub growth: Option<FitResult>,
    pub decay: Option<FitResult>,
    /// Per-step ratios `exp(slope)` of the two fits.
    pub growth_rate: Option<f64>,
    pub decay_rate: Option<f64>,
    /// `t2 / ((1/(ησ_d)) ln κ)`; absent when `κ = 1` or `t2` is undetected.
    pub t2_normalized: Option<f64>,
    pub warnings: Vec<String>,
}

/// Phase boundaries and rates from diagnostics records. `eta` is only used
/// to normalize `t2`.
pub fn detect_phases_records<T: Real>(
    records: &[DiagnosticsRecord<T>],
    inst: &ProblemInstance<T>,
    delta: T,
    eta: Option<T>,
) -> PhaseReport {
    let sd = inst.sigma_d();
    let a_level = (sd * T::lit(0.5)).sqrt();
    let p_level = sd * T::lit(0.25);
    let mut warnings = Vec::new();

    let t1_idx = records.iter().position(|r| r.sigma_d_a >= a_level);
    let t0_idx = t1_idx.and_then(|i| {
        records[i..]
            .iter()
            .position(|r| r.sigma_1_p <= p_level)
            .map(|k| i + k)
    });
    let t1 = t1_idx.map(|i| records[i].t);
    let t0 = t0_idx.map(|i| records[i].t);
    let t2 = t1.zip(t0).map(|(a, b)| b - a);
    let tf = records.iter().find(|r| r.loss <= delta).map(|r| r.t);

    if let Some(i) = t1_idx {
        if let Some(r) = records[i..].iter().find(|r| r.sigma_d_a < a_level) {
            warnings.push(format!(
                "sigma_d(A) fell back below sqrt(sigma_d/2) at t={}",
                r.t
            ));
        }
    }
    if let Some(i) = t0_idx {
        if let Some(r) = records[i..].iter().find(|r| r.sigma_1_p > p_level) {
            warnings.push(format!("sigma_1(P) rose back above sigma_d/4 at t={}", r.t));
        }
    }

    let growth = t1.map(|end| fit_growth_rate(records, inst, (0, end)));
    let decay = t0
        .zip(tf)
        .map(|(from, to)| fit_decay_rate(records, (from, to)));
    let mut keep = |name: &str, fit: Option<Result<FitResult>>| match fit {
        Some(Ok(f)) => Some(f),
        Some(Err(e)) => {
            warnings.push(format!("{name} fit skipped: {e}"));
            None
        }
        None => None,
    };
    let growth = keep("growth", growth);
    let decay = keep("decay", decay);

    let ln_kappa = inst.kappa().as_f64().ln();
    let t2_normalized = match (t2, eta) {
        (Some(t2), Some(eta)) if ln_kappa > 0.0 && eta > T::zero() => {
            Some(t2 as f64 * eta.as_f64() * sd.as_f64() / ln_kappa)
        }
        _ => None,
    };

    PhaseReport {
        t1,
        t2,
        t0,
        tf,
        delta: delta.as_f64(),
        growth_rate: growth.map(|f| f.ratio()),
        decay_rate: decay.map(|f| f.ratio()),
        growth,
        decay,
        t2_normalized,
        warnings,
    }
}

pub fn detect_phases<T: Real>(
    traj: &Trajectory<T>,
    inst: &ProblemInstance<T>,
    delta: T,
) -> PhaseReport {
    detect_phases_records(&traj.records, inst, delta, Some(traj.eta))
}

/// One point of a `δ` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub tf: Option<usize>,
    pub t0: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub delta: f64,
    pub ln_inv_delta: f64,
    pub tf: Option<usize>,
    /// False when `Tf` is missing or saturated at `T0`.
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// `Tf` against `ln(1/δ)`.
    pub fit: FitResult,
}

/// Linear dependence of `Tf` on `ln(1/δ)`. Points with `Tf ≤ T0` are
/// saturated (the target was met before the local phase) and excluded.
pub fn total_time_scaling(points: &[SweepPoint]) -> Result<ScalingTable> {
    let rows: Vec<ScalingRow> = points
        .iter()
        .map(|p| ScalingRow {
            delta: p.delta,
            ln_inv_delta: -p.delta.ln(),
            tf: p.tf,
            used: p.delta > 0.0 && matches!((p.tf, p.t0), (Some(tf), Some(t0)) if tf > t0),
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.used)
        .map(|r| (r.ln_inv_delta, r.tf.expect("used rows have tf") as f64))
        .collect();
    let mut fit = fit_linear(&pts, MIN_SWEEP_POINTS)?;
    fit.n_dropped = rows.len() - pts.len();
    Ok(ScalingTable { rows, fit })
}
