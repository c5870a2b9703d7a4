use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use super::{
    diagnostics, gd_step_blocks, loss_direct, p_step_residual, regularized_gd_step,
    DiagnosticsRecord, FactorState, SymmetrizedView,
};
use crate::linalg;
use crate::problem::{assemble_full_sigma, ProblemInstance};
use crate::{LabError, Real};

/// Any recorded diagnostic above this magnitude aborts the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Column order of the trajectory CSV.
pub const CSV_COLUMNS: [&str; 13] = [
    "t",
    "loss",
    "rel_loss",
    "sigma_d_A",
    "sigma_1_A",
    "B_fro",
    "J_op",
    "K_op",
    "lambda_min_P",
    "sigma_1_P",
    "Delta",
    "balance_gap",
    "E_residual_op",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T: Real> {
    pub eta: T,
    /// Hard cap on the iteration index.
    pub t_max: usize,
    /// Stop as soon as the loss is at or below this value.
    pub stop_loss: Option<T>,
    pub record_every: usize,
    /// Keep full block snapshots at this interval.
    pub snapshot_every: Option<usize>,
    /// Weight of the balancing regularizer; zero runs plain descent.
    pub lambda: T,
    /// Fill `e_residual_op` on every record.
    pub track_residual: bool,
}

impl<T: Real> RunConfig<T> {
    pub fn new(eta: T, t_max: usize) -> Self {
        Self {
            eta,
            t_max,
            stop_loss: None,
            record_every: 1,
            snapshot_every: None,
            lambda: T::zero(),
            track_residual: false,
        }
    }

    pub fn stop_at_loss(mut self, delta: T) -> Self {
        self.stop_loss = Some(delta);
        self
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn snapshot_every(mut self, every: usize) -> Self {
        self.snapshot_every = Some(every.max(1));
        self
    }

    pub fn regularized(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn track_residual(mut self, on: bool) -> Self {
        self.track_residual = on;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    LossBelow,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub eta: T,
    pub lambda: T,
    pub records: Vec<DiagnosticsRecord<T>>,
    pub snapshots: Vec<FactorState<T>>,
    pub stop_reason: StopReason,
    /// Index of the last iterate reached.
    pub last_t: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &DiagnosticsRecord<T> {
        self.records
            .last()
            .expect("a trajectory always holds its initial record")
    }

    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::LossBelow
    }

    /// Records with `t` in `[from, to]`.
    pub fn window(&self, from: usize, to: usize) -> impl Iterator<Item = &DiagnosticsRecord<T>> {
        self.records
            .iter()
            .filter(move |r| r.t >= from && r.t <= to)
    }
}

/// A run that stopped early; carries everything recorded before the abort.
#[derive(Debug, Clone)]
pub struct RunFailure<T: Real> {
    pub error: LabError,
    pub partial: Trajectory<T>,
}

impl<T: Real> fmt::Display for RunFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} records kept)",
            self.error,
            self.partial.records.len()
        )
    }
}

impl<T: Real> std::error::Error for RunFailure<T> {}

fn guard<T: Real>(rec: &DiagnosticsRecord<T>) -> Result<(), LabError> {
    let limit = T::lit(DIVERGENCE_THRESHOLD);
    for (name, value) in rec.magnitudes() {
        if !value.is_finite() || value > limit {
            return Err(LabError::Divergence {
                iteration: rec.t,
                quantity: name,
                value: value.as_f64(),
            });
        }
    }
    Ok(())
}

/// Runs gradient descent from `init` on a diagonal instance, recording
/// diagnostics every `record_every` iterations plus the final iterate.
pub fn run_trajectory<T: Real>(
    inst: &ProblemInstance<T>,
    init: FactorState<T>,
    cfg: &RunConfig<T>,
) -> Result<Trajectory<T>, RunFailure<T>> {
    let mut traj = Trajectory {
        eta: cfg.eta,
        lambda: cfg.lambda,
        records: Vec::new(),
        snapshots: Vec::new(),
        stop_reason: StopReason::MaxIterations,
        last_t: init.t,
    };
    let fail = |error: LabError, mut traj: Trajectory<T>| {
        traj.stop_reason = StopReason::Diverged;
        Err(RunFailure {
            error,
            partial: traj,
        })
    };
    if let Err(e) = init.check_against(inst) {
        return fail(e, traj);
    }
    if !inst.is_diagonal() {
        return fail(
            LabError::invalid("run_trajectory needs a diagonal instance"),
            traj,
        );
    }
    let sigma_full = (cfg.lambda > T::zero()).then(|| assemble_full_sigma(inst));
    let record_every = cfg.record_every.max(1);
    let limit = T::lit(DIVERGENCE_THRESHOLD);
    let mut state = init;
    loop {
        let t = state.t;
        traj.last_t = t;
        let loss = loss_direct(&state, inst);
        if !loss.is_finite() || loss > limit {
            traj.records.push(diagnostics(&state, inst));
            return fail(
                LabError::Divergence {
                    iteration: t,
                    quantity: "loss",
                    value: loss.as_f64(),
                },
                traj,
            );
        }
        let reached = cfg.stop_loss.is_some_and(|delta| loss <= delta);
        let stop = reached || t >= cfg.t_max;
        let record_now = t.is_multiple_of(record_every) || stop;
        if record_now {
            let rec = diagnostics(&state, inst);
            if let Err(e) = guard(&rec) {
                traj.records.push(rec);
                return fail(e, traj);
            }
            traj.records.push(rec);
        }
        if cfg
            .snapshot_every
            .is_some_and(|every| t.is_multiple_of(every) || stop)
        {
            traj.snapshots.push(state.clone());
        }
        if stop {
            traj.stop_reason = if reached {
                StopReason::LossBelow
            } else {
                StopReason::MaxIterations
            };
            return Ok(traj);
        }
        let next = match &sigma_full {
            None => gd_step_blocks(&state, inst, cfg.eta),
            Some(s) => {
                let (u, v) = state.to_full();
                regularized_gd_step(&u, &v, s, cfg.eta, cfg.lambda).and_then(|(u1, v1)| {
                    let mut st = FactorState::from_full(&u1, &v1)?;
                    st.t = t + 1;
                    Ok(st)
                })
            }
        };
        let next = match next {
            Ok(n) => n,
            Err(LabError::NumericOverflow) => {
                return fail(
                    LabError::Divergence {
                        iteration: t + 1,
                        quantity: "factors",
                        value: f64::INFINITY,
                    },
                    traj,
                )
            }
            Err(e) => return fail(e, traj),
        };
        if linalg::max_abs(&next.u).max(linalg::max_abs(&next.v)) > limit {
            return fail(
                LabError::Divergence {
                    iteration: t + 1,
                    quantity: "factors",
                    value: linalg::max_abs(&next.u)
                        .max(linalg::max_abs(&next.v))
                        .as_f64(),
                },
                traj,
            );
        }
        if cfg.track_residual && record_now {
            let e = p_step_residual(
                &SymmetrizedView::new(&state, inst),
                &SymmetrizedView::new(&next, inst),
                inst,
                cfg.eta,
            );
            if let Some(last) = traj.records.last_mut() {
                last.e_residual_op = Some(linalg::op_norm(&e));
            }
        }
        state = next;
    }
}

fn fmt_value<T: Real>(x: T) -> String {
    format!("{:.17e}", x)
}

/// Writes records with the fixed column order. When `times` is given, a
/// continuous-time column `time` is inserted after `t`.
pub fn write_csv<T: Real, W: Write>(
    mut w: W,
    records: &[DiagnosticsRecord<T>],
    times: Option<&[T]>,
) -> io::Result<()> {
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if times.is_some() {
        header.insert(1, "time");
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![r.t.to_string()];
        if let Some(ts) = times {
            row.push(fmt_value(ts[i]));
        }
        for x in [
            r.loss,
            r.rel_loss,
            r.sigma_d_a,
            r.sigma_1_a,
            r.b_fro,
            r.j_op,
            r.k_op,
            r.lambda_min_p,
            r.sigma_1_p,
            r.delta,
            r.balance_gap,
        ] {
            row.push(fmt_value(x));
        }
        row.push(r.e_residual_op.map(fmt_value).unwrap_or_default());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Parses a trajectory CSV written by [`write_csv`]. Lines starting with `#`
/// are skipped; fields not carried by the CSV come back as NaN.
pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord<f64>>, LabError> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| LabError::invalid("empty trajectory CSV"))?
        .split(',')
        .collect();
    let offset = match header.as_slice() {
        h if h == CSV_COLUMNS => 0,
        h if h.len() == 14 && h[1] == "time" && h[0] == "t" && h[2..] == CSV_COLUMNS[1..] => 1,
        _ => return Err(LabError::invalid("unexpected trajectory CSV header")),
    };
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != CSV_COLUMNS.len() + offset {
            return Err(LabError::invalid(format!(
                "row {ln}: expected {} fields",
                CSV_COLUMNS.len() + offset
            )));
        }
        let num = |i: usize| -> Result<f64, LabError> {
            f[i + offset]
                .parse::<f64>()
                .map_err(|e| LabError::invalid(format!("row {ln}, column {i}: {e}")))
        };
        let t = f[0]
            .parse::<usize>()
            .map_err(|e| LabError::invalid(format!("row {ln}: {e}")))?;
        out.push(DiagnosticsRecord {
            t,
            loss: num(1)?,
            rel_loss: num(2)?,
            sigma_d_a: num(3)?,
            sigma_1_a: num(4)?,
            b_fro: num(5)?,
            j_op: num(6)?,
            k_op: num(7)?,
            lambda_min_p: num(8)?,
            sigma_1_p: num(9)?,
            delta: num(10)?,
            balance_gap: num(11)?,
            e_residual_op: if f[12 + offset].is_empty() {
                None
            } else {
                Some(num(12)?)
            },
            sigma_d_u: f64::NAN,
            sigma_d_v: f64::NAN,
            signal_headroom: f64::NAN,
            q_fro: f64::NAN,
        });
    }
    Ok(out)
}
