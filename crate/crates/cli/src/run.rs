use std::collections::BTreeMap;
use std::path::Path;

use lowrank_lab::dynamics::{run_trajectory, write_csv, FactorState, RunConfig, StopReason};
use lowrank_lab::phases::{detect_phases, PhaseReport};
use lowrank_lab::problem::{init_factors, InitSpec, RNG_NAME};
use lowrank_lab::verification::{
    check_b_recursion, check_complement_monotone, check_stage1_conditions, check_stage2_conditions,
    fit_envelope_constant, BRecursionReport, ConditionReport, StageOneBounds, StageTwoBounds,
};
use lowrank_lab::{Instance, LabError, Run};
use serde::Serialize;

use crate::artifacts::{self, int, num};
use crate::config::{ExperimentConfig, Mode, RawConfig};
use crate::error::CliError;
use crate::svg::{self, Panel, Series};

#[derive(Debug, Clone, Serialize)]
pub struct Conditions {
    pub stage_one: ConditionReport,
    pub stage_two: ConditionReport,
    /// Only checked when `η ≤ 1/(3σ₁)`.
    pub complement_monotone: Option<ConditionReport>,
    pub envelope_k: f64,
    /// Present when snapshots were taken.
    pub b_recursion: Option<BRecursionReport>,
}

impl Conditions {
    pub fn all_hold(&self) -> bool {
        self.stage_one.all_hold()
            && self.stage_two.all_hold()
            && self
                .complement_monotone
                .as_ref()
                .is_none_or(|c| c.all_hold())
            && self
                .b_recursion
                .as_ref()
                .is_none_or(|b| b.conditions.all_hold())
    }

    pub fn violated(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for rep in [
            Some(&self.stage_one),
            Some(&self.stage_two),
            self.complement_monotone.as_ref(),
        ]
        .into_iter()
        .flatten()
        .chain(self.b_recursion.as_ref().map(|b| &b.conditions))
        {
            names.extend(rep.violated().into_iter().map(str::to_string));
        }
        names
    }
}

/// A finished (or diverged) single run with its analysis.
pub struct Outcome {
    pub inst: Instance,
    pub epsilon: f64,
    pub eta: f64,
    pub lambda: f64,
    pub t_max: usize,
    pub delta_abs: f64,
    pub traj: Run,
    pub failure: Option<LabError>,
    pub phases: PhaseReport,
    pub conditions: Conditions,
}

impl Outcome {
    pub fn status(&self) -> &'static str {
        match (&self.failure, self.traj.stop_reason) {
            (Some(_), _) | (_, StopReason::Diverged) => "diverged",
            (None, StopReason::LossBelow) => "converged",
            (None, StopReason::MaxIterations) => "max_iterations",
        }
    }
}

pub fn execute(cfg: &ExperimentConfig, lambda: f64) -> Result<Outcome, CliError> {
    let inst = cfg.instance()?;
    let (epsilon, eta) = cfg.step_parameters(&inst);
    let t_max = cfg.t_max(&inst, eta);
    let delta_abs = cfg.delta_abs(&inst);
    let spec = InitSpec::new(epsilon, cfg.seed).with_c(cfg.c);
    spec.validate()?;
    let (u0, v0) = init_factors(inst.m(), inst.n(), inst.d(), &spec);
    let mut run_cfg = RunConfig::new(eta, t_max)
        .stop_at_loss(delta_abs)
        .record_every(cfg.record_every)
        .regularized(lambda)
        .track_residual(true);
    if let Some(every) = cfg.snapshot_every {
        run_cfg = run_cfg.snapshot_every(every);
    }
    let (traj, failure) = match run_trajectory(&inst, FactorState::from_full(&u0, &v0)?, &run_cfg) {
        Ok(t) => (t, None),
        Err(f) => match f.error {
            LabError::Divergence { .. } | LabError::NumericOverflow => (f.partial, Some(f.error)),
            other => return Err(other.into()),
        },
    };
    let phases = detect_phases(&traj, &inst, delta_abs);
    let conditions = analyse(cfg, &inst, epsilon, eta, &traj, &phases);
    Ok(Outcome {
        inst,
        epsilon,
        eta,
        lambda,
        t_max,
        delta_abs,
        traj,
        failure,
        phases,
        conditions,
    })
}

fn analyse(
    cfg: &ExperimentConfig,
    inst: &Instance,
    eps: f64,
    eta: f64,
    traj: &Run,
    phases: &PhaseReport,
) -> Conditions {
    let recs = &traj.records;
    let stage_one = StageOneBounds {
        epsilon: eps,
        c: cfg.c,
        e_b: cfg.e_b(),
    };
    let stage_two = StageTwoBounds {
        k_b: cfg.k_b,
        ..StageTwoBounds::new(eta, eps, cfg.c)
    };
    let monotone = eta <= 1.0 / (3.0 * inst.sigma_1());
    Conditions {
        stage_one: check_stage1_conditions(recs, inst, &stage_one, phases.t0),
        stage_two: check_stage2_conditions(recs, inst, &stage_two, phases.t0),
        complement_monotone: monotone.then(|| check_complement_monotone(recs, phases.t0)),
        envelope_k: fit_envelope_constant(recs, inst, eps, cfg.e_b(), phases.t0),
        b_recursion: cfg
            .snapshot_every
            .map(|_| check_b_recursion(&traj.snapshots, inst, eta)),
    }
}

/// One line of `summary.csv` / `sweep.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub row: usize,
    pub seed: u64,
    pub point: String,
    pub epsilon: f64,
    pub eta: f64,
    pub lambda: f64,
    pub delta: f64,
    pub status: String,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub t1: Option<usize>,
    pub t0: Option<usize>,
    pub tf: Option<usize>,
    pub t2_normalized: Option<f64>,
    pub growth_rate: Option<f64>,
    pub decay_rate: Option<f64>,
    pub conditions_hold: bool,
    pub success: bool,
}

pub const SUMMARY_HEADER: &str =
    "row,seed,point,epsilon,eta,lambda,delta,status,iterations,final_loss,t1,t0,tf,\
t2_normalized,growth_rate,decay_rate,conditions_hold,success,success_rate";

impl SummaryRow {
    pub fn new(row: usize, point: String, cfg: &ExperimentConfig, o: &Outcome) -> Self {
        let conditions_hold = o.conditions.all_hold();
        let converged = o.status() == "converged";
        Self {
            row,
            seed: cfg.seed,
            point,
            epsilon: o.epsilon,
            eta: o.eta,
            lambda: o.lambda,
            delta: o.delta_abs,
            status: o.status().into(),
            iterations: o.traj.last_t,
            final_loss: o.traj.records.last().map(|r| r.loss),
            t1: o.phases.t1,
            t0: o.phases.t0,
            tf: o.phases.tf,
            t2_normalized: o.phases.t2_normalized,
            growth_rate: o.phases.growth_rate,
            decay_rate: o.phases.decay_rate,
            conditions_hold,
            success: converged && (cfg.mode == Mode::Practical || conditions_hold),
        }
    }

    pub fn csv_line(&self, success_rate: f64) -> String {
        [
            self.row.to_string(),
            self.seed.to_string(),
            self.point.clone(),
            format!("{:e}", self.epsilon),
            format!("{:e}", self.eta),
            format!("{:e}", self.lambda),
            format!("{:e}", self.delta),
            self.status.clone(),
            self.iterations.to_string(),
            num(self.final_loss),
            int(self.t1),
            int(self.t0),
            int(self.tf),
            num(self.t2_normalized),
            num(self.growth_rate),
            num(self.decay_rate),
            self.conditions_hold.to_string(),
            self.success.to_string(),
            format!("{success_rate:e}"),
        ]
        .join(",")
    }
}

fn trajectory_csv(o: &Outcome) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, &o.traj.records, None)?;
    Ok(buf)
}

#[derive(Serialize)]
struct Resolved<'a> {
    mode: Mode,
    m: usize,
    n: usize,
    d: usize,
    singular_values: &'a [f64],
    epsilon: f64,
    eta: f64,
    lambda: f64,
    c: f64,
    e_b: f64,
    t_max: usize,
    delta_abs: f64,
    record_every: usize,
    snapshot_every: Option<usize>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'static str,
    config: BTreeMap<String, String>,
    resolved: Resolved<'a>,
    generator: &'static str,
    versions: BTreeMap<&'static str, &'static str>,
    stop_reason: String,
    iterations: usize,
    failure: Option<String>,
    artifacts: Vec<&'static str>,
}

pub fn versions() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("lowrank-lab", env!("CARGO_PKG_VERSION")),
        ("nalgebra", "0.35"),
    ])
}

pub fn config_map(raw: &RawConfig) -> BTreeMap<String, String> {
    raw.canonical()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn plot(o: &Outcome) -> String {
    let series = |label: &str, f: &dyn Fn(&lowrank_lab::Record) -> f64| Series {
        label: label.into(),
        points: o.traj.records.iter().map(|r| (r.t as f64, f(r))).collect(),
    };
    let panel = |title: &str, s: Series| Panel {
        title: title.into(),
        series: vec![s],
    };
    svg::render(&[
        panel("loss", series("loss", &|r| r.loss)),
        panel("sigma_d(A)", series("sigma_d(A)", &|r| r.sigma_d_a)),
        panel("||B||_F", series("||B||_F", &|r| r.b_fro)),
        panel("Delta", series("Delta", &|r| r.delta)),
    ])
}

fn balance_plot(base: &Outcome, other: &Outcome) -> String {
    let series = |o: &Outcome| Series {
        label: format!("lambda = {}", o.lambda),
        points: o
            .traj
            .records
            .iter()
            .map(|r| (r.t as f64, r.balance_gap))
            .collect(),
    };
    svg::render(&[Panel {
        title: "balance gap".into(),
        series: vec![series(base), series(other)],
    }])
}

pub fn cmd_run(raw: &RawConfig, out: &Path, plots: bool) -> Result<(), CliError> {
    let cfg = raw.single()?;
    let hash = raw.hash();
    std::fs::create_dir_all(out)?;
    let o = execute(&cfg, cfg.lambda)?;
    let mut written = vec![
        "trajectory.csv",
        "phases.json",
        "conditions.json",
        "summary.csv",
        "metadata.json",
    ];

    artifacts::write_csv(out, "trajectory.csv", &hash, &trajectory_csv(&o)?)?;
    artifacts::write_json(out, "phases.json", &hash, &o.phases)?;
    artifacts::write_json(out, "conditions.json", &hash, &o.conditions)?;
    let row = SummaryRow::new(0, String::new(), &cfg, &o);
    let rate = if row.success { 1.0 } else { 0.0 };
    artifacts::write_csv(
        out,
        "summary.csv",
        &hash,
        format!("{SUMMARY_HEADER}\n{}\n", row.csv_line(rate)).as_bytes(),
    )?;
    if plots {
        artifacts::write_svg(out, "trajectory.svg", &hash, &plot(&o))?;
        written.push("trajectory.svg");
    }

    let comparison = match cfg.compare_lambda {
        Some(l) => {
            let other = execute(&cfg, l)?;
            artifacts::write_csv(
                out,
                "trajectory_compare.csv",
                &hash,
                &trajectory_csv(&other)?,
            )?;
            written.push("trajectory_compare.csv");
            if plots {
                artifacts::write_svg(out, "balance_gap.svg", &hash, &balance_plot(&o, &other))?;
                written.push("balance_gap.svg");
            }
            Some(other)
        }
        None => None,
    };

    let sv = o.inst.singular_values();
    let meta = Metadata {
        command: "run",
        config: config_map(raw),
        resolved: Resolved {
            mode: cfg.mode,
            m: o.inst.m(),
            n: o.inst.n(),
            d: o.inst.d(),
            singular_values: sv,
            epsilon: o.epsilon,
            eta: o.eta,
            lambda: o.lambda,
            c: cfg.c,
            e_b: cfg.e_b(),
            t_max: o.t_max,
            delta_abs: o.delta_abs,
            record_every: cfg.record_every,
            snapshot_every: cfg.snapshot_every,
        },
        generator: RNG_NAME,
        versions: versions(),
        stop_reason: o.status().into(),
        iterations: o.traj.last_t,
        failure: o.failure.as_ref().map(|e| e.to_string()),
        artifacts: written,
    };
    artifacts::write_json(out, "metadata.json", &hash, &meta)?;

    println!(
        "{}: {} after {} iterations, final loss {:e}",
        hash.get(..12).unwrap_or(&hash),
        o.status(),
        o.traj.last_t,
        o.traj.records.last().map_or(f64::NAN, |r| r.loss)
    );
    if let Some(e) = &o.failure {
        return Err(CliError::Divergence(e.to_string()));
    }
    if let Some(e) = comparison.as_ref().and_then(|c| c.failure.as_ref()) {
        return Err(CliError::Divergence(format!("comparison run: {e}")));
    }
    if cfg.mode == Mode::Theory && !o.conditions.all_hold() {
        return Err(CliError::Violation(format!(
            "conditions violated: {}",
            o.conditions.violated().join(", ")
        )));
    }
    Ok(())
}
