//! `verify-lemmas` and `oracle-compare`.

use std::path::Path;

use lowrank_lab::flow::{
    closed_form_p, closed_form_s, integrate_rank1, integrate_s_ode, random_spd_split,
    rank1_solution, ClosedFormInputs,
};
use lowrank_lab::linalg;
use lowrank_lab::verification::{
    commuting_scaling_sweep, lemma_sweep, Lemma, LemmaSweepReport, SweepSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::artifacts;
use crate::config::RawConfig;
use crate::error::CliError;

#[derive(Serialize)]
struct LemmaFile<'a> {
    samples: usize,
    d_min: usize,
    d_max: usize,
    betas: &'a [f64],
    base_seed: u64,
    reports: Vec<LemmaSweepReport>,
    passed: bool,
}

pub fn cmd_verify_lemmas(raw: &RawConfig, out: &Path) -> Result<(), CliError> {
    let cfg = raw.single()?;
    let hash = raw.hash();
    let spec = SweepSpec {
        dims: cfg.d_min..=cfg.d_max,
        betas: cfg.betas.clone(),
        ..SweepSpec::new(cfg.samples, cfg.seed)
    };
    spec.validate()?;
    let reports = vec![
        lemma_sweep(Lemma::SignalGrowth, &spec)?,
        lemma_sweep(Lemma::ErrorContraction, &spec)?,
        commuting_scaling_sweep(&spec)?,
    ];
    let passed = reports.iter().all(LemmaSweepReport::passed);
    for r in &reports {
        println!(
            "{:?}: {}/{} checked, {} skipped, {} violations",
            r.lemma, r.checked, r.requested, r.skipped, r.violations
        );
    }
    std::fs::create_dir_all(out)?;
    let file = LemmaFile {
        samples: cfg.samples,
        d_min: cfg.d_min,
        d_max: cfg.d_max,
        betas: &cfg.betas,
        base_seed: cfg.seed,
        reports,
        passed,
    };
    artifacts::write_json(out, "lemmas.json", &hash, &file)?;
    if !passed {
        return Err(CliError::Violation(
            "lemma sweep found violations or ran out of admissible samples".into(),
        ));
    }
    Ok(())
}

/// Base tolerances on the two RK4 comparisons and the split residual.
pub const ORACLE_TOLS: [f64; 3] = [1e-6, 1e-9, 1e-9];
/// Step (in units of `1/σ₁`) up to which the RK4 tolerances apply as is;
/// coarser steps relax them by `(dt·σ₁ / ORACLE_REFERENCE_STEP)⁴`.
pub const ORACLE_REFERENCE_STEP: f64 = 1e-3;

#[derive(Serialize)]
struct OracleFile {
    singular_values: Vec<f64>,
    t_end: f64,
    dt: f64,
    relax_factor: f64,
    closed_form_vs_rk4: f64,
    rank1_vs_rk4: f64,
    split_residual: f64,
    tolerances: [f64; 3],
    passed: bool,
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

pub fn cmd_oracle_compare(raw: &RawConfig, out: &Path) -> Result<(), CliError> {
    let cfg = raw.single()?;
    let hash = raw.hash();
    let sigma = cfg.singular_values()?;
    let (s1, sd) = (sigma[0], *sigma.last().expect("non-empty spectrum"));
    let t_end = cfg.t_end.unwrap_or(1.0 / sd);
    let dt = cfg.dt.unwrap_or(1e-4 / s1);
    if !(t_end >= 0.0 && dt > 0.0) {
        return Err(CliError::Validation("need t_end >= 0 and dt > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (s0, _) = random_spd_split(&sigma, &mut rng);
    let inputs = ClosedFormInputs::new(&sigma, s0.clone())?;

    let exact = closed_form_s(&inputs, t_end)?;
    let rk = integrate_s_ode(&s0, &linalg::diag(&sigma), t_end, dt)?;
    let closed_vs_rk4 = relative((&exact - rk).norm(), exact.norm());

    let mut rank1 = 0.0f64;
    for (i, &s) in sigma.iter().enumerate() {
        let a0 = s0[(i, i)].sqrt();
        let reference = rank1_solution(s, a0, t_end);
        let err = (reference - integrate_rank1(s, a0, t_end, dt)?).abs();
        rank1 = rank1.max(relative(err, reference.abs()));
    }

    let mut split = 0.0f64;
    for k in 0..4 {
        let t = t_end * k as f64 / 3.0;
        let sum = closed_form_s(&inputs, t)? + closed_form_p(&inputs, t)?;
        split = split.max(linalg::op_norm(&(sum - linalg::diag(&sigma))) / s1);
    }

    let relax = (dt * s1 / ORACLE_REFERENCE_STEP).powi(4).max(1.0);
    let tolerances = [
        ORACLE_TOLS[0] * relax,
        ORACLE_TOLS[1] * relax,
        ORACLE_TOLS[2],
    ];
    let errors = [closed_vs_rk4, rank1, split];
    let passed = errors.iter().zip(&tolerances).all(|(e, t)| e <= t);
    println!(
        "closed form vs RK4 {closed_vs_rk4:.3e}, rank-1 vs RK4 {rank1:.3e}, split residual {split:.3e} (relax x{relax:.3e})"
    );
    std::fs::create_dir_all(out)?;
    let file = OracleFile {
        singular_values: sigma,
        t_end,
        dt,
        relax_factor: relax,
        closed_form_vs_rk4: closed_vs_rk4,
        rank1_vs_rk4: rank1,
        split_residual: split,
        tolerances,
        passed,
    };
    artifacts::write_json(out, "oracle.json", &hash, &file)?;
    if !passed {
        return Err(CliError::Violation(
            "oracle comparison exceeded tolerance".into(),
        ));
    }
    Ok(())
}
