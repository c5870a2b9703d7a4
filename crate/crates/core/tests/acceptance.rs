//! Acceptance suite. Prints one `[criterion N] PASS|FAIL` line per
//! criterion and exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use lowrank_lab::dynamics::{
    ab_step, desymmetrize, gd_step_blocks, gd_step_full, run_trajectory, symmetrize, FactorState,
    RunConfig,
};
use lowrank_lab::flow::{
    closed_form_p, closed_form_s, integrate_flow, integrate_rank1, integrate_s_ode,
    invariance_drift, rank1_solution, ClosedFormInputs,
};
use lowrank_lab::phases::{detect_phases, total_time_scaling, PhaseReport, SweepPoint};
use lowrank_lab::problem::{
    assemble_full_sigma, init_factors, make_instance, theory_parameters, InitSpec, TheoryConstants,
    DEFAULT_C,
};
use lowrank_lab::verification::{
    check_complement_monotone, check_stage1_conditions, check_stage2_conditions,
    fit_envelope_constant, lemma_sweep, Lemma, StageOneBounds, StageTwoBounds, SweepSpec,
};
use lowrank_lab::{linalg, Instance, Mat, Run};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LEMMA_SAMPLES: usize = 1000;
const IDENTITY_SAMPLES: usize = 100;
const LEMMA_SEED: u64 = 2024;
const LEMMA_BUDGET_SECS: f64 = 30.0;

const EQUIV_STATES: usize = 100;
const STEP_EQUIV_TOL: f64 = 1e-13;
const EQUIV_BUDGET_SECS: f64 = 5.0;

const ORACLE_REL_TOL: f64 = 1e-6;
const SPLIT_TOL: f64 = 1e-9;
const RANK1_TOL: f64 = 1e-9;
const ORACLE_BUDGET_SECS: f64 = 60.0;

const FD_POINTS: usize = 20;
const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-6;

const GRID_DIMS: [usize; 3] = [1, 2, 3];
const GRID_KAPPAS: [f64; 2] = [2.0, 10.0];
const GRID_SIZE: usize = 20;
const SEEDS: u64 = 10;
const MIN_SUCCESSES: usize = 9;
/// Target loss in units of `σ_d²`.
const TARGET_LOSS: f64 = 1e-10;
/// Constant in front of the theory step size; see the README.
const K_ETA: f64 = 1e5;

const RATE_FRACTION: f64 = 0.9;
const SCALING_DELTAS: [f64; 4] = [1e-4, 1e-6, 1e-8, 1e-10];
const SCALING_R2: f64 = 0.99;
const HALVING_TOL: f64 = 0.15;

const DRIFT_RATIO: f64 = 8.0;
const GAP_FACTOR: f64 = 10.0;
const REGULARIZER: f64 = 1.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    DMatrix::from_fn(r, c, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn random_spectrum(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut sv: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..5.0)).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

fn rel_max_diff(a: &Mat, b: &Mat) -> f64 {
    linalg::max_abs(&(a - b)) / linalg::max_abs(b).max(1.0)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let spec = SweepSpec::new(LEMMA_SAMPLES, LEMMA_SEED);
    let s = lemma_sweep(Lemma::SignalGrowth, &spec).expect("valid sweep");
    let p = lemma_sweep(Lemma::ErrorContraction, &spec).expect("valid sweep");
    let e = lemma_sweep(
        Lemma::CommutingScaling,
        &SweepSpec::new(IDENTITY_SAMPLES, LEMMA_SEED),
    )
    .expect("valid sweep");
    let secs = start.elapsed().as_secs_f64();
    let pass = s.passed() && p.passed() && e.passed() && secs < LEMMA_BUDGET_SECS;
    verdict(
        pass,
        format!(
            "signal lemma {}/{} checked, {} violations, {} skipped; error lemma {}/{} checked, {} violations, {} skipped; \
             scaling identity {} violations, max residual/sigma_1 {:.2e} (tol {:.0e}); {:.1}s (budget {}s)",
            s.checked,
            s.requested,
            s.violations,
            s.skipped,
            p.checked,
            p.requested,
            p.violations,
            p.skipped,
            e.violations,
            e.worst.unwrap_or(0.0),
            lowrank_lab::verification::IDENTITY_TOL,
            secs,
            LEMMA_BUDGET_SECS
        ),
    )
}

fn rational(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(
        BigInt::from(rng.random_range(-1000i64..=1000)),
        BigInt::from(rng.random_range(1i64..=97)),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_full, mut worst_ab) = (0.0f64, 0.0f64);
    let mut f64_roundtrip_ulps = 0.0f64;
    let mut exact_roundtrip = true;
    for _ in 0..EQUIV_STATES {
        let d = rng.random_range(1..=4);
        let (m, n) = (d + rng.random_range(0..=6), d + rng.random_range(0..=6));
        let inst = Instance::new(m, n, d, random_spectrum(&mut rng, d)).unwrap();
        let eta = rng.random_range(0.0..0.1) / inst.sigma_1();
        let u = random_matrix(&mut rng, m, d, 0.7);
        let v = random_matrix(&mut rng, n, d, 0.7);
        let state = FactorState::from_full(&u, &v).unwrap();

        let blocks = gd_step_blocks(&state, &inst, eta).unwrap();
        let (uf, vf) = gd_step_full(&u, &v, &assemble_full_sigma(&inst), eta).unwrap();
        let (ub, vb) = blocks.to_full();
        worst_full = worst_full
            .max(rel_max_diff(&uf, &ub))
            .max(rel_max_diff(&vf, &vb));

        let (a, b) = symmetrize(&state.u, &state.v);
        let (a1, b1) = ab_step(&a, &b, &state.j, &state.k, &inst, eta).unwrap();
        let (a_ref, b_ref) = symmetrize(&blocks.u, &blocks.v);
        worst_ab = worst_ab
            .max(rel_max_diff(&a1, &a_ref))
            .max(rel_max_diff(&b1, &b_ref));

        let (ur, vr) = desymmetrize(&a, &b);
        for (x, y) in ur
            .iter()
            .chain(vr.iter())
            .zip(state.u.iter().chain(state.v.iter()))
        {
            let ulp = y.abs().max(f64::MIN_POSITIVE) * f64::EPSILON;
            f64_roundtrip_ulps = f64_roundtrip_ulps.max((x - y).abs() / ulp);
        }

        let uq = DMatrix::from_fn(m, d, |_, _| rational(&mut rng));
        let vq = DMatrix::from_fn(m, d, |_, _| rational(&mut rng));
        let (aq, bq) = lowrank_lab::dynamics::algebra::symmetrize(&uq, &vq);
        let (uq2, vq2) = lowrank_lab::dynamics::algebra::desymmetrize(&aq, &bq);
        exact_roundtrip &= uq2 == uq && vq2 == vq;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_full <= STEP_EQUIV_TOL && worst_ab <= STEP_EQUIV_TOL && exact_roundtrip && secs < EQUIV_BUDGET_SECS,
        format!(
            "{EQUIV_STATES} states: block-vs-full {worst_full:.1e}, AB-vs-block {worst_ab:.1e} (tol {STEP_EQUIV_TOL:.0e}); \
             rational round trip exact: {exact_roundtrip}; f64 round trip within {f64_roundtrip_ulps:.1} ulp; {secs:.2}s"
        ),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut pass = true;

    let cases: [(Vec<f64>, Mat); 2] = [
        (vec![2.0, 1.0], DMatrix::identity(2, 2) * 0.5),
        (vec![10.0, 3.0, 1.0], {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let g = random_matrix(&mut rng, 3, 3, 0.3);
            &g * g.transpose() + DMatrix::identity(3, 3) * 0.05
        }),
    ];
    for (sigma, s0) in cases {
        let (s1, sd) = (sigma[0], *sigma.last().unwrap());
        let inputs = ClosedFormInputs::new(&sigma, s0.clone()).unwrap();
        let t = 1.0 / sd;
        let exact = closed_form_s(&inputs, t).unwrap();
        let rk = integrate_s_ode(&s0, &linalg::diag(&sigma), t, 1e-4 / s1).unwrap();
        let rel = (&exact - &rk).norm() / exact.norm();
        pass &= rel <= ORACLE_REL_TOL;
        let mut split = 0.0f64;
        for k in [0.0, 0.1, 1.0, 10.0] {
            let tk = k / sd;
            let sum = closed_form_s(&inputs, tk).unwrap() + closed_form_p(&inputs, tk).unwrap();
            split = split.max((sum - linalg::diag(&sigma)).norm() / s1);
        }
        pass &= split <= SPLIT_TOL;
        detail.push(format!(
            "d={}: S vs RK4 {rel:.1e}, S+P-Sigma {split:.1e}",
            sigma.len()
        ));
    }
    let rank1 =
        (rank1_solution(1.0f64, 0.1, 3.0) - integrate_rank1(1.0, 0.1, 3.0, 1e-5).unwrap()).abs();
    pass &= rank1 <= RANK1_TOL;
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < ORACLE_BUDGET_SECS;
    verdict(
        pass,
        format!(
            "{}; rank-1 vs RK4 {rank1:.1e} (tols {ORACLE_REL_TOL:.0e}, {SPLIT_TOL:.0e}, {RANK1_TOL:.0e}); {secs:.1}s",
            detail.join("; ")
        ),
    )
}

fn loss(u: &Mat, v: &Mat, sigma: &Mat) -> f64 {
    0.5 * (sigma - u * v.transpose()).norm_squared()
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for point in 0..FD_POINTS {
        let d = rng.random_range(1..=3);
        let (m, n) = (d + rng.random_range(0..=4), d + rng.random_range(0..=4));
        let inst =
            make_instance(m, n, d, random_spectrum(&mut rng, d), Some(point as u64)).unwrap();
        let sigma = assemble_full_sigma(&inst);
        let u = random_matrix(&mut rng, m, d, 0.8);
        let v = random_matrix(&mut rng, n, d, 0.8);
        let eta = 1e-3;
        let (u1, v1) = gd_step_full(&u, &v, &sigma, eta).unwrap();
        let dir_u = (&u1 - &u) / eta;
        let dir_v = (&v1 - &v) / eta;
        let fd = |which: usize, i: usize, j: usize| {
            let (mut up, mut vp, mut um, mut vm) = (u.clone(), v.clone(), u.clone(), v.clone());
            if which == 0 {
                up[(i, j)] += FD_STEP;
                um[(i, j)] -= FD_STEP;
            } else {
                vp[(i, j)] += FD_STEP;
                vm[(i, j)] -= FD_STEP;
            }
            (loss(&up, &vp, &sigma) - loss(&um, &vm, &sigma)) / (2.0 * FD_STEP)
        };
        let gu = DMatrix::from_fn(m, d, |i, j| fd(0, i, j));
        let gv = DMatrix::from_fn(n, d, |i, j| fd(1, i, j));
        let err = ((&dir_u + &gu).norm_squared() + (&dir_v + &gv).norm_squared()).sqrt();
        let scale = (gu.norm_squared() + gv.norm_squared()).sqrt();
        worst = worst.max(err / scale);
    }
    verdict(
        worst <= FD_TOL,
        format!("{FD_POINTS} points, worst relative error {worst:.1e} (tol {FD_TOL:.0e})"),
    )
}

struct GridRun {
    d: usize,
    kappa: f64,
    seed: u64,
    inst: Instance,
    eta: f64,
    traj: Option<Run>,
    phases: Option<PhaseReport>,
    conditions_hold: bool,
    violated: Vec<String>,
    j_k_monotone: bool,
    envelope_k: f64,
    gap_ratio: f64,
    regularized_converged: bool,
}

fn record_every(eta: f64, sigma_d: f64) -> usize {
    ((0.005 / (eta * sigma_d)).floor() as usize).max(1)
}

fn grid_run(d: usize, kappa: f64, seed: u64) -> GridRun {
    let inst = Instance::geometric(GRID_SIZE, GRID_SIZE, d, 1.0, kappa).unwrap();
    let (eps, eta) = theory_parameters(
        &inst,
        TheoryConstants {
            k_epsilon: 1.0,
            k_eta: K_ETA,
        },
    );
    let sd = inst.sigma_d();
    let delta = TARGET_LOSS * sd * sd;
    let (u, v) = init_factors(GRID_SIZE, GRID_SIZE, d, &InitSpec::new(eps, seed));
    let init = FactorState::from_full(&u, &v).unwrap();
    let t_max = (200.0 / (eta * sd)).ceil() as usize;
    let cfg = RunConfig::new(eta, t_max)
        .stop_at_loss(delta)
        .record_every(record_every(eta, sd));
    let mut out = GridRun {
        d,
        kappa,
        seed,
        inst: inst.clone(),
        eta,
        traj: None,
        phases: None,
        conditions_hold: false,
        violated: Vec::new(),
        j_k_monotone: false,
        envelope_k: f64::NAN,
        gap_ratio: f64::NAN,
        regularized_converged: false,
    };
    let reg = run_trajectory(&inst, init.clone(), &cfg.clone().regularized(REGULARIZER));
    out.regularized_converged = reg.is_ok_and(|t| t.converged());
    let Ok(traj) = run_trajectory(&inst, init, &cfg) else {
        return out;
    };
    let phases = detect_phases(&traj, &inst, delta);
    let c = DEFAULT_C;
    let s1 = check_stage1_conditions(
        &traj.records,
        &inst,
        &StageOneBounds::new(eps, c),
        phases.t0,
    );
    let s2 = check_stage2_conditions(
        &traj.records,
        &inst,
        &StageTwoBounds::new(eta, eps, c),
        phases.t0,
    );
    out.conditions_hold = s1.all_hold() && s2.all_hold();
    out.violated = s1
        .violated()
        .into_iter()
        .chain(s2.violated())
        .map(String::from)
        .collect();
    out.j_k_monotone = check_complement_monotone(&traj.records, phases.t0).all_hold();
    out.envelope_k = fit_envelope_constant(&traj.records, &inst, eps, 2.0 * c, phases.t0);
    let g0 = traj.records[0].balance_gap;
    out.gap_ratio = traj
        .records
        .iter()
        .map(|r| r.balance_gap)
        .fold(0.0, f64::max)
        / g0;
    out.phases = Some(phases);
    out.traj = Some(traj);
    out
}

impl GridRun {
    fn converged(&self) -> bool {
        self.traj.as_ref().is_some_and(|t| t.converged())
    }

    fn success(&self) -> bool {
        self.converged() && self.conditions_hold
    }
}

/// Grid instances; for `d = 1` the spectrum is a single value, so both
/// condition numbers collapse to one instance.
fn grid() -> Vec<(usize, f64)> {
    let mut cells = Vec::new();
    for d in GRID_DIMS {
        for kappa in GRID_KAPPAS {
            let kappa = if d == 1 { 1.0 } else { kappa };
            if !cells.contains(&(d, kappa)) {
                cells.push((d, kappa));
            }
        }
    }
    cells
}

fn run_grid() -> Vec<GridRun> {
    let cells = grid();
    std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .flat_map(|&(d, kappa)| (0..SEEDS).map(move |seed| (d, kappa, seed)))
            .map(|(d, kappa, seed)| scope.spawn(move || grid_run(d, kappa, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("grid run panicked"))
            .collect()
    })
}

fn cell_runs(runs: &[GridRun], d: usize, kappa: f64) -> impl Iterator<Item = &GridRun> {
    runs.iter().filter(move |r| r.d == d && r.kappa == kappa)
}

fn criterion_5(runs: &[GridRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, kappa) in grid() {
        let cell: Vec<&GridRun> = cell_runs(runs, d, kappa).collect();
        let ok = cell.iter().filter(|r| r.success()).count();
        pass &= ok >= MIN_SUCCESSES;
        let failures: Vec<String> = cell
            .iter()
            .filter(|r| !r.success())
            .map(|r| {
                if r.converged() {
                    format!("seed {}: {}", r.seed, r.violated.join("+"))
                } else {
                    format!("seed {}: not converged", r.seed)
                }
            })
            .collect();
        let tf = cell
            .iter()
            .filter_map(|r| r.phases.as_ref().and_then(|p| p.tf))
            .max()
            .unwrap_or(0);
        let mut part = format!(
            "d={d} kappa={kappa} eta={:.2e}: {ok}/{SEEDS} (max Tf {tf})",
            cell[0].eta
        );
        if !failures.is_empty() {
            part.push_str(&format!(" [{}]", failures.join(", ")));
        }
        parts.push(part);
    }
    verdict(
        pass,
        format!(
            "need >= {MIN_SUCCESSES}/{SEEDS} per instance; {}",
            parts.join("; ")
        ),
    )
}

fn scaling_slope(eta: f64) -> (f64, f64, usize) {
    let inst = Instance::geometric(GRID_SIZE, GRID_SIZE, 2, 1.0, 2.0).unwrap();
    let (eps, _) = theory_parameters(
        &inst,
        TheoryConstants {
            k_epsilon: 1.0,
            k_eta: K_ETA,
        },
    );
    let (u, v) = init_factors(GRID_SIZE, GRID_SIZE, 2, &InitSpec::new(eps, 0));
    let smallest = SCALING_DELTAS.iter().copied().fold(f64::INFINITY, f64::min);
    let cfg = RunConfig::new(eta, (200.0 / eta) as usize).stop_at_loss(smallest);
    let traj = run_trajectory(&inst, FactorState::from_full(&u, &v).unwrap(), &cfg).unwrap();
    let points: Vec<SweepPoint> = SCALING_DELTAS
        .iter()
        .map(|&delta| {
            let rep = detect_phases(&traj, &inst, delta);
            SweepPoint {
                delta,
                tf: rep.tf,
                t0: rep.t0,
            }
        })
        .collect();
    let table = total_time_scaling(&points).unwrap();
    (table.fit.slope, table.fit.r2, table.fit.n_used)
}

fn criterion_6(runs: &[GridRun]) -> Verdict {
    let (mut growth_ok, mut decay_ok, mut fitted) = (0, 0, 0);
    let (mut worst_growth, mut worst_decay) = (f64::INFINITY, f64::INFINITY);
    for r in runs.iter().filter(|r| r.converged()) {
        let p = r.phases.as_ref().unwrap();
        let sd = r.inst.sigma_d();
        let (Some(g), Some(dec)) = (p.growth, p.decay) else {
            continue;
        };
        fitted += 1;
        let g_ratio = g.slope / (1.0 + r.eta * sd).ln();
        let d_ratio = dec.slope / (1.0 - r.eta * sd / 2.0).ln();
        worst_growth = worst_growth.min(g_ratio);
        worst_decay = worst_decay.min(d_ratio);
        growth_ok += usize::from(g_ratio >= RATE_FRACTION);
        decay_ok += usize::from(d_ratio >= RATE_FRACTION);
    }
    let converged = runs.iter().filter(|r| r.converged()).count();
    let inst = Instance::geometric(GRID_SIZE, GRID_SIZE, 2, 1.0, 2.0).unwrap();
    let (_, eta) = theory_parameters(
        &inst,
        TheoryConstants {
            k_epsilon: 1.0,
            k_eta: K_ETA,
        },
    );
    let (slope, r2, used) = scaling_slope(eta);
    let (slope_half, r2_half, used_half) = scaling_slope(eta / 2.0);
    let halving = slope_half / slope;
    let pass = fitted == converged
        && converged > 0
        && growth_ok == fitted
        && decay_ok == fitted
        && r2 >= SCALING_R2
        && r2_half >= SCALING_R2
        && used == SCALING_DELTAS.len()
        && used_half == SCALING_DELTAS.len()
        && (halving - 2.0).abs() <= 2.0 * HALVING_TOL;
    verdict(
        pass,
        format!(
            "growth >= {RATE_FRACTION} ln(1+eta sd) in {growth_ok}/{fitted} runs (worst ratio {worst_growth:.2}); \
             decay >= {RATE_FRACTION} |ln(1-eta sd/2)| in {decay_ok}/{fitted} (worst ratio {worst_decay:.2}); \
             Tf vs ln(1/delta): slope {slope:.1} R2 {r2:.4} ({used} pts), at eta/2 slope {slope_half:.1} R2 {r2_half:.4}; \
             halving ratio {halving:.3} (2 +/- {:.0}%)",
            HALVING_TOL * 100.0
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, n) = (6, 5);
    let inst = Instance::new(m, n, 2, vec![2.0, 1.0]).unwrap();
    let sigma = assemble_full_sigma(&inst);
    let u0 = random_matrix(&mut rng, m, 2, 0.5);
    let v0 = random_matrix(&mut rng, n, 2, 0.5);
    let t_end = 3.0;
    let dt = 0.05 / inst.sigma_1();
    let drift = invariance_drift(&integrate_flow(&u0, &v0, &sigma, t_end, dt, 1).unwrap());
    let drift_half =
        invariance_drift(&integrate_flow(&u0, &v0, &sigma, t_end, dt / 2.0, 1).unwrap());
    let ratio = drift / drift_half;
    verdict(
        ratio >= DRIFT_RATIO,
        format!("drift(dt={dt}) {drift:.2e}, drift(dt/2) {drift_half:.2e}, ratio {ratio:.1} (need >= {DRIFT_RATIO})"),
    )
}

fn criterion_8(runs: &[GridRun]) -> Verdict {
    let stepped: Vec<&GridRun> = runs.iter().filter(|r| r.traj.is_some()).collect();
    let monotone_fail = stepped.iter().filter(|r| !r.j_k_monotone).count();
    let step_ok = stepped
        .iter()
        .all(|r| r.eta <= 1.0 / (3.0 * r.inst.sigma_1()));
    let k = stepped.iter().map(|r| r.envelope_k).fold(0.0, f64::max);
    verdict(
        monotone_fail == 0 && step_ok && k.is_finite() && !stepped.is_empty(),
        format!(
            "J/K non-increasing through stage one in {}/{} runs (eta <= 1/(3 sigma_1): {step_ok}); \
             fitted envelope constant k = {k:.3e}",
            stepped.len() - monotone_fail,
            stepped.len()
        ),
    )
}

fn criterion_9(runs: &[GridRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, kappa) in grid() {
        let cell: Vec<&GridRun> = cell_runs(runs, d, kappa).collect();
        let vanilla = cell.iter().filter(|r| r.converged()).count();
        let reg = cell.iter().filter(|r| r.regularized_converged).count();
        let worst = cell
            .iter()
            .filter(|r| r.converged())
            .map(|r| r.gap_ratio)
            .fold(0.0, f64::max);
        pass &= vanilla >= MIN_SUCCESSES && reg >= MIN_SUCCESSES && worst <= GAP_FACTOR;
        parts.push(format!("d={d} kappa={kappa}: vanilla {vanilla}/{SEEDS}, regularized {reg}/{SEEDS}, max gap ratio {worst:.2}"));
    }
    verdict(
        pass,
        format!(
            "gap must stay <= {GAP_FACTOR}x initial; {}",
            parts.join("; ")
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        println!(
            "[criterion {n}] {} {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((n, v));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    let start = Instant::now();
    let runs = run_grid();
    let grid_secs = start.elapsed().as_secs_f64();
    report(5, criterion_5(&runs));
    report(6, criterion_6(&runs));
    report(7, criterion_7());
    report(8, criterion_8(&runs));
    report(9, criterion_9(&runs));
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, v)| !v.pass)
        .map(|(n, _)| *n)
        .collect();
    println!("grid runs: {} in {grid_secs:.1}s", runs.len());
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
