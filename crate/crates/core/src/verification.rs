//! Randomized checks of the discrete eigenvalue lemmas and per-iteration
//! checks of the inequalities a two-stage convergence proof maintains.
//!
//! Every condition is reported as a slack sequence: `slack ≥ 0` exactly
//! when the inequality holds at that iterate.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::{DiagnosticsRecord, FactorState, SymmetrizedView};
use crate::flow::{commuting_spd, magical_identity_residual, random_spd_split};
use crate::linalg;
use crate::problem::ProblemInstance;
use crate::{LabError, Real, Result};

/// Absolute roundoff allowance of the lemma checks, in units of `σ₁`.
pub const LEMMA_ROUNDOFF: f64 = 1e-12;
/// Relative allowance when comparing successive norms for monotonicity.
pub const MONOTONE_ROUNDOFF: f64 = 1e-12;
/// Relative tolerance of the exact `‖B‖²_F` increment identity.
pub const B_IDENTITY_TOL: f64 = 1e-9;
/// Lemma-3 residual threshold, in units of `σ₁`.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaParams<T: Real> {
    pub beta: T,
    pub eta: T,
}

impl<T: Real> LemmaParams<T> {
    pub fn new(beta: T, eta: T) -> Result<Self> {
        if !(beta > T::zero() && beta < T::one()) {
            return Err(LabError::invalid(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        if !(eta >= T::zero()) || !eta.is_finite() {
            return Err(LabError::invalid("eta must be finite and non-negative"));
        }
        Ok(Self { beta, eta })
    }

    /// `(8 + 6β)/(1 − β)`
    pub fn constant(&self) -> T {
        (T::lit(8.0) + T::lit(6.0) * self.beta) / (T::one() - self.beta)
    }

    /// Largest step covered by the lemmas, `β/(8σ₁)`.
    pub fn step_cap(&self, sigma_1: T) -> T {
        self.beta / (T::lit(8.0) * sigma_1)
    }
}

/// Both sides of a lemma inequality `lhs ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheck<T: Real> {
    pub lhs: T,
    pub rhs: T,
    pub slack: T,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LemmaOutcome<T: Real> {
    Checked(LemmaCheck<T>),
    /// The input lies outside the lemma's hypotheses.
    Skipped(String),
}

impl<T: Real> LemmaOutcome<T> {
    pub fn checked(&self) -> Option<&LemmaCheck<T>> {
        match self {
            Self::Checked(c) => Some(c),
            Self::Skipped(_) => None,
        }
    }
}

fn sigma_range<T: Real>(sigma: &[T]) -> Result<(T, T)> {
    if sigma.is_empty() || sigma.iter().any(|s| !(*s > T::zero())) {
        return Err(LabError::invalid("Σ must have positive diagonal entries"));
    }
    let s1 = sigma.iter().fold(T::zero(), |a, s| a.max(*s));
    let sd = sigma.iter().fold(s1, |a, s| a.min(*s));
    Ok((s1, sd))
}

fn outcome<T: Real>(lhs: T, rhs: T, s1: T) -> LemmaOutcome<T> {
    let slack = lhs - rhs + T::lit(LEMMA_ROUNDOFF) * s1;
    LemmaOutcome::Checked(LemmaCheck {
        lhs,
        rhs,
        slack,
        holds: slack >= T::zero(),
    })
}

fn step_hypothesis<T: Real>(params: &LemmaParams<T>, s1: T) -> Option<String> {
    (params.eta > params.step_cap(s1)).then(|| {
        format!(
            "eta {} exceeds beta/(8 sigma_1) = {}",
            params.eta,
            params.step_cap(s1)
        )
    })
}

/// `λ_min(S') ≥ (1 + η(σ_d − s))² s − ((8+6β)/(1−β)) σ₁³ η²` for
/// `S' = (I + η(Σ − S)) S (I + η(Σ − S))`, `s = λ_min(S)`.
pub fn check_lemma_s<T: Real>(
    s: &DMatrix<T>,
    sigma: &[T],
    params: &LemmaParams<T>,
) -> Result<LemmaOutcome<T>> {
    let (s1, sd) = sigma_range(sigma)?;
    let d = sigma.len();
    if s.shape() != (d, d) {
        return Err(LabError::invalid("S must be d×d"));
    }
    let eig = linalg::sym_eigenvalues(s);
    if !(eig[d - 1] > T::zero()) {
        return Ok(LemmaOutcome::Skipped("S is not positive definite".into()));
    }
    if eig[0] > T::lit(2.0) * s1 {
        return Ok(LemmaOutcome::Skipped("sigma_1(S) exceeds 2 sigma_1".into()));
    }
    if let Some(why) = step_hypothesis(params, s1) {
        return Ok(LemmaOutcome::Skipped(why));
    }
    let eta = params.eta;
    let g = DMatrix::identity(d, d) + (linalg::diag(sigma) - s) * eta;
    let next = &g * s * &g;
    let small = eig[d - 1];
    let grow = T::one() + eta * (sd - small);
    let rhs = grow * grow * small - params.constant() * s1 * s1 * s1 * eta * eta;
    Ok(outcome(linalg::lambda_min(&next), rhs, s1))
}

/// For `P' = (I − η(Σ − P)) P (I − η(Σ − P))` and `p = λ_min(P)`:
/// `λ_min(P') ≥ (1 − ησ_d)² p − ((8+6β)/(1−β)) σ₁³ η²` when `p < 0`, and
/// `λ_min(P') ≥ 0` otherwise.
pub fn check_lemma_p<T: Real>(
    p: &DMatrix<T>,
    sigma: &[T],
    params: &LemmaParams<T>,
) -> Result<LemmaOutcome<T>> {
    let (s1, sd) = sigma_range(sigma)?;
    let d = sigma.len();
    if p.shape() != (d, d) {
        return Err(LabError::invalid("P must be d×d"));
    }
    if linalg::max_abs(&(p - p.transpose())) > T::zero() {
        return Ok(LemmaOutcome::Skipped("P is not symmetric".into()));
    }
    let eig = linalg::sym_eigenvalues(p);
    if eig[0].abs().max(eig[d - 1].abs()) > T::lit(2.0) * s1 {
        return Ok(LemmaOutcome::Skipped(
            "|eigenvalue of P| exceeds 2 sigma_1".into(),
        ));
    }
    if let Some(why) = step_hypothesis(params, s1) {
        return Ok(LemmaOutcome::Skipped(why));
    }
    let eta = params.eta;
    let g = DMatrix::identity(d, d) - (linalg::diag(sigma) - p) * eta;
    let next = &g * p * &g;
    let small = eig[d - 1];
    let rhs = if small < T::zero() {
        let shrink = T::one() - eta * sd;
        shrink * shrink * small - params.constant() * s1 * s1 * s1 * eta * eta
    } else {
        T::zero()
    };
    Ok(outcome(linalg::lambda_min(&next), rhs, s1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lemma {
    SignalGrowth,
    ErrorContraction,
    CommutingScaling,
}

/// Aggregate of a randomized lemma sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSweepReport {
    pub lemma: Lemma,
    pub base_seed: u64,
    pub requested: usize,
    pub checked: usize,
    pub skipped: usize,
    pub violations: usize,
    /// Smallest slack seen, normalized by `σ₁`; for the scaling identity
    /// the largest residual over `σ₁`.
    pub worst: Option<f64>,
    pub worst_seed: Option<u64>,
}

impl LemmaSweepReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checked == self.requested
    }
}

/// Sweep settings shared by the randomized lemma checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub samples: usize,
    pub dims: RangeInclusive<usize>,
    pub betas: Vec<f64>,
    pub base_seed: u64,
    /// Attempts allowed per requested sample before giving up.
    pub max_attempts_factor: usize,
}

impl SweepSpec {
    pub fn new(samples: usize, base_seed: u64) -> Self {
        Self {
            samples,
            dims: 1..=6,
            betas: vec![0.25, 0.5, 0.75],
            base_seed,
            max_attempts_factor: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || *self.dims.start() == 0 {
            return Err(LabError::invalid(
                "dimension range must be non-empty and start at 1 or more",
            ));
        }
        if self.betas.is_empty() {
            return Err(LabError::invalid("at least one beta is required"));
        }
        for b in &self.betas {
            LemmaParams::new(*b, 0.0)?;
        }
        Ok(())
    }
}

/// Per-sample generator seed: the base seed offset by the sample index.
pub fn sample_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

fn random_sigma(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let kappa = 1.0 + 9.0 * rng.random::<f64>();
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let mut s: Vec<f64> = (0..d)
        .map(|_| scale * kappa.powf(rng.random::<f64>()))
        .collect();
    // repeated entries exercise the block structure of commuting scalings
    if d > 1 && rng.random_bool(0.25) {
        s[1] = s[0];
    }
    s.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    s
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    linalg::orthonormalize(g)
}

fn with_spectrum(rng: &mut ChaCha8Rng, eig: &[f64]) -> DMatrix<f64> {
    let q = random_orthogonal(rng, eig.len());
    linalg::symmetric_part(&(&q * linalg::diag(eig) * q.transpose()))
}

/// Step sizes concentrate near the cap, where the lemmas are tight.
fn random_eta(rng: &mut ChaCha8Rng, cap: f64) -> f64 {
    if rng.random_bool(0.3) {
        cap
    } else {
        cap * rng.random::<f64>().sqrt()
    }
}

fn random_level(rng: &mut ChaCha8Rng, hi: f64) -> f64 {
    if rng.random_bool(0.3) {
        hi * 10f64.powf(rng.random_range(-6.0..0.0))
    } else {
        hi * rng.random::<f64>()
    }
}

fn lemma_sample(
    lemma: Lemma,
    spec: &SweepSpec,
    seed: u64,
    index: usize,
) -> Result<LemmaOutcome<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(spec.dims.clone());
    let sigma = random_sigma(&mut rng, d);
    let s1 = sigma[0];
    let beta = spec.betas[index % spec.betas.len()];
    let cap = beta / (8.0 * s1);
    let params = LemmaParams::new(beta, random_eta(&mut rng, cap))?;
    match lemma {
        Lemma::SignalGrowth => {
            let eig: Vec<f64> = (0..d)
                .map(|_| random_level(&mut rng, 2.0 * s1).max(f64::MIN_POSITIVE))
                .collect();
            check_lemma_s(&with_spectrum(&mut rng, &eig), &sigma, &params)
        }
        Lemma::ErrorContraction => {
            let mut eig: Vec<f64> = (0..d)
                .map(|_| 2.0 * s1 * rng.random_range(-1.0..1.0))
                .collect();
            eig[0] = -random_level(&mut rng, 2.0 * s1).max(f64::MIN_POSITIVE);
            check_lemma_p(&with_spectrum(&mut rng, &eig), &sigma, &params)
        }
        Lemma::CommutingScaling => unreachable!("handled by commuting_scaling_sweep"),
    }
}

/// Randomized sweep of the signal-growth (`S`) or error-contraction (`P`)
/// lemma. Samples outside the hypotheses are skipped and redrawn until
/// `spec.samples` inputs have been checked.
pub fn lemma_sweep(lemma: Lemma, spec: &SweepSpec) -> Result<LemmaSweepReport> {
    spec.validate()?;
    if lemma == Lemma::CommutingScaling {
        return commuting_scaling_sweep(spec);
    }
    let mut rep = LemmaSweepReport {
        lemma,
        base_seed: spec.base_seed,
        requested: spec.samples,
        checked: 0,
        skipped: 0,
        violations: 0,
        worst: None,
        worst_seed: None,
    };
    let mut index = 0;
    while rep.checked < spec.samples && index < spec.samples * spec.max_attempts_factor {
        let seed = sample_seed(spec.base_seed, index);
        match lemma_sample(lemma, spec, seed, index)? {
            LemmaOutcome::Skipped(_) => rep.skipped += 1,
            LemmaOutcome::Checked(c) => {
                rep.checked += 1;
                if !c.holds {
                    rep.violations += 1;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = rng.random_range(spec.dims.clone());
                let s1 = random_sigma(&mut rng, d)[0];
                let normalized = c.slack / s1;
                if rep.worst.is_none_or(|w| normalized < w) {
                    rep.worst = Some(normalized);
                    rep.worst_seed = Some(seed);
                }
            }
        }
        index += 1;
    }
    Ok(rep)
}

/// Randomized check of the commuting-scaling identity: residual at most
/// `1e-10·σ₁` for SPD splits `S + P = Σ` and SPD `E` commuting with `Σ`.
pub fn commuting_scaling_sweep(spec: &SweepSpec) -> Result<LemmaSweepReport> {
    spec.validate()?;
    let mut rep = LemmaSweepReport {
        lemma: Lemma::CommutingScaling,
        base_seed: spec.base_seed,
        requested: spec.samples,
        checked: 0,
        skipped: 0,
        violations: 0,
        worst: None,
        worst_seed: None,
    };
    for index in 0..spec.samples {
        let seed = sample_seed(spec.base_seed, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(spec.dims.clone());
        let sigma = random_sigma(&mut rng, d);
        let (s, p) = random_spd_split(&sigma, &mut rng);
        let e = commuting_spd(&sigma, &mut rng);
        let residual = magical_identity_residual(&s, &p, &e, &sigma)? / sigma[0];
        rep.checked += 1;
        if !(residual <= IDENTITY_TOL) {
            rep.violations += 1;
        }
        if rep.worst.is_none_or(|w| residual > w) {
            rep.worst = Some(residual);
            rep.worst_seed = Some(seed);
        }
    }
    Ok(rep)
}

/// One evaluated inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionPoint {
    pub t: usize,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSeries {
    pub name: String,
    /// Human-readable form of the inequality.
    pub inequality: String,
    pub points: Vec<ConditionPoint>,
    pub first_violation: Option<usize>,
}

impl ConditionSeries {
    fn new(name: &str, inequality: &str) -> Self {
        Self {
            name: name.into(),
            inequality: inequality.into(),
            points: Vec::new(),
            first_violation: None,
        }
    }

    fn push<T: Real>(&mut self, t: usize, slack: T) {
        let slack = slack.as_f64();
        let holds = slack >= 0.0;
        if !holds && self.first_violation.is_none() {
            self.first_violation = Some(t);
        }
        self.points.push(ConditionPoint { t, slack, holds });
    }

    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn min_slack(&self) -> Option<f64> {
        self.points.iter().map(|p| p.slack).reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ConditionReport {
    pub series: Vec<ConditionSeries>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.series.iter().all(ConditionSeries::holds)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Earliest violation over all series, with the series name.
    pub fn first_violation(&self) -> Option<(usize, &str)> {
        self.series
            .iter()
            .filter_map(|s| s.first_violation.map(|t| (t, s.name.as_str())))
            .min()
    }

    pub fn violated(&self) -> Vec<&str> {
        self.series
            .iter()
            .filter(|s| !s.holds())
            .map(|s| s.name.as_str())
            .collect()
    }
}

/// Constants of the stage-one conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageOneBounds<T: Real> {
    pub epsilon: T,
    pub c: T,
    /// Asymmetry constant; `2c` unless configured.
    pub e_b: T,
}

impl<T: Real> StageOneBounds<T> {
    pub fn new(epsilon: T, c: T) -> Self {
        Self {
            epsilon,
            c,
            e_b: T::lit(2.0) * c,
        }
    }
}

fn complement_scale<T: Real>(rows: usize, d: usize) -> T {
    T::lit(rows.max(d) as f64).sqrt()
}

/// The stage-one conditions over records with `t ≤ t0` (all records when
/// `t0` is undetected):
///
/// * `signal_lower`: `AAᵀ ⪰ ε²/(c²d) I`
/// * `signal_upper`: `AAᵀ ⪯ 2Σ`
/// * `asymmetry`: `‖B‖_F ≤ e_b·d·ε`
/// * `complement_J`, `complement_K`: `‖J‖ ≤ cε√max(m−d, d)` and likewise
/// * `exit_signal`, `exit_error`: `σ_d(A) ≥ √(σ_d/2)` and
///   `σ₁(P) ≤ σ_d/4` at `t0`; evaluated at the last record, and so
///   violated, when `t0` is undetected.
pub fn check_stage1_conditions<T: Real>(
    records: &[DiagnosticsRecord<T>],
    inst: &ProblemInstance<T>,
    bounds: &StageOneBounds<T>,
    t0: Option<usize>,
) -> ConditionReport {
    let d = T::lit(inst.d() as f64);
    let (eps, c) = (bounds.epsilon, bounds.c);
    let sd = inst.sigma_d();
    let lower = eps * eps / (c * c * d);
    let b_cap = bounds.e_b * d * eps;
    let j_cap = c * eps * complement_scale::<T>(inst.m_complement(), inst.d());
    let k_cap = c * eps * complement_scale::<T>(inst.n_complement(), inst.d());

    let mut signal_lower = ConditionSeries::new("signal_lower", "sigma_d(A)^2 >= eps^2/(c^2 d)");
    let mut signal_upper = ConditionSeries::new("signal_upper", "lambda_min(2 Sigma - A A^T) >= 0");
    let mut asymmetry = ConditionSeries::new("asymmetry", "||B||_F <= e_b d eps");
    let mut comp_j = ConditionSeries::new("complement_J", "||J||_op <= c eps sqrt(max(m-d, d))");
    let mut comp_k = ConditionSeries::new("complement_K", "||K||_op <= c eps sqrt(max(n-d, d))");
    let mut exit_signal = ConditionSeries::new("exit_signal", "sigma_d(A_T0) >= sqrt(sigma_d/2)");
    let mut exit_error = ConditionSeries::new("exit_error", "sigma_1(P_T0) <= sigma_d/4");

    for r in records.iter().filter(|r| t0.is_none_or(|t0| r.t <= t0)) {
        signal_lower.push(r.t, r.sigma_d_a * r.sigma_d_a - lower);
        signal_upper.push(r.t, r.signal_headroom);
        asymmetry.push(r.t, b_cap - r.b_fro);
        comp_j.push(r.t, j_cap - r.j_op);
        comp_k.push(r.t, k_cap - r.k_op);
    }
    let exit = match t0 {
        Some(t0) => records.iter().find(|r| r.t == t0),
        None => records.last(),
    };
    if let Some(r) = exit {
        exit_signal.push(r.t, r.sigma_d_a - (sd * T::lit(0.5)).sqrt());
        exit_error.push(r.t, sd * T::lit(0.25) - r.sigma_1_p);
        if t0.is_none() {
            exit_error.first_violation = exit_error.first_violation.or(Some(r.t));
            exit_error.points.last_mut().expect("just pushed").holds = false;
            exit_error.points.last_mut().expect("just pushed").slack = f64::NEG_INFINITY;
        }
    }
    ConditionReport {
        series: vec![
            signal_lower,
            signal_upper,
            asymmetry,
            comp_j,
            comp_k,
            exit_signal,
            exit_error,
        ],
    }
}

/// Constants of the stage-two conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageTwoBounds<T: Real> {
    pub eta: T,
    pub epsilon: T,
    pub c: T,
    /// Constant in `‖B‖_F ≤ k_b·σ_d/√σ₁`.
    pub k_b: T,
}

impl<T: Real> StageTwoBounds<T> {
    pub fn new(eta: T, epsilon: T, c: T) -> Self {
        Self {
            eta,
            epsilon,
            c,
            k_b: T::one(),
        }
    }
}

/// The stage-two conditions over records with `t ≥ t0`, with
/// `τ = t − t0` and `ρ = 1 − ησ_d/2`:
///
/// * `asymmetry_local`: `‖B‖_F ≤ k_b σ_d/√σ₁`
/// * `residual_decay`: `Δ_t ≤ ρ^τ · (2/5) σ_d`
/// * `factor_floor_U`, `factor_floor_V`: `σ_d(U), σ_d(V) ≥ √(σ_d/2)`
/// * `complement_decay_J`, `complement_decay_K`:
///   `‖J‖ ≤ cερ^τ√max(m−d, d)` and likewise
///
/// When `t0` is undetected the report holds a single violated `entry`
/// series evaluated at the last record.
pub fn check_stage2_conditions<T: Real>(
    records: &[DiagnosticsRecord<T>],
    inst: &ProblemInstance<T>,
    bounds: &StageTwoBounds<T>,
    t0: Option<usize>,
) -> ConditionReport {
    let sd = inst.sigma_d();
    let Some(t0) = t0 else {
        let mut entry = ConditionSeries::new("entry", "sigma_1(P) <= sigma_d/4 reached");
        if let Some(r) = records.last() {
            entry.push(r.t, (sd * T::lit(0.25) - r.sigma_1_p).min(-T::one()));
        }
        return ConditionReport {
            series: vec![entry],
        };
    };
    let rho = T::one() - bounds.eta * sd * T::lit(0.5);
    let b_cap = bounds.k_b * sd / inst.sigma_1().sqrt();
    let floor = (sd * T::lit(0.5)).sqrt();
    let j0 = bounds.c * bounds.epsilon * complement_scale::<T>(inst.m_complement(), inst.d());
    let k0 = bounds.c * bounds.epsilon * complement_scale::<T>(inst.n_complement(), inst.d());

    let mut asym =
        ConditionSeries::new("asymmetry_local", "||B||_F <= k_b sigma_d / sqrt(sigma_1)");
    let mut resid = ConditionSeries::new(
        "residual_decay",
        "Delta_t <= (1 - eta sigma_d/2)^tau (2/5) sigma_d",
    );
    let mut fu = ConditionSeries::new("factor_floor_U", "sigma_d(U) >= sqrt(sigma_d/2)");
    let mut fv = ConditionSeries::new("factor_floor_V", "sigma_d(V) >= sqrt(sigma_d/2)");
    let mut cj = ConditionSeries::new(
        "complement_decay_J",
        "||J||_op <= c eps (1 - eta sigma_d/2)^tau sqrt(max(m-d, d))",
    );
    let mut ck = ConditionSeries::new(
        "complement_decay_K",
        "||K||_op <= c eps (1 - eta sigma_d/2)^tau sqrt(max(n-d, d))",
    );
    for r in records.iter().filter(|r| r.t >= t0) {
        let decay = rho.powi((r.t - t0) as i32);
        asym.push(r.t, b_cap - r.b_fro);
        resid.push(r.t, decay * T::lit(0.4) * sd - r.delta);
        fu.push(r.t, r.sigma_d_u - floor);
        fv.push(r.t, r.sigma_d_v - floor);
        cj.push(r.t, decay * j0 - r.j_op);
        ck.push(r.t, decay * k0 - r.k_op);
    }
    ConditionReport {
        series: vec![asym, resid, fu, fv, cj, ck],
    }
}

/// `‖J‖_op` and `‖K‖_op` non-increasing between consecutive records with
/// `t ≤ until`, up to a relative roundoff of [`MONOTONE_ROUNDOFF`].
pub fn check_complement_monotone<T: Real>(
    records: &[DiagnosticsRecord<T>],
    until: Option<usize>,
) -> ConditionReport {
    let mut j = ConditionSeries::new("J_nonincreasing", "||J_t+1||_op <= ||J_t||_op");
    let mut k = ConditionSeries::new("K_nonincreasing", "||K_t+1||_op <= ||K_t||_op");
    let slack = T::one() + T::lit(MONOTONE_ROUNDOFF);
    let window: Vec<_> = records
        .iter()
        .filter(|r| until.is_none_or(|u| r.t <= u))
        .collect();
    for w in window.windows(2) {
        j.push(w[1].t, w[0].j_op * slack - w[1].j_op);
        k.push(w[1].t, w[0].k_op * slack - w[1].k_op);
    }
    ConditionReport { series: vec![j, k] }
}

/// Scale of the stage-one lower envelope `λ_d(P_t) ≥ −k·e_b²ε²(m+n)dκ`.
pub fn envelope_scale<T: Real>(inst: &ProblemInstance<T>, epsilon: T, e_b: T) -> T {
    e_b * e_b
        * epsilon
        * epsilon
        * T::lit((inst.m() + inst.n()) as f64)
        * T::lit(inst.d() as f64)
        * inst.kappa()
}

/// Smallest `k ≥ 0` for which the envelope holds on every record with
/// `t ≤ until`.
pub fn fit_envelope_constant<T: Real>(
    records: &[DiagnosticsRecord<T>],
    inst: &ProblemInstance<T>,
    epsilon: T,
    e_b: T,
    until: Option<usize>,
) -> f64 {
    let scale = envelope_scale(inst, epsilon, e_b).as_f64();
    records
        .iter()
        .filter(|r| until.is_none_or(|u| r.t <= u))
        .map(|r| (-r.lambda_min_p.as_f64()).max(0.0) / scale)
        .fold(0.0, f64::max)
}

/// Per-step `‖B‖²_F` bookkeeping from consecutive snapshots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BRecursionReport {
    pub conditions: ConditionReport,
    /// `(t, ‖B_{t+1}‖²_F / ‖B_t‖²_F)`; steps with `B_t = 0` are omitted.
    pub growth: Vec<(usize, f64)>,
}

impl BRecursionReport {
    /// Product of the per-step growth factors for steps with `t ≥ from`.
    pub fn cumulative_growth(&self, from: usize) -> f64 {
        self.growth
            .iter()
            .filter(|(t, _)| *t >= from)
            .map(|(_, g)| g)
            .product()
    }
}

/// Checks the exact one-step identity
///
/// ```text
/// ‖B'‖² − ‖B‖² = −2η⟨BBᵀ, P⟩ − η⟨BᵀB, KᵀK+JᵀJ⟩ − η‖Q‖² − η⟨AᵀB, KᵀK−JᵀJ⟩
///               + η²‖QA − PB − A(KᵀK−JᵀJ)/2 − B(KᵀK+JᵀJ)/2‖²
/// ```
///
/// to a relative [`B_IDENTITY_TOL`], and the bound
/// `‖B'‖² − ‖B‖² ≤ −2ηλ_d(P)‖B‖² + η‖BᵀA‖‖KᵀK−JᵀJ‖ + η²‖…‖²` that follows
/// from it, on every pair of consecutive snapshots.
pub fn check_b_recursion<T: Real>(
    snapshots: &[FactorState<T>],
    inst: &ProblemInstance<T>,
    eta: T,
) -> BRecursionReport {
    let mut identity = ConditionSeries::new(
        "b_identity",
        "|exact increment - measured increment| <= 1e-9 scale",
    );
    let mut bound = ConditionSeries::new(
        "b_bound",
        "increment <= -2 eta lambda_d(P)||B||^2 + cross + eta^2 term",
    );
    let mut growth = Vec::new();
    for w in snapshots.windows(2) {
        let (now, next) = (&w[0], &w[1]);
        if next.t != now.t + 1 {
            continue;
        }
        let view = SymmetrizedView::new(now, inst);
        let b_next = (&next.u - &next.v) * T::lit(0.5);
        let (b2, b2_next) = (view.b.norm_squared(), b_next.norm_squared());
        let ktk = now.k.transpose() * &now.k;
        let jtj = now.j.transpose() * &now.j;
        let plus = (&ktk + &jtj) * T::lit(0.5);
        let minus = (&ktk - &jtj) * T::lit(0.5);
        let bbt = &view.b * view.b.transpose();
        let btb = view.b.transpose() * &view.b;
        let db = &view.q * &view.a - &view.p * &view.b - &view.a * &minus - &view.b * &plus;
        let quad = eta * eta * db.norm_squared();
        let cross = T::lit(2.0) * eta * linalg::inner(&(view.a.transpose() * &view.b), &minus);
        let exact =
            -T::lit(2.0) * eta * (linalg::inner(&bbt, &view.p) + linalg::inner(&btb, &plus))
                - eta * view.q.norm_squared()
                - cross
                + quad;
        let measured = b2_next - b2;
        let scale = b2.max(b2_next);
        identity.push(
            now.t,
            T::lit(B_IDENTITY_TOL) * scale - (exact - measured).abs(),
        );
        let rhs = -T::lit(2.0) * eta * linalg::lambda_min(&view.p) * b2
            + eta * (view.b.transpose() * &view.a).norm() * (&ktk - &jtj).norm()
            + quad;
        bound.push(now.t, rhs - measured + T::lit(B_IDENTITY_TOL) * scale);
        if b2 > T::zero() {
            growth.push((now.t, (b2_next / b2).as_f64()));
        }
    }
    BRecursionReport {
        conditions: ConditionReport {
            series: vec![identity, bound],
        },
        growth,
    }
}
