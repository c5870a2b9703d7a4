//! Reference solutions for the continuous-time gradient flow
//! `U̇ = (Σ − UVᵀ)V`, `V̇ = (Σ − UVᵀ)ᵀU`.
//!
//! In the symmetric case `U = V` the signal Gram matrix `S = UUᵀ` obeys a
//! matrix Riccati equation whose solution, and that of the complementary
//! `P = Σ − S`, is available in closed form for a diagonal target. These
//! closed forms, the scalar rank-one solution and a classical RK4
//! integrator serve as oracles for each other.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{diagnostics, DiagnosticsRecord, FactorState, DIVERGENCE_THRESHOLD};
use crate::linalg;
use crate::problem::ProblemInstance;
use crate::{LabError, Real, Result};

/// Relative singularity guard for inverses, in units of `σ₁`.
pub const SINGULAR_GUARD: f64 = 1e-12;
/// Largest tolerated `‖EΣ − ΣE‖_F` for the commuting-scaling identity.
pub const COMMUTATOR_TOL: f64 = 1e-10;

/// Default RK4 step, `1e-3/σ₁`.
pub fn default_dt<T: Real>(sigma_1: T) -> T {
    T::lit(1e-3) / sigma_1
}

/// Inputs of the symmetric closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormInputs<T: Real> {
    /// Diagonal of Σ, all positive.
    pub sigma: Vec<T>,
    pub s0: DMatrix<T>,
    /// `Σ − S₀`
    pub p0: DMatrix<T>,
    /// `S₀⁻¹ − Σ⁻¹`
    pub x0: DMatrix<T>,
}

impl<T: Real> ClosedFormInputs<T> {
    pub fn new(sigma: &[T], s0: DMatrix<T>) -> Result<Self> {
        let d = sigma.len();
        if d == 0 || sigma.iter().any(|s| !(*s > T::zero())) {
            return Err(LabError::invalid("Σ must have positive diagonal entries"));
        }
        if s0.shape() != (d, d) {
            return Err(LabError::invalid("S₀ must be d×d"));
        }
        if linalg::max_abs(&(&s0 - s0.transpose())) > T::lit(1e-12) * linalg::max_abs(&s0) {
            return Err(LabError::invalid("S₀ must be symmetric"));
        }
        let s1 = sigma_max(sigma);
        let s0_inv = linalg::sym_inverse(&s0, T::lit(SINGULAR_GUARD) * s1)?;
        if linalg::lambda_min(&s0) <= T::zero() {
            return Err(LabError::invalid("S₀ must be positive definite"));
        }
        let sig = linalg::diag(sigma);
        let sig_inv = linalg::diag(&sigma.iter().map(|s| T::one() / *s).collect::<Vec<_>>());
        Ok(Self {
            sigma: sigma.to_vec(),
            p0: &sig - &s0,
            x0: s0_inv - sig_inv,
            s0,
        })
    }

    /// Same as [`ClosedFormInputs::new`] with Σ given as a matrix; only
    /// diagonal matrices are accepted.
    pub fn from_matrix(sigma: &DMatrix<T>, s0: DMatrix<T>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(LabError::invalid("Σ must be square"));
        }
        let off = DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| {
            if i == j {
                T::zero()
            } else {
                sigma[(i, j)]
            }
        });
        if linalg::max_abs(&off) != T::zero() {
            return Err(LabError::invalid("closed forms need a diagonal Σ"));
        }
        let diag: Vec<T> = sigma.diagonal().iter().copied().collect();
        Self::new(&diag, s0)
    }

    pub fn d(&self) -> usize {
        self.sigma.len()
    }
}

fn sigma_max<T: Real>(sigma: &[T]) -> T {
    sigma.iter().fold(T::zero(), |a, s| a.max(*s))
}

fn diag_map<T: Real>(sigma: &[T], f: impl Fn(T) -> T) -> DMatrix<T> {
    linalg::diag(&sigma.iter().map(|s| f(*s)).collect::<Vec<_>>())
}

/// `S(t) = (e^{−tΣ}(S₀⁻¹ − Σ⁻¹)e^{−tΣ} + Σ⁻¹)⁻¹`.
pub fn closed_form_s<T: Real>(inputs: &ClosedFormInputs<T>, t: T) -> Result<DMatrix<T>> {
    if t == T::zero() {
        return Ok(inputs.s0.clone());
    }
    let decay = diag_map(&inputs.sigma, |s| (-t * s).exp());
    let m = &decay * &inputs.x0 * &decay + diag_map(&inputs.sigma, |s| T::one() / s);
    linalg::sym_inverse(&m, T::zero())
}

/// `P(t) = (e^{tΣ}(P₀⁻¹ − Σ⁻¹)e^{tΣ} + Σ⁻¹)⁻¹`, evaluated as
/// `e^{−tΣ}(P₀⁻¹ − Σ⁻¹ + e^{−tΣ}Σ⁻¹e^{−tΣ})⁻¹e^{−tΣ}` so that large `t`
/// does not overflow.
pub fn closed_form_p<T: Real>(inputs: &ClosedFormInputs<T>, t: T) -> Result<DMatrix<T>> {
    let s1 = sigma_max(&inputs.sigma);
    let p0_inv = linalg::sym_inverse(&inputs.p0, T::lit(SINGULAR_GUARD) * s1)
        .map_err(|e| LabError::Singular(format!("P₀ = Σ − S₀ is singular: {e}")))?;
    if t == T::zero() {
        return Ok(inputs.p0.clone());
    }
    let decay = diag_map(&inputs.sigma, |s| (-t * s).exp());
    let y0 = p0_inv - diag_map(&inputs.sigma, |s| T::one() / s);
    let m = y0 + diag_map(&inputs.sigma, |s| (-t * s).exp() * (-t * s).exp() / s);
    Ok(&decay * linalg::sym_inverse(&m, T::zero())? * &decay)
}

/// Frobenius norm of
/// `(E(S⁻¹−Σ⁻¹)E + Σ⁻¹)⁻¹ + (E⁻¹(P⁻¹−Σ⁻¹)E⁻¹ + Σ⁻¹)⁻¹ − Σ`
/// for a diagonal Σ and a symmetric `E` commuting with it.
pub fn magical_identity_residual<T: Real>(
    s: &DMatrix<T>,
    p: &DMatrix<T>,
    e: &DMatrix<T>,
    sigma: &[T],
) -> Result<T> {
    let d = sigma.len();
    if [s, p, e].iter().any(|m| m.shape() != (d, d)) {
        return Err(LabError::invalid("S, P and E must be d×d"));
    }
    let sig = linalg::diag(sigma);
    let commutator = (e * &sig - &sig * e).norm();
    if commutator > T::lit(COMMUTATOR_TOL) {
        return Err(LabError::Precondition(format!(
            "E does not commute with Σ (‖EΣ−ΣE‖_F = {commutator:e})"
        )));
    }
    if *e == DMatrix::identity(d, d) {
        return Ok((s + p - sig).norm());
    }
    let guard = T::lit(SINGULAR_GUARD) * sigma_max(sigma);
    let sig_inv = diag_map(sigma, |x| T::one() / x);
    let s_inv = linalg::sym_inverse(s, guard)?;
    let p_inv = linalg::sym_inverse(p, guard)?;
    let e_inv = linalg::sym_inverse(e, guard)?;
    let left = linalg::sym_inverse(&(e * (s_inv - &sig_inv) * e + &sig_inv), T::zero())?;
    let right = linalg::sym_inverse(
        &(&e_inv * (p_inv - &sig_inv) * &e_inv + &sig_inv),
        T::zero(),
    )?;
    Ok((left + right - sig).norm())
}

/// Random SPD matrix commuting with `diag(sigma)`: block-diagonal over the
/// groups of equal entries, so commutation holds by construction.
pub fn commuting_spd<T: Real, R: Rng + ?Sized>(sigma: &[T], rng: &mut R) -> DMatrix<T> {
    let d = sigma.len();
    let mut e = DMatrix::zeros(d, d);
    let mut seen = vec![false; d];
    for i in 0..d {
        if seen[i] {
            continue;
        }
        let group: Vec<usize> = (i..d).filter(|&j| sigma[j] == sigma[i]).collect();
        for &j in &group {
            seen[j] = true;
        }
        let g = group.len();
        let raw = DMatrix::<T>::from_fn(g, g, |_, _| T::lit(StandardNormal.sample(rng)));
        let block =
            &raw * raw.transpose() / T::lit(g as f64) + DMatrix::identity(g, g) * T::lit(0.5);
        for (a, &ra) in group.iter().enumerate() {
            for (b, &rb) in group.iter().enumerate() {
                e[(ra, rb)] = block[(a, b)];
            }
        }
    }
    e
}

/// Random split `Σ = S + P` with both parts SPD:
/// `S = Σ^{1/2} W Σ^{1/2}` for a random `0 ≺ W ≺ I`.
pub fn random_spd_split<T: Real, R: Rng + ?Sized>(
    sigma: &[T],
    rng: &mut R,
) -> (DMatrix<T>, DMatrix<T>) {
    let d = sigma.len();
    let g = DMatrix::<T>::from_fn(d, d, |_, _| T::lit(StandardNormal.sample(rng)));
    let q = linalg::orthonormalize(g);
    let w_diag: Vec<T> = (0..d)
        .map(|_| T::lit(rng.random_range(0.05..0.95)))
        .collect();
    let w = &q * linalg::diag(&w_diag) * q.transpose();
    let root = diag_map(sigma, |x| x.sqrt());
    let s = linalg::symmetric_part(&(&root * w * &root));
    let p = linalg::diag(sigma) - &s;
    (s, p)
}

/// `s_t = σe^{2σt}/(e^{2σt} + σ/a₀² − 1)`, the solution of `ȧ = (σ − a²)a`
/// squared.
pub fn rank1_solution<T: Real>(sigma: T, a0: T, t: T) -> T {
    if t == T::zero() {
        return a0 * a0;
    }
    let g = (T::lit(2.0) * sigma * t).exp();
    if !g.is_finite() {
        return sigma;
    }
    sigma * g / (g + sigma / (a0 * a0) - T::one())
}

/// One classical RK4 step of `ẏ = f(y)` for a tuple of matrices.
pub fn rk4_step<T: Real>(
    y: &[DMatrix<T>],
    dt: T,
    f: impl Fn(&[DMatrix<T>]) -> Vec<DMatrix<T>>,
) -> Vec<DMatrix<T>> {
    let shift = |k: &[DMatrix<T>], h: T| -> Vec<DMatrix<T>> {
        y.iter().zip(k).map(|(a, b)| a + b * h).collect()
    };
    let half = dt * T::lit(0.5);
    let k1 = f(y);
    let k2 = f(&shift(&k1, half));
    let k3 = f(&shift(&k2, half));
    let k4 = f(&shift(&k3, dt));
    let sixth = dt / T::lit(6.0);
    (0..y.len())
        .map(|i| &y[i] + (&k1[i] + (&k2[i] + &k3[i]) * T::lit(2.0) + &k4[i]) * sixth)
        .collect()
}

/// Number of steps and the uniform step that lands exactly on `t_end`.
fn step_plan<T: Real>(t_end: T, dt: T) -> Result<(usize, T)> {
    if !(dt > T::zero()) || !(t_end >= T::zero()) {
        return Err(LabError::invalid("need dt > 0 and t_end ≥ 0"));
    }
    let n = (t_end / dt)
        .ceil()
        .to_usize()
        .ok_or_else(|| LabError::invalid("too many steps"))?;
    Ok(if n == 0 {
        (0, dt)
    } else {
        (n, t_end / T::lit(n as f64))
    })
}

/// Scalar RK4 reference for the rank-one flow; returns `a(t_end)²`.
pub fn integrate_rank1<T: Real>(sigma: T, a0: T, t_end: T, dt: T) -> Result<T> {
    let (n, h) = step_plan(t_end, dt)?;
    let f = |a: T| (sigma - a * a) * a;
    let mut a = a0;
    for _ in 0..n {
        let k1 = f(a);
        let k2 = f(a + k1 * h * T::lit(0.5));
        let k3 = f(a + k2 * h * T::lit(0.5));
        let k4 = f(a + k3 * h);
        a += (k1 + (k2 + k3) * T::lit(2.0) + k4) * h / T::lit(6.0);
    }
    Ok(a * a)
}

/// RK4 reference for `Ṡ = (Σ − S)S + S(Σ − S)`.
pub fn integrate_s_ode<T: Real>(
    s0: &DMatrix<T>,
    sigma: &DMatrix<T>,
    t_end: T,
    dt: T,
) -> Result<DMatrix<T>> {
    let (n, h) = step_plan(t_end, dt)?;
    let rhs = |y: &[DMatrix<T>]| {
        let r = sigma - &y[0];
        vec![&r * &y[0] + &y[0] * &r]
    };
    let mut y = vec![s0.clone()];
    for _ in 0..n {
        y = rk4_step(&y, h, rhs);
    }
    Ok(y.pop().expect("one component"))
}

/// Point on an integrated flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState<T: Real> {
    pub t: T,
    pub step: usize,
    pub ufull: DMatrix<T>,
    pub vfull: DMatrix<T>,
}

/// RK4 integration of the full gradient flow from `(ufull0, vfull0)`.
/// States are kept every `record_every` steps, plus the first and last.
pub fn integrate_flow<T: Real>(
    ufull0: &DMatrix<T>,
    vfull0: &DMatrix<T>,
    sigma_full: &DMatrix<T>,
    t_end: T,
    dt: T,
    record_every: usize,
) -> Result<Vec<FlowState<T>>> {
    let (m, n, d) = (ufull0.nrows(), vfull0.nrows(), ufull0.ncols());
    if vfull0.ncols() != d || sigma_full.shape() != (m, n) {
        return Err(LabError::invalid("factor and target shapes disagree"));
    }
    let (steps, h) = step_plan(t_end, dt)?;
    let every = record_every.max(1);
    let rhs = |y: &[DMatrix<T>]| {
        let r = sigma_full - &y[0] * y[1].transpose();
        vec![&r * &y[1], r.transpose() * &y[0]]
    };
    let limit = T::lit(DIVERGENCE_THRESHOLD);
    let mut y = vec![ufull0.clone(), vfull0.clone()];
    let mut out = vec![FlowState {
        t: T::zero(),
        step: 0,
        ufull: y[0].clone(),
        vfull: y[1].clone(),
    }];
    for k in 1..=steps {
        y = rk4_step(&y, h, rhs);
        let size = linalg::max_abs(&y[0]).max(linalg::max_abs(&y[1]));
        if !(size <= limit) {
            return Err(LabError::Divergence {
                iteration: k,
                quantity: "factors",
                value: size.as_f64(),
            });
        }
        if k % every == 0 || k == steps {
            let t = if k == steps {
                t_end
            } else {
                h * T::lit(k as f64)
            };
            out.push(FlowState {
                t,
                step: k,
                ufull: y[0].clone(),
                vfull: y[1].clone(),
            });
        }
    }
    Ok(out)
}

fn balance<T: Real>(s: &FlowState<T>) -> DMatrix<T> {
    s.ufull.transpose() * &s.ufull - s.vfull.transpose() * &s.vfull
}

/// `max_t ‖(𝐔ᵀ𝐔 − 𝐕ᵀ𝐕)(t) − (𝐔ᵀ𝐔 − 𝐕ᵀ𝐕)(0)‖_F` over the recorded states.
pub fn invariance_drift<T: Real>(traj: &[FlowState<T>]) -> T {
    let Some(first) = traj.first() else {
        return T::zero();
    };
    let g0 = balance(first);
    traj.iter()
        .fold(T::zero(), |acc, s| acc.max((balance(s) - &g0).norm()))
}

/// Diagnostics of a flow trajectory on a diagonal instance, with the
/// continuous time of each record alongside.
pub fn flow_diagnostics<T: Real>(
    traj: &[FlowState<T>],
    inst: &ProblemInstance<T>,
) -> Result<(Vec<DiagnosticsRecord<T>>, Vec<T>)> {
    let mut recs = Vec::with_capacity(traj.len());
    for s in traj {
        let mut st = FactorState::from_full(&s.ufull, &s.vfull)?;
        st.t = s.step;
        recs.push(diagnostics(&st, inst));
    }
    Ok((recs, traj.iter().map(|s| s.t).collect()))
}
