//! Gradient descent in full, block and symmetrized coordinates, the derived
//! proof quantities, per-iteration diagnostics and trajectory recording.

pub mod algebra;
mod diagnostics;
mod trajectory;

use nalgebra::DMatrix;

use crate::linalg;
use crate::problem::ProblemInstance;
use crate::{Field, LabError, Real, Result};

pub use diagnostics::{diagnostics, loss_decomposed, loss_direct, DiagnosticsRecord};
pub use trajectory::{
    parse_csv, run_trajectory, write_csv, RunConfig, RunFailure, StopReason, Trajectory,
    CSV_COLUMNS, DIVERGENCE_THRESHOLD,
};

/// Iterate in the diagonal frame, split into principal and complement
/// blocks: `𝐔 = [U; J]`, `𝐕 = [V; K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState<T: Field> {
    /// d×d
    pub u: DMatrix<T>,
    /// d×d
    pub v: DMatrix<T>,
    /// (m−d)×d, possibly empty
    pub j: DMatrix<T>,
    /// (n−d)×d, possibly empty
    pub k: DMatrix<T>,
    pub t: usize,
}

fn stack<T: Field>(top: &DMatrix<T>, bottom: &DMatrix<T>) -> DMatrix<T> {
    let r = top.nrows();
    DMatrix::from_fn(r + bottom.nrows(), top.ncols(), |i, c| {
        if i < r {
            top[(i, c)].clone()
        } else {
            bottom[(i - r, c)].clone()
        }
    })
}

impl<T: Field> FactorState<T> {
    pub fn from_blocks(u: DMatrix<T>, v: DMatrix<T>, j: DMatrix<T>, k: DMatrix<T>) -> Result<Self> {
        let d = u.ncols();
        if u.shape() != (d, d) || v.shape() != (d, d) || j.ncols() != d || k.ncols() != d {
            return Err(LabError::invalid(
                "blocks must be d×d, d×d, (m−d)×d and (n−d)×d",
            ));
        }
        Ok(Self { u, v, j, k, t: 0 })
    }

    /// Splits full factors (m×d, n×d) at row d.
    pub fn from_full(ufull: &DMatrix<T>, vfull: &DMatrix<T>) -> Result<Self> {
        let d = ufull.ncols();
        if vfull.ncols() != d || ufull.nrows() < d || vfull.nrows() < d {
            return Err(LabError::invalid(
                "full factors must be m×d and n×d with m, n ≥ d",
            ));
        }
        let (m, n) = (ufull.nrows(), vfull.nrows());
        Ok(Self {
            u: ufull.rows(0, d).into_owned(),
            v: vfull.rows(0, d).into_owned(),
            j: ufull.rows(d, m - d).into_owned(),
            k: vfull.rows(d, n - d).into_owned(),
            t: 0,
        })
    }

    pub fn to_full(&self) -> (DMatrix<T>, DMatrix<T>) {
        (stack(&self.u, &self.j), stack(&self.v, &self.k))
    }

    pub fn d(&self) -> usize {
        self.u.ncols()
    }
    pub fn m(&self) -> usize {
        self.d() + self.j.nrows()
    }
    pub fn n(&self) -> usize {
        self.d() + self.k.nrows()
    }

    pub(crate) fn check_against<R: Real>(&self, inst: &ProblemInstance<R>) -> Result<()> {
        if self.d() != inst.d() || self.m() != inst.m() || self.n() != inst.n() {
            return Err(LabError::invalid(format!(
                "state shape (m={}, n={}, d={}) does not match instance (m={}, n={}, d={})",
                self.m(),
                self.n(),
                self.d(),
                inst.m(),
                inst.n(),
                inst.d()
            )));
        }
        Ok(())
    }
}

fn require_diagonal<T: Real>(inst: &ProblemInstance<T>) -> Result<()> {
    if inst.is_diagonal() {
        Ok(())
    } else {
        Err(LabError::invalid(
            "block dynamics need a diagonal instance; reduce it first",
        ))
    }
}

fn finite_or_overflow<T: Real>(ms: &[&DMatrix<T>]) -> Result<()> {
    if ms.iter().all(|m| linalg::is_finite(m)) {
        Ok(())
    } else {
        Err(LabError::NumericOverflow)
    }
}

fn check_eta<T: Real>(eta: T) -> Result<()> {
    if eta >= T::zero() && eta.is_finite() {
        Ok(())
    } else {
        Err(LabError::invalid(
            "learning rate must be finite and non-negative",
        ))
    }
}

/// One plain gradient step on the full factors.
pub fn gd_step_full<T: Real>(
    ufull: &DMatrix<T>,
    vfull: &DMatrix<T>,
    sigma_full: &DMatrix<T>,
    eta: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_eta(eta)?;
    let (m, n) = sigma_full.shape();
    if ufull.nrows() != m || vfull.nrows() != n || ufull.ncols() != vfull.ncols() {
        return Err(LabError::invalid(format!(
            "shape mismatch: U is {:?}, V is {:?}, Σ is {m}×{n}",
            ufull.shape(),
            vfull.shape()
        )));
    }
    let (u, v) = algebra::full_step(ufull, vfull, sigma_full, &eta);
    finite_or_overflow(&[&u, &v])?;
    Ok((u, v))
}

/// One gradient step on `f + (λ/8)‖𝐔ᵀ𝐔 − 𝐕ᵀ𝐕‖²_F`; λ = 0 is plain descent.
pub fn regularized_gd_step<T: Real>(
    ufull: &DMatrix<T>,
    vfull: &DMatrix<T>,
    sigma_full: &DMatrix<T>,
    eta: T,
    lambda: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if !(lambda >= T::zero()) {
        return Err(LabError::invalid(
            "regularization weight must be non-negative",
        ));
    }
    gd_step_full(ufull, vfull, sigma_full, eta)?;
    let (u, v) = algebra::regularized_step(ufull, vfull, sigma_full, &eta, &lambda);
    finite_or_overflow(&[&u, &v])?;
    Ok((u, v))
}

/// One gradient step on the blocks of a diagonal instance.
pub fn gd_step_blocks<T: Real>(
    state: &FactorState<T>,
    inst: &ProblemInstance<T>,
    eta: T,
) -> Result<FactorState<T>> {
    check_eta(eta)?;
    require_diagonal(inst)?;
    state.check_against(inst)?;
    let (u, v, j, k) = algebra::block_step(
        &state.u,
        &state.v,
        &state.j,
        &state.k,
        &inst.principal_sigma(),
        &eta,
    );
    finite_or_overflow(&[&u, &v, &j, &k])?;
    Ok(FactorState {
        u,
        v,
        j,
        k,
        t: state.t + 1,
    })
}

/// `A, B, S = AAᵀ, P = Σ − AAᵀ + BBᵀ, Q = ABᵀ − BAᵀ` for one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizedView<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub s: DMatrix<T>,
    pub p: DMatrix<T>,
    pub q: DMatrix<T>,
}

impl<T: Real> SymmetrizedView<T> {
    pub fn new(state: &FactorState<T>, inst: &ProblemInstance<T>) -> Self {
        let (a, b) = algebra::symmetrize(&state.u, &state.v);
        let s = &a * a.transpose();
        let p = algebra::symmetric_error(&a, &b, &inst.principal_sigma());
        let q = algebra::skew_error(&a, &b);
        Self { a, b, s, p, q }
    }
}

/// `(A, B)` from `(U, V)`.
pub fn symmetrize<T: Field>(u: &DMatrix<T>, v: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    algebra::symmetrize(u, v)
}

/// `(U, V)` from `(A, B)`.
pub fn desymmetrize<T: Field>(a: &DMatrix<T>, b: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    algebra::desymmetrize(a, b)
}

/// The gradient step in `(A, B)` coordinates; `J`, `K` enter through the
/// complement Gram matrices.
pub fn ab_step<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    j: &DMatrix<T>,
    k: &DMatrix<T>,
    inst: &ProblemInstance<T>,
    eta: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_eta(eta)?;
    require_diagonal(inst)?;
    let d = inst.d();
    if a.shape() != (d, d) || b.shape() != (d, d) || j.ncols() != d || k.ncols() != d {
        return Err(LabError::invalid(
            "A, B must be d×d and J, K must have d columns",
        ));
    }
    let (a1, b1) = algebra::ab_step(a, b, j, k, &inst.principal_sigma(), &eta);
    finite_or_overflow(&[&a1, &b1])?;
    Ok((a1, b1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTerms<T: Real> {
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

pub fn perturbation_terms<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    j: &DMatrix<T>,
    k: &DMatrix<T>,
) -> PerturbationTerms<T> {
    let (c, d) = algebra::perturbation(a, b, j, k);
    PerturbationTerms { c, d }
}

/// `E_t = P_{t+1} − (I − η(Σ−P_t)) P_t (I − η(Σ−P_t))`.
pub fn p_step_residual<T: Real>(
    now: &SymmetrizedView<T>,
    next: &SymmetrizedView<T>,
    inst: &ProblemInstance<T>,
    eta: T,
) -> DMatrix<T> {
    let d = inst.d();
    let g = DMatrix::<T>::identity(d, d) - (inst.principal_sigma() - &now.p) * eta;
    &next.p - &g * &now.p * &g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(m: usize, n: usize, sv: Vec<f64>) -> ProblemInstance<f64> {
        ProblemInstance::new(m, n, sv.len(), sv).unwrap()
    }

    #[test]
    fn scalar_step_by_hand() {
        let s = DMatrix::from_element(1, 1, 2.0f64);
        let one = DMatrix::from_element(1, 1, 1.0);
        let (u, v) = gd_step_full(&one, &one, &s, 0.1).unwrap();
        assert!((u[(0, 0)] - 1.1).abs() < 1e-15);
        assert!((v[(0, 0)] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn stationary_and_zero_rate() {
        let u = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        let v = DMatrix::from_row_slice(2, 1, &[1.5, 0.0]);
        let s = &u * v.transpose();
        let (u1, v1) = gd_step_full(&u, &v, &s, 0.3).unwrap();
        assert_eq!((u1, v1), (u.clone(), v.clone()));
        let s2 = DMatrix::identity(2, 2);
        let (u2, v2) = gd_step_full(&u, &v, &s2, 0.0).unwrap();
        assert_eq!((u2, v2), (u, v));
    }

    #[test]
    fn step_errors() {
        let s = DMatrix::from_element(2, 2, 1.0);
        let u = DMatrix::from_element(3, 1, 1.0);
        let v = DMatrix::from_element(2, 1, 1.0);
        assert!(matches!(
            gd_step_full(&u, &v, &s, 0.1),
            Err(LabError::Validation(_))
        ));
        let big = DMatrix::from_element(2, 1, 1e200);
        assert_eq!(
            gd_step_full(&big, &big, &s, 1.0),
            Err(LabError::NumericOverflow)
        );
        assert!(gd_step_full(&v, &v, &s, -1.0).is_err());
    }

    #[test]
    fn blocks_without_complement_follow_restriction() {
        let i = inst(4, 3, vec![2.0, 1.0]);
        let u = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.5]);
        let v = DMatrix::from_row_slice(2, 2, &[0.4, -0.1, 0.2, 0.6]);
        let st = FactorState::from_blocks(
            u.clone(),
            v.clone(),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(1, 2),
        )
        .unwrap();
        let next = gd_step_blocks(&st, &i, 0.05).unwrap();
        assert_eq!(next.j, DMatrix::zeros(2, 2));
        assert_eq!(next.k, DMatrix::zeros(1, 2));
        let (u1, v1) = gd_step_full(&u, &v, &i.principal_sigma(), 0.05).unwrap();
        assert!((next.u - u1).norm() < 1e-15);
        assert!((next.v - v1).norm() < 1e-15);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn square_instance_blocks_equal_full() {
        let i = inst(2, 2, vec![3.0, 1.0]);
        let u = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.5]);
        let v = DMatrix::from_row_slice(2, 2, &[0.4, -0.1, 0.2, 0.6]);
        let st = FactorState::from_full(&u, &v).unwrap();
        let next = gd_step_blocks(&st, &i, 0.1).unwrap();
        let (u1, v1) = gd_step_full(&u, &v, &crate::problem::assemble_full_sigma(&i), 0.1).unwrap();
        assert_eq!(next.to_full(), (u1, v1));
    }

    #[test]
    fn block_step_rejects_rotated_instance() {
        let i = crate::problem::make_instance(3, 3, 1, vec![1.0], Some(1)).unwrap();
        let st = FactorState::from_full(&DMatrix::zeros(3, 1), &DMatrix::zeros(3, 1)).unwrap();
        assert!(gd_step_blocks(&st, &i, 0.1).is_err());
    }

    #[test]
    fn symmetrize_special_cases() {
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let (a, b) = symmetrize(&u, &u);
        assert_eq!(a, u);
        assert_eq!(b, DMatrix::zeros(2, 2));
        let (a, b) = symmetrize(&u, &(-&u));
        assert_eq!(a, DMatrix::zeros(2, 2));
        assert_eq!(b, u);
    }

    #[test]
    fn ab_step_symmetric_reduction() {
        let i = inst(3, 3, vec![2.0, 1.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let z = DMatrix::zeros(2, 2);
        let jz = DMatrix::zeros(1, 2);
        let (a1, b1) = ab_step(&a, &z, &jz, &jz, &i, 0.1).unwrap();
        let expected = &a + (i.principal_sigma() - &a * a.transpose()) * &a * 0.1;
        assert!((a1 - expected).norm() < 1e-15);
        assert_eq!(b1, z);
        let b = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.02, -0.01]);
        let (a2, b2) = ab_step(&a, &b, &jz, &jz, &i, 0.0).unwrap();
        assert_eq!((a2, b2), (a, b));
    }

    #[test]
    fn perturbations_vanish_without_asymmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let z = DMatrix::zeros(2, 2);
        let pt = perturbation_terms(&a, &z, &DMatrix::zeros(3, 2), &DMatrix::zeros(0, 2));
        assert_eq!(pt.c, z);
        assert_eq!(pt.d, z);
    }

    #[test]
    fn perturbations_reduced_formula() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let b = DMatrix::from_row_slice(2, 2, &[0.05, -0.1, 0.02, 0.07]);
        let pt = perturbation_terms(&a, &b, &DMatrix::zeros(1, 2), &DMatrix::zeros(1, 2));
        let c = -&a * b.transpose() * &b + &b * a.transpose() * &b;
        let d = &a * b.transpose() * &a - &b * a.transpose() * &a;
        assert!((pt.c - c).norm() < 1e-16);
        assert!((pt.d - d).norm() < 1e-16);
    }

    #[test]
    fn residual_vanishes_at_zero_rate() {
        let i = inst(3, 3, vec![2.0, 1.0]);
        let st = FactorState::from_full(
            &DMatrix::from_row_slice(3, 2, &[0.3, 0.1, -0.2, 0.5, 0.1, 0.1]),
            &DMatrix::from_row_slice(3, 2, &[0.4, -0.1, 0.2, 0.6, 0.0, 0.2]),
        )
        .unwrap();
        let next = gd_step_blocks(&st, &i, 0.0).unwrap();
        let e = p_step_residual(
            &SymmetrizedView::new(&st, &i),
            &SymmetrizedView::new(&next, &i),
            &i,
            0.0,
        );
        assert_eq!(e, DMatrix::zeros(2, 2));
    }

    #[test]
    fn regularizer_zero_weight_and_balanced_start() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let u = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.5]);
        let v = DMatrix::from_row_slice(2, 2, &[0.4, -0.1, 0.2, 0.6]);
        assert_eq!(
            regularized_gd_step(&u, &v, &s, 0.1, 0.0).unwrap(),
            gd_step_full(&u, &v, &s, 0.1).unwrap()
        );
        assert_eq!(
            regularized_gd_step(&u, &u, &s, 0.1, 1.0).unwrap(),
            gd_step_full(&u, &u, &s, 0.1).unwrap()
        );
    }

    #[test]
    fn f32_step_matches_f64() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0f32, 0.0, 0.0, 1.0]);
        let u = DMatrix::from_row_slice(2, 1, &[0.3f32, 0.1]);
        let (u1, _) = gd_step_full(&u, &u, &s, 0.1f32).unwrap();
        let (u2, _) =
            gd_step_full(&u.map(f64::from), &u.map(f64::from), &s.map(f64::from), 0.1).unwrap();
        assert!((u1.map(f64::from) - u2).norm() < 1e-6);
    }
}
