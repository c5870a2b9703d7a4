//! Numerical laboratory for randomly initialized gradient descent on the
//! asymmetric low-rank factorization problem
//!
//! ```text
//! min_{U ∈ R^{m×d}, V ∈ R^{n×d}}  f(U, V) = ½ ‖U Vᵀ − Σ‖²_F
//! ```
//!
//! The crate runs the exact update rules in full, block and symmetrized
//! coordinates, tracks the quantities a two-stage convergence analysis
//! relies on (`A`, `B`, `S`, `P`, `Q`, `J`, `K`, `Δ`), checks the discrete
//! eigenvalue lemmas by randomized sweeps, provides closed-form and RK4
//! references for the continuous-time flow, and fits empirical rates.
//!
//! Numerical code is generic over [`Real`] (`f32`, `f64`). The purely
//! algebraic maps (gradient steps, symmetrization, perturbation terms) are
//! generic over [`Field`] so that they can also be evaluated in exact
//! rational arithmetic. The aliases at the bottom of this file fix the
//! scalar to `f64`, which is what the experiment harness uses.

pub mod dynamics;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod phases;
pub mod problem;
pub mod verification;

use std::fmt;

use nalgebra::{ClosedAddAssign, ClosedDivAssign, ClosedMulAssign, ClosedSubAssign, RealField};
use num_traits::{One, ToPrimitive, Zero};

pub use error::{LabError, Result};

/// Scalars on which the algebraic update maps can be evaluated: any field
/// nalgebra can multiply matrices over, including exact rationals.
pub trait Field:
    nalgebra::Scalar
    + Zero
    + One
    + ClosedAddAssign
    + ClosedSubAssign
    + ClosedMulAssign
    + ClosedDivAssign
    + std::ops::Neg<Output = Self>
{
    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }
}

impl<T> Field for T where
    T: nalgebra::Scalar
        + Zero
        + One
        + ClosedAddAssign
        + ClosedSubAssign
        + ClosedMulAssign
        + ClosedDivAssign
        + std::ops::Neg<Output = T>
{
}

/// Floating-point scalar used by everything that needs norms,
/// decompositions or transcendental functions.
pub trait Real: Field + RealField + Copy + ToPrimitive + fmt::LowerExp + fmt::Display {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Matrix<T> = nalgebra::DMatrix<T>;

pub type Instance = problem::ProblemInstance<f64>;
pub type State = dynamics::FactorState<f64>;
pub type View = dynamics::SymmetrizedView<f64>;
pub type Record = dynamics::DiagnosticsRecord<f64>;
pub type Run = dynamics::Trajectory<f64>;
pub type Mat = nalgebra::DMatrix<f64>;
