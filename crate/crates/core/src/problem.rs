//! Problem instances, the reduction to a diagonal target, and random
//! initialization at the scales the convergence theory prescribes.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::linalg;
use crate::{LabError, Real, Result};

/// Name of the generator behind every seeded draw; recorded in run metadata.
pub const RNG_NAME: &str = "rand_chacha::ChaCha8Rng via SeedableRng::seed_from_u64";

/// Tolerance on `‖ΦᵀΦ − I‖_op` for user-supplied unitary factors.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Singular values above `RANK_TOL · σ₁` count toward the numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Target matrix `Σ = Φ · diag(σ) · Ψᵀ` of size m×n and rank d.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T: Real> {
    m: usize,
    n: usize,
    d: usize,
    singular_values: Vec<T>,
    left: Option<DMatrix<T>>,
    right: Option<DMatrix<T>>,
}

impl<T: Real> ProblemInstance<T> {
    /// Diagonal instance (identity unitary factors).
    pub fn new(m: usize, n: usize, d: usize, singular_values: Vec<T>) -> Result<Self> {
        if d == 0 {
            return Err(LabError::invalid("rank d must be at least 1"));
        }
        if d > m.min(n) {
            return Err(LabError::invalid(format!(
                "rank d = {d} exceeds min(m, n) = {}",
                m.min(n)
            )));
        }
        if singular_values.len() != d {
            return Err(LabError::invalid(format!(
                "expected {d} singular values, got {}",
                singular_values.len()
            )));
        }
        for (i, s) in singular_values.iter().enumerate() {
            if !(s.is_finite() && *s > T::zero()) {
                return Err(LabError::invalid(format!(
                    "singular value #{i} = {s} is not a positive finite number"
                )));
            }
            if i > 0 && *s > singular_values[i - 1] {
                return Err(LabError::invalid("singular values must be non-increasing"));
            }
        }
        Ok(Self {
            m,
            n,
            d,
            singular_values,
            left: None,
            right: None,
        })
    }

    /// Attaches explicit unitary factors Φ (m×m) and Ψ (n×n).
    pub fn with_unitaries(mut self, left: DMatrix<T>, right: DMatrix<T>) -> Result<Self> {
        if left.shape() != (self.m, self.m) || right.shape() != (self.n, self.n) {
            return Err(LabError::invalid("unitary factors must be m×m and n×n"));
        }
        let tol = T::lit(ORTHOGONALITY_TOL);
        if linalg::orthogonality_defect(&left) > tol || linalg::orthogonality_defect(&right) > tol {
            return Err(LabError::invalid(
                "unitary factors are not orthonormal to 1e-12",
            ));
        }
        self.left = Some(left);
        self.right = Some(right);
        Ok(self)
    }

    /// Square geometric spectrum from σ₁ = κ·σ_d down to σ_d.
    pub fn geometric(m: usize, n: usize, d: usize, sigma_d: T, kappa: T) -> Result<Self> {
        if !(kappa >= T::one()) {
            return Err(LabError::invalid("condition number must be at least 1"));
        }
        let sv = (0..d)
            .map(|i| {
                if d == 1 {
                    sigma_d
                } else {
                    let frac = T::lit((d - 1 - i) as f64 / (d - 1) as f64);
                    sigma_d * kappa.powf(frac)
                }
            })
            .collect();
        Self::new(m, n, d, sv)
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn singular_values(&self) -> &[T] {
        &self.singular_values
    }
    pub fn sigma_1(&self) -> T {
        self.singular_values[0]
    }
    pub fn sigma_d(&self) -> T {
        self.singular_values[self.d - 1]
    }
    pub fn kappa(&self) -> T {
        self.sigma_1() / self.sigma_d()
    }
    pub fn left_unitary(&self) -> Option<&DMatrix<T>> {
        self.left.as_ref()
    }
    pub fn right_unitary(&self) -> Option<&DMatrix<T>> {
        self.right.as_ref()
    }

    /// True when both unitary factors are the identity.
    pub fn is_diagonal(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }

    /// d×d principal block `diag(σ₁, …, σ_d)`.
    pub fn principal_sigma(&self) -> DMatrix<T> {
        linalg::diag(&self.singular_values)
    }

    /// m′ = m − d.
    pub fn m_complement(&self) -> usize {
        self.m - self.d
    }
    /// n′ = n − d.
    pub fn n_complement(&self) -> usize {
        self.n - self.d
    }

    /// `½‖Σ‖²_F`, the loss at the origin.
    pub fn half_sigma_norm_sq(&self) -> T {
        self.singular_values
            .iter()
            .fold(T::zero(), |acc, s| acc + *s * *s)
            * T::lit(0.5)
    }
}

/// Builds an instance, with seeded Haar-like unitary factors when
/// `unitary_seed` is given.
pub fn make_instance<T: Real>(
    m: usize,
    n: usize,
    d: usize,
    singular_values: Vec<T>,
    unitary_seed: Option<u64>,
) -> Result<ProblemInstance<T>> {
    let inst = ProblemInstance::new(m, n, d, singular_values)?;
    match unitary_seed {
        None => Ok(inst),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let left = linalg::orthonormalize(gaussian(&mut rng, m, m, T::one()));
            let right = linalg::orthonormalize(gaussian(&mut rng, n, n, T::one()));
            inst.with_unitaries(left, right)
        }
    }
}

/// `Φ · diag-embed(σ) · Ψᵀ` as a dense m×n matrix.
pub fn assemble_full_sigma<T: Real>(inst: &ProblemInstance<T>) -> DMatrix<T> {
    let mut core = DMatrix::zeros(inst.m, inst.n);
    for (i, s) in inst.singular_values.iter().enumerate() {
        core[(i, i)] = *s;
    }
    match (&inst.left, &inst.right) {
        (None, None) => core,
        (l, r) => {
            let left = l
                .clone()
                .unwrap_or_else(|| DMatrix::identity(inst.m, inst.m));
            let right = r
                .clone()
                .unwrap_or_else(|| DMatrix::identity(inst.n, inst.n));
            left * core * right.transpose()
        }
    }
}

/// Result of rotating a dense problem into the singular-vector frame.
#[derive(Debug, Clone)]
pub struct Reduction<T: Real> {
    /// Diagonal instance with the recovered singular values.
    pub instance: ProblemInstance<T>,
    /// Φ, m×m.
    pub left: DMatrix<T>,
    /// Ψ, n×n.
    pub right: DMatrix<T>,
    /// `ΦᵀU₀`.
    pub u0: DMatrix<T>,
    /// `ΨᵀV₀`.
    pub v0: DMatrix<T>,
}

impl<T: Real> Reduction<T> {
    /// Maps factors from the diagonal frame back: `(ΦU′, ΨV′)`.
    pub fn lift(&self, u: &DMatrix<T>, v: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
        (&self.left * u, &self.right * v)
    }

    /// Maps factors into the diagonal frame: `(ΦᵀU, ΨᵀV)`.
    pub fn project(&self, u: &DMatrix<T>, v: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
        (self.left.transpose() * u, self.right.transpose() * v)
    }
}

/// Computes `Σ = Φ Σ′ Ψᵀ` and expresses the initial factors in the frame
/// where Σ′ is diagonal. Gradient descent commutes with this change of
/// coordinates.
pub fn reduce_to_diagonal<T: Real>(
    sigma_full: &DMatrix<T>,
    d: usize,
    u0: &DMatrix<T>,
    v0: &DMatrix<T>,
) -> Result<Reduction<T>> {
    let (m, n) = sigma_full.shape();
    if d == 0 || d > m.min(n) {
        return Err(LabError::invalid(format!(
            "rank d = {d} incompatible with a {m}×{n} target"
        )));
    }
    if u0.shape() != (m, d) || v0.shape() != (n, d) {
        return Err(LabError::invalid("initial factors must be m×d and n×d"));
    }
    let sv = linalg::singular_values(sigma_full);
    let top = sv.first().copied().unwrap_or_else(T::zero);
    let tol = T::lit(RANK_TOL) * top;
    let rank = sv.iter().filter(|s| **s > tol && **s > T::zero()).count();
    if rank < d {
        return Err(LabError::RankDeficient {
            expected: d,
            found: rank,
        });
    }
    let (sv, left_cols, right_cols) = linalg::top_singular_triplets(sigma_full, d);
    let left = linalg::complete_orthonormal(&left_cols);
    let right = linalg::complete_orthonormal(&right_cols);
    let instance = ProblemInstance::new(m, n, d, sv)?;
    Ok(Reduction {
        u0: left.transpose() * u0,
        v0: right.transpose() * v0,
        instance,
        left,
        right,
    })
}

/// Initialization scale ε and the universal random-matrix constant c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitSpec<T: Real> {
    pub epsilon: T,
    pub seed: u64,
    pub c: T,
}

/// Default random-matrix constant. The lower bound σ_d((U+V)/2) ≥ ε/(c√d)
/// fails with probability ≈ 1.3/c at any dimension, so c must be large for
/// the bounds to hold in nearly every seed.
pub const DEFAULT_C: f64 = 300.0;

impl<T: Real> InitSpec<T> {
    pub fn new(epsilon: T, seed: u64) -> Self {
        Self {
            epsilon,
            seed,
            c: T::lit(DEFAULT_C),
        }
    }

    pub fn with_c(mut self, c: T) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= T::zero() && self.epsilon.is_finite()) {
            return Err(LabError::invalid(
                "epsilon must be a finite non-negative number",
            ));
        }
        if !(self.c >= T::one()) {
            return Err(LabError::invalid("c must be at least 1"));
        }
        Ok(())
    }
}

fn gaussian<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: T) -> DMatrix<T> {
    // row-major draw order
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            out[(i, j)] = T::lit(z) * scale;
        }
    }
    out
}

/// i.i.d. N(0, ε²) entries for U₀ (m×d) then V₀ (n×d), both drawn row-major
/// from a single generator seeded with `spec.seed`.
pub fn init_factors<T: Real>(
    m: usize,
    n: usize,
    d: usize,
    spec: &InitSpec<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = gaussian(&mut rng, m, d, spec.epsilon);
    let v = gaussian(&mut rng, n, d, spec.epsilon);
    (u, v)
}

/// Constants in front of the order-of-magnitude choices of ε and η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub k_epsilon: f64,
    pub k_eta: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self {
            k_epsilon: 1.0,
            k_eta: 1.0,
        }
    }
}

/// `ε = k_ε · σ_d / (√(d³σ₁) (m+n))`.
pub fn theory_epsilon<T: Real>(inst: &ProblemInstance<T>, k_epsilon: T) -> T {
    let d = T::lit(inst.d as f64);
    let mn = T::lit((inst.m + inst.n) as f64);
    k_epsilon * inst.sigma_d() / ((d * d * d * inst.sigma_1()).sqrt() * mn)
}

/// `η = k_η · σ_d ε² / (d σ₁³)`.
pub fn theory_eta<T: Real>(inst: &ProblemInstance<T>, epsilon: T, k_eta: T) -> T {
    let d = T::lit(inst.d as f64);
    let s1 = inst.sigma_1();
    k_eta * inst.sigma_d() * epsilon * epsilon / (d * s1 * s1 * s1)
}

/// Largest step the eigenvalue lemmas admit with β = 1/2: `1/(16σ₁)`.
pub fn lemma_step_cap<T: Real>(inst: &ProblemInstance<T>) -> T {
    T::one() / (T::lit(16.0) * inst.sigma_1())
}

/// Theory-mode parameters: ε from [`theory_epsilon`], and η from
/// [`theory_eta`] clipped to [`lemma_step_cap`].
pub fn theory_parameters<T: Real>(inst: &ProblemInstance<T>, k: TheoryConstants) -> (T, T) {
    let eps = theory_epsilon(inst, T::lit(k.k_epsilon));
    let eta = theory_eta(inst, eps, T::lit(k.k_eta)).min(lemma_step_cap(inst));
    (eps, eta)
}

/// One measured-vs-bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    /// `measured / bound`; pass means ≥ 1 for lower bounds, ≤ 1 for upper.
    pub ratio: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitBoundsReport {
    pub checks: Vec<BoundCheck>,
}

impl InitBoundsReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn ratio(measured: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        if measured == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        measured / bound
    }
}

/// Checks the five random-matrix bounds on the initial blocks (in the
/// diagonal frame): σ_d(A₀) ≥ ε/(c√d), σ₁(A₀) ≤ cε√d, ‖B₀‖_F ≤ cdε,
/// ‖J₀‖ ≤ cε√max{m′,d}, ‖K₀‖ ≤ cε√max{n′,d}.
pub fn verify_init_bounds<T: Real>(
    u0: &DMatrix<T>,
    v0: &DMatrix<T>,
    epsilon: T,
    c: T,
) -> Result<InitBoundsReport> {
    let d = u0.ncols();
    if v0.ncols() != d || u0.nrows() < d || v0.nrows() < d {
        return Err(LabError::invalid(
            "factors must be m×d and n×d with m, n ≥ d",
        ));
    }
    let (m, n) = (u0.nrows(), v0.nrows());
    let u = u0.rows(0, d).into_owned();
    let v = v0.rows(0, d).into_owned();
    let j = u0.rows(d, m - d).into_owned();
    let k = v0.rows(d, n - d).into_owned();
    let a = (&u + &v) * T::lit(0.5);
    let b = (&u - &v) * T::lit(0.5);
    let (eps, c) = (epsilon.as_f64(), c.as_f64());
    let df = d as f64;
    let sv = linalg::singular_values(&a);
    let smin = sv.last().copied().unwrap_or_else(T::zero).as_f64();
    let smax = sv.first().copied().unwrap_or_else(T::zero).as_f64();

    let lower = eps / (c * df.sqrt());
    let mut checks = vec![BoundCheck {
        name: "sigma_d_A",
        measured: smin,
        bound: lower,
        ratio: ratio(smin, lower),
        holds: smin > 0.0 && smin >= lower,
    }];
    let mut upper = |name, measured: f64, bound: f64| {
        checks.push(BoundCheck {
            name,
            measured,
            bound,
            ratio: ratio(measured, bound),
            holds: measured <= bound,
        })
    };
    upper("sigma_1_A", smax, c * eps * df.sqrt());
    upper("B_fro", linalg::frobenius(&b).as_f64(), c * df * eps);
    upper(
        "J_op",
        linalg::op_norm(&j).as_f64(),
        c * eps * ((m - d).max(d) as f64).sqrt(),
    );
    upper(
        "K_op",
        linalg::op_norm(&k).as_f64(),
        c * eps * ((n - d).max(d) as f64).sqrt(),
    );
    Ok(InitBoundsReport { checks })
}
