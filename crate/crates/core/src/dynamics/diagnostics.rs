use nalgebra::DMatrix;
use serde::Serialize;

use super::{algebra, FactorState};
use crate::linalg;
use crate::problem::ProblemInstance;
use crate::Real;

/// Scalars recorded for one iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord<T: Real> {
    pub t: usize,
    /// `½‖𝚺 − 𝐔𝐕ᵀ‖²_F`
    pub loss: T,
    /// loss divided by `½‖𝚺‖²_F`
    pub rel_loss: T,
    pub sigma_d_a: T,
    pub sigma_1_a: T,
    pub b_fro: T,
    pub j_op: T,
    pub k_op: T,
    pub lambda_min_p: T,
    /// largest eigenvalue magnitude of P
    pub sigma_1_p: T,
    /// `‖Σ − UVᵀ‖_op` on the principal block
    pub delta: T,
    /// `‖𝐔ᵀ𝐔 − 𝐕ᵀ𝐕‖_F`
    pub balance_gap: T,
    /// `‖E_t‖_op`, filled in once the next iterate is known
    pub e_residual_op: Option<T>,
    pub sigma_d_u: T,
    pub sigma_d_v: T,
    /// `λ_min(2Σ − AAᵀ)`; non-negative iff `AAᵀ ⪯ 2Σ`
    pub signal_headroom: T,
    pub q_fro: T,
}

impl<T: Real> DiagnosticsRecord<T> {
    /// `(name, value)` pairs for every always-present field, used for the
    /// divergence guard.
    pub fn magnitudes(&self) -> [(&'static str, T); 12] {
        [
            ("loss", self.loss),
            ("sigma_1_A", self.sigma_1_a),
            ("sigma_d_A", self.sigma_d_a),
            ("B_fro", self.b_fro),
            ("J_op", self.j_op),
            ("K_op", self.k_op),
            ("lambda_min_P", self.lambda_min_p.abs()),
            ("sigma_1_P", self.sigma_1_p),
            ("Delta", self.delta),
            ("balance_gap", self.balance_gap),
            ("sigma_d_U", self.sigma_d_u),
            ("sigma_d_V", self.sigma_d_v),
        ]
    }
}

/// Loss on the assembled full matrices.
pub fn loss_direct<T: Real>(state: &FactorState<T>, inst: &ProblemInstance<T>) -> T {
    let (u, v) = state.to_full();
    let mut r = -(u * v.transpose());
    for (i, s) in inst.singular_values().iter().enumerate() {
        r[(i, i)] += *s;
    }
    r.norm_squared() * T::lit(0.5)
}

/// Loss from the block decomposition
/// `‖Σ−UVᵀ‖² + ‖UKᵀ‖² + ‖JVᵀ‖² + ‖JKᵀ‖²`, each cross term evaluated as a
/// Frobenius product of d×d Gram matrices.
pub fn loss_decomposed<T: Real>(state: &FactorState<T>, inst: &ProblemInstance<T>) -> T {
    let principal = (inst.principal_sigma() - &state.u * state.v.transpose()).norm_squared();
    let utu = state.u.transpose() * &state.u;
    let vtv = state.v.transpose() * &state.v;
    let jtj = state.j.transpose() * &state.j;
    let ktk = state.k.transpose() * &state.k;
    let cross = linalg::inner(&utu, &ktk) + linalg::inner(&jtj, &vtv) + linalg::inner(&jtj, &ktk);
    (principal + cross) * T::lit(0.5)
}

/// All recorded scalars for one iterate of a diagonal instance.
pub fn diagnostics<T: Real>(
    state: &FactorState<T>,
    inst: &ProblemInstance<T>,
) -> DiagnosticsRecord<T> {
    let sigma = inst.principal_sigma();
    let (a, b) = algebra::symmetrize(&state.u, &state.v);
    let p = algebra::symmetric_error(&a, &b, &sigma);
    let q = algebra::skew_error(&a, &b);
    let sv_a = linalg::singular_values(&a);
    let p_eigs = linalg::sym_eigenvalues(&p);
    let lambda_min_p = *p_eigs.last().expect("d ≥ 1");
    let sigma_1_p = p_eigs[0].abs().max(lambda_min_p.abs());
    let gram_gap = state.u.transpose() * &state.u + state.j.transpose() * &state.j
        - state.v.transpose() * &state.v
        - state.k.transpose() * &state.k;
    let headroom: DMatrix<T> = &sigma * T::lit(2.0) - &a * a.transpose();
    let loss = loss_direct(state, inst);
    DiagnosticsRecord {
        t: state.t,
        loss,
        rel_loss: loss / inst.half_sigma_norm_sq(),
        sigma_d_a: *sv_a.last().expect("d ≥ 1"),
        sigma_1_a: sv_a[0],
        b_fro: b.norm(),
        j_op: linalg::op_norm(&state.j),
        k_op: linalg::op_norm(&state.k),
        lambda_min_p,
        sigma_1_p,
        delta: linalg::op_norm(&(&sigma - &state.u * state.v.transpose())),
        balance_gap: gram_gap.norm(),
        e_residual_op: None,
        sigma_d_u: linalg::sigma_min(&state.u),
        sigma_d_v: linalg::sigma_min(&state.v),
        signal_headroom: linalg::lambda_min(&headroom),
        q_fro: q.norm(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_factorization_has_zero_loss() {
        let inst = ProblemInstance::new(3, 4, 2, vec![4.0, 1.0]).unwrap();
        let u = crate::linalg::diag(&[2.0, 1.0]);
        let st = FactorState::from_blocks(u.clone(), u, DMatrix::zeros(1, 2), DMatrix::zeros(2, 2))
            .unwrap();
        let r = diagnostics(&st, &inst);
        assert_eq!(r.loss, 0.0);
        assert!(r.delta < 1e-15);
        assert_eq!(r.b_fro, 0.0);
        assert_eq!(r.balance_gap, 0.0);
        assert!((r.sigma_d_a - 1.0f64).abs() < 1e-15);
    }

    #[test]
    fn balanced_principal_blocks() {
        let inst = ProblemInstance::new(2, 2, 2, vec![2.0f64, 1.0]).unwrap();
        let u = DMatrix::from_row_slice(2, 2, &[0.3, 0.2, -0.1, 0.4]);
        let st = FactorState::from_blocks(u.clone(), u, DMatrix::zeros(0, 2), DMatrix::zeros(0, 2))
            .unwrap();
        let r = diagnostics(&st, &inst);
        assert_eq!(r.b_fro, 0.0);
        assert_eq!(r.balance_gap, 0.0);
        assert!(r.delta <= (2.0 * r.loss).sqrt() + 1e-15);
    }
}
