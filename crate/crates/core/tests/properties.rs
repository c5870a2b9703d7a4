use lowrank_lab::dynamics::{
    diagnostics, gd_step_blocks, gd_step_full, loss_decomposed, loss_direct, run_trajectory,
    FactorState, RunConfig, SymmetrizedView,
};
use lowrank_lab::flow::{commuting_spd, random_spd_split};
use lowrank_lab::linalg;
use lowrank_lab::problem::{
    assemble_full_sigma, init_factors, make_instance, reduce_to_diagonal, InitSpec,
};
use lowrank_lab::{Instance, Mat};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Setup {
    inst: Instance,
    state: FactorState<f64>,
    eta: f64,
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn setup() -> impl Strategy<Value = Setup> {
    (1usize..=4, 0usize..=4, 0usize..=4)
        .prop_flat_map(|(d, extra_m, extra_n)| {
            let (m, n) = (d + extra_m, d + extra_n);
            (
                prop::collection::vec(0.2f64..5.0, d),
                matrix(m, d),
                matrix(n, d),
                0.0f64..0.05,
            )
        })
        .prop_map(|(mut sv, u, v, eta)| {
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let d = sv.len();
            let inst = Instance::new(u.nrows(), v.nrows(), d, sv).unwrap();
            let eta = eta / inst.sigma_1();
            Setup {
                state: FactorState::from_full(&u, &v).unwrap(),
                inst,
                eta,
            }
        })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn symmetric_and_skew_parts_sum_to_the_residual(s in setup()) {
        let view = SymmetrizedView::new(&s.state, &s.inst);
        let residual = s.inst.principal_sigma() - &s.state.u * s.state.v.transpose();
        prop_assert!(linalg::max_abs(&(&view.p + &view.q - &residual)) <= 1e-12 * linalg::max_abs(&residual).max(1.0));
        prop_assert_eq!(view.p.transpose(), view.p.clone());
        prop_assert!(linalg::max_abs(&(view.q.transpose() + &view.q)) == 0.0);
    }

    #[test]
    fn symmetric_and_skew_parts_are_orthogonal(s in setup()) {
        let view = SymmetrizedView::new(&s.state, &s.inst);
        let scale = view.p.norm() * view.q.norm();
        prop_assert!(linalg::inner(&view.p, &view.q).abs() <= 1e-13 * scale.max(1e-300));
    }

    #[test]
    fn loss_decomposition_matches_direct_loss(s in setup()) {
        let direct = loss_direct(&s.state, &s.inst);
        let split = loss_decomposed(&s.state, &s.inst);
        prop_assert!(close(direct, split, 1e-12), "{} vs {}", direct, split);
    }

    #[test]
    fn block_and_full_steps_agree(s in setup()) {
        let (u, v) = s.state.to_full();
        let (uf, vf) = gd_step_full(&u, &v, &assemble_full_sigma(&s.inst), s.eta).unwrap();
        let (ub, vb) = gd_step_blocks(&s.state, &s.inst, s.eta).unwrap().to_full();
        prop_assert!(linalg::max_abs(&(uf - ub)) <= 1e-13);
        prop_assert!(linalg::max_abs(&(vf - vb)) <= 1e-13);
    }

    #[test]
    fn small_steps_do_not_increase_the_loss(s in setup()) {
        // step well inside 1/L for states with entries in [-2, 2]
        let size = linalg::max_abs(&s.state.u).max(linalg::max_abs(&s.state.v)).max(1.0);
        let dim = (s.inst.m() + s.inst.n()) as f64;
        let eta = 1e-3 / (s.inst.sigma_1() + size * size * dim);
        let next = gd_step_blocks(&s.state, &s.inst, eta).unwrap();
        prop_assert!(loss_direct(&next, &s.inst) <= loss_direct(&s.state, &s.inst) * (1.0 + 1e-12));
    }

    #[test]
    fn diagnostics_are_consistent(s in setup()) {
        let r = diagnostics(&s.state, &s.inst);
        prop_assert!(r.loss >= 0.0);
        prop_assert!(r.sigma_d_a <= r.sigma_1_a);
        prop_assert!(r.lambda_min_p.abs() <= r.sigma_1_p * (1.0 + 1e-12));
        // Δ ≤ ‖·‖_F = √(2·principal loss) ≤ √(2f)
        prop_assert!(r.delta <= (2.0 * r.loss).sqrt() * (1.0 + 1e-12) + 1e-14);
        prop_assert!(close(r.rel_loss * s.inst.half_sigma_norm_sq(), r.loss, 1e-12));
    }

    #[test]
    fn reduction_commutes_with_a_step(
        d in 1usize..=3,
        extra in 0usize..=3,
        seed in 0u64..1000,
        eta in 0.0f64..0.05,
    ) {
        let (m, n) = (d + extra, d + 1);
        let sv: Vec<f64> = (0..d).map(|i| 3.0 - i as f64 * 0.9).collect();
        let inst = make_instance(m, n, d, sv, Some(seed)).unwrap();
        let sigma = assemble_full_sigma(&inst);
        let (u0, v0) = init_factors(m, n, d, &InitSpec::new(0.5, seed));
        let red = reduce_to_diagonal(&sigma, d, &u0, &v0).unwrap();
        let (u1, v1) = gd_step_full(&u0, &v0, &sigma, eta).unwrap();
        let reduced = FactorState::from_full(&red.u0, &red.v0).unwrap();
        let stepped = gd_step_blocks(&reduced, &red.instance, eta).unwrap();
        let (ur, vr) = stepped.to_full();
        let (ul, vl) = red.lift(&ur, &vr);
        let scale = linalg::max_abs(&u1).max(linalg::max_abs(&v1)).max(1.0);
        let (du, dv) = (linalg::max_abs(&(ul - &u1)), linalg::max_abs(&(vl - &v1)));
        prop_assert!(du <= 1e-12 * scale && dv <= 1e-12 * scale, "{} {} at scale {}", du, dv, scale);
    }

    #[test]
    fn spd_split_and_commuting_scaling(seed in 0u64..10_000, d in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma: Vec<f64> = (0..d).map(|i| 1.0 + (i % 2) as f64).collect();
        let (s, p) = random_spd_split(&sigma, &mut rng);
        prop_assert!(linalg::lambda_min(&s) > 0.0 && linalg::lambda_min(&p) > 0.0);
        prop_assert!(linalg::max_abs(&(&s + &p - linalg::diag(&sigma))) <= 1e-14);
        let e = commuting_spd(&sigma, &mut rng);
        let sig = linalg::diag(&sigma);
        prop_assert!((&e * &sig - &sig * &e).norm() == 0.0);
    }
}

#[test]
fn runs_are_deterministic() {
    let inst = Instance::geometric(8, 7, 2, 1.0, 3.0).unwrap();
    let (u, v) = init_factors(8, 7, 2, &InitSpec::new(0.01, 17));
    let cfg = RunConfig::new(0.02, 500).record_every(10);
    let a = run_trajectory(&inst, FactorState::from_full(&u, &v).unwrap(), &cfg).unwrap();
    let b = run_trajectory(&inst, FactorState::from_full(&u, &v).unwrap(), &cfg).unwrap();
    assert_eq!(a, b);
}
