mod common;

use common::*;
use proptest::prelude::*;
use wprelay_core::linalg::{self, cr};
use wprelay_core::sdp::{self, SdpOptions, SdpProblem, SdpStatus};
use wprelay_core::source;

/// Unit-trace problem with one PSD and one indefinite inequality, both
/// strictly satisfied at `I/n`.
fn random_problem(seed: u64, n: usize) -> SdpProblem {
    let mut g = rng(seed);
    let cost = rand_hermitian(&mut g, n);
    let a = rand_psd(&mut g, n, n);
    let b = rand_hermitian(&mut g, n);
    let nf = n as f64;
    let bound_a = 1.2 * a.trace().re / nf;
    let bound_b = b.trace().re / nf + 0.1 * (1.0 + linalg::fro(&b));
    SdpProblem::new(cost, vec![(a, bound_a), (b, bound_b)], vec![(linalg::identity(n), 1.0)]).unwrap()
}

fn assert_solution_quality(p: &SdpProblem) -> Result<(), TestCaseError> {
    let s = sdp::solve_sdp(p, &SdpOptions::default());
    prop_assert_eq!(s.status, SdpStatus::Optimal);
    let k = sdp::kkt_residuals(p, &s);
    prop_assert!(k.max() <= 1e-7, "{:?}", k);
    prop_assert!((s.primal_objective - s.dual_objective).abs() <= 1e-7 * (1.0 + s.primal_objective.abs()));
    prop_assert!(linalg::min_eigenvalue(&s.z) >= -1e-8);
    prop_assert!(linalg::min_eigenvalue(&s.x) >= -1e-8);
    for w in s.merit_history.windows(2) {
        prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{} -> {}", w[0], w[1]);
    }

    // The solver works on the real embedding, so traces there are twice
    // the complex ones.
    prop_assert!(linalg::fro(&(&s.x - s.x.adjoint())) <= 1e-12 * (1.0 + linalg::fro(&s.x)));
    let xr = linalg::herm_to_real(&s.x).unwrap();
    for (m, _) in std::iter::once((&p.cost, 0.0)).chain(p.ineq.iter().map(|(m, b)| (m, *b))) {
        let mr = linalg::herm_to_real(m).unwrap();
        let embedded = (&mr * &xr).trace();
        let complex = linalg::re_trace_prod(m, &s.x);
        prop_assert!((0.5 * embedded - complex).abs() <= 1e-9 * (1.0 + complex.abs()));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn random_unit_trace_problems_are_solved(n in 1usize..=6, seed in any::<u64>()) {
        assert_solution_quality(&random_problem(seed, n))?;
    }

    #[test]
    fn homogenized_source_problems_are_solved(r in 1usize..=3, seed in 0u64..1_000_000) {
        let mut g = rng(seed);
        let (ch, p) = random_drop(seed, r, r + 1);
        let st = random_state(&mut g, &ch, &p, seed % 2 == 0);
        let q = source::build_b_qcqp(&st, &ch, &p).unwrap();
        // The relay constraint can be met iff the most negative direction of
        // A4 at full source power gets below C_b.
        let reach = q.p_s * linalg::min_eigenvalue(&q.a4).min(0.0);
        prop_assume!((reach - q.c_b).abs() > 1e-3 * (reach.abs() + q.c_b.abs()));
        let h = source::homogenize(&q);
        let sdp = h.to_sdp().unwrap();
        if reach < q.c_b {
            assert_solution_quality(&sdp)?;
        } else {
            let s = sdp::solve_sdp(&sdp, &SdpOptions::default());
            prop_assert_eq!(s.status, SdpStatus::Infeasible);
        }
    }
}

#[test]
fn same_problem_gives_same_solution() {
    let p = random_problem(31, 4);
    let a = sdp::solve_sdp(&p, &SdpOptions::default());
    let b = sdp::solve_sdp(&p, &SdpOptions::default());
    assert_eq!(a.x, b.x);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn tightening_a_bound_cannot_lower_the_optimum() {
    for seed in 0..30 {
        let loose = random_problem(700 + seed, 3);
        let mut tight = loose.clone();
        let t = &mut tight.ineq[0];
        // Still above the value at I/n.
        t.1 = 0.5 * (t.1 + t.0.trace().re / 3.0);
        let a = sdp::solve_sdp(&loose, &SdpOptions::default());
        let b = sdp::solve_sdp(&tight, &SdpOptions::default());
        assert!(b.primal_objective >= a.primal_objective - 1e-7, "{} < {}", b.primal_objective, a.primal_objective);
    }
}

#[test]
fn scaling_the_cost_scales_the_objective() {
    for seed in 0..20 {
        let p = random_problem(900 + seed, 4);
        let mut q = p.clone();
        q.cost *= cr(3.0);
        let a = sdp::solve_sdp(&p, &SdpOptions::default());
        let b = sdp::solve_sdp(&q, &SdpOptions::default());
        assert!((b.primal_objective - 3.0 * a.primal_objective).abs() <= 1e-6 * (1.0 + b.primal_objective.abs()));
    }
}
