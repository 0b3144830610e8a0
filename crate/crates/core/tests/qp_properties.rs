mod common;

use common::random_qp;
use ess_mpc::qp::oracle::solve_qp_oracle;
use ess_mpc::qp::{kkt_residual, solve_qp, solve_qp_default, QpStatus, SolverOptions};
use nalgebra::DVector;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_oracle(seed in any::<u64>(), ineq in any::<bool>()) {
        let p = random_qp(seed, ineq);
        let s = solve_qp_default(&p).unwrap();
        let o = solve_qp_oracle(&p).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        prop_assert_eq!(o.status, QpStatus::Optimal);
        let du = (&s.u_star - &o.u_star).amax();
        prop_assert!(du <= 1e-4, "u* differs by {du:e}: {} vs {}", s.u_star, o.u_star);
        let dobj = (s.objective - o.objective).abs();
        prop_assert!(dobj <= 1e-6, "objective differs by {dobj:e}");
    }

    #[test]
    fn optimal_status_is_certified(seed in any::<u64>(), ineq in any::<bool>()) {
        let p = random_qp(seed, ineq);
        let opts = SolverOptions::default();
        let s = solve_qp(&p, opts).unwrap();
        if s.status == QpStatus::Optimal {
            let r = kkt_residual(&p, &s.u_star, &s.multipliers);
            prop_assert!(r <= opts.tol, "residual {r:e}");
            prop_assert_eq!(r, s.kkt_residual);
        }
    }

    #[test]
    fn shrinking_the_box_never_helps(seed in any::<u64>(), shrink in 0.0..0.45f64) {
        let p = random_qp(seed, false);
        let wide = solve_qp_default(&p).unwrap();
        // shrink towards a feasible point so the restricted problem stays feasible
        let anchor = solve_qp_oracle(&p).unwrap().u_star;
        let mut q = p.clone();
        q.u_min = DVector::from_fn(p.n(), |i, _| p.u_min[i] + shrink * (anchor[i] - p.u_min[i]));
        q.u_max = DVector::from_fn(p.n(), |i, _| p.u_max[i] - shrink * (p.u_max[i] - anchor[i]));
        let narrow = solve_qp_default(&q).unwrap();
        prop_assert_eq!(narrow.status, QpStatus::Optimal);
        prop_assert!(narrow.objective >= wide.objective - 1e-9, "{} < {}", narrow.objective, wide.objective);
    }

    #[test]
    fn repeated_solves_are_identical(seed in any::<u64>(), ineq in any::<bool>()) {
        let p = random_qp(seed, ineq);
        let a = solve_qp_default(&p).unwrap();
        let b = solve_qp_default(&p).unwrap();
        prop_assert_eq!(a.u_star, b.u_star);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}

#[test]
fn solves_from_many_threads() {
    let problems: Vec<_> = (0..16).map(|s| random_qp(s, true)).collect();
    let serial: Vec<_> = problems
        .iter()
        .map(|p| solve_qp_default(p).unwrap().u_star)
        .collect();
    let parallel: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = problems
            .iter()
            .map(|p| s.spawn(move || solve_qp_default(p).unwrap().u_star))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
}
