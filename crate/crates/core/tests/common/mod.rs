#![allow(dead_code)]

use ess_mpc::horizon::ControllerConfig;
use ess_mpc::qp::QpProblem;
use ess_mpc::sim::SimulationResult;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Random strictly convex QP with `n ≤ 4`, a finite box and up to two
/// consistent equalities; `ineq` adds up to two general inequality rows.
/// A strictly interior point is always feasible.
pub fn random_qp(seed: u64, ineq: bool) -> QpProblem {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.gen_range(1..=4usize);
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * rng.gen_range(0.1..1.0);
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let lo = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..0.0));
    let hi = DVector::from_fn(n, |i, _| lo[i] + rng.gen_range(0.5..4.0));
    let inside = DVector::from_fn(n, |i, _| lo[i] + (hi[i] - lo[i]) * rng.gen_range(0.1..0.9));

    let mut p = QpProblem::unconstrained(h, f).with_box(lo, hi);
    let m_eq = rng.gen_range(0..=(n - 1).min(2));
    if m_eq > 0 {
        let a = DMatrix::from_fn(m_eq, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = &a * &inside;
        p = p.with_equalities(a, b);
    }
    if ineq {
        let m = rng.gen_range(1..=2usize);
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(m, |i, _| {
            a.row(i).transpose().dot(&inside) + rng.gen_range(0.0..1.0)
        });
        p = p.with_inequalities(a, b);
    }
    p
}

/// Checks balance, SoC bookkeeping and every bound of a closed-loop run.
pub fn check_invariants(r: &SimulationResult, cfg: &ControllerConfig) -> Result<(), String> {
    let n = r.len();
    for (name, len) in [
        ("p_load", r.p_load.len()),
        ("p_res", r.p_res.len()),
        ("p_gen", r.p_gen.len()),
        ("p_sto", r.p_sto.len()),
        ("x", r.x.len()),
        ("solve_times", r.solve_times.len()),
        ("objective_per_step", r.objective_per_step.len()),
    ] {
        if len != n {
            return Err(format!("{name} has {len} entries, run has {n}"));
        }
    }
    let mut energy = 0.0;
    for k in 0..n {
        let balance = r.p_gen[k] + r.p_sto[k] - (r.p_load[k] - r.p_res[k]);
        if balance.abs() > 1e-6 {
            return Err(format!("slot {k}: balance off by {balance:e} MW"));
        }
        energy += r.p_sto[k];
        let expect = r.x_init - r.theta * energy;
        if (r.x[k] - expect).abs() > 1e-9 {
            return Err(format!("slot {k}: SoC {} vs bookkeeping {expect}", r.x[k]));
        }
        let tol = 1e-9;
        if r.p_gen[k] < cfg.pg_min - tol || r.p_gen[k] > cfg.pg_max + tol {
            return Err(format!(
                "slot {k}: p_gen {} outside plant limits",
                r.p_gen[k]
            ));
        }
        if r.p_sto[k] < cfg.ps_min - tol || r.p_sto[k] > cfg.ps_max + tol {
            return Err(format!(
                "slot {k}: p_sto {} outside storage limits",
                r.p_sto[k]
            ));
        }
        if r.x[k] < cfg.x_min - tol || r.x[k] > cfg.x_max + tol {
            return Err(format!(
                "slot {k}: SoC {} outside [{}, {}]",
                r.x[k], cfg.x_min, cfg.x_max
            ));
        }
    }
    Ok(())
}
