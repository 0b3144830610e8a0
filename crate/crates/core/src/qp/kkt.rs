use nalgebra::DVector;

use super::{Multipliers, QpProblem};

/// ∞-norm of the KKT violations of `(u, multipliers)` for `p`.
///
/// Covers stationarity, primal feasibility, complementary slackness and the
/// sign of the inequality and bound multipliers. A multiplier attached to an
/// infinite bound counts as a violation by its magnitude.
pub fn kkt_residual(p: &QpProblem, u: &DVector<f64>, m: &Multipliers) -> f64 {
    let mut grad = &p.h * u + &p.f;
    if p.m_eq() > 0 {
        grad += p.a_eq.tr_mul(&m.eq);
    }
    if p.m_ineq() > 0 {
        grad += p.a_ineq.tr_mul(&m.ineq);
    }
    grad -= &m.lower;
    grad += &m.upper;
    let mut worst = grad.amax();

    if p.m_eq() > 0 {
        let r = &p.a_eq * u - &p.b_eq;
        worst = worst.max(r.amax());
    }

    if p.m_ineq() > 0 {
        let au = &p.a_ineq * u;
        for i in 0..p.m_ineq() {
            let mu = m.ineq[i];
            worst = worst.max((-mu).max(0.0));
            let b = p.b_ineq[i];
            if b.is_finite() {
                let slack = b - au[i];
                worst = worst.max((-slack).max(0.0));
                worst = worst.max((mu * slack).abs());
            } else {
                worst = worst.max(mu.abs());
            }
        }
    }

    for i in 0..p.n() {
        for (bound, mult, slack) in [
            (p.u_min[i], m.lower[i], u[i] - p.u_min[i]),
            (p.u_max[i], m.upper[i], p.u_max[i] - u[i]),
        ] {
            worst = worst.max((-mult).max(0.0));
            if bound.is_finite() {
                worst = worst.max((-slack).max(0.0));
                worst = worst.max((mult * slack).abs());
            } else {
                worst = worst.max(mult.abs());
            }
        }
    }
    worst
}
