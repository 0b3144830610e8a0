//! Goldfarb–Idnani dual active-set method.
//!
//! Starts from the unconstrained minimizer and adds violated constraints one
//! at a time, dropping working constraints whose multiplier would turn
//! negative. Every iterate is optimal for the constraints in the working set,
//! so no feasible starting point is needed and infeasibility shows up as a
//! violated constraint that cannot be added. H must be positive definite; a
//! PSD H that is positive definite on the equality null space is handled by
//! adding `ρ·A_eqᵀA_eq`, which leaves the objective unchanged on the feasible
//! set.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use super::{kkt_residual, ConstraintRef, Multipliers, QpError, QpProblem, QpSolution, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// ∞-norm bound on the KKT residual for a solution to count as optimal.
    pub tol: f64,
    /// Iteration cap. `None` uses `10·(2n + m_ineq)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: None,
        }
    }
}

/// Solves `p` with the default tolerance (1e-6) and iteration cap.
pub fn solve_qp_default(p: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp(p, SolverOptions::default())
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Eq(usize),
    Fixed(usize),
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

impl Kind {
    fn is_equality(self) -> bool {
        matches!(self, Kind::Eq(_) | Kind::Fixed(_))
    }

    fn as_ref(self) -> ConstraintRef {
        match self {
            Kind::Eq(i) => ConstraintRef::Equality(i),
            Kind::Fixed(j) => ConstraintRef::Lower(j),
            Kind::Ineq(i) => ConstraintRef::Inequality(i),
            Kind::Lower(j) => ConstraintRef::Lower(j),
            Kind::Upper(j) => ConstraintRef::Upper(j),
        }
    }
}

/// A constraint in the normalized form `nᵀu ≥ b` (before orientation).
struct Constraint {
    kind: Kind,
    normal: DVector<f64>,
    rhs: f64,
    /// Violation threshold for this row.
    eps: f64,
}

struct Working {
    /// Constraint indices in the working set.
    set: Vec<usize>,
    /// Multipliers aligned with `set`.
    mult: Vec<f64>,
    /// Gram matrix `N_Aᵀ H⁻¹ N_A` of the (oriented) working normals.
    gram: DMatrix<f64>,
}

pub fn solve_qp(p: &QpProblem, opts: SolverOptions) -> Result<QpSolution, QpError> {
    p.validate()?;
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(QpError::BadTolerance(opts.tol));
    }
    let n = p.n();
    let max_iter = opts.max_iter.unwrap_or(10 * (2 * n + p.m_ineq()).max(1));

    let (h_inv, f_eff) = convexify(p)?;
    let constraints = collect_constraints(p);
    let m = constraints.len();

    // H⁻¹ n_i, computed on first use.
    let mut h_inv_normals: Vec<Option<DVector<f64>>> = vec![None; m];
    let mut sign = vec![1.0_f64; m];
    let mut handled_eq = vec![false; m];

    let mut x = -(&h_inv * &f_eff);
    let mut w = Working {
        set: Vec::new(),
        mult: Vec::new(),
        gram: DMatrix::zeros(0, 0),
    };
    let mut iterations = 0usize;

    let finish = |x: DVector<f64>,
                  w: &Working,
                  sign: &[f64],
                  status: QpStatus,
                  iterations: usize,
                  blocking: Option<ConstraintRef>| {
        build_solution(
            p,
            &constraints,
            x,
            w,
            sign,
            status,
            iterations,
            blocking,
            opts.tol,
        )
    };

    loop {
        // Pick the next constraint: pending equalities first, then the most
        // violated inequality.
        let mut pick: Option<(usize, f64)> = None;
        for (i, c) in constraints.iter().enumerate() {
            if c.kind.is_equality() && !handled_eq[i] {
                let s = c.normal.dot(&x) - c.rhs;
                sign[i] = if s > 0.0 { -1.0 } else { 1.0 };
                pick = Some((i, sign[i] * s));
                break;
            }
        }
        if pick.is_none() {
            let mut worst = 0.0;
            for (i, c) in constraints.iter().enumerate() {
                if c.kind.is_equality() {
                    continue;
                }
                let s = c.normal.dot(&x) - c.rhs;
                if s < -c.eps {
                    let scaled = s / c.normal.norm();
                    if scaled < worst {
                        worst = scaled;
                        pick = Some((i, s));
                    }
                }
            }
        }
        let Some((p_idx, _)) = pick else {
            return Ok(finish(x, &w, &sign, QpStatus::Optimal, iterations, None));
        };

        let n_p = &constraints[p_idx].normal * sign[p_idx];
        let hn_p =
            cached_h_inv_normal(&mut h_inv_normals, &h_inv, &constraints, p_idx) * sign[p_idx];
        let mut u_p = 0.0;

        // Gram column of p against the working set.
        let mut cross: Vec<f64> = w
            .set
            .iter()
            .map(|&j| sign[j] * constraints[j].normal.dot(&hn_p))
            .collect();

        loop {
            iterations += 1;
            if iterations > max_iter {
                warn!("dual active set hit the iteration cap ({max_iter})");
                return Ok(finish(
                    x,
                    &w,
                    &sign,
                    QpStatus::IterationLimit,
                    iterations,
                    None,
                ));
            }
            let s_p = n_p.dot(&x) - sign[p_idx] * constraints[p_idx].rhs;

            // Dual direction r = M⁻¹ N_Aᵀ H⁻¹ n_p, primal direction z = H⁻¹ n_p − H⁻¹ N_A r.
            let q = w.set.len();
            let r = if q == 0 {
                DVector::zeros(0)
            } else {
                match w.gram.clone().cholesky() {
                    Some(ch) => ch.solve(&DVector::from_column_slice(&cross)),
                    None => {
                        warn!("working-set Gram matrix lost definiteness");
                        return Ok(finish(
                            x,
                            &w,
                            &sign,
                            QpStatus::IterationLimit,
                            iterations,
                            None,
                        ));
                    }
                }
            };
            let mut z = hn_p.clone();
            for (k, &j) in w.set.iter().enumerate() {
                let hn_j = h_inv_normals[j].as_ref().expect("cached on entry");
                z.axpy(-r[k] * sign[j], hn_j, 1.0);
            }
            let z_scale = hn_p.amax().max(f64::MIN_POSITIVE);
            let dependent = z.amax() <= 1e-10 * z_scale;

            // Longest dual step keeping working inequality multipliers ≥ 0.
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, &j) in w.set.iter().enumerate() {
                if constraints[j].kind.is_equality() || r[k] <= 1e-14 {
                    continue;
                }
                let ratio = w.mult[k] / r[k];
                if ratio < t1 {
                    t1 = ratio;
                    drop_at = Some(k);
                }
            }

            let is_eq = constraints[p_idx].kind.is_equality();
            if dependent && u_p == 0.0 && s_p.abs() <= constraints[p_idx].eps {
                // Redundant and already satisfied.
                if is_eq {
                    handled_eq[p_idx] = true;
                }
                debug!(
                    "skipping redundant constraint {:?}",
                    constraints[p_idx].kind
                );
                break;
            }

            let t2 = if dependent {
                f64::INFINITY
            } else {
                -s_p / z.dot(&n_p)
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Ok(finish(
                    x,
                    &w,
                    &sign,
                    QpStatus::Infeasible,
                    iterations,
                    Some(constraints[p_idx].kind.as_ref()),
                ));
            }

            if !dependent {
                x.axpy(t, &z, 1.0);
            }
            for k in 0..q {
                w.mult[k] -= t * r[k];
            }
            u_p += t;

            if t == t2 {
                // Full step: p joins the working set.
                let diag = n_p.dot(&hn_p);
                w.gram = w.gram.clone().insert_row(q, 0.0).insert_column(q, 0.0);
                for (k, c) in cross.iter().enumerate() {
                    w.gram[(k, q)] = *c;
                    w.gram[(q, k)] = *c;
                }
                w.gram[(q, q)] = diag;
                w.set.push(p_idx);
                w.mult.push(u_p);
                if is_eq {
                    handled_eq[p_idx] = true;
                }
                break;
            }

            // Partial step: drop the blocking working constraint and retry p.
            let k = drop_at.expect("finite t1 has an index");
            w.set.remove(k);
            w.mult.remove(k);
            cross.remove(k);
            w.gram = w.gram.clone().remove_row(k).remove_column(k);
        }
    }
}

fn convexify(p: &QpProblem) -> Result<(DMatrix<f64>, DVector<f64>), QpError> {
    if let Some(ch) = p.h.clone().cholesky() {
        return Ok((ch.inverse(), p.f.clone()));
    }
    if p.m_eq() == 0 {
        return Err(QpError::NotConvex);
    }
    let rho = p.h.amax().max(1.0);
    let h = &p.h + p.a_eq.tr_mul(&p.a_eq) * rho;
    let f = &p.f - p.a_eq.tr_mul(&p.b_eq) * rho;
    match h.cholesky() {
        Some(ch) => {
            debug!("H is singular; regularized along the equality rows with rho = {rho}");
            Ok((ch.inverse(), f))
        }
        None => Err(QpError::NotConvex),
    }
}

fn collect_constraints(p: &QpProblem) -> Vec<Constraint> {
    let n = p.n();
    let mut out = Vec::with_capacity(p.m_eq() + p.m_ineq() + 2 * n);
    let eps = |b: f64| 1e-11 * (1.0 + b.abs());
    for i in 0..p.m_eq() {
        let b = p.b_eq[i];
        out.push(Constraint {
            kind: Kind::Eq(i),
            normal: p.a_eq.row(i).transpose(),
            rhs: b,
            eps: eps(b),
        });
    }
    for j in 0..n {
        let (lo, hi) = (p.u_min[j], p.u_max[j]);
        if lo == hi {
            out.push(Constraint {
                kind: Kind::Fixed(j),
                normal: unit(n, j, 1.0),
                rhs: lo,
                eps: eps(lo),
            });
        }
    }
    for i in 0..p.m_ineq() {
        let b = p.b_ineq[i];
        if b == f64::INFINITY {
            continue;
        }
        out.push(Constraint {
            kind: Kind::Ineq(i),
            normal: -p.a_ineq.row(i).transpose(),
            rhs: -b,
            eps: eps(b),
        });
    }
    for j in 0..n {
        let (lo, hi) = (p.u_min[j], p.u_max[j]);
        if lo == hi {
            continue;
        }
        if lo.is_finite() {
            out.push(Constraint {
                kind: Kind::Lower(j),
                normal: unit(n, j, 1.0),
                rhs: lo,
                eps: eps(lo),
            });
        }
        if hi.is_finite() {
            out.push(Constraint {
                kind: Kind::Upper(j),
                normal: unit(n, j, -1.0),
                rhs: -hi,
                eps: eps(hi),
            });
        }
    }
    out
}

fn unit(n: usize, j: usize, v: f64) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[j] = v;
    e
}

fn cached_h_inv_normal(
    cache: &mut [Option<DVector<f64>>],
    h_inv: &DMatrix<f64>,
    constraints: &[Constraint],
    i: usize,
) -> DVector<f64> {
    cache[i]
        .get_or_insert_with(|| match constraints[i].kind {
            Kind::Fixed(j) | Kind::Lower(j) => h_inv.column(j).into_owned(),
            Kind::Upper(j) => -h_inv.column(j),
            _ => h_inv * &constraints[i].normal,
        })
        .clone()
}

#[allow(clippy::too_many_arguments)]
fn build_solution(
    p: &QpProblem,
    constraints: &[Constraint],
    x: DVector<f64>,
    w: &Working,
    sign: &[f64],
    status: QpStatus,
    iterations: usize,
    blocking: Option<ConstraintRef>,
    tol: f64,
) -> QpSolution {
    let mut u = x;
    for j in 0..p.n() {
        u[j] = u[j].clamp(p.u_min[j], p.u_max[j]);
    }
    let mut mult = Multipliers::zeros(p);
    for (k, &i) in w.set.iter().enumerate() {
        let v = w.mult[k] * sign[i];
        match constraints[i].kind {
            Kind::Eq(row) => mult.eq[row] = -v,
            Kind::Ineq(row) => mult.ineq[row] = v,
            Kind::Lower(j) => mult.lower[j] = v,
            Kind::Upper(j) => mult.upper[j] = v,
            Kind::Fixed(j) => {
                if v >= 0.0 {
                    mult.lower[j] = v;
                } else {
                    mult.upper[j] = -v;
                }
            }
        }
    }
    let residual = kkt_residual(p, &u, &mult);
    let status = match status {
        QpStatus::Optimal if residual > tol => {
            warn!("solver converged but the KKT residual {residual:e} exceeds tol {tol:e}");
            QpStatus::IterationLimit
        }
        s => s,
    };
    QpSolution {
        objective: p.objective(&u),
        u_star: u,
        multipliers: mult,
        kkt_residual: residual,
        status,
        iterations,
        blocking,
    }
}
