//! Brute-force reference solver for tiny QPs.
//!
//! The equality constraints are eliminated through an orthonormal null-space
//! basis, the remaining parameters are gridded over a ball that contains the
//! whole box, and the grid is repeatedly halved around the best feasible
//! point. Because thin feasible regions can trap the grid, every candidate
//! active set (at most `n − m_eq` bound or inequality rows) is then solved
//! exactly as a dense KKT system and the best feasible candidate replaces
//! the grid point. Nothing here shares code with the active-set solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use super::{kkt_residual, Multipliers, QpProblem, QpSolution, QpStatus};

pub const MAX_ORACLE_DIM: usize = 4;

/// Final grid spacing.
pub const ORACLE_RESOLUTION: f64 = 1e-5;

/// Enumeration is skipped above this many bound and inequality rows.
const MAX_ENUMERATED_ROWS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle supports n <= {MAX_ORACLE_DIM}, got n = {0}")]
    DimensionTooLarge(usize),
    #[error("oracle needs a finite box")]
    UnboundedBox,
    #[error(transparent)]
    Invalid(#[from] super::QpError),
}

struct Reduced<'a> {
    p: &'a QpProblem,
    base: DVector<f64>,
    basis: DMatrix<f64>,
}

impl Reduced<'_> {
    fn lift(&self, w: &[f64]) -> DVector<f64> {
        let mut u = self.base.clone();
        for (k, wk) in w.iter().enumerate() {
            u.axpy(*wk, &self.basis.column(k), 1.0);
        }
        u
    }

    fn feasible(&self, u: &DVector<f64>) -> bool {
        let p = self.p;
        const SLACK: f64 = 1e-12;
        for i in 0..p.n() {
            if u[i] < p.u_min[i] - SLACK || u[i] > p.u_max[i] + SLACK {
                return false;
            }
        }
        for i in 0..p.m_ineq() {
            if p.a_ineq.row(i).transpose().dot(u) > p.b_ineq[i] + SLACK {
                return false;
            }
        }
        true
    }

    /// Best feasible point of the grid `center + spacing·j`, `j ∈ [-half, half]^k`.
    fn scan(&self, center: &[f64], spacing: f64, half: i64) -> Option<(Vec<f64>, f64)> {
        let k = center.len();
        let side = (2 * half + 1) as usize;
        let total = side.pow(k as u32);
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut w = vec![0.0; k];
        for idx in 0..total {
            let mut rem = idx;
            for d in 0..k {
                let j = (rem % side) as i64 - half;
                rem /= side;
                w[d] = center[d] + spacing * j as f64;
            }
            let u = self.lift(&w);
            if !self.feasible(&u) {
                continue;
            }
            let val = self.p.objective(&u);
            if best.as_ref().is_none_or(|(_, b)| val < *b) {
                best = Some((w.clone(), val));
            }
        }
        best
    }
}

/// Grid-search reference solution. Only for `n ≤ 4` with a finite box.
pub fn solve_qp_oracle(p: &QpProblem) -> Result<QpSolution, OracleError> {
    p.validate()?;
    let n = p.n();
    if n > MAX_ORACLE_DIM {
        return Err(OracleError::DimensionTooLarge(n));
    }
    if p.u_min.iter().chain(p.u_max.iter()).any(|v| !v.is_finite()) {
        return Err(OracleError::UnboundedBox);
    }

    let infeasible = || QpSolution {
        u_star: DVector::from_element(n, f64::NAN),
        objective: f64::NAN,
        multipliers: Multipliers::zeros(p),
        kkt_residual: f64::INFINITY,
        status: QpStatus::Infeasible,
        iterations: 0,
        blocking: None,
    };

    let Some((base, basis)) = null_space_parameterization(p) else {
        return Ok(infeasible());
    };
    let red = Reduced { p, base, basis };
    let k = red.basis.ncols();

    let center_u = (&p.u_min + &p.u_max) * 0.5;
    let radius = ((&p.u_max - &p.u_min) * 0.5).norm();
    let center: Vec<f64> = (0..k).map(|d| red.basis.column(d).dot(&center_u)).collect();

    let mut found = None;
    let mut spacing = 0.0;
    for half in [10_i64, 20, 40] {
        if k == 0 {
            found = red.scan(&center, 0.0, 0);
            break;
        }
        spacing = radius.max(1e-12) / half as f64;
        found = red.scan(&center, spacing, half);
        if found.is_some() {
            break;
        }
    }
    let Some((mut w, _)) = found else {
        return Ok(infeasible());
    };

    let mut iterations = 0;
    while k > 0 && spacing >= ORACLE_RESOLUTION {
        spacing *= 0.5;
        let (next, _) = red
            .scan(&w, spacing, 4)
            .expect("current best stays on the grid");
        w = next;
        iterations += 1;
    }

    let mut u = red.lift(&w);
    if let Some(exact) = polish(p) {
        if p.objective(&exact) <= p.objective(&u) {
            u = exact;
        }
    }
    let multipliers = estimate_multipliers(p, &u, 1e-7);
    Ok(QpSolution {
        objective: p.objective(&u),
        kkt_residual: kkt_residual(p, &u, &multipliers),
        u_star: u,
        multipliers,
        status: QpStatus::Optimal,
        iterations,
        blocking: None,
    })
}

/// A linear constraint `a·u ≤ b` (box bounds included).
struct Row {
    a: DVector<f64>,
    b: f64,
}

fn inequality_rows(p: &QpProblem) -> Vec<Row> {
    let n = p.n();
    let mut rows = Vec::new();
    for i in 0..p.m_ineq() {
        if p.b_ineq[i].is_finite() {
            rows.push(Row {
                a: p.a_ineq.row(i).transpose(),
                b: p.b_ineq[i],
            });
        }
    }
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        rows.push(Row {
            a: -e.clone(),
            b: -p.u_min[j],
        });
        rows.push(Row {
            a: e,
            b: p.u_max[j],
        });
    }
    rows
}

/// Minimizer with the equalities and the rows in `active` held with
/// equality, from the full KKT system. `None` when it is singular.
fn solve_with_active(p: &QpProblem, rows: &[&Row]) -> Option<DVector<f64>> {
    let n = p.n();
    let m = p.m_eq() + rows.len();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::zeros(n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    rhs.rows_mut(0, n).copy_from(&(-&p.f));
    let constraint_rows = (0..p.m_eq())
        .map(|i| (p.a_eq.row(i).transpose(), p.b_eq[i]))
        .chain(rows.iter().map(|r| (r.a.clone(), r.b)));
    for (k, (a, b)) in constraint_rows.enumerate() {
        kkt.view_mut((n + k, 0), (1, n)).copy_from(&a.transpose());
        kkt.view_mut((0, n + k), (n, 1)).copy_from(&a);
        rhs[n + k] = b;
    }
    let sol = kkt.full_piv_lu().solve(&rhs)?;
    let u = sol.rows(0, n).into_owned();
    u.iter().all(|v| v.is_finite()).then_some(u)
}

/// Best feasible point among the minimizers of every active set with
/// linearly independent rows. The optimum is one of them.
fn polish(p: &QpProblem) -> Option<DVector<f64>> {
    let rows = inequality_rows(p);
    if rows.len() > MAX_ENUMERATED_ROWS {
        return None;
    }
    let feasible = |v: &DVector<f64>| {
        let eq_ok = (0..p.m_eq()).all(|i| {
            (p.a_eq.row(i).transpose().dot(v) - p.b_eq[i]).abs() <= 1e-9 * (1.0 + p.b_eq[i].abs())
        });
        eq_ok
            && rows
                .iter()
                .all(|r| r.a.dot(v) <= r.b + 1e-9 * (1.0 + r.b.abs()))
    };
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << rows.len()) {
        if p.m_eq() + mask.count_ones() as usize > p.n() {
            continue;
        }
        let subset: Vec<&Row> = (0..rows.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &rows[i])
            .collect();
        let Some(v) = solve_with_active(p, &subset) else {
            continue;
        };
        if !feasible(&v) {
            continue;
        }
        let val = p.objective(&v);
        if best.as_ref().is_none_or(|(_, b)| val < *b) {
            best = Some((v, val));
        }
    }
    // the box clip removes round-off from the KKT solve
    best.map(|(v, _)| v.zip_zip_map(&p.u_min, &p.u_max, |x, lo, hi| x.clamp(lo, hi)))
}

/// Particular solution of `A_eq u = b_eq` plus an orthonormal basis of the
/// null space of `A_eq`. `None` when the equalities are inconsistent.
fn null_space_parameterization(p: &QpProblem) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = p.n();
    if p.m_eq() == 0 {
        return Some((DVector::zeros(n), DMatrix::identity(n, n)));
    }
    let svd = p.a_eq.clone().svd(true, true);
    let base = svd.solve(&p.b_eq, 1e-10).ok()?;
    let resid = (&p.a_eq * &base - &p.b_eq).amax();
    if resid > 1e-9 * (1.0 + p.b_eq.amax()) {
        return None;
    }
    let gram = p.a_eq.tr_mul(&p.a_eq);
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * top)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let basis = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Some((base, basis))
}

/// Least-squares multipliers for a candidate point: constraints with slack
/// below `active_tol` are treated as active, stationarity is solved in the
/// least-squares sense and negative inequality multipliers are zeroed.
pub fn estimate_multipliers(p: &QpProblem, u: &DVector<f64>, active_tol: f64) -> Multipliers {
    let n = p.n();
    #[derive(Clone, Copy)]
    enum Col {
        Eq(usize),
        Ineq(usize),
        Lower(usize),
        Upper(usize),
    }
    let mut cols: Vec<(Col, DVector<f64>)> = Vec::new();
    for i in 0..p.m_eq() {
        cols.push((Col::Eq(i), p.a_eq.row(i).transpose()));
    }
    let au = &p.a_ineq * u;
    for i in 0..p.m_ineq() {
        if p.b_ineq[i] - au[i] <= active_tol {
            cols.push((Col::Ineq(i), p.a_ineq.row(i).transpose()));
        }
    }
    for j in 0..n {
        let mut e = DVector::zeros(n);
        if u[j] - p.u_min[j] <= active_tol {
            e[j] = -1.0;
            cols.push((Col::Lower(j), e.clone()));
        }
        if p.u_max[j] - u[j] <= active_tol {
            e[j] = 1.0;
            cols.push((Col::Upper(j), e));
        }
    }
    let mut m = Multipliers::zeros(p);
    if cols.is_empty() {
        return m;
    }
    let a = DMatrix::from_columns(&cols.iter().map(|(_, c)| c.clone()).collect::<Vec<_>>());
    let rhs = -(&p.h * u + &p.f);
    let Ok(y) = a.svd(true, true).solve(&rhs, 1e-12) else {
        return m;
    };
    for ((col, _), v) in cols.iter().zip(y.iter()) {
        match *col {
            Col::Eq(i) => m.eq[i] = *v,
            Col::Ineq(i) => m.ineq[i] = v.max(0.0),
            Col::Lower(j) => m.lower[j] = v.max(0.0),
            Col::Upper(j) => m.upper[j] = v.max(0.0),
        }
    }
    m
}
