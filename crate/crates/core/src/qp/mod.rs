//! Dense strictly convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ uᵀ H u + fᵀ u
//! subject to  A_eq u = b_eq
//!             A_ineq u ≤ b_ineq
//!             u_min ≤ u ≤ u_max
//! ```
//!
//! [`solve_qp`] is a dual active-set method with an explicit optimality
//! certificate. [`oracle::solve_qp_oracle`] is a brute-force grid search used
//! only to cross-check the solver on tiny instances.

mod kkt;
pub mod oracle;
mod solver;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use kkt::kkt_residual;
pub use solver::{solve_qp, solve_qp_default, SolverOptions};

/// Errors raised for malformed problems. Infeasibility and iteration limits
/// are reported through [`QpStatus`] instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("box bound {index} is inverted: u_min = {lower} > u_max = {upper}")]
    InvertedBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("problem data contains a NaN or an infinite coefficient ({0})")]
    NonFinite(&'static str),
    #[error("H is not positive definite on the equality null space")]
    NotConvex,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Standard-form convex QP. Box entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem with an infinite box.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        QpProblem {
            h,
            f,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            u_min: DVector::from_element(n, f64::NEG_INFINITY),
            u_max: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_box(mut self, u_min: DVector<f64>, u_max: DVector<f64>) -> Self {
        self.u_min = u_min;
        self.u_max = u_max;
        self
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn with_inequalities(mut self, a_ineq: DMatrix<f64>, b_ineq: DVector<f64>) -> Self {
        self.a_ineq = a_ineq;
        self.b_ineq = b_ineq;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn m_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn m_ineq(&self) -> usize {
        self.b_ineq.len()
    }

    /// ½ uᵀHu + fᵀu.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.f.dot(u)
    }

    /// Checks shapes, symmetry, finiteness and box ordering.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "H is {}x{}, expected {n}x{n}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(QpError::DimensionMismatch(format!(
                "A_eq is {}x{}, b_eq has {} rows, n = {n}",
                self.a_eq.nrows(),
                self.a_eq.ncols(),
                self.b_eq.len()
            )));
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return Err(QpError::DimensionMismatch(format!(
                "A_ineq is {}x{}, b_ineq has {} rows, n = {n}",
                self.a_ineq.nrows(),
                self.a_ineq.ncols(),
                self.b_ineq.len()
            )));
        }
        if self.u_min.len() != n || self.u_max.len() != n {
            return Err(QpError::DimensionMismatch(format!(
                "box has lengths {}/{}, expected {n}",
                self.u_min.len(),
                self.u_max.len()
            )));
        }
        fn finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
            it.all(|v| v.is_finite())
        }
        if !finite(self.h.iter()) {
            return Err(QpError::NonFinite("H"));
        }
        if !finite(self.f.iter()) {
            return Err(QpError::NonFinite("f"));
        }
        if !finite(self.a_eq.iter()) || !finite(self.b_eq.iter()) {
            return Err(QpError::NonFinite("equalities"));
        }
        if !finite(self.a_ineq.iter())
            || self
                .b_ineq
                .iter()
                .any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
        {
            return Err(QpError::NonFinite("inequalities"));
        }
        for i in 0..n {
            let (lo, hi) = (self.u_min[i], self.u_max[i]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(QpError::NonFinite("box"));
            }
            if lo > hi {
                return Err(QpError::InvertedBounds {
                    index: i,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        let scale = self.h.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (self.h[(i, j)] - self.h[(j, i)]).abs() > 1e-12 * scale {
                    return Err(QpError::DimensionMismatch(format!(
                        "H is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Identifies one constraint of a [`QpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintRef {
    Equality(usize),
    Inequality(usize),
    Lower(usize),
    Upper(usize),
}

impl std::fmt::Display for ConstraintRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintRef::Equality(i) => write!(f, "equality row {i}"),
            ConstraintRef::Inequality(i) => write!(f, "inequality row {i}"),
            ConstraintRef::Lower(i) => write!(f, "lower bound on u[{i}]"),
            ConstraintRef::Upper(i) => write!(f, "upper bound on u[{i}]"),
        }
    }
}

/// Lagrange multipliers, signed so that at a KKT point
/// `H u + f + A_eqᵀ eq + A_ineqᵀ ineq − lower + upper = 0`
/// with `ineq, lower, upper ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Multipliers {
    pub fn zeros(p: &QpProblem) -> Self {
        Multipliers {
            eq: DVector::zeros(p.m_eq()),
            ineq: DVector::zeros(p.m_ineq()),
            lower: DVector::zeros(p.n()),
            upper: DVector::zeros(p.n()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    pub objective: f64,
    pub multipliers: Multipliers,
    pub kkt_residual: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// For `Infeasible`, the constraint that could not be added to the working set.
    pub blocking: Option<ConstraintRef>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}
