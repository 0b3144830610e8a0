//! Condensed horizon QP for the substation dispatch problem.
//!
//! Decision vector `u = (P^g(1..N), P^s(1..N))`. The state of charge is
//! eliminated through `x(t) = x0 − Θ·Σ_{k≤t} P^s(k)`, so the objective
//!
//! ```text
//! F = Σ_t α(t)γ(t)·P^g(t)² + β(t)·(x(t) − x_ref)²
//! ```
//!
//! becomes a quadratic in `u` alone. Positive `P^s` discharges the storage
//! into the bus. Θ is in hours, powers in MW, energies in MWh.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::qp::{QpError, QpProblem, QpSolution, QpStatus};

/// Stand-in for "unlimited" plant output, in MW.
pub const UNLIMITED_MW: f64 = 1e6;

/// Round-off allowed on the state-of-charge bounds, in MWh.
pub const SOC_BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HorizonError {
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("initial state of charge {x0} MWh is outside [{min}, {max}]")]
    InitialStateOutOfBounds { x0: f64, min: f64, max: f64 },
    #[error("QP solution is not optimal ({0:?})")]
    NotOptimal(QpStatus),
    #[error("power balance violated by {residual:e} MW at slot {slot}")]
    BalanceViolation { slot: usize, residual: f64 },
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Weights, bounds and timing of the horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Slot duration Θ in hours.
    pub theta: f64,
    pub n_slots: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub x_ref: f64,
    pub pg_min: f64,
    pub pg_max: f64,
    pub ps_min: f64,
    pub ps_max: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for ControllerConfig {
    /// 12 MWh / 6 MW storage, 5 minute slots, 2 hour horizon,
    /// α = 1, β = 5, γ = 1, x_ref = 6 MWh, plant output effectively unbounded.
    fn default() -> Self {
        let n = 24;
        ControllerConfig {
            theta: 5.0 / 60.0,
            n_slots: n,
            alpha: vec![1.0; n],
            beta: vec![5.0; n],
            gamma: vec![1.0; n],
            x_ref: 6.0,
            pg_min: -UNLIMITED_MW,
            pg_max: UNLIMITED_MW,
            ps_min: -6.0,
            ps_max: 6.0,
            x_min: 0.0,
            x_max: 12.0,
        }
    }
}

impl ControllerConfig {
    /// Same configuration with constant weights over `n_slots` slots, taken
    /// from the first slot of the current weights.
    pub fn with_horizon(&self, n_slots: usize) -> Self {
        let first = |v: &[f64]| v.first().copied().unwrap_or(0.0);
        ControllerConfig {
            n_slots,
            alpha: vec![first(&self.alpha); n_slots],
            beta: vec![first(&self.beta); n_slots],
            gamma: vec![first(&self.gamma); n_slots],
            ..self.clone()
        }
    }

    /// First `len` slots of the horizon, used when the data runs out.
    pub fn truncated(&self, len: usize) -> Self {
        let len = len.min(self.n_slots);
        ControllerConfig {
            n_slots: len,
            alpha: self.alpha[..len].to_vec(),
            beta: self.beta[..len].to_vec(),
            gamma: self.gamma[..len].to_vec(),
            ..self.clone()
        }
    }

    /// Storage disabled: both power bounds pinned to zero.
    pub fn without_storage(&self) -> Self {
        ControllerConfig {
            ps_min: 0.0,
            ps_max: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), HorizonError> {
        let bad = |msg: String| Err(HorizonError::InvalidConfig(msg));
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if self.n_slots == 0 {
            return bad("horizon needs at least one slot".into());
        }
        for (name, v) in [
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
        ] {
            if v.len() != self.n_slots {
                return bad(format!(
                    "{name} has {} entries, horizon has {}",
                    v.len(),
                    self.n_slots
                ));
            }
            if v.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if self.gamma.iter().any(|g| *g <= 0.0) {
            return bad("gamma must be strictly positive".into());
        }
        for (name, lo, hi) in [
            ("plant power", self.pg_min, self.pg_max),
            ("storage power", self.ps_min, self.ps_max),
            ("state of charge", self.x_min, self.x_max),
        ] {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return bad(format!("{name} bounds [{lo}, {hi}] are inverted"));
            }
        }
        if !self.x_ref.is_finite() || self.x_ref < self.x_min || self.x_ref > self.x_max {
            return bad(format!(
                "x_ref = {} must lie in [{}, {}]",
                self.x_ref, self.x_min, self.x_max
            ));
        }
        Ok(())
    }
}

/// Foreseen demand and renewable output over the horizon, in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonForecast {
    pub p_load: Vec<f64>,
    pub p_res: Vec<f64>,
}

impl HorizonForecast {
    pub fn new(p_load: Vec<f64>, p_res: Vec<f64>) -> Self {
        HorizonForecast { p_load, p_res }
    }

    pub fn len(&self) -> usize {
        self.p_load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_load.is_empty()
    }

    /// `P^l(t) − P^res(t)`.
    pub fn net_demand(&self) -> Vec<f64> {
        self.p_load
            .iter()
            .zip(&self.p_res)
            .map(|(l, r)| l - r)
            .collect()
    }

    fn validate(&self, n_slots: usize) -> Result<(), HorizonError> {
        if self.p_load.len() != n_slots || self.p_res.len() != n_slots {
            return Err(HorizonError::DimensionMismatch(format!(
                "forecast has {}/{} slots, horizon has {n_slots}",
                self.p_load.len(),
                self.p_res.len()
            )));
        }
        if self
            .p_load
            .iter()
            .chain(&self.p_res)
            .any(|v| !v.is_finite())
        {
            return Err(HorizonError::DimensionMismatch(
                "forecast has non-finite values".into(),
            ));
        }
        if self.p_res.iter().any(|v| *v < 0.0) {
            return Err(HorizonError::DimensionMismatch(
                "negative renewable output".into(),
            ));
        }
        Ok(())
    }
}

/// State of charge in MWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageState {
    pub x: f64,
}

/// Optimal plan over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub p_gen: Vec<f64>,
    pub p_sto: Vec<f64>,
    /// Predicted state of charge at the end of each slot.
    pub x_traj: Vec<f64>,
}

/// Affine map `p_sto ↦ x_traj = offset + matrix·p_sto`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocMap {
    pub offset: DVector<f64>,
    pub matrix: DMatrix<f64>,
    theta: f64,
}

impl SocMap {
    pub fn apply(&self, p_sto: &[f64]) -> Vec<f64> {
        // Running sum keeps x(t) identical to the slot-by-slot recursion.
        let mut x = self.offset.get(0).copied().unwrap_or_default();
        p_sto
            .iter()
            .map(|p| {
                x -= self.theta * p;
                x
            })
            .collect()
    }
}

/// State-of-charge trajectory as an affine function of the storage powers:
/// `x0·1 − Θ·L` with `L` the all-ones lower-triangular matrix.
pub fn condense_dynamics(x0: f64, cfg: &ControllerConfig) -> SocMap {
    let n = cfg.n_slots;
    SocMap {
        offset: DVector::from_element(n, x0),
        matrix: DMatrix::from_fn(n, n, |i, j| if j <= i { -cfg.theta } else { 0.0 }),
        theta: cfg.theta,
    }
}

/// QP for one horizon plus the constant the QP objective omits.
///
/// Inequality rows `0..N` are the SoC upper bounds and rows `N..2N` the SoC
/// lower bounds; rows with an infinite bound are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonQp {
    pub problem: QpProblem,
    /// `Σ β(t)·(x0 − x_ref)²`; `F = QP objective + constant`.
    pub constant: f64,
    pub n_slots: usize,
}

impl HorizonQp {
    pub fn objective_f(&self, u: &DVector<f64>) -> f64 {
        self.problem.objective(u) + self.constant
    }
}

pub fn build_qp(
    x0: f64,
    fc: &HorizonForecast,
    cfg: &ControllerConfig,
) -> Result<HorizonQp, HorizonError> {
    cfg.validate()?;
    fc.validate(cfg.n_slots)?;
    if !x0.is_finite() || x0 < cfg.x_min - SOC_BOUND_SLACK || x0 > cfg.x_max + SOC_BOUND_SLACK {
        return Err(HorizonError::InitialStateOutOfBounds {
            x0,
            min: cfg.x_min,
            max: cfg.x_max,
        });
    }
    let n = cfg.n_slots;
    let soc = condense_dynamics(x0, cfg);
    let m = &soc.matrix;

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    let mut f = DVector::zeros(2 * n);
    for t in 0..n {
        h[(t, t)] = 2.0 * cfg.alpha[t] * cfg.gamma[t];
    }
    // β-term: Σ β_t (c_t + (M p)_t)² with c = x0 − x_ref.
    let dev = x0 - cfg.x_ref;
    let beta_m = DMatrix::from_fn(n, n, |i, j| cfg.beta[i] * m[(i, j)]);
    let h_ss = m.tr_mul(&beta_m) * 2.0;
    h.view_mut((n, n), (n, n)).copy_from(&h_ss);
    for j in 0..n {
        f[n + j] = 2.0 * dev * beta_m.column(j).sum();
    }
    let constant = cfg.beta.iter().map(|b| b * dev * dev).sum();

    let mut a_eq = DMatrix::zeros(n, 2 * n);
    for t in 0..n {
        a_eq[(t, t)] = 1.0;
        a_eq[(t, n + t)] = 1.0;
    }
    let b_eq = DVector::from_vec(fc.net_demand());

    // (M p)_t ≤ x_max − x0 and −(M p)_t ≤ x0 − x_min.
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::with_capacity(2 * n);
    for (sign, rhs) in [(1.0, cfg.x_max - x0), (-1.0, x0 - cfg.x_min)] {
        if rhs.is_infinite() {
            continue;
        }
        for t in 0..n {
            let mut row = DVector::zeros(2 * n);
            for j in 0..=t {
                row[n + j] = sign * m[(t, j)];
            }
            rows.push((row, rhs));
        }
    }
    let a_ineq = DMatrix::from_fn(rows.len(), 2 * n, |i, j| rows[i].0[j]);
    let b_ineq = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));

    let mut u_min = DVector::zeros(2 * n);
    let mut u_max = DVector::zeros(2 * n);
    for t in 0..n {
        u_min[t] = cfg.pg_min;
        u_max[t] = cfg.pg_max;
        u_min[n + t] = cfg.ps_min;
        u_max[n + t] = cfg.ps_max;
    }

    Ok(HorizonQp {
        problem: QpProblem {
            h,
            f,
            a_eq,
            b_eq,
            a_ineq,
            b_ineq,
            u_min,
            u_max,
        },
        constant,
        n_slots: n,
    })
}

/// `F` evaluated directly from the schedule; the state of charge is
/// recomputed from `p_sto` rather than read from `x_traj`.
pub fn evaluate_objective(sched: &ControlSchedule, x0: f64, cfg: &ControllerConfig) -> f64 {
    let mut x = x0;
    let mut total = 0.0;
    for t in 0..sched.p_gen.len() {
        x -= cfg.theta * sched.p_sto[t];
        total += cfg.alpha[t] * cfg.gamma[t] * sched.p_gen[t].powi(2)
            + cfg.beta[t] * (x - cfg.x_ref).powi(2);
    }
    total
}

/// Balance residual tolerated in an extracted schedule, in MW.
pub const BALANCE_TOL: f64 = 1e-6;

/// Splits `u*` into plant and storage powers and rebuilds the SoC trajectory.
///
/// The plant power is re-derived from the balance so that it holds to
/// rounding; the solver's own residual must already be within [`BALANCE_TOL`].
pub fn extract_schedule(
    sol: &QpSolution,
    x0: f64,
    fc: &HorizonForecast,
    cfg: &ControllerConfig,
) -> Result<ControlSchedule, HorizonError> {
    if sol.status != QpStatus::Optimal {
        return Err(HorizonError::NotOptimal(sol.status));
    }
    let n = cfg.n_slots;
    if sol.u_star.len() != 2 * n {
        return Err(HorizonError::DimensionMismatch(format!(
            "solution has {} entries, expected {}",
            sol.u_star.len(),
            2 * n
        )));
    }
    let net = fc.net_demand();
    let p_sto: Vec<f64> = sol.u_star.rows(n, n).iter().copied().collect();
    let mut p_gen = Vec::with_capacity(n);
    for t in 0..n {
        let residual = sol.u_star[t] + p_sto[t] - net[t];
        if residual.abs() > BALANCE_TOL {
            return Err(HorizonError::BalanceViolation { slot: t, residual });
        }
        p_gen.push(net[t] - p_sto[t]);
    }
    let x_traj = condense_dynamics(x0, cfg).apply(&p_sto);
    Ok(ControlSchedule {
        p_gen,
        p_sto,
        x_traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::solve_qp_default;

    fn cfg(n: usize) -> ControllerConfig {
        ControllerConfig::default().with_horizon(n)
    }

    #[test]
    fn condensation_examples() {
        let c = cfg(2);
        assert_eq!(
            condense_dynamics(6.0, &c).apply(&[0.0, 0.0]),
            vec![6.0, 6.0]
        );
        assert_eq!(
            condense_dynamics(6.0, &c).apply(&[6.0, 6.0]),
            vec![5.5, 5.0]
        );
        let x = condense_dynamics(0.0, &cfg(3)).apply(&[-6.0, -6.0, -6.0]);
        for (a, b) in x.iter().zip([0.5, 1.0, 1.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn condensation_matrix_matches_apply() {
        let c = cfg(5);
        let map = condense_dynamics(3.0, &c);
        let p = [1.0, -2.0, 0.5, 6.0, -6.0];
        let dense = &map.offset + &map.matrix * DVector::from_column_slice(&p);
        for (a, b) in dense.iter().zip(map.apply(&p)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_slot_hessian() {
        let q = build_qp(6.0, &HorizonForecast::new(vec![50.0], vec![0.0]), &cfg(1)).unwrap();
        let p = &q.problem;
        assert!((p.h[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((p.h[(1, 1)] - 10.0 / 144.0).abs() < 1e-15);
        assert_eq!(p.h[(0, 1)], 0.0);
        assert_eq!(p.f.amax(), 0.0);
        assert_eq!(p.a_eq.nrows(), 1);
        assert_eq!(
            p.a_eq.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0]
        );
        assert_eq!(q.constant, 0.0);
    }

    #[test]
    fn full_horizon_counts() {
        let fc = HorizonForecast::new(vec![50.0; 24], vec![0.0; 24]);
        let q = build_qp(0.0, &fc, &cfg(24)).unwrap();
        assert_eq!(q.problem.n(), 48);
        assert_eq!(q.problem.m_eq(), 24);
        assert_eq!(q.problem.m_ineq(), 48);
    }

    #[test]
    fn no_soc_term_decouples() {
        let mut c = cfg(4);
        c.beta = vec![0.0; 4];
        c.x_min = f64::NEG_INFINITY;
        c.x_max = f64::INFINITY;
        let q = build_qp(6.0, &HorizonForecast::new(vec![1.0; 4], vec![0.0; 4]), &c).unwrap();
        let h = &q.problem.h;
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(h[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(q.problem.m_ineq(), 0);
    }

    #[test]
    fn objective_examples() {
        let c = cfg(1);
        let s = ControlSchedule {
            p_gen: vec![44.0],
            p_sto: vec![6.0],
            x_traj: vec![5.5],
        };
        assert!((evaluate_objective(&s, 6.0, &c) - 1937.25).abs() < 1e-9);
        let c = cfg(2);
        let s = ControlSchedule {
            p_gen: vec![50.0, 50.0],
            p_sto: vec![0.0, 0.0],
            x_traj: vec![6.0, 6.0],
        };
        assert_eq!(evaluate_objective(&s, 6.0, &c), 5000.0);
        let s = ControlSchedule {
            p_gen: vec![0.0; 2],
            p_sto: vec![0.0; 2],
            x_traj: vec![6.0; 2],
        };
        assert_eq!(evaluate_objective(&s, 6.0, &c), 0.0);
    }

    #[test]
    fn qp_objective_plus_constant_is_f() {
        let mut c = cfg(6);
        c.alpha = vec![1.0, 0.5, 2.0, 1.0, 1.0, 3.0];
        c.beta = vec![5.0, 1.0, 0.0, 2.0, 7.0, 5.0];
        c.gamma = vec![1.0, 2.0, 1.0, 0.5, 1.0, 1.0];
        let fc = HorizonForecast::new(
            vec![40.0, 42.0, 45.0, 50.0, 47.0, 41.0],
            vec![1.0, 2.0, 3.0, 0.0, 0.0, 5.0],
        );
        let x0 = 2.5;
        let q = build_qp(x0, &fc, &c).unwrap();
        let p_sto = vec![3.0, -1.0, 4.5, -6.0, 2.0, 0.25];
        let net = fc.net_demand();
        let p_gen: Vec<f64> = net.iter().zip(&p_sto).map(|(d, s)| d - s).collect();
        let mut u = p_gen.clone();
        u.extend(&p_sto);
        let lhs = q.objective_f(&DVector::from_vec(u));
        let x_traj = condense_dynamics(x0, &c).apply(&p_sto);
        let rhs = evaluate_objective(
            &ControlSchedule {
                p_gen,
                p_sto,
                x_traj,
            },
            x0,
            &c,
        );
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs(), "{lhs} vs {rhs}");
    }

    #[test]
    fn single_slot_solution_extracts() {
        let c = cfg(1);
        let fc = HorizonForecast::new(vec![50.0], vec![0.0]);
        let q = build_qp(6.0, &fc, &c).unwrap();
        let sol = solve_qp_default(&q.problem).unwrap();
        let s = extract_schedule(&sol, 6.0, &fc, &c).unwrap();
        assert!((s.p_gen[0] - 44.0).abs() < 1e-9);
        assert!((s.p_sto[0] - 6.0).abs() < 1e-9);
        assert!((s.x_traj[0] - 5.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg(2);
        let fc = HorizonForecast::new(vec![1.0; 2], vec![0.0; 2]);
        assert!(matches!(
            build_qp(13.0, &fc, &c),
            Err(HorizonError::InitialStateOutOfBounds { .. })
        ));
        assert!(matches!(
            build_qp(6.0, &HorizonForecast::new(vec![1.0; 3], vec![0.0; 3]), &c),
            Err(HorizonError::DimensionMismatch(_))
        ));
        assert!(matches!(
            build_qp(
                6.0,
                &HorizonForecast::new(vec![1.0; 2], vec![-1.0, 0.0]),
                &c
            ),
            Err(HorizonError::DimensionMismatch(_))
        ));
        let mut bad = c.clone();
        bad.x_ref = 20.0;
        assert!(matches!(
            build_qp(6.0, &fc, &bad),
            Err(HorizonError::InvalidConfig(_))
        ));
        let mut bad = c.clone();
        bad.gamma[1] = 0.0;
        assert!(matches!(
            build_qp(6.0, &fc, &bad),
            Err(HorizonError::InvalidConfig(_))
        ));
    }

    #[test]
    fn extract_requires_optimal() {
        let c = cfg(1);
        let fc = HorizonForecast::new(vec![50.0], vec![0.0]);
        let q = build_qp(6.0, &fc, &c).unwrap();
        let mut sol = solve_qp_default(&q.problem).unwrap();
        sol.status = QpStatus::Infeasible;
        assert_eq!(
            extract_schedule(&sol, 6.0, &fc, &c),
            Err(HorizonError::NotOptimal(QpStatus::Infeasible))
        );
    }
}
