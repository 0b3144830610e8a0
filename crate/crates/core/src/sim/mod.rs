//! Closed-loop receding-horizon simulation.
//!
//! Each slot the controller measures the state of charge, solves the horizon
//! QP over the forecast window, applies the first storage setpoint to the
//! plant and moves on. Near the end of the data the window is either padded
//! with the last known values or shortened, see [`EndOfData`].

mod metrics;

use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::horizon::{
    build_qp, extract_schedule, ControlSchedule, ControllerConfig, HorizonError, HorizonForecast,
    HorizonQp,
};
use crate::qp::{solve_qp, ConstraintRef, QpStatus, SolverOptions};
use crate::scenarios::Scenario;

pub use metrics::{compute_metrics, max_abs_ramp, Metrics};

pub use crate::horizon::SOC_BOUND_SLACK;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step {step}: horizon problem is infeasible ({constraint})")]
    Infeasible { step: usize, constraint: String },
    #[error(
        "step {step}: solver could not certify optimality ({status:?}, KKT residual {residual:e})"
    )]
    NotCertified {
        step: usize,
        status: QpStatus,
        residual: f64,
    },
    #[error("step {step}: {source}")]
    Horizon { step: usize, source: HorizonError },
    #[error("state of charge {x} MWh left [{min}, {max}]")]
    SocBoundViolation { x: f64, min: f64, max: f64 },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

impl SimError {
    fn at_step(self, k: usize) -> Self {
        match self {
            SimError::Infeasible { constraint, .. } => SimError::Infeasible {
                step: k,
                constraint,
            },
            SimError::NotCertified {
                status, residual, ..
            } => SimError::NotCertified {
                step: k,
                status,
                residual,
            },
            SimError::Horizon { source, .. } => SimError::Horizon { step: k, source },
            other => other,
        }
    }
}

/// Supplies the forecast window the controller sees at each slot.
///
/// `window` must return exactly `len` slots starting at `start`; slots past
/// the end of the scenario are the policy's to fill.
pub trait ForecastPolicy: Sync {
    fn window(&self, scenario: &Scenario, start: usize, len: usize) -> HorizonForecast;
}

/// The forecast equals the realized profile, held at its last value past
/// the end of the data.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectForesight;

impl ForecastPolicy for PerfectForesight {
    fn window(&self, scenario: &Scenario, start: usize, len: usize) -> HorizonForecast {
        let take = |v: &[f64]| -> Vec<f64> {
            let last = v.len() - 1;
            (start..start + len).map(|k| v[k.min(last)]).collect()
        };
        HorizonForecast::new(take(&scenario.load.values), take(&scenario.res.values))
    }
}

/// What the controller does when its window reaches past the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndOfData {
    /// Keep the full horizon; the policy extends the data.
    #[default]
    HoldLast,
    /// Truncate the horizon to the remaining slots.
    Shrink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoopOptions {
    /// Number of slots to simulate; the whole scenario when `None`.
    pub duration: Option<usize>,
    pub end_of_data: EndOfData,
}

/// Outcome of one controller invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    pub p_gen: f64,
    pub p_sto: f64,
    pub schedule: ControlSchedule,
    /// Objective `F` of the optimal schedule, constant term included.
    pub objective: f64,
    pub kkt_residual: f64,
}

fn describe(c: ConstraintRef, qp: &HorizonQp, cfg: &ControllerConfig) -> String {
    let n = qp.n_slots;
    let upper_rows = if cfg.x_max.is_finite() { n } else { 0 };
    match c {
        ConstraintRef::Equality(t) => format!("power balance at horizon slot {t}"),
        ConstraintRef::Lower(j) if j < n => format!("plant lower bound at horizon slot {j}"),
        ConstraintRef::Upper(j) if j < n => format!("plant upper bound at horizon slot {j}"),
        ConstraintRef::Lower(j) => format!("storage charging limit at horizon slot {}", j - n),
        ConstraintRef::Upper(j) => format!("storage discharging limit at horizon slot {}", j - n),
        ConstraintRef::Inequality(i) if i < upper_rows => {
            format!("state-of-charge upper bound at horizon slot {i}")
        }
        ConstraintRef::Inequality(i) => format!(
            "state-of-charge lower bound at horizon slot {}",
            i - upper_rows
        ),
    }
}

/// Solves one horizon problem and returns its first-slot controls.
pub fn mpc_step(
    x0: f64,
    window: &HorizonForecast,
    cfg: &ControllerConfig,
) -> Result<MpcStep, SimError> {
    let horizon = |source| SimError::Horizon { step: 0, source };
    let qp = build_qp(x0, window, cfg).map_err(horizon)?;
    let sol = solve_qp(&qp.problem, SolverOptions::default()).map_err(|e| horizon(e.into()))?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            let constraint = sol
                .blocking
                .map_or_else(|| "unknown constraint".into(), |c| describe(c, &qp, cfg));
            return Err(SimError::Infeasible {
                step: 0,
                constraint,
            });
        }
        status => {
            return Err(SimError::NotCertified {
                step: 0,
                status,
                residual: sol.kkt_residual,
            })
        }
    }
    let schedule = extract_schedule(&sol, x0, window, cfg).map_err(horizon)?;
    Ok(MpcStep {
        p_gen: schedule.p_gen[0],
        p_sto: schedule.p_sto[0],
        objective: sol.objective + qp.constant,
        kkt_residual: sol.kkt_residual,
        schedule,
    })
}

/// Plant update `x' = x − Θ·p_sto`; leaving the SoC bounds is an error.
pub fn apply_to_plant(x: f64, p_sto: f64, cfg: &ControllerConfig) -> Result<f64, SimError> {
    let next = x - cfg.theta * p_sto;
    if next < cfg.x_min - SOC_BOUND_SLACK || next > cfg.x_max + SOC_BOUND_SLACK || !next.is_finite()
    {
        return Err(SimError::SocBoundViolation {
            x: next,
            min: cfg.x_min,
            max: cfg.x_max,
        });
    }
    Ok(next)
}

/// Per-slot trajectories of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub theta: f64,
    pub start_hour: f64,
    pub x_init: f64,
    pub x_ref: f64,
    pub t: Vec<usize>,
    pub p_load: Vec<f64>,
    pub p_res: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub p_sto: Vec<f64>,
    /// State of charge at the end of each slot.
    pub x: Vec<f64>,
    /// Wall time of build + solve + extract, seconds.
    pub solve_times: Vec<f64>,
    pub objective_per_step: Vec<f64>,
    pub kkt_residuals: Vec<f64>,
}

impl SimulationResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn time_of(&self, slot: usize) -> f64 {
        self.start_hour + slot as f64 * self.theta
    }

    /// State of charge at the start of slot `k` (`x_init` for `k = 0`).
    pub fn soc_before(&self, k: usize) -> f64 {
        if k == 0 {
            self.x_init
        } else {
            self.x[k - 1]
        }
    }
}

pub fn run_closed_loop(
    scenario: &Scenario,
    cfg: &ControllerConfig,
    x_init: f64,
    policy: &dyn ForecastPolicy,
    opts: &LoopOptions,
) -> Result<SimulationResult, SimError> {
    cfg.validate()
        .map_err(|source| SimError::Horizon { step: 0, source })?;
    if (scenario.slot_hours() - cfg.theta).abs() > 1e-9 * cfg.theta {
        return Err(SimError::Scenario(format!(
            "scenario slot is {} h but the controller uses {} h",
            scenario.slot_hours(),
            cfg.theta
        )));
    }
    let total = scenario.len();
    let steps = opts.duration.unwrap_or(total);
    if steps > total {
        return Err(SimError::Scenario(format!(
            "{steps} slots requested, scenario has {total}"
        )));
    }
    if !(x_init >= cfg.x_min && x_init <= cfg.x_max) {
        return Err(SimError::SocBoundViolation {
            x: x_init,
            min: cfg.x_min,
            max: cfg.x_max,
        });
    }

    let mut r = SimulationResult {
        theta: cfg.theta,
        start_hour: scenario.start_hour(),
        x_init,
        x_ref: cfg.x_ref,
        t: Vec::with_capacity(steps),
        p_load: Vec::with_capacity(steps),
        p_res: Vec::with_capacity(steps),
        p_gen: Vec::with_capacity(steps),
        p_sto: Vec::with_capacity(steps),
        x: Vec::with_capacity(steps),
        solve_times: Vec::with_capacity(steps),
        objective_per_step: Vec::with_capacity(steps),
        kkt_residuals: Vec::with_capacity(steps),
    };

    let mut x = x_init;
    let mut shortened = cfg.clone();
    for k in 0..steps {
        let len = match opts.end_of_data {
            EndOfData::HoldLast => cfg.n_slots,
            EndOfData::Shrink => cfg.n_slots.min(total - k),
        };
        let step_cfg = if len == cfg.n_slots {
            cfg
        } else {
            if shortened.n_slots != len {
                shortened = cfg.truncated(len);
            }
            &shortened
        };
        let clock = Instant::now();
        let window = policy.window(scenario, k, len);
        let step = mpc_step(x, &window, step_cfg).map_err(|e| e.at_step(k))?;
        let elapsed = clock.elapsed().as_secs_f64();

        x = apply_to_plant(x, step.p_sto, cfg)?;
        debug!(
            "slot {k}: p_gen {:.4} p_sto {:.4} x {:.4}",
            step.p_gen, step.p_sto, x
        );

        r.t.push(k);
        r.p_load.push(scenario.load.values[k]);
        r.p_res.push(scenario.res.values[k]);
        r.p_gen
            .push(scenario.load.values[k] - scenario.res.values[k] - step.p_sto);
        r.p_sto.push(step.p_sto);
        r.x.push(x);
        r.solve_times.push(elapsed);
        r.objective_per_step.push(step.objective);
        r.kkt_residuals.push(step.kkt_residual);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::Profile;

    fn cfg(n: usize) -> ControllerConfig {
        ControllerConfig::default().with_horizon(n)
    }

    #[test]
    fn single_slot_hits_discharge_limit() {
        let s = mpc_step(6.0, &HorizonForecast::new(vec![50.0], vec![0.0]), &cfg(1)).unwrap();
        assert!((s.p_sto - 6.0).abs() < 1e-9);
        assert!((s.p_gen - 44.0).abs() < 1e-9);
        assert!((s.objective - 1937.25).abs() < 1e-6);
        // unconstrained stationary point is far outside the limit
        let theta: f64 = 1.0 / 12.0;
        let free = 50.0 / (1.0 + 5.0 * theta * theta);
        assert!((free - 7200.0 / 149.0).abs() < 1e-12 && free > 6.0);
    }

    #[test]
    fn zero_demand_at_reference_does_nothing() {
        let s = mpc_step(6.0, &HorizonForecast::new(vec![0.0], vec![0.0]), &cfg(1)).unwrap();
        assert_eq!((s.p_gen, s.p_sto), (0.0, 0.0));
    }

    #[test]
    fn below_reference_charges() {
        let s = mpc_step(
            5.5,
            &HorizonForecast::new(vec![0.0; 2], vec![0.0; 2]),
            &cfg(2),
        )
        .unwrap();
        assert!(s.p_sto < 0.0);
    }

    #[test]
    fn plant_update() {
        let c = cfg(1);
        assert_eq!(apply_to_plant(6.0, 6.0, &c).unwrap(), 5.5);
        assert_eq!(apply_to_plant(6.0, -6.0, &c).unwrap(), 6.5);
        assert!(matches!(
            apply_to_plant(0.0, 6.0, &c),
            Err(SimError::SocBoundViolation { .. })
        ));
    }

    #[test]
    fn infeasible_step_names_constraint() {
        let mut c = cfg(2);
        c.pg_max = 10.0;
        let err =
            mpc_step(6.0, &HorizonForecast::new(vec![50.0; 2], vec![0.0; 2]), &c).unwrap_err();
        assert!(matches!(err, SimError::Infeasible { .. }), "{err}");
    }

    #[test]
    fn infeasibility_reports_step_index() {
        let mut c = cfg(4);
        c.pg_max = 30.0;
        let mut load = vec![20.0; 12];
        load[8] = 40.0;
        let scen = Scenario::demand_only(Profile::new(0.0, c.theta, load).unwrap()).unwrap();
        // 10 MW gap is beyond the 6 MW storage limit once slot 8 enters the window
        let err = run_closed_loop(&scen, &c, 6.0, &PerfectForesight, &LoopOptions::default())
            .unwrap_err();
        assert!(matches!(err, SimError::Infeasible { step: 5, .. }), "{err}");
    }

    #[test]
    fn both_end_of_data_modes_run_to_the_end() {
        let c = cfg(24);
        let scen =
            Scenario::demand_only(Profile::constant(30.0, 0.0, c.theta, 30).unwrap()).unwrap();
        let hold =
            run_closed_loop(&scen, &c, 6.0, &PerfectForesight, &LoopOptions::default()).unwrap();
        let shrink_opts = LoopOptions {
            end_of_data: EndOfData::Shrink,
            ..Default::default()
        };
        let shrink = run_closed_loop(&scen, &c, 6.0, &PerfectForesight, &shrink_opts).unwrap();
        assert_eq!(hold.len(), 30);
        assert_eq!(shrink.len(), 30);
        // identical until the window first reaches past the data
        assert_eq!(hold.p_sto[..7], shrink.p_sto[..7]);
        // a one-slot horizon weighs the SoC term once and drains further
        assert!(shrink.x[29] < hold.x[29]);
    }

    #[test]
    fn padded_window_repeats_last_value() {
        let scen =
            Scenario::demand_only(Profile::new(0.0, 1.0, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let w = PerfectForesight.window(&scen, 1, 4);
        assert_eq!(w.p_load, vec![2.0, 3.0, 3.0, 3.0]);
        assert_eq!(w.p_res, vec![0.0; 4]);
    }

    #[test]
    fn mismatched_slot_length_is_rejected() {
        let c = cfg(2);
        let scen = Scenario::demand_only(Profile::constant(1.0, 0.0, 0.25, 4).unwrap()).unwrap();
        let opts = LoopOptions::default();
        assert!(matches!(
            run_closed_loop(&scen, &c, 6.0, &PerfectForesight, &opts),
            Err(SimError::Scenario(_))
        ));
        let scen = Scenario::demand_only(Profile::constant(1.0, 0.0, c.theta, 4).unwrap()).unwrap();
        let too_long = LoopOptions {
            duration: Some(5),
            ..opts
        };
        assert!(run_closed_loop(&scen, &c, 6.0, &PerfectForesight, &too_long).is_err());
        assert!(run_closed_loop(&scen, &c, 13.0, &PerfectForesight, &opts).is_err());
    }
}
