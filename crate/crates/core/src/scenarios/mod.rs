//! Demand and renewable profiles: synthetic Gaussian peaks, CSV ingestion and
//! a bundled realistic day.
//!
//! Times are hours on a profile-local clock, 0.0 being midnight of the first
//! day. Slot `k` of a profile starts at `start_hour + k·slot_hours`.

pub mod bundled;
mod csv_profile;

use log::warn;
use thiserror::Error;

pub use csv_profile::{load_csv_profile, load_csv_profile_from_reader, CsvOptions, Interpolation};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("timestamps are not increasing at line {line}")]
    NonMonotoneTimestamps { line: usize },
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Uniformly sampled power series in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub start_hour: f64,
    pub slot_hours: f64,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(start_hour: f64, slot_hours: f64, values: Vec<f64>) -> Result<Self, ScenarioError> {
        let p = Profile {
            start_hour,
            slot_hours,
            values,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(
        value: f64,
        start_hour: f64,
        slot_hours: f64,
        n_slots: usize,
    ) -> Result<Self, ScenarioError> {
        Profile::new(start_hour, slot_hours, vec![value; n_slots])
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.slot_hours.is_finite() || self.slot_hours <= 0.0 {
            return Err(ScenarioError::InvalidProfile(format!(
                "slot length {} h",
                self.slot_hours
            )));
        }
        if !self.start_hour.is_finite() {
            return Err(ScenarioError::InvalidProfile(
                "non-finite start time".into(),
            ));
        }
        if self.values.is_empty() {
            return Err(ScenarioError::InvalidProfile("profile is empty".into()));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(ScenarioError::InvalidProfile(format!(
                "non-finite value at slot {k}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_of(&self, slot: usize) -> f64 {
        self.start_hour + slot as f64 * self.slot_hours
    }

    /// Index of the slot starting closest to `hour`, if inside the profile.
    pub fn slot_at(&self, hour: f64) -> Option<usize> {
        let k = ((hour - self.start_hour) / self.slot_hours).round();
        (k >= 0.0 && (k as usize) < self.len()).then_some(k as usize)
    }

    /// Slots whose start time lies in `[from_hour, to_hour]`.
    pub fn slots_between(&self, from_hour: f64, to_hour: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.slot_hours;
        let lo = ((from_hour - self.start_hour - eps) / self.slot_hours)
            .ceil()
            .max(0.0) as usize;
        let hi =
            (((to_hour - self.start_hour + eps) / self.slot_hours).floor() + 1.0).max(0.0) as usize;
        lo.min(self.len())..hi.min(self.len())
    }
}

/// Demand and renewable profiles on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub load: Profile,
    pub res: Profile,
}

impl Scenario {
    pub fn new(load: Profile, res: Profile) -> Result<Self, ScenarioError> {
        load.validate()?;
        res.validate()?;
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
        if load.len() != res.len()
            || !same(load.slot_hours, res.slot_hours)
            || !same(load.start_hour, res.start_hour)
        {
            return Err(ScenarioError::InvalidProfile(format!(
                "load ({} slots of {} h from {}) and renewable ({} slots of {} h from {}) grids differ",
                load.len(),
                load.slot_hours,
                load.start_hour,
                res.len(),
                res.slot_hours,
                res.start_hour
            )));
        }
        if res.values.iter().any(|v| *v < 0.0) {
            return Err(ScenarioError::InvalidProfile(
                "negative renewable output".into(),
            ));
        }
        Ok(Scenario { load, res })
    }

    /// Demand only, no renewables.
    pub fn demand_only(load: Profile) -> Result<Self, ScenarioError> {
        let res = Profile {
            values: vec![0.0; load.len()],
            ..load.clone()
        };
        Scenario::new(load, res)
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn slot_hours(&self) -> f64 {
        self.load.slot_hours
    }

    pub fn start_hour(&self) -> f64 {
        self.load.start_hour
    }

    pub fn net_demand(&self) -> Vec<f64> {
        self.load
            .values
            .iter()
            .zip(&self.res.values)
            .map(|(l, r)| l - r)
            .collect()
    }
}

/// Base level plus a Gaussian bump.
///
/// `sigma_slots` is measured in sampling periods, not hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPeakSpec {
    pub base: f64,
    /// Height of the bump as a fraction of `base`.
    pub amplitude_fraction: f64,
    pub center_hour: f64,
    pub sigma_slots: f64,
}

impl GaussianPeakSpec {
    fn validate(&self) -> Result<(), ScenarioError> {
        if !self.base.is_finite() || self.base < 0.0 {
            return Err(ScenarioError::InvalidProfile(format!(
                "base {} must be >= 0",
                self.base
            )));
        }
        if !self.amplitude_fraction.is_finite() || self.amplitude_fraction < 0.0 {
            return Err(ScenarioError::InvalidProfile(format!(
                "amplitude fraction {} must be >= 0",
                self.amplitude_fraction
            )));
        }
        if !self.sigma_slots.is_finite() || self.sigma_slots <= 0.0 {
            return Err(ScenarioError::InvalidProfile(format!(
                "sigma {} must be > 0",
                self.sigma_slots
            )));
        }
        if !self.center_hour.is_finite() {
            return Err(ScenarioError::InvalidProfile(
                "non-finite peak center".into(),
            ));
        }
        Ok(())
    }
}

/// `base·(1 + a·exp(−(k − k_c)²/(2σ²)))` with `k` and `σ` in slots.
pub fn gaussian_peak_profile(
    spec: &GaussianPeakSpec,
    start_hour: f64,
    n_slots: usize,
    slot_hours: f64,
) -> Result<Profile, ScenarioError> {
    spec.validate()?;
    if slot_hours.is_nan() || slot_hours <= 0.0 {
        return Err(ScenarioError::InvalidProfile(format!(
            "slot length {slot_hours} h"
        )));
    }
    let center = (spec.center_hour - start_hour) / slot_hours;
    if center < 0.0 || center > n_slots.saturating_sub(1) as f64 {
        warn!(
            "peak center {} h lies outside the profile ({} slots from {} h)",
            spec.center_hour, n_slots, start_hour
        );
    }
    let two_var = 2.0 * spec.sigma_slots * spec.sigma_slots;
    let values = (0..n_slots)
        .map(|k| {
            let d = k as f64 - center;
            spec.base * (1.0 + spec.amplitude_fraction * (-d * d / two_var).exp())
        })
        .collect();
    Profile::new(start_hour, slot_hours, values)
}

/// Renewable output with a Gaussian bump; same shape as the demand peak.
pub fn res_peak_profile(
    spec: &GaussianPeakSpec,
    start_hour: f64,
    n_slots: usize,
    slot_hours: f64,
) -> Result<Profile, ScenarioError> {
    gaussian_peak_profile(spec, start_hour, n_slots, slot_hours)
}
