//! Run configuration: a TOML file with explicitly united keys, plus the
//! three built-in presets.
//!
//! ```toml
//! baseline = false
//!
//! [controller]
//! theta_minutes = 5.0
//! horizon_slots = 24
//! alpha = 1.0            # scalar or one value per horizon slot
//! beta = 5.0
//! gamma = 1.0
//! capacity_mwh = 12.0
//! x_ref_mwh = 6.0
//! storage_power_mw = 6.0
//!
//! [scenario]
//! kind = "gaussian_demand"   # or "gaussian_res", "csv"
//! base_mw = 50.0
//! amplitude = 0.5
//! center_hour = 17.0
//! sigma_slots = 4.0
//!
//! [sim]
//! x_init_mwh = 0.0
//!
//! [output]
//! trace = "trace.csv"
//! metrics = "metrics.txt"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::horizon::{ControllerConfig, UNLIMITED_MW};
use crate::scenarios::{
    bundled, gaussian_peak_profile, load_csv_profile, res_peak_profile, CsvOptions,
    GaussianPeakSpec, Interpolation, Profile, Scenario, ScenarioError,
};
use crate::sim::{EndOfData, LoopOptions};

pub const PRESETS: [&str; 3] = ["testcase1", "testcase2", "testcase3"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}` (known: testcase1, testcase2, testcase3)")]
    UnknownPreset(String),
    #[error("invalid override `{key}`: {reason}")]
    InvalidOverride { key: String, reason: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// A weight given either once for the whole horizon or per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Constant(f64),
    PerSlot(Vec<f64>),
}

impl Weight {
    fn expand(&self, name: &str, n: usize) -> Result<Vec<f64>, ConfigError> {
        match self {
            Weight::Constant(w) => Ok(vec![*w; n]),
            Weight::PerSlot(v) if v.len() == n => Ok(v.clone()),
            Weight::PerSlot(v) => Err(ConfigError::Invalid(format!(
                "{name} has {} entries but horizon_slots is {n}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub theta_minutes: f64,
    pub horizon_slots: usize,
    pub alpha: Weight,
    pub beta: Weight,
    pub gamma: Weight,
    pub capacity_mwh: f64,
    /// Defaults to 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soc_min_mwh: Option<f64>,
    /// Defaults to `capacity_mwh`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soc_max_mwh: Option<f64>,
    /// Defaults to half the capacity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_ref_mwh: Option<f64>,
    /// Symmetric charge/discharge limit.
    pub storage_power_mw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage_charge_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage_discharge_mw: Option<f64>,
    pub plant_min_mw: f64,
    pub plant_max_mw: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            theta_minutes: 5.0,
            horizon_slots: 24,
            alpha: Weight::Constant(1.0),
            beta: Weight::Constant(5.0),
            gamma: Weight::Constant(1.0),
            capacity_mwh: 12.0,
            soc_min_mwh: None,
            soc_max_mwh: None,
            x_ref_mwh: None,
            storage_power_mw: 6.0,
            storage_charge_mw: None,
            storage_discharge_mw: None,
            plant_min_mw: -UNLIMITED_MW,
            plant_max_mw: UNLIMITED_MW,
        }
    }
}

impl ControllerSection {
    pub fn theta_hours(&self) -> f64 {
        self.theta_minutes / 60.0
    }

    pub fn to_controller(&self) -> Result<ControllerConfig, ConfigError> {
        let n = self.horizon_slots;
        let cfg = ControllerConfig {
            theta: self.theta_hours(),
            n_slots: n,
            alpha: self.alpha.expand("alpha", n)?,
            beta: self.beta.expand("beta", n)?,
            gamma: self.gamma.expand("gamma", n)?,
            x_ref: self.x_ref_mwh.unwrap_or(self.capacity_mwh / 2.0),
            pg_min: self.plant_min_mw,
            pg_max: self.plant_max_mw,
            ps_min: -self.storage_charge_mw.unwrap_or(self.storage_power_mw),
            ps_max: self.storage_discharge_mw.unwrap_or(self.storage_power_mw),
            x_min: self.soc_min_mwh.unwrap_or(0.0),
            x_max: self.soc_max_mwh.unwrap_or(self.capacity_mwh),
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianDemandSection {
    pub base_mw: f64,
    pub amplitude: f64,
    pub center_hour: f64,
    /// Standard deviation in slots.
    pub sigma_slots: f64,
    pub start_hour: f64,
    pub length_hours: f64,
}

impl Default for GaussianDemandSection {
    fn default() -> Self {
        GaussianDemandSection {
            base_mw: 50.0,
            amplitude: 0.5,
            center_hour: 17.0,
            sigma_slots: 4.0,
            start_hour: 0.0,
            length_hours: 24.0,
        }
    }
}

/// Constant demand with a Gaussian bump in renewable output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianResSection {
    pub demand_base_mw: f64,
    pub base_mw: f64,
    pub amplitude: f64,
    pub center_hour: f64,
    pub sigma_slots: f64,
    pub start_hour: f64,
    pub length_hours: f64,
}

impl Default for GaussianResSection {
    fn default() -> Self {
        GaussianResSection {
            demand_base_mw: 50.0,
            base_mw: 5.0,
            amplitude: 1.0,
            center_hour: 17.0,
            sigma_slots: 4.0,
            start_hour: 0.0,
            length_hours: 24.0,
        }
    }
}

/// Profiles read from CSV files. Without `load_csv` the bundled
/// realistic day is used for both columns; with `load_csv` but no
/// `res_csv` the renewable output is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub res_csv: Option<PathBuf>,
    pub time_column: String,
    pub load_column: String,
    pub res_column: String,
    pub interpolation: Interpolation,
    pub start_hour: f64,
    pub length_hours: f64,
}

impl Default for CsvSection {
    fn default() -> Self {
        CsvSection {
            load_csv: None,
            res_csv: None,
            time_column: "timestamp".into(),
            load_column: bundled::LOAD_COLUMN.into(),
            res_column: bundled::PV_COLUMN.into(),
            interpolation: Interpolation::Linear,
            start_hour: 0.0,
            length_hours: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSection {
    GaussianDemand(GaussianDemandSection),
    GaussianRes(GaussianResSection),
    Csv(CsvSection),
}

impl ScenarioSection {
    fn window(&self) -> (f64, f64) {
        match self {
            ScenarioSection::GaussianDemand(s) => (s.start_hour, s.length_hours),
            ScenarioSection::GaussianRes(s) => (s.start_hour, s.length_hours),
            ScenarioSection::Csv(s) => (s.start_hour, s.length_hours),
        }
    }

    /// Number of slots of length `theta` hours covering the scenario.
    pub fn n_slots(&self, theta: f64) -> Result<usize, ConfigError> {
        let (_, hours) = self.window();
        let n = (hours / theta).round();
        if hours.is_nan()
            || hours <= 0.0
            || !n.is_finite()
            || n < 1.0
            || (n * theta - hours).abs() > 1e-9 * hours
        {
            return Err(ConfigError::Invalid(format!(
                "length_hours {hours} is not a positive multiple of the {} minute slot",
                theta * 60.0
            )));
        }
        Ok(n as usize)
    }

    pub fn build(&self, theta: f64) -> Result<Scenario, ConfigError> {
        let n = self.n_slots(theta)?;
        let scenario = match self {
            ScenarioSection::GaussianDemand(s) => {
                let spec = GaussianPeakSpec {
                    base: s.base_mw,
                    amplitude_fraction: s.amplitude,
                    center_hour: s.center_hour,
                    sigma_slots: s.sigma_slots,
                };
                Scenario::demand_only(gaussian_peak_profile(&spec, s.start_hour, n, theta)?)?
            }
            ScenarioSection::GaussianRes(s) => {
                let spec = GaussianPeakSpec {
                    base: s.base_mw,
                    amplitude_fraction: s.amplitude,
                    center_hour: s.center_hour,
                    sigma_slots: s.sigma_slots,
                };
                let load = Profile::constant(s.demand_base_mw, s.start_hour, theta, n)?;
                Scenario::new(load, res_peak_profile(&spec, s.start_hour, n, theta)?)?
            }
            ScenarioSection::Csv(s) => {
                let window = Some((s.start_hour, n));
                let opts = |column: &str, clamp: bool| CsvOptions {
                    time_column: s.time_column.clone(),
                    interpolation: s.interpolation,
                    window,
                    clamp_non_negative: clamp,
                    ..CsvOptions::new(column, theta)
                };
                match (&s.load_csv, &s.res_csv) {
                    (None, None) if s.start_hour == 0.0 && n == (24.0 / theta).round() as usize => {
                        bundled::realistic_day(theta)?
                    }
                    (None, None) => {
                        return Err(ConfigError::Invalid(
                            "the bundled realistic day covers exactly 0 h to 24 h".into(),
                        ))
                    }
                    (None, Some(_)) => {
                        return Err(ConfigError::Invalid(
                            "res_csv given without load_csv".into(),
                        ))
                    }
                    (Some(load), res) => {
                        let load = load_csv_profile(load, &opts(&s.load_column, false))?;
                        match res {
                            Some(res) => Scenario::new(
                                load,
                                load_csv_profile(res, &opts(&s.res_column, true))?,
                            )?,
                            None => Scenario::demand_only(load)?,
                        }
                    }
                }
            }
        };
        Ok(scenario)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let ScenarioSection::Csv(s) = self {
            for p in [&mut s.load_csv, &mut s.res_csv].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Simulated slots; the whole scenario when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_slots: Option<usize>,
    pub x_init_mwh: f64,
    pub end_of_data: EndOfData,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            duration_slots: None,
            x_init_mwh: 0.0,
            end_of_data: EndOfData::HoldLast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub trace: PathBuf,
    pub metrics: PathBuf,
    /// Fill the `solve_ms` trace column. Off by default so repeated runs
    /// produce identical files.
    pub timing: bool,
    /// Where the storage-less run goes when `baseline` is set; defaults to
    /// the trace path with a `.baseline` suffix before the extension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_trace: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            trace: "trace.csv".into(),
            metrics: "metrics.txt".into(),
            timing: false,
            baseline_trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Also write the trace of the same run with storage disabled.
    #[serde(default)]
    pub baseline: bool,
    #[serde(default)]
    pub controller: ControllerSection,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses a TOML file; relative CSV paths are taken relative to it.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        cfg.scenario
            .resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable as TOML")
    }

    pub fn baseline_trace_path(&self) -> PathBuf {
        self.output
            .baseline_trace
            .clone()
            .unwrap_or_else(|| with_suffix(&self.output.trace, "baseline"))
    }

    pub fn loop_options(&self) -> LoopOptions {
        LoopOptions {
            duration: self.sim.duration_slots,
            end_of_data: self.sim.end_of_data,
        }
    }

    /// Checks everything that can be checked without reading input data.
    pub fn validate(&self) -> Result<ControllerConfig, ConfigError> {
        let ctrl = self.controller.to_controller()?;
        let x0 = self.sim.x_init_mwh;
        if !(x0 >= ctrl.x_min && x0 <= ctrl.x_max) {
            return Err(ConfigError::Invalid(format!(
                "x_init_mwh = {x0} is outside the state-of-charge range [{}, {}]",
                ctrl.x_min, ctrl.x_max
            )));
        }
        if !(ctrl.x_ref >= ctrl.x_min && ctrl.x_ref <= ctrl.x_max) {
            return Err(ConfigError::Invalid(format!(
                "x_ref_mwh = {} is outside the state-of-charge range",
                ctrl.x_ref
            )));
        }
        let n = self.scenario.n_slots(ctrl.theta)?;
        if let Some(d) = self.sim.duration_slots {
            if d == 0 || d > n {
                return Err(ConfigError::Invalid(format!(
                    "duration_slots = {d} but the scenario has {n} slots"
                )));
            }
        }
        if let ScenarioSection::Csv(s) = &self.scenario {
            for p in [&s.load_csv, &s.res_csv].into_iter().flatten() {
                if !p.is_file() {
                    return Err(ConfigError::Invalid(format!(
                        "input file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        let mut outputs = vec![self.output.trace.clone(), self.output.metrics.clone()];
        if self.baseline {
            outputs.push(self.baseline_trace_path());
        }
        for p in &outputs {
            let dir = p
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(ConfigError::Invalid(format!(
                    "output directory {} does not exist",
                    dir.display()
                )));
            }
        }
        if outputs
            .iter()
            .enumerate()
            .any(|(i, p)| outputs[..i].contains(p))
        {
            return Err(ConfigError::Invalid("output paths must be distinct".into()));
        }
        Ok(ctrl)
    }

    /// Sets one value by key. The keys are the TOML key names (without the
    /// section) plus the short forms `horizon`, `x_init` and `duration`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::InvalidOverride {
            key: key.into(),
            reason,
        };
        let num = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("`{value}` is not a number")))
        };
        let count = || {
            value
                .trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("`{value}` is not a slot count")))
        };
        let flag = || {
            value
                .trim()
                .parse::<bool>()
                .map_err(|_| bad(format!("`{value}` is not true/false")))
        };
        let c = &mut self.controller;
        match key {
            "theta_minutes" => c.theta_minutes = num()?,
            "horizon" | "horizon_slots" => c.horizon_slots = count()?,
            "alpha" => c.alpha = Weight::Constant(num()?),
            "beta" => c.beta = Weight::Constant(num()?),
            "gamma" => c.gamma = Weight::Constant(num()?),
            "capacity_mwh" => c.capacity_mwh = num()?,
            "soc_min_mwh" => c.soc_min_mwh = Some(num()?),
            "soc_max_mwh" => c.soc_max_mwh = Some(num()?),
            "x_ref_mwh" => c.x_ref_mwh = Some(num()?),
            "storage_power_mw" => c.storage_power_mw = num()?,
            "storage_charge_mw" => c.storage_charge_mw = Some(num()?),
            "storage_discharge_mw" => c.storage_discharge_mw = Some(num()?),
            "plant_min_mw" => c.plant_min_mw = num()?,
            "plant_max_mw" => c.plant_max_mw = num()?,
            "x_init" | "x_init_mwh" => self.sim.x_init_mwh = num()?,
            "duration" | "duration_slots" => self.sim.duration_slots = Some(count()?),
            "end_of_data" => {
                self.sim.end_of_data = match value.trim() {
                    "hold_last" => EndOfData::HoldLast,
                    "shrink" => EndOfData::Shrink,
                    other => return Err(bad(format!("`{other}` is not hold_last or shrink"))),
                }
            }
            "trace" => self.output.trace = value.into(),
            "metrics" => self.output.metrics = value.into(),
            "baseline_trace" => self.output.baseline_trace = Some(value.into()),
            "timing" => self.output.timing = flag()?,
            "baseline" => self.baseline = flag()?,
            _ => return self.set_scenario(key, value),
        }
        Ok(())
    }

    fn set_scenario(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::InvalidOverride {
            key: key.into(),
            reason,
        };
        let num = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("`{value}` is not a number")))
        };
        let field: Option<&mut f64> = match (&mut self.scenario, key) {
            (ScenarioSection::GaussianDemand(s), _) => match key {
                "base_mw" => Some(&mut s.base_mw),
                "amplitude" => Some(&mut s.amplitude),
                "center_hour" => Some(&mut s.center_hour),
                "sigma_slots" => Some(&mut s.sigma_slots),
                "start_hour" => Some(&mut s.start_hour),
                "length_hours" => Some(&mut s.length_hours),
                _ => None,
            },
            (ScenarioSection::GaussianRes(s), _) => match key {
                "demand_base_mw" => Some(&mut s.demand_base_mw),
                "base_mw" => Some(&mut s.base_mw),
                "amplitude" => Some(&mut s.amplitude),
                "center_hour" => Some(&mut s.center_hour),
                "sigma_slots" => Some(&mut s.sigma_slots),
                "start_hour" => Some(&mut s.start_hour),
                "length_hours" => Some(&mut s.length_hours),
                _ => None,
            },
            (ScenarioSection::Csv(s), "load_csv") => {
                s.load_csv = Some(value.into());
                return Ok(());
            }
            (ScenarioSection::Csv(s), "res_csv") => {
                s.res_csv = Some(value.into());
                return Ok(());
            }
            (ScenarioSection::Csv(s), _) => match key {
                "start_hour" => Some(&mut s.start_hour),
                "length_hours" => Some(&mut s.length_hours),
                _ => None,
            },
        };
        match field {
            Some(f) => {
                *f = num()?;
                Ok(())
            }
            None => Err(bad("unknown key for this scenario kind".into())),
        }
    }
}

/// `dir/trace.csv` with suffix `s` becomes `dir/trace.s.csv`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    path.with_file_name(name)
}

/// Built-in scenarios with the default controller and `x_init = 0`:
///
/// * `testcase1`: 50 MW demand with a 50 % Gaussian peak at 17:00.
/// * `testcase2`: constant 50 MW demand, 5 MW renewable output with a 100 % peak at 17:00.
/// * `testcase3`: the bundled realistic day.
///
/// `overrides` are applied with [`RunConfig::set`].
pub fn preset(name: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let scenario = match name {
        "testcase1" => ScenarioSection::GaussianDemand(GaussianDemandSection::default()),
        "testcase2" => ScenarioSection::GaussianRes(GaussianResSection::default()),
        "testcase3" => ScenarioSection::Csv(CsvSection::default()),
        other => return Err(ConfigError::UnknownPreset(other.into())),
    };
    let mut cfg = RunConfig {
        baseline: false,
        controller: ControllerSection::default(),
        scenario,
        sim: SimSection::default(),
        output: OutputSection {
            trace: format!("{name}_trace.csv").into(),
            metrics: format!("{name}_metrics.txt").into(),
            ..OutputSection::default()
        },
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}
