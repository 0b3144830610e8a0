use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, NaiveTime, Timelike};
use log::warn;
use serde::{Deserialize, Serialize};

use super::{Profile, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    /// Hold the last sample at or before each grid point.
    Previous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    /// Column holding ISO-8601 timestamps or fractional hours.
    pub time_column: String,
    /// Column holding the power values in MW.
    pub value_column: String,
    /// Target slot length in hours.
    pub slot_hours: f64,
    pub interpolation: Interpolation,
    /// Requested grid `(start_hour, n_slots)`; defaults to the span of the data.
    pub window: Option<(f64, usize)>,
    /// Replace negative resampled values by zero (PV output).
    pub clamp_non_negative: bool,
}

impl CsvOptions {
    pub fn new(value_column: impl Into<String>, slot_hours: f64) -> Self {
        CsvOptions {
            time_column: "timestamp".into(),
            value_column: value_column.into(),
            slot_hours,
            interpolation: Interpolation::Linear,
            window: None,
            clamp_non_negative: false,
        }
    }
}

pub fn load_csv_profile(
    path: impl AsRef<Path>,
    opts: &CsvOptions,
) -> Result<Profile, ScenarioError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_csv_profile_from_reader(file, opts)
}

pub fn load_csv_profile_from_reader(
    reader: impl Read,
    opts: &CsvOptions,
) -> Result<Profile, ScenarioError> {
    if !opts.slot_hours.is_finite() || opts.slot_hours <= 0.0 {
        return Err(ScenarioError::InvalidProfile(format!(
            "target slot length {} h",
            opts.slot_hours
        )));
    }
    let (times, values) = read_samples(reader, opts)?;
    resample(&times, &values, opts)
}

enum TimeFormat {
    Hours,
    Iso { midnight: NaiveDateTime },
}

fn read_samples(
    reader: impl Read,
    opts: &CsvOptions,
) -> Result<(Vec<f64>, Vec<f64>), ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ScenarioError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ScenarioError::Parse {
                line: 1,
                message: format!(
                    "missing column `{name}` (header: {})",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            })
    };
    let t_col = column(&opts.time_column)?;
    let v_col = column(&opts.value_column)?;

    let mut format: Option<TimeFormat> = None;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ScenarioError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| ScenarioError::Parse { line, message };
        let raw_t = rec
            .get(t_col)
            .ok_or_else(|| bad("missing time field".into()))?;
        let raw_v = rec
            .get(v_col)
            .ok_or_else(|| bad("missing value field".into()))?;

        if format.is_none() {
            format = Some(match raw_t.parse::<f64>() {
                Ok(_) => TimeFormat::Hours,
                Err(_) => {
                    let dt = parse_iso(raw_t)
                        .ok_or_else(|| bad(format!("`{raw_t}` is neither hours nor ISO-8601")))?;
                    TimeFormat::Iso {
                        midnight: dt.date().and_time(NaiveTime::MIN),
                    }
                }
            });
        }
        let fmt = format.as_ref().expect("set above");
        let t = match fmt {
            TimeFormat::Hours => raw_t
                .parse::<f64>()
                .map_err(|_| bad(format!("`{raw_t}` is not fractional hours")))?,
            TimeFormat::Iso { midnight } => {
                let dt = parse_iso(raw_t)
                    .ok_or_else(|| bad(format!("`{raw_t}` is not an ISO-8601 timestamp")))?;
                let secs =
                    (dt - *midnight).num_seconds() as f64 + f64::from(dt.nanosecond()) * 1e-9;
                secs / 3600.0
            }
        };
        let v = raw_v
            .parse::<f64>()
            .map_err(|_| bad(format!("`{raw_v}` is not a number")))?;
        if !t.is_finite() || !v.is_finite() {
            return Err(bad("non-finite time or value".into()));
        }
        if let Some(prev) = times.last() {
            if t <= *prev {
                return Err(ScenarioError::NonMonotoneTimestamps { line });
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.is_empty() {
        return Err(ScenarioError::InsufficientCoverage("no data rows".into()));
    }
    Ok((times, values))
}

fn parse_iso(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn resample(times: &[f64], values: &[f64], opts: &CsvOptions) -> Result<Profile, ScenarioError> {
    let dt = opts.slot_hours;
    let first = times[0];
    let last = *times.last().expect("non-empty");
    let eps = 1e-9;

    let (start, n) = match opts.window {
        Some((start, n)) => {
            let end = start + n.saturating_sub(1) as f64 * dt;
            if n == 0 || start < first - eps || end > last + eps {
                return Err(ScenarioError::InsufficientCoverage(format!(
                    "requested {start} h .. {end} h but data covers {first} h .. {last} h"
                )));
            }
            (start, n)
        }
        None => (first, ((last - first) / dt + eps).floor() as usize + 1),
    };

    if times.len() > 2 {
        let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let median = gaps[gaps.len() / 2];
        let big = times
            .windows(2)
            .filter(|w| w[1] - w[0] > 2.0 * median + eps)
            .count();
        if big > 0 {
            warn!("{big} interior gap(s) longer than twice the median spacing ({median} h) are interpolated");
        }
    }

    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let t = start + k as f64 * dt;
        while seg + 1 < times.len() && times[seg + 1] <= t + eps {
            seg += 1;
        }
        let v = if (t - times[seg]).abs() <= eps || seg + 1 == times.len() {
            values[seg]
        } else {
            match opts.interpolation {
                Interpolation::Previous => values[seg],
                Interpolation::Linear => {
                    let w = (t - times[seg]) / (times[seg + 1] - times[seg]);
                    values[seg] + w * (values[seg + 1] - values[seg])
                }
            }
        };
        out.push(v);
    }

    if opts.clamp_non_negative {
        let negative = out.iter().filter(|v| **v < 0.0).count();
        if negative > 0 {
            warn!(
                "clamped {negative} negative value(s) of `{}` to zero",
                opts.value_column
            );
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
    }
    Profile::new(start, dt, out)
}
