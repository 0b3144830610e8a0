use std::fmt;

use super::SimulationResult;

/// Summary of a controlled run against a run without storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub peak_gen_mw: f64,
    pub peak_gen_baseline_mw: f64,
    pub peak_reduction_pct: f64,
    pub max_ramp_mw: f64,
    pub max_ramp_baseline_mw: f64,
    pub soc_dev_rms_mwh: f64,
    pub soc_dev_max_mwh: f64,
    pub solve_ms_mean: f64,
    pub solve_ms_max: f64,
}

/// Largest `|v[k+1] − v[k]|` with both slots inside `range`.
pub fn max_abs_ramp(values: &[f64], range: std::ops::Range<usize>) -> f64 {
    let end = range.end.min(values.len());
    if range.start >= end {
        return 0.0;
    }
    values[range.start..end]
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max)
}

fn peak(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn compute_metrics(r: &SimulationResult, baseline: &SimulationResult) -> Metrics {
    assert_eq!(r.len(), baseline.len(), "runs must cover the same slots");
    let peak_gen = peak(&r.p_gen);
    let peak_base = peak(&baseline.p_gen);
    let peak_reduction_pct = if peak_base.abs() > 0.0 {
        100.0 * (peak_base - peak_gen) / peak_base
    } else {
        0.0
    };
    let dev: Vec<f64> = r.x.iter().map(|x| (x - r.x_ref).abs()).collect();
    let n = dev.len().max(1) as f64;
    let ms: Vec<f64> = r.solve_times.iter().map(|s| s * 1e3).collect();
    Metrics {
        peak_gen_mw: peak_gen,
        peak_gen_baseline_mw: peak_base,
        peak_reduction_pct,
        max_ramp_mw: max_abs_ramp(&r.p_gen, 0..r.len()),
        max_ramp_baseline_mw: max_abs_ramp(&baseline.p_gen, 0..baseline.len()),
        soc_dev_rms_mwh: (dev.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
        soc_dev_max_mwh: dev.iter().copied().fold(0.0, f64::max),
        solve_ms_mean: ms.iter().sum::<f64>() / ms.len().max(1) as f64,
        solve_ms_max: ms.iter().copied().fold(0.0, f64::max),
    }
}

impl fmt::Display for Metrics {
    /// `key=value` lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "peak_gen_mw={}", self.peak_gen_mw)?;
        writeln!(f, "peak_gen_baseline_mw={}", self.peak_gen_baseline_mw)?;
        writeln!(f, "peak_reduction_pct={}", self.peak_reduction_pct)?;
        writeln!(f, "max_ramp_mw={}", self.max_ramp_mw)?;
        writeln!(f, "max_ramp_baseline_mw={}", self.max_ramp_baseline_mw)?;
        writeln!(f, "soc_dev_rms_mwh={}", self.soc_dev_rms_mwh)?;
        writeln!(f, "soc_dev_max_mwh={}", self.soc_dev_max_mwh)?;
        writeln!(f, "solve_ms_mean={}", self.solve_ms_mean)?;
        writeln!(f, "solve_ms_max={}", self.solve_ms_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::horizon::ControllerConfig;
    use crate::scenarios::{gaussian_peak_profile, GaussianPeakSpec, Scenario};
    use crate::sim::{run_closed_loop, LoopOptions, PerfectForesight};

    #[test]
    fn ramps() {
        assert_eq!(max_abs_ramp(&[1.0, 4.0, 2.0, 2.5], 0..4), 3.0);
        assert_eq!(max_abs_ramp(&[1.0, 4.0, 2.0, 2.5], 2..4), 0.5);
        assert_eq!(max_abs_ramp(&[1.0], 0..1), 0.0);
    }

    #[test]
    fn identical_runs_have_no_reduction() {
        let cfg = ControllerConfig::default().without_storage();
        let spec = GaussianPeakSpec {
            base: 50.0,
            amplitude_fraction: 0.2,
            center_hour: 2.0,
            sigma_slots: 4.0,
        };
        let load = gaussian_peak_profile(&spec, 0.0, 48, cfg.theta).unwrap();
        let scen = Scenario::demand_only(load).unwrap();
        let r =
            run_closed_loop(&scen, &cfg, 0.0, &PerfectForesight, &LoopOptions::default()).unwrap();
        let m = compute_metrics(&r, &r);
        assert_eq!(m.peak_reduction_pct, 0.0);
        assert_eq!(m.max_ramp_mw, m.max_ramp_baseline_mw);
        assert!(m.to_string().lines().all(|l| l.contains('=')));
    }
}
