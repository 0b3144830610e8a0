//! Executes a [`RunConfig`] and writes the trace and metrics files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use log::info;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::sim::{
    compute_metrics, run_closed_loop, Metrics, PerfectForesight, SimError, SimulationResult,
};

pub const TRACE_HEADER: &str = "slot,time_h,p_load_mw,p_res_mw,p_gen_mw,p_sto_mw,soc_mwh,solve_ms";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("baseline run failed: {0}")]
    Baseline(SimError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: SimulationResult,
    /// The same scenario with storage disabled.
    pub baseline: SimulationResult,
    pub metrics: Metrics,
}

/// Validates the configuration and runs the controlled and the storage-less
/// loop. Nothing is written.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let ctrl = cfg.validate()?;
    let scenario = cfg.scenario.build(ctrl.theta)?;
    let opts = cfg.loop_options();
    let x0 = cfg.sim.x_init_mwh;
    let result = run_closed_loop(&scenario, &ctrl, x0, &PerfectForesight, &opts)?;
    let baseline = run_closed_loop(
        &scenario,
        &ctrl.without_storage(),
        x0,
        &PerfectForesight,
        &opts,
    )
    .map_err(RunError::Baseline)?;
    let metrics = compute_metrics(&result, &baseline);
    Ok(RunOutcome {
        result,
        baseline,
        metrics,
    })
}

/// [`simulate`], then writes the trace, the metrics and, when requested,
/// the baseline trace.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let out = simulate(cfg)?;
    let timing = cfg.output.timing;
    write_file(&cfg.output.trace, |w| write_trace(w, &out.result, timing))?;
    write_file(&cfg.output.metrics, |w| write_metrics(w, &out))?;
    info!(
        "wrote {} and {}",
        cfg.output.trace.display(),
        cfg.output.metrics.display()
    );
    if cfg.baseline {
        let path = cfg.baseline_trace_path();
        write_file(&path, |w| write_trace(w, &out.baseline, timing))?;
        info!("wrote {}", path.display());
    }
    Ok(out)
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), RunError> {
    let io_err = |source| RunError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err)
}

/// One row per slot. Numbers use the shortest representation that parses
/// back to the same `f64`. `solve_ms` is left empty unless `timing` is set.
pub fn write_trace(w: &mut impl Write, r: &SimulationResult, timing: bool) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for k in 0..r.len() {
        write!(
            w,
            "{},{},{},{},{},{},{},",
            r.t[k],
            r.time_of(k),
            r.p_load[k],
            r.p_res[k],
            r.p_gen[k],
            r.p_sto[k],
            r.x[k]
        )?;
        if timing {
            write!(w, "{}", r.solve_times[k] * 1e3)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `key=value` lines: the [`Metrics`] fields followed by run totals.
pub fn write_metrics(w: &mut impl Write, out: &RunOutcome) -> io::Result<()> {
    let r = &out.result;
    write!(w, "{}", out.metrics)?;
    writeln!(w, "slots={}", r.len())?;
    writeln!(w, "soc_end_mwh={}", r.x.last().copied().unwrap_or(r.x_init))?;
    writeln!(
        w,
        "kkt_residual_max={:e}",
        r.kkt_residuals.iter().copied().fold(0.0, f64::max)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn short_run() -> RunOutcome {
        let cfg = preset("testcase1", &[("duration".into(), "6".into())]).unwrap();
        simulate(&cfg).unwrap()
    }

    #[test]
    fn trace_layout() {
        let out = short_run();
        let mut buf = Vec::new();
        write_trace(&mut buf, &out.result, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[1].ends_with(','));
        assert!(lines.iter().all(|l| l.split(',').count() == 8));

        let mut buf = Vec::new();
        write_trace(&mut buf, &out.result, true).unwrap();
        assert!(!String::from_utf8(buf)
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(','));
    }

    #[test]
    fn metrics_are_key_value_lines() {
        let out = short_run();
        let mut buf = Vec::new();
        write_metrics(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l
            .split_once('=')
            .is_some_and(|(k, v)| !k.is_empty() && !v.is_empty())));
        assert!(text.contains("slots=6\n"));
    }

    #[test]
    fn baseline_run_has_no_storage() {
        let out = short_run();
        assert!(out.baseline.p_sto.iter().all(|p| *p == 0.0));
        assert!(out.baseline.x.iter().all(|x| *x == 0.0));
    }
}
