use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use ess_mpc::config::{preset, with_suffix, ConfigError, RunConfig};
use ess_mpc::runner::{execute, RunOutcome};

/// Receding-horizon battery dispatch simulator.
#[derive(Debug, Parser)]
#[command(name = "ess-mpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Also write the trace of the run with storage disabled.
    #[arg(long, global = true)]
    baseline: bool,

    /// Run once per value, in parallel, e.g. `--sweep amplitude=0.1,0.3,0.5`.
    /// Output paths get a `.key=value` suffix.
    #[arg(long, global = true, value_name = "KEY=V1,V2,...")]
    sweep: Option<String>,

    /// Record per-slot solve times in the trace (makes it non-reproducible).
    #[arg(long, global = true)]
    timing: bool,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// `hold_last` (default) or `shrink`.
    #[arg(long, global = true, value_name = "MODE")]
    end_of_data: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a TOML configuration file.
    Run { config: PathBuf },
    /// Run a built-in scenario: testcase1, testcase2 or testcase3.
    Preset {
        name: String,
        #[command(flatten)]
        overrides: Box<PresetOverrides>,
    },
}

#[derive(Debug, Args)]
struct PresetOverrides {
    /// Peak height as a fraction of the base value.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Horizon length in slots.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Initial state of charge in MWh.
    #[arg(long)]
    x_init: Option<f64>,
    /// Number of simulated slots.
    #[arg(long)]
    duration: Option<usize>,
    #[arg(long)]
    load_csv: Option<PathBuf>,
    #[arg(long)]
    res_csv: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Any other configuration key, e.g. `--set storage_power_mw=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl PresetOverrides {
    fn pairs(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("amplitude", self.amplitude.map(|v| v.to_string()));
        push("horizon", self.horizon.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("gamma", self.gamma.map(|v| v.to_string()));
        push("x_init", self.x_init.map(|v| v.to_string()));
        push("duration", self.duration.map(|v| v.to_string()));
        push("load_csv", path(&self.load_csv));
        push("res_csv", path(&self.res_csv));
        push("trace", path(&self.trace));
        push("metrics", path(&self.metrics));
        for kv in &self.set {
            out.push(split_pair(kv)?);
        }
        Ok(out)
    }
}

fn split_pair(kv: &str) -> Result<(String, String), ConfigError> {
    kv.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| ConfigError::InvalidOverride {
            key: kv.into(),
            reason: "expected KEY=VALUE".into(),
        })
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.command {
        Command::Run { config } => RunConfig::from_file(config)?,
        Command::Preset { name, overrides } => preset(name, &overrides.pairs()?)?,
    };
    if cli.baseline {
        cfg.baseline = true;
    }
    if cli.timing {
        cfg.output.timing = true;
    }
    if let Some(mode) = &cli.end_of_data {
        cfg.set("end_of_data", mode)?;
    }
    Ok(cfg)
}

/// One configuration per sweep value, with suffixed output paths.
fn expand_sweep(base: &RunConfig, sweep: &str) -> Result<Vec<(String, RunConfig)>, ConfigError> {
    let (key, values) = split_pair(sweep)?;
    let values: Vec<&str> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(ConfigError::InvalidOverride {
            key,
            reason: "no sweep values".into(),
        });
    }
    values
        .into_iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(&key, v)?;
            let tag = format!("{key}={v}");
            cfg.output.baseline_trace = Some(with_suffix(&base.baseline_trace_path(), &tag));
            cfg.output.trace = with_suffix(&base.output.trace, &tag);
            cfg.output.metrics = with_suffix(&base.output.metrics, &tag);
            Ok((tag, cfg))
        })
        .collect()
}

fn summary(label: &str, out: &RunOutcome) -> String {
    let m = &out.metrics;
    format!(
        "{label}: peak {:.3} MW (baseline {:.3} MW, reduction {:.2}%), max ramp {:.3} MW (baseline {:.3} MW), final SoC {:.3} MWh",
        m.peak_gen_mw,
        m.peak_gen_baseline_mw,
        m.peak_reduction_pct,
        m.max_ramp_mw,
        m.max_ramp_baseline_mw,
        out.result.x.last().copied().unwrap_or(out.result.x_init),
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(1);
        }
    };
    let runs = match &cli.sweep {
        None => vec![("run".to_string(), cfg)],
        Some(s) => match expand_sweep(&cfg, s) {
            Ok(runs) => runs,
            Err(e) => {
                error!("{e}");
                return ExitCode::from(1);
            }
        },
    };

    if cli.print_config {
        for (label, cfg) in &runs {
            if runs.len() > 1 {
                println!("# {label}");
            }
            print!("{}", cfg.to_toml_string());
        }
        return ExitCode::SUCCESS;
    }

    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(_, cfg)| s.spawn(move || execute(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });

    let mut failed = false;
    for ((label, _), res) in runs.iter().zip(results) {
        match res {
            Ok(out) => println!("{}", summary(label, &out)),
            Err(e) => {
                error!("{label}: {e}");
                failed = true;
            }
        }
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
