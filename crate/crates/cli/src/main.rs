//! Command-line front end: runs a scenario or a sweep and writes result files.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use hapsim::config::{LoadedScenario, ProcessingMode, SWEEP_AXES};
use hapsim::experiment::{run_scenario, sweep, Variant};
use hapsim::output;
use hapsim::Error;

#[derive(Debug, Parser)]
#[command(
    name = "hapsim",
    version,
    about = "Grant-free access simulator for cooperative HAP networks"
)]
struct Args {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in scenario: desk or full.
    #[arg(long)]
    preset: Option<String>,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Number of Monte-Carlo trials.
    #[arg(long)]
    trials: Option<usize>,

    /// Processing mode: edge, cloud or cellular.
    #[arg(long)]
    mode: Option<ProcessingMode>,

    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Sweep one axis, e.g. `t_p=20,30,40`.
    #[arg(long, value_name = "AXIS=V1,V2,...")]
    sweep: Option<String>,

    /// Receiver variants for a sweep, e.g. `sic,spatial-jadce`.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,

    /// Also dump the true channels of this trial.
    #[arg(long, value_name = "TRIAL")]
    dump_channels: Option<usize>,

    /// Output directory.
    #[arg(long, default_value = "hapsim-out")]
    out: PathBuf,
}

fn parse_sweep(spec: &str) -> anyhow::Result<(String, Vec<f64>)> {
    let (axis, values) = spec.split_once('=').with_context(|| {
        format!(
            "sweep '{spec}' must look like AXIS=V1,V2,... (axes: {})",
            SWEEP_AXES.join(", ")
        )
    })?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad sweep value '{v}'"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((axis.trim().to_string(), values))
}

fn load(args: &Args) -> anyhow::Result<LoadedScenario> {
    let mut loaded = match (&args.config, &args.preset) {
        (Some(path), _) => LoadedScenario::load(path)?,
        (None, Some(name)) => LoadedScenario::preset(name)?,
        (None, None) => LoadedScenario::preset("desk")?,
    };
    if let Some(seed) = args.seed {
        loaded.config.master_seed = seed;
        loaded.mark_set("master_seed");
    }
    if let Some(trials) = args.trials {
        loaded.config.trials = trials;
        loaded.mark_set("trials");
    }
    if let Some(mode) = args.mode {
        loaded.config.mode = mode;
        loaded.mark_set("mode");
    }
    if let Some(workers) = args.workers {
        loaded.config.workers = workers;
        loaded.mark_set("workers");
    }
    loaded.revalidate()?;
    Ok(loaded)
}

fn run(args: &Args, loaded: &LoadedScenario) -> anyhow::Result<()> {
    if let Some(spec) = &args.sweep {
        let (axis, values) = parse_sweep(spec)?;
        let result = sweep(&loaded.config, &axis, &values, &args.variants)?;
        output::write_sweep(&args.out, loaded, &result)?;
        for p in &result.points {
            if let Some(a) = p.run.aggregate() {
                println!(
                    "{axis}={} [{}] aer={:.5} +/- {:.5}",
                    p.value, p.variant, a.aer.mean, a.aer.half_width
                );
            }
        }
    } else {
        let result = run_scenario(&loaded.config)?;
        output::write_run(&args.out, loaded, &result)?;
        print!("{}", output::summary_text(&result));
    }
    if let Some(trial) = args.dump_channels {
        output::write_channels(&args.out, &loaded.config, trial)?;
    }
    log::info!("results written to {}", args.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Runtime(_)) => 2,
        Some(Error::Io(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let loaded = match load(&args) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(&args, &loaded) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
