//! Result files: per-trial CSV, SIC diagnostics, sweep tables and summaries.
//!
//! CSV files open with a `# schema_version=N` comment line. Numbers use the
//! shortest round-trip formatting, so identical runs give identical bytes.
//! Missing values (no active device, empty region) are empty fields.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use crate::config::{LoadedScenario, ScenarioConfig, SCHEMA_VERSION};
use crate::experiment::{ScenarioRun, SweepResult, TrialOutcome};
use crate::metrics::{AggregateMetrics, Estimate, METRIC_DEFINITIONS, SMALL_SAMPLE_LIMIT};

pub const TRIALS_HEADER: &str =
    "trial,mode,n_co,t_p,snr_db,aer,aer_center,aer_edge,nmse_db,missed,false_alarms,rounds,pilot_duration_s,seed";
pub const DIAGNOSTICS_HEADER: &str = "trial,anchor,round,cancelled,residual_energy";
pub const SWEEP_HEADER: &str = "axis,value,variant,mode,trials,failed,aer_mean,aer_ci95,aer_center_mean,aer_edge_mean,nmse_db_mean,nmse_db_ci95,rounds_mean,pilot_duration_s,small_sample";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn schema_line<W: Write>(w: &mut W) -> io::Result<()> {
    writeln!(w, "# schema_version={SCHEMA_VERSION}")
}

pub fn write_trials_csv<W: Write>(
    mut w: W,
    cfg: &ScenarioConfig,
    outcomes: &[TrialOutcome],
) -> io::Result<()> {
    schema_line(&mut w)?;
    writeln!(w, "{TRIALS_HEADER}")?;
    for o in outcomes {
        let m = &o.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            o.trial,
            cfg.mode.as_str(),
            cfg.effective_n_co(),
            cfg.t_p,
            cfg.snr_db,
            m.aer,
            opt(m.aer_center),
            opt(m.aer_edge),
            opt(m.nmse_db),
            m.missed,
            m.false_alarms,
            m.detector_rounds,
            m.pilot_duration_s,
            o.seed
        )?;
    }
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(mut w: W, outcomes: &[TrialOutcome]) -> io::Result<()> {
    schema_line(&mut w)?;
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for o in outcomes {
        for d in &o.diagnostics {
            writeln!(
                w,
                "{},{},{},{},{}",
                o.trial, d.anchor, d.round, d.cancelled, d.residual_energy
            )?;
        }
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, sweep: &SweepResult) -> io::Result<()> {
    schema_line(&mut w)?;
    writeln!(w, "{SWEEP_HEADER}")?;
    for p in &sweep.points {
        let cfg = &p.run.config;
        let agg = p.run.aggregate();
        let mean = |e: Option<Estimate>| opt(e.map(|e| e.mean));
        let hw = |e: Option<Estimate>| opt(e.map(|e| e.half_width));
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            sweep.axis,
            p.value,
            p.variant,
            cfg.mode.as_str(),
            p.run.outcomes.len(),
            p.run.failures.len(),
            mean(agg.as_ref().map(|a| a.aer)),
            hw(agg.as_ref().map(|a| a.aer)),
            mean(agg.as_ref().and_then(|a| a.aer_center)),
            mean(agg.as_ref().and_then(|a| a.aer_edge)),
            mean(agg.as_ref().and_then(|a| a.nmse_db)),
            hw(agg.as_ref().and_then(|a| a.nmse_db)),
            mean(agg.as_ref().map(|a| a.rounds)),
            crate::airframe::pilot_phase_duration(&cfg.frame()),
            p.run.outcomes.len() <= SMALL_SAMPLE_LIMIT
        )?;
    }
    Ok(())
}

fn estimate_line(out: &mut String, name: &str, e: Option<Estimate>) {
    match e {
        Some(e) => {
            let _ = writeln!(
                out,
                "{name:<14} {:.6} +/- {:.6} (n = {})",
                e.mean, e.half_width, e.n
            );
        }
        None => {
            let _ = writeln!(out, "{name:<14} n/a");
        }
    }
}

/// Human-readable aggregate of one run.
pub fn summary_text(run: &ScenarioRun) -> String {
    let cfg = &run.config;
    let mut out = String::new();
    let _ = writeln!(out, "fingerprint    {}", cfg.fingerprint());
    let _ = writeln!(
        out,
        "scenario       mode={} K={} K_a={} B={} N_r={} n_co={} t_p={} snr_db={} algorithm={} sic={} refine={}",
        cfg.mode.as_str(),
        cfg.num_devices,
        cfg.num_active,
        cfg.num_haps,
        cfg.num_antennas,
        cfg.effective_n_co(),
        cfg.t_p,
        cfg.snr_db,
        cfg.algorithm,
        cfg.sic,
        cfg.angular_refine
    );
    let _ = writeln!(
        out,
        "trials         {} completed, {} failed, {} hit the iteration cap",
        run.outcomes.len(),
        run.failures.len(),
        run.unconverged()
    );
    let agg: Option<AggregateMetrics> = run.aggregate();
    match agg {
        None => {
            let _ = writeln!(out, "no completed trials");
        }
        Some(a) => {
            estimate_line(&mut out, "aer", Some(a.aer));
            estimate_line(&mut out, "aer_center", a.aer_center);
            estimate_line(&mut out, "aer_edge", a.aer_edge);
            estimate_line(&mut out, "nmse_db", a.nmse_db);
            estimate_line(&mut out, "missed", Some(a.missed));
            estimate_line(&mut out, "false_alarms", Some(a.false_alarms));
            estimate_line(&mut out, "sic_rounds", Some(a.rounds));
            let _ = writeln!(out, "{:<14} {:.6e} s", "pilot_phase", a.pilot_duration_s);
            if a.small_sample() {
                let _ = writeln!(
                    out,
                    "note: {} trials or fewer; the normal-approximation intervals are optimistic",
                    SMALL_SAMPLE_LIMIT
                );
            }
        }
    }
    for f in &run.failures {
        let _ = writeln!(out, "failed trial {} (seed {}): {}", f.trial, f.seed, f.message);
    }
    out
}

/// Run metadata. This is the only output carrying a wall-clock timestamp.
pub fn metadata_text(cfg: &ScenarioConfig) -> String {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "schema_version={SCHEMA_VERSION}");
    let _ = writeln!(out, "fingerprint={}", cfg.fingerprint());
    let _ = writeln!(out, "generator=hapsim {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "created_unix_s={stamp}");
    out.push('\n');
    out.push_str(METRIC_DEFINITIONS);
    out
}

fn create(dir: &Path, name: &str) -> io::Result<io::BufWriter<std::fs::File>> {
    Ok(io::BufWriter::new(std::fs::File::create(dir.join(name))?))
}

/// Writes every artefact of a single run into `dir`.
pub fn write_run(dir: &Path, loaded: &LoadedScenario, run: &ScenarioRun) -> crate::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trials_csv(create(dir, "trials.csv")?, &run.config, &run.outcomes)?;
    write_diagnostics_csv(create(dir, "diagnostics.csv")?, &run.outcomes)?;
    std::fs::write(dir.join("summary.txt"), summary_text(run))?;
    write_common(dir, loaded)
}

/// Writes a sweep table plus per-point trial files into `dir`.
pub fn write_sweep(dir: &Path, loaded: &LoadedScenario, sweep: &SweepResult) -> crate::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_sweep_csv(create(dir, "sweep.csv")?, sweep)?;
    let mut summary = String::new();
    for p in &sweep.points {
        let name = format!("trials_{}_{}_{}.csv", sweep.axis, p.value, p.variant);
        write_trials_csv(create(dir, &name)?, &p.run.config, &p.run.outcomes)?;
        let _ = writeln!(summary, "== {} = {} [{}]", sweep.axis, p.value, p.variant);
        summary.push_str(&summary_text(&p.run));
        summary.push('\n');
    }
    std::fs::write(dir.join("summary.txt"), summary)?;
    write_common(dir, loaded)
}

fn write_common(dir: &Path, loaded: &LoadedScenario) -> crate::Result<()> {
    std::fs::write(dir.join("effective_config.toml"), loaded.effective_toml())?;
    std::fs::write(dir.join("metadata.txt"), metadata_text(&loaded.config))?;
    let world = crate::experiment::draw_world::<f64>(&loaded.config, 0)?;
    world.topology.write_csv(create(dir, "topology.csv")?)?;
    Ok(())
}

/// Dumps trial `trial`'s true channels, `h[p][b]` rows, as CSV.
pub fn write_channels(dir: &Path, cfg: &ScenarioConfig, trial: usize) -> crate::Result<()> {
    let world = crate::experiment::draw_world::<f64>(cfg, trial)?;
    world
        .channels
        .write_csv(create(dir, &format!("channels_trial{trial}.csv"))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::DiagnosticRow;
    use crate::metrics::TrialMetrics;

    fn outcome() -> TrialOutcome {
        TrialOutcome {
            trial: 2,
            seed: 99,
            metrics: TrialMetrics {
                aer: 0.01,
                aer_center: Some(0.0),
                aer_edge: None,
                nmse_linear: Some(0.1),
                nmse_db: Some(-10.0),
                missed: 1,
                false_alarms: 1,
                pilot_duration_s: 1.024e-3,
                detector_rounds: 2,
            },
            diagnostics: vec![DiagnosticRow {
                anchor: 0,
                round: 1,
                cancelled: 3,
                residual_energy: 0.5,
            }],
            converged: true,
        }
    }

    #[test]
    fn trial_rows_match_header() {
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &ScenarioConfig::default(), &[outcome()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema_version=1");
        assert_eq!(lines[1], TRIALS_HEADER);
        assert_eq!(lines[2], "2,edge,3,40,10,0.01,0,,-10,1,1,2,0.001024,99");
        assert_eq!(lines[2].split(',').count(), TRIALS_HEADER.split(',').count());
    }

    #[test]
    fn diagnostics_rows() {
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &[outcome()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("2,0,1,3,0.5\n"));
    }
}
