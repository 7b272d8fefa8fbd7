//! Monte-Carlo trials, scenario runs and parameter sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::airframe::{
    calibrate_noise, generate_pilots, hap_observations, pilot_phase_duration, HapNoise, PilotBook,
    ReceivedFrame,
};
use crate::channel::{
    assemble_access_channels, draw_activity, AccessChannelSet, ActivityPattern, LargeScaleGains, MultipathSet,
};
use crate::config::{Precision, ProcessingMode, ScenarioConfig};
use crate::detector::{aggregate_network_verdict, DetectionResult, Detector};
use crate::error::{config_err, Error, Result};
use crate::metrics::{
    activity_error_rate, channel_nmse, monte_carlo_aggregate, region_breakdown, AggregateMetrics,
    TrialMetrics,
};
use crate::rng::{stage_rng, trial_seed, Stage};
use crate::scalar::{Cx, Real};
use crate::topology::{
    build_cooperation_sets, build_hex_deployment, CooperationSet, NetworkTopology, Region,
};

use ndarray::Array2;

/// Share of failed trials above which a run is abandoned.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// Everything drawn for one trial before detection.
#[derive(Debug, Clone)]
pub struct TrialWorld<T: Real> {
    pub seed: u64,
    pub topology: NetworkTopology,
    pub activity: ActivityPattern,
    pub regions: Vec<Region>,
    pub gains: LargeScaleGains,
    pub channels: AccessChannelSet<T>,
    pub pilots: PilotBook<T>,
    /// Noisy observations `y[p][b]` (T_p x N_r) at every HAP.
    pub per_hap: Vec<Vec<Array2<Cx<T>>>>,
    pub noise_var: f64,
}

/// HAP constellation of the scenario with no devices placed.
pub fn base_topology(cfg: &ScenarioConfig) -> Result<NetworkTopology> {
    let haps = build_hex_deployment(cfg.num_haps, cfg.hap_spacing_m, cfg.altitude_m, cfg.num_antennas)?;
    let mut topo = NetworkTopology::new(haps, cfg.footprint_radius_m)?;
    topo.set_edge_anchors(&cfg.edge_anchors)?;
    Ok(topo)
}

/// Cooperation sets the configured mode processes.
pub fn cooperation_sets(cfg: &ScenarioConfig, topology: &NetworkTopology) -> Result<Vec<CooperationSet>> {
    match cfg.mode {
        ProcessingMode::Edge => build_cooperation_sets(&topology.haps, cfg.n_co),
        ProcessingMode::Cloud => {
            let sets = build_cooperation_sets(&topology.haps, topology.n_haps())?;
            Ok(sets.into_iter().take(1).collect())
        }
        ProcessingMode::Cellular => Ok(topology
            .haps
            .iter()
            .map(|h| CooperationSet {
                anchor: h.id,
                members: vec![h.id],
            })
            .collect()),
    }
}

/// Draws the devices, activity, channels, pilots and noise of one trial.
pub fn draw_world<T: Real>(cfg: &ScenarioConfig, trial: usize) -> Result<TrialWorld<T>> {
    let seed = trial_seed(cfg.master_seed, trial as u64);
    let frame = cfg.frame();
    let mut topology = base_topology(cfg)?;
    topology.place_devices(cfg.num_devices, &mut stage_rng(seed, Stage::Devices));
    let regions = topology.device_regions(cfg.center_fraction);
    let activity = draw_activity(
        cfg.num_devices,
        cfg.num_active,
        &mut stage_rng(seed, Stage::Activity),
    )?;
    let gains = LargeScaleGains::free_space(&topology, cfg.carrier_freq_hz);
    let multipath = MultipathSet::draw(
        &topology,
        &activity,
        cfg.num_paths,
        cfg.kappa(),
        cfg.max_delay_s,
        &mut stage_rng(seed, Stage::Channel),
    );
    let channels = assemble_access_channels::<T>(
        &activity,
        &gains,
        &multipath,
        &frame.pilot_subcarrier_freqs(),
        cfg.num_antennas,
    )?;
    let pilots = generate_pilots::<T>(
        cfg.num_devices,
        cfg.t_p,
        cfg.p_pilot,
        cfg.shared_pilots,
        &mut stage_rng(seed, Stage::Pilots),
    )?;
    let noise_var = calibrate_noise(cfg.snr_db, &gains, cfg.num_antennas)?;
    let noise = HapNoise::draw(
        cfg.p_pilot,
        cfg.num_haps,
        cfg.t_p,
        cfg.num_antennas,
        noise_var,
        &mut stage_rng(seed, Stage::Noise),
    )?;
    let per_hap = hap_observations(&pilots, &channels, &noise)?;
    Ok(TrialWorld {
        seed,
        topology,
        activity,
        regions,
        gains,
        channels,
        pilots,
        per_hap,
        noise_var,
    })
}

/// Runs the configured receiver on a drawn trial.
pub fn detect<T: Real>(cfg: &ScenarioConfig, world: &TrialWorld<T>) -> Result<DetectionResult<T>> {
    let det_cfg = cfg.detector();
    let mut detector = Detector::new(&det_cfg, &world.pilots);
    if det_cfg.algorithm == crate::detector::Algorithm::OracleLs {
        detector = detector.with_genie(&world.activity.active_set);
    }
    let anchors = match cfg.mode {
        ProcessingMode::Cellular => {
            detector.run_cellular_baseline(&world.per_hap, &world.topology, world.noise_var)?
        }
        ProcessingMode::Edge | ProcessingMode::Cloud => {
            let sets = cooperation_sets(cfg, &world.topology)?;
            let frame = ReceivedFrame::gather(&world.per_hap, &sets, world.noise_var)?;
            detector.run_sic_detector(&frame)?
        }
    };
    aggregate_network_verdict(anchors, &world.topology)
}

/// SIC progress of one anchor in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub anchor: usize,
    pub round: usize,
    pub cancelled: usize,
    pub residual_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub metrics: TrialMetrics,
    pub diagnostics: Vec<DiagnosticRow>,
    pub converged: bool,
}

fn score<T: Real>(
    cfg: &ScenarioConfig,
    trial: usize,
    world: &TrialWorld<T>,
    det: &DetectionResult<T>,
) -> Result<TrialOutcome> {
    let errs = activity_error_rate(&world.activity, &det.verdict)?;
    let regions = region_breakdown(&world.activity, &det.verdict, &world.regions)?;
    let nmse = channel_nmse(&world.channels, &det.estimates, &world.activity)?;
    let mut diagnostics = Vec::new();
    for a in &det.anchors {
        diagnostics.push(DiagnosticRow {
            anchor: a.anchor,
            round: 0,
            cancelled: 0,
            residual_energy: a.initial_energy,
        });
        diagnostics.extend(a.rounds.iter().map(|r| DiagnosticRow {
            anchor: a.anchor,
            round: r.round,
            cancelled: r.cancelled,
            residual_energy: r.residual_energy,
        }));
    }
    Ok(TrialOutcome {
        trial,
        seed: world.seed,
        metrics: TrialMetrics {
            aer: errs.aer,
            aer_center: regions.aer_center,
            aer_edge: regions.aer_edge,
            nmse_linear: nmse,
            nmse_db: nmse.map(|v| 10.0 * v.log10()),
            missed: errs.missed,
            false_alarms: errs.false_alarms,
            pilot_duration_s: pilot_phase_duration(&cfg.frame()),
            detector_rounds: det.rounds_used(),
        },
        diagnostics,
        converged: det.converged(),
    })
}

fn simulate_as<T: Real>(cfg: &ScenarioConfig, trial: usize) -> Result<TrialOutcome> {
    let world = draw_world::<T>(cfg, trial)?;
    let det = detect(cfg, &world)?;
    score(cfg, trial, &world, &det)
}

/// One complete trial: draw, detect, score.
pub fn simulate_trial(cfg: &ScenarioConfig, trial: usize) -> Result<TrialOutcome> {
    match cfg.precision {
        Precision::F64 => simulate_as::<f64>(cfg, trial),
        Precision::F32 => simulate_as::<f32>(cfg, trial),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    /// Successful trials in index order.
    pub outcomes: Vec<TrialOutcome>,
    pub failures: Vec<TrialFailure>,
}

impl ScenarioRun {
    pub fn metrics(&self) -> Vec<TrialMetrics> {
        self.outcomes.iter().map(|o| o.metrics.clone()).collect()
    }

    pub fn aggregate(&self) -> Option<AggregateMetrics> {
        monte_carlo_aggregate(&self.metrics())
    }

    pub fn unconverged(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.converged).count()
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Runtime(format!("cannot start worker pool: {e}")))
}

/// Runs `cfg.trials` trials in parallel. Output order and content do not
/// depend on the worker count. Failed trials are logged and skipped unless
/// they exceed [`MAX_FAILURE_FRACTION`] of the run.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let pool = thread_pool(cfg.workers)?;
    let results: Vec<(usize, Result<TrialOutcome>)> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| (t, simulate_trial(cfg, t)))
            .collect()
    });
    let mut outcomes = Vec::with_capacity(cfg.trials);
    let mut failures = Vec::new();
    for (trial, res) in results {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                let seed = trial_seed(cfg.master_seed, trial as u64);
                log::warn!("trial {trial} (seed {seed}) failed: {e}");
                failures.push(TrialFailure {
                    trial,
                    seed,
                    message: e.to_string(),
                });
            }
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * cfg.trials as f64 {
        return Err(Error::Runtime(format!(
            "{} of {} trials failed; first: trial {} ({})",
            failures.len(),
            cfg.trials,
            failures[0].trial,
            failures[0].message
        )));
    }
    Ok(ScenarioRun {
        config: cfg.clone(),
        outcomes,
        failures,
    })
}

/// Receiver variant compared along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// The configured receiver.
    Configured,
    /// Full loop: refinement and SIC switched on.
    Sic,
    /// Single spatial-domain pass, no refinement or SIC.
    SpatialJadce,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Configured => "configured",
            Variant::Sic => "sic",
            Variant::SpatialJadce => "spatial-jadce",
        }
    }

    pub fn apply(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let mut out = cfg.clone();
        let mut det = cfg.detector();
        match self {
            Variant::Configured => return out,
            Variant::Sic => {
                det.enable_sic = true;
                det.enable_angular_refine = true;
            }
            Variant::SpatialJadce => det = det.spatial_jadce(),
        }
        out.set_detector(&det);
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "configured" => Ok(Variant::Configured),
            "sic" => Ok(Variant::Sic),
            "spatial-jadce" => Ok(Variant::SpatialJadce),
            other => Err(config_err(format!(
                "unknown variant '{other}' (expected configured, sic or spatial-jadce)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub variant: Variant,
    pub run: ScenarioRun,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: String,
    pub points: Vec<SweepPoint>,
}

/// Runs the scenario at every `value` of `axis` for each variant. Every
/// point reuses the master seed, so curves are paired trial by trial.
pub fn sweep(cfg: &ScenarioConfig, axis: &str, values: &[f64], variants: &[Variant]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(config_err(format!("sweep over {axis} needs at least one value")));
    }
    let variants = if variants.is_empty() {
        &[Variant::Configured][..]
    } else {
        variants
    };
    let mut points = Vec::with_capacity(values.len() * variants.len());
    for &value in values {
        let mut point_cfg = cfg.clone();
        point_cfg.set_axis(axis, value)?;
        point_cfg.validate()?;
        for &variant in variants {
            let run = run_scenario(&variant.apply(&point_cfg))?;
            log::info!("{axis} = {value} [{variant}]: {} trials", run.outcomes.len());
            points.push(SweepPoint { value, variant, run });
        }
    }
    Ok(SweepResult {
        axis: axis.to_string(),
        points,
    })
}
