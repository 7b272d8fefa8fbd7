//! Scenario configuration: a flat TOML file of typed keys.
//!
//! Every key is optional; absent keys take the desk-scale defaults and are
//! marked as such in the effective-config echo. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::airframe::FrameConfig;
use crate::detector::{Algorithm, DetectorConfig};
use crate::error::{Error, Result};
use crate::topology::{build_hex_deployment, DEFAULT_ALTITUDE_M, DEFAULT_FOOTPRINT_RADIUS_M};

pub const SCHEMA_VERSION: u32 = 1;

pub const DESK_PRESET: &str = include_str!("../presets/desk.toml");
pub const FULL_SCALE_PRESET: &str = include_str!("../presets/full.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessingMode {
    /// Each edge anchor processes its cooperation set.
    Edge,
    /// One central processor sees every HAP.
    Cloud,
    /// Each HAP serves its own cell alone.
    Cellular,
}

impl ProcessingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessingMode::Edge => "edge",
            ProcessingMode::Cloud => "cloud",
            ProcessingMode::Cellular => "cellular",
        }
    }
}

impl std::str::FromStr for ProcessingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge" => Ok(Self::Edge),
            "cloud" => Ok(Self::Cloud),
            "cellular" => Ok(Self::Cellular),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected edge, cloud or cellular)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,

    pub num_haps: usize,
    pub hap_spacing_m: f64,
    pub altitude_m: f64,
    pub footprint_radius_m: f64,
    /// HAP ids carrying edge servers; empty means every HAP.
    pub edge_anchors: Vec<usize>,
    pub n_co: usize,
    pub center_fraction: f64,

    pub num_devices: usize,
    pub num_active: usize,

    pub num_antennas: usize,
    pub num_paths: usize,
    pub rician_k_db: f64,
    pub max_delay_s: f64,

    pub n_cp: usize,
    pub p_dft: usize,
    pub n_dft: usize,
    pub bandwidth_hz: f64,
    pub carrier_freq_hz: f64,
    pub t_p: usize,
    pub p_pilot: usize,
    pub shared_pilots: bool,
    /// Median per-link received SNR, dB.
    pub snr_db: f64,

    pub algorithm: Algorithm,
    pub activity_threshold: f64,
    pub reliability_threshold: f64,
    pub max_sic_rounds: usize,
    pub inner_iterations: usize,
    pub damping: f64,
    pub angular_keep_ratio: f64,
    pub angular_refine: bool,
    pub sic: bool,

    pub mode: ProcessingMode,
    pub precision: Precision,
    pub trials: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let frame = FrameConfig::default();
        let det = DetectorConfig::default();
        Self {
            schema_version: SCHEMA_VERSION,
            num_haps: 7,
            hap_spacing_m: 3f64.sqrt() * DEFAULT_FOOTPRINT_RADIUS_M,
            altitude_m: DEFAULT_ALTITUDE_M,
            footprint_radius_m: DEFAULT_FOOTPRINT_RADIUS_M,
            edge_anchors: Vec::new(),
            n_co: 3,
            center_fraction: 0.5,
            num_devices: 200,
            num_active: 10,
            num_antennas: 8,
            num_paths: 3,
            rician_k_db: 10.0,
            max_delay_s: frame.cp_duration_s(),
            n_cp: frame.n_cp,
            p_dft: frame.p_dft,
            n_dft: frame.n_dft,
            bandwidth_hz: frame.bandwidth_hz,
            carrier_freq_hz: frame.carrier_freq_hz,
            t_p: frame.t_p,
            p_pilot: frame.p_pilot,
            shared_pilots: false,
            snr_db: 10.0,
            algorithm: det.algorithm,
            activity_threshold: det.activity_threshold,
            reliability_threshold: det.reliability_threshold,
            max_sic_rounds: det.max_sic_rounds,
            inner_iterations: det.inner_iterations,
            damping: det.damping,
            angular_keep_ratio: det.angular_keep_ratio,
            angular_refine: det.enable_angular_refine,
            sic: det.enable_sic,
            mode: ProcessingMode::Edge,
            precision: Precision::F64,
            trials: 200,
            master_seed: 20_240_601,
            workers: 0,
        }
    }
}

/// A parsed configuration plus the keys that took their default.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub defaulted: Vec<String>,
    source: String,
}

/// Keys that may be swept.
pub const SWEEP_AXES: [&str; 4] = ["t_p", "n_co", "snr_db", "k_a"];

struct Violation {
    key: &'static str,
    message: String,
}

fn violation(key: &'static str, message: impl Into<String>) -> Violation {
    Violation {
        key,
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn frame(&self) -> FrameConfig {
        FrameConfig {
            n_cp: self.n_cp,
            p_dft: self.p_dft,
            n_dft: self.n_dft,
            bandwidth_hz: self.bandwidth_hz,
            t_p: self.t_p,
            p_pilot: self.p_pilot,
            carrier_freq_hz: self.carrier_freq_hz,
        }
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            algorithm: self.algorithm,
            activity_threshold: self.activity_threshold,
            reliability_threshold: self.reliability_threshold,
            max_sic_rounds: self.max_sic_rounds,
            inner_iterations: self.inner_iterations,
            damping: self.damping,
            angular_keep_ratio: self.angular_keep_ratio,
            enable_angular_refine: self.angular_refine,
            enable_sic: self.sic,
        }
    }

    /// Switches the detector settings to match `det`.
    pub fn set_detector(&mut self, det: &DetectorConfig) {
        self.algorithm = det.algorithm;
        self.activity_threshold = det.activity_threshold;
        self.reliability_threshold = det.reliability_threshold;
        self.max_sic_rounds = det.max_sic_rounds;
        self.inner_iterations = det.inner_iterations;
        self.damping = det.damping;
        self.angular_keep_ratio = det.angular_keep_ratio;
        self.angular_refine = det.enable_angular_refine;
        self.sic = det.enable_sic;
    }

    /// Rician factor, linear.
    pub fn kappa(&self) -> f64 {
        10f64.powf(self.rician_k_db / 10.0)
    }

    /// Cooperation size actually used by the configured mode.
    pub fn effective_n_co(&self) -> usize {
        match self.mode {
            ProcessingMode::Edge => self.n_co,
            ProcessingMode::Cloud => self.num_haps,
            ProcessingMode::Cellular => 1,
        }
    }

    /// Sets a sweep axis to `value`.
    pub fn set_axis(&mut self, axis: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "axis {axis} needs a non-negative integer, got {v}"
                )))
            }
        };
        match axis {
            "t_p" => self.t_p = as_count(value)?,
            "n_co" => self.n_co = as_count(value)?,
            "snr_db" => self.snr_db = value,
            "k_a" => self.num_active = as_count(value)?,
            other => {
                return Err(Error::Config(format!(
                    "'{other}' is not a sweepable axis; valid axes: {}",
                    SWEEP_AXES.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|v| Error::Constraint {
            key: v.key.to_string(),
            line: None,
            message: v.message,
        })
    }

    fn check(&self) -> std::result::Result<(), Violation> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(violation(
                "schema_version",
                format!(
                    "unsupported schema version {} (this build reads {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        build_hex_deployment(
            self.num_haps,
            self.hap_spacing_m.max(1.0),
            self.altitude_m.max(1.0),
            1,
        )
        .map_err(|e| violation("num_haps", e.to_string()))?;
        if !(self.hap_spacing_m > 0.0) {
            return Err(violation("hap_spacing_m", "must be positive"));
        }
        if !(self.altitude_m > 0.0) {
            return Err(violation("altitude_m", "must be positive"));
        }
        if !(self.footprint_radius_m > 0.0) {
            return Err(violation("footprint_radius_m", "must be positive"));
        }
        if let Some(bad) = self.edge_anchors.iter().find(|&&a| a >= self.num_haps) {
            return Err(violation(
                "edge_anchors",
                format!("HAP id {bad} out of range for {} HAPs", self.num_haps),
            ));
        }
        if self.n_co == 0 || self.n_co > self.num_haps {
            return Err(violation(
                "n_co",
                format!("n_co = {} must lie in 1..={}", self.n_co, self.num_haps),
            ));
        }
        if !(self.center_fraction > 0.0 && self.center_fraction < 1.0) {
            return Err(violation("center_fraction", "must lie strictly between 0 and 1"));
        }
        if self.num_active > self.num_devices {
            return Err(violation(
                "num_active",
                format!(
                    "num_active = {} exceeds num_devices = {}",
                    self.num_active, self.num_devices
                ),
            ));
        }
        if self.num_antennas == 0 {
            return Err(violation("num_antennas", "must be at least 1"));
        }
        if self.num_paths == 0 {
            return Err(violation("num_paths", "must be at least 1"));
        }
        if !(self.max_delay_s >= 0.0) {
            return Err(violation("max_delay_s", "must be non-negative"));
        }
        if self.t_p == 0 {
            return Err(violation("t_p", "must be at least 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(violation("snr_db", "must be finite"));
        }
        if let Err(e) = self.frame().validate() {
            let msg = e.to_string();
            let key = if msg.contains("p_dft =") && msg.contains("n_cp") {
                "p_dft"
            } else if msg.contains("n_dft") {
                "n_dft"
            } else if msg.contains("p_pilot") {
                "p_pilot"
            } else if msg.contains("bandwidth") {
                "bandwidth_hz"
            } else {
                "carrier_freq_hz"
            };
            return Err(violation(key, msg));
        }
        if let Err(e) = self.detector().validate() {
            let msg = e.to_string();
            let key = [
                "reliability_threshold",
                "activity_threshold",
                "angular_keep_ratio",
                "max_sic_rounds",
                "inner_iterations",
                "damping",
            ]
            .into_iter()
            .find(|k| msg.contains(k))
            .unwrap_or("algorithm");
            return Err(violation(key, msg));
        }
        if self.trials == 0 {
            return Err(violation("trials", "must be at least 1"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(violation("master_seed", format!("must not exceed {}", i64::MAX)));
        }
        Ok(())
    }

    /// Short digest of the full effective configuration.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// `digest:seed`, identifying every output byte of a run.
    pub fn fingerprint(&self) -> String {
        format!("{}:{}", self.digest(), self.master_seed)
    }
}

impl LoadedScenario {
    /// Parses and validates configuration text. `origin` names the source in
    /// diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let mut config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        if !table.contains_key("hap_spacing_m") {
            config.hap_spacing_m = 3f64.sqrt() * config.footprint_radius_m;
        }
        if !table.contains_key("max_delay_s") {
            config.max_delay_s = config.frame().cp_duration_s();
        }
        let all_keys = toml::Table::try_from(&config).expect("config serializes");
        let defaulted = all_keys
            .keys()
            .filter(|k| !table.contains_key(*k))
            .cloned()
            .collect();
        let loaded = Self {
            config,
            defaulted,
            source: text.to_string(),
        };
        loaded.revalidate()?;
        Ok(loaded)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Self::parse(DESK_PRESET, "preset desk"),
            "full" => Self::parse(FULL_SCALE_PRESET, "preset full"),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected desk or full)"
            ))),
        }
    }

    /// Validates again after command-line overrides, pointing at the line
    /// that set the offending key when the file set it.
    pub fn revalidate(&self) -> Result<()> {
        self.config.check().map_err(|v| Error::Constraint {
            key: v.key.to_string(),
            line: self.line_of(v.key),
            message: v.message,
        })
    }

    /// Marks a key as explicitly set (command-line override).
    pub fn mark_set(&mut self, key: &str) {
        self.defaulted.retain(|k| k != key);
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.source
            .lines()
            .position(|l| {
                let l = l.trim_start();
                l.strip_prefix(key)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            })
            .map(|i| i + 1)
    }

    /// Effective configuration with defaulted keys annotated.
    pub fn effective_toml(&self) -> String {
        let body = toml::to_string(&self.config).expect("config serializes");
        let mut out = format!(
            "# effective scenario configuration (schema_version {SCHEMA_VERSION})\n# fingerprint {}\n",
            self.config.fingerprint()
        );
        for line in body.lines() {
            let key = line.split('=').next().unwrap_or("").trim();
            if self.defaulted.iter().any(|d| d == key) {
                let _ = writeln!(out, "{line}  # default");
            } else {
                let _ = writeln!(out, "{line}");
            }
        }
        out
    }
}
