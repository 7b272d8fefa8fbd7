//! Joint activity detection and channel estimation.
//!
//! The receiver at every edge anchor alternates three steps until no new
//! device can be trusted:
//!
//! 1. spatial-domain joint recovery over the devices still in the
//!    dictionary ([`module_a_spatial`]),
//! 2. angular-domain thresholding of the estimates of reliably detected
//!    devices ([`angular::angular_refine`]),
//! 3. cancellation of those devices from the residual ([`sic::module_c_sic`]).
//!
//! Switching off the loop and the refinement leaves plain spatial-domain
//! joint detection, the reference scheme. Cellular processing runs the same
//! receiver per HAP over its own cell's devices only.

pub mod amp;
pub mod angular;
pub mod ls;
pub mod sic;
pub mod somp;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::airframe::{PilotBook, ReceivedFrame};
use crate::error::{config_err, ensure_dim, Error, Result};
use crate::linalg::{adjoint, orthonormal_complement};
use crate::scalar::{Cx, Real};
use crate::topology::{CooperationSet, NetworkTopology};

pub use amp::{amp_em, AmpOutcome, AmpParams};
pub use angular::angular_refine;
pub use ls::{ls_expected_error, oracle_ls, LsEstimate};
pub use sic::{module_c_sic, DetectionState, RoundLog};
pub use somp::{somp, SompOutcome};

/// Relative iterate change at which message passing stops early.
pub const AMP_TOLERANCE: f64 = 1e-6;

/// Residual power, relative to the anchor's initial per-entry power, that
/// counts as numerically empty.
pub const RESIDUAL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    AmpEm,
    Somp,
    OracleLs,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::AmpEm => "amp-em",
            Algorithm::Somp => "somp",
            Algorithm::OracleLs => "oracle-ls",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amp-em" => Ok(Algorithm::AmpEm),
            "somp" => Ok(Algorithm::Somp),
            "oracle-ls" => Ok(Algorithm::OracleLs),
            other => Err(config_err(format!(
                "unknown algorithm '{other}' (expected amp-em, somp or oracle-ls)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub algorithm: Algorithm,
    /// Final activity decision threshold.
    pub activity_threshold: f64,
    /// Activity probability above which a device is cancelled.
    pub reliability_threshold: f64,
    pub max_sic_rounds: usize,
    pub inner_iterations: usize,
    pub damping: f64,
    pub angular_keep_ratio: f64,
    pub enable_angular_refine: bool,
    pub enable_sic: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::AmpEm,
            activity_threshold: 0.5,
            reliability_threshold: 0.9,
            max_sic_rounds: 5,
            inner_iterations: 50,
            damping: 0.7,
            angular_keep_ratio: 0.15,
            enable_angular_refine: true,
            enable_sic: true,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(config_err(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        prob("activity_threshold", self.activity_threshold)?;
        prob("reliability_threshold", self.reliability_threshold)?;
        prob("angular_keep_ratio", self.angular_keep_ratio)?;
        if self.reliability_threshold < self.activity_threshold {
            return Err(config_err(format!(
                "reliability_threshold = {} must be at least activity_threshold = {}",
                self.reliability_threshold, self.activity_threshold
            )));
        }
        if self.max_sic_rounds == 0 {
            return Err(config_err("max_sic_rounds must be at least 1"));
        }
        if self.inner_iterations == 0 {
            return Err(config_err("inner_iterations must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(config_err(format!(
                "damping = {} must lie in (0, 1]",
                self.damping
            )));
        }
        Ok(())
    }

    /// The reference scheme: one spatial-domain pass, no refinement, no SIC.
    pub fn spatial_jadce(&self) -> Self {
        Self {
            enable_sic: false,
            enable_angular_refine: false,
            ..self.clone()
        }
    }

    fn amp_params(&self, noise_floor: f64) -> AmpParams {
        AmpParams {
            max_iterations: self.inner_iterations,
            damping: self.damping,
            tolerance: AMP_TOLERANCE,
            noise_floor,
        }
    }
}

/// Output of one spatial-domain recovery pass.
#[derive(Debug, Clone)]
pub struct ModuleAOutput<T: Real> {
    /// Activity metric per device in `[0, 1]`; zero outside the dictionary.
    pub lambda: Vec<T>,
    /// `K x M` per subcarrier; zero rows outside the dictionary.
    pub estimates: Vec<Array2<Cx<T>>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Spatial-domain joint activity detection and channel estimation over the
/// `dictionary` devices. `noise_floor` bounds the per-entry noise level the
/// recovery may assume from below. `genie` supplies the true support for
/// `oracle-ls`.
pub fn module_a_spatial<T: Real>(
    observations: &[Array2<Cx<T>>],
    pilots: &PilotBook<T>,
    dictionary: &[usize],
    n_r: usize,
    config: &DetectorConfig,
    noise_floor: f64,
    genie: Option<&[usize]>,
) -> Result<ModuleAOutput<T>> {
    ensure_dim(
        "observation subcarriers",
        pilots.n_subcarriers(),
        observations.len(),
    )?;
    let k = pilots.n_devices();
    let m = observations.first().map_or(0, |y| y.ncols());
    for y in observations {
        ensure_dim("observation rows vs pilot length", pilots.t_p(), y.nrows())?;
    }
    if n_r == 0 || !m.is_multiple_of(n_r) {
        return Err(config_err(format!(
            "observation width {m} is not a multiple of the array size {n_r}"
        )));
    }
    let mut out = ModuleAOutput {
        lambda: vec![T::zero(); k],
        estimates: (0..observations.len()).map(|_| Array2::zeros((k, m))).collect(),
        iterations: 0,
        converged: true,
    };
    if dictionary.is_empty() {
        return Ok(out);
    }
    let sub: Vec<Array2<Cx<T>>> = pilots.s.iter().map(|s| s.select(Axis(1), dictionary)).collect();
    let scatter = |out: &mut ModuleAOutput<T>, x: &[Array2<Cx<T>>]| {
        for (dst, src) in out.estimates.iter_mut().zip(x) {
            for (i, &d) in dictionary.iter().enumerate() {
                dst.row_mut(d).assign(&src.row(i));
            }
        }
    };
    match config.algorithm {
        Algorithm::AmpEm => {
            let res = amp_em(observations, &sub, n_r, &config.amp_params(noise_floor));
            for (i, &d) in dictionary.iter().enumerate() {
                out.lambda[d] = res.lambda[i];
            }
            scatter(&mut out, &res.x);
            out.iterations = res.iterations;
            out.converged = res.converged;
        }
        Algorithm::Somp => {
            let res = somp(observations, &sub);
            for &i in &res.support {
                out.lambda[dictionary[i]] = T::one();
            }
            scatter(&mut out, &res.x);
            out.iterations = res.support.len();
        }
        Algorithm::OracleLs => {
            let truth = genie.ok_or_else(|| config_err("oracle-ls needs the true active set"))?;
            let support: Vec<usize> = truth.iter().copied().filter(|d| dictionary.contains(d)).collect();
            let est = oracle_ls(observations, pilots, &support);
            for &d in &support {
                out.lambda[d] = T::one();
            }
            out.estimates = est.estimates;
            out.iterations = 1;
        }
    }
    Ok(out)
}

/// Residual and pilot book mapped onto an orthonormal basis of the
/// complement of the `cancelled` pilots, per subcarrier. `None` when no
/// dimension is left.
/// Projected observations and pilot book.
type Projected<T> = (Vec<Array2<Cx<T>>>, PilotBook<T>);

fn project_out<T: Real>(
    residual: &[Array2<Cx<T>>],
    pilots: &PilotBook<T>,
    cancelled: &[usize],
) -> Option<Projected<T>> {
    let mut obs = Vec::with_capacity(residual.len());
    let mut book = Vec::with_capacity(residual.len());
    for (r, s) in residual.iter().zip(&pilots.s) {
        let q = orthonormal_complement(&s.select(Axis(1), cancelled).view());
        if q.ncols() == 0 {
            return None;
        }
        let qh = adjoint(&q.view());
        obs.push(qh.dot(r));
        book.push(qh.dot(s));
    }
    Some((obs, PilotBook { s: book }))
}

/// Detection outcome at one anchor.
#[derive(Debug, Clone)]
pub struct AnchorResult<T: Real> {
    pub anchor: usize,
    /// HAP ids labelling the column blocks of `estimates`.
    pub members: Vec<usize>,
    pub lambda: Vec<T>,
    pub verdict: Vec<bool>,
    /// `K x (N_co N_r)` per subcarrier, zero rows off the verdict.
    pub estimates: Vec<Array2<Cx<T>>>,
    pub initial_energy: f64,
    pub rounds: Vec<RoundLog>,
    pub converged: bool,
}

impl<T: Real> AnchorResult<T> {
    pub fn detected(&self) -> Vec<usize> {
        self.verdict
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Stateless receiver bound to a pilot book and configuration.
#[derive(Debug, Clone, Copy)]
pub struct Detector<'a, T: Real> {
    pub config: &'a DetectorConfig,
    pub pilots: &'a PilotBook<T>,
    genie: Option<&'a [usize]>,
}

impl<'a, T: Real> Detector<'a, T> {
    pub fn new(config: &'a DetectorConfig, pilots: &'a PilotBook<T>) -> Self {
        Self {
            config,
            pilots,
            genie: None,
        }
    }

    /// Supplies the true active set, required by `oracle-ls`.
    pub fn with_genie(mut self, active: &'a [usize]) -> Self {
        self.genie = Some(active);
        self
    }

    /// SIC loop at one anchor over the `dictionary` devices. `noise_var` is
    /// the per-entry receiver noise variance; cancellation never takes the
    /// residual below it.
    pub fn detect_anchor(
        &self,
        observations: &[Array2<Cx<T>>],
        set: &CooperationSet,
        dictionary: &[usize],
        n_r: usize,
        noise_var: f64,
    ) -> Result<AnchorResult<T>> {
        let cfg = self.config;
        let k = self.pilots.n_devices();
        let mut state = DetectionState::new(observations, k, dictionary);
        let initial_energy = state.residual_energy();
        let entries: usize = observations.iter().map(|y| y.len()).sum();
        let noise_floor = noise_var.max(RESIDUAL_FLOOR * initial_energy / entries.max(1) as f64);
        let mut lambda = vec![T::zero(); k];
        let mut last: Option<ModuleAOutput<T>> = None;
        let mut converged = true;
        let eps_r = T::lit(cfg.reliability_threshold);
        let eps_a = T::lit(cfg.activity_threshold);

        for round in 1..=cfg.max_sic_rounds {
            let remaining = state.remaining_ids();
            if remaining.is_empty() {
                break;
            }
            let a = if state.detected.is_empty() {
                module_a_spatial(
                    &state.residual,
                    self.pilots,
                    &remaining,
                    n_r,
                    cfg,
                    noise_floor,
                    self.genie,
                )?
            } else {
                // later rounds see only the part of the residual orthogonal to
                // the cancelled devices' pilots, so cancellation error cannot
                // masquerade as a new device
                let Some((obs, book)) = project_out(&state.residual, self.pilots, &state.detected) else {
                    break;
                };
                module_a_spatial(&obs, &book, &remaining, n_r, cfg, noise_floor, self.genie)?
            };
            converged &= a.converged;
            for &d in &remaining {
                lambda[d] = a.lambda[d];
            }
            if !cfg.enable_sic {
                last = Some(a);
                break;
            }
            let reliable: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&d| a.lambda[d] >= eps_r)
                .collect();
            if reliable.is_empty() {
                last = Some(a);
                break;
            }
            let mut est = a.estimates.clone();
            if cfg.enable_angular_refine {
                angular_refine(&mut est, &reliable, n_r, cfg.angular_keep_ratio);
            }
            module_c_sic(&mut state, &reliable, &est, self.pilots);
            state.rounds.push(RoundLog {
                round,
                cancelled: reliable.len(),
                residual_energy: state.residual_energy(),
                module_a_iterations: a.iterations,
                module_a_converged: a.converged,
            });
            last = Some(a);
        }

        let mut verdict = vec![false; k];
        let mut estimates = state.estimates;
        for &d in &state.detected {
            verdict[d] = true;
        }
        if let Some(a) = last {
            let late: Vec<usize> = state
                .remaining
                .iter()
                .enumerate()
                .filter(|&(d, &r)| r && a.lambda[d] >= eps_a)
                .map(|(d, _)| d)
                .collect();
            let mut late_est = a.estimates;
            if cfg.enable_angular_refine {
                angular_refine(&mut late_est, &late, n_r, cfg.angular_keep_ratio);
            }
            for (dst, src) in estimates.iter_mut().zip(&late_est) {
                for &d in &late {
                    dst.row_mut(d).assign(&src.row(d));
                }
            }
            for d in late {
                verdict[d] = true;
            }
        }
        Ok(AnchorResult {
            anchor: set.anchor,
            members: set.members.clone(),
            lambda,
            verdict,
            estimates,
            initial_energy,
            rounds: state.rounds,
            converged,
        })
    }

    /// Runs the receiver at every anchor of the frame over the full
    /// dictionary. Anchors whose cooperation sets hold the same HAPs share
    /// one joint detection.
    pub fn run_sic_detector(&self, frame: &ReceivedFrame<T>) -> Result<Vec<AnchorResult<T>>> {
        let all: Vec<usize> = (0..self.pilots.n_devices()).collect();
        let mut solved: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut results: Vec<AnchorResult<T>> = Vec::with_capacity(frame.anchors.len());
        for (i, set) in frame.anchors.iter().enumerate() {
            let key = set.sorted_members();
            if let Some(&j) = solved.get(&key) {
                let mut shared = results[j].clone();
                shared.anchor = set.anchor;
                results.push(shared);
                continue;
            }
            let obs = frame.anchor_observations(i);
            let res = self.detect_anchor(&obs, set, &all, frame.n_antennas, frame.noise_var)?;
            solved.insert(key, results.len());
            results.push(res);
        }
        Ok(results)
    }

    /// Cellular reference: every HAP detects its own cell's devices from its
    /// own antennas; other cells' devices stay in the observation.
    pub fn run_cellular_baseline(
        &self,
        per_hap: &[Vec<Array2<Cx<T>>>],
        topology: &NetworkTopology,
        noise_var: f64,
    ) -> Result<Vec<AnchorResult<T>>> {
        ensure_dim(
            "cell assignment",
            self.pilots.n_devices(),
            topology.cell_assignment.len(),
        )?;
        (0..topology.n_haps())
            .map(|b| {
                let obs: Vec<Array2<Cx<T>>> = per_hap.iter().map(|yp| yp[b].clone()).collect();
                let set = CooperationSet {
                    anchor: b,
                    members: vec![b],
                };
                self.detect_anchor(
                    &obs,
                    &set,
                    &topology.cell_members(b),
                    topology.n_antennas(),
                    noise_var,
                )
            })
            .collect()
    }
}

/// Network-wide outcome after taking each device from its nearest anchor.
#[derive(Debug, Clone)]
pub struct DetectionResult<T: Real> {
    pub anchors: Vec<AnchorResult<T>>,
    /// Index into `anchors` that decided each device.
    pub served_by: Vec<usize>,
    pub verdict: Vec<bool>,
    /// `h[p][b]`, K x N_r, zero rows off the verdict and outside the
    /// deciding anchor's cooperation set.
    pub estimates: Vec<Vec<Array2<Cx<T>>>>,
}

impl<T: Real> DetectionResult<T> {
    /// SIC rounds used, maximized over anchors.
    pub fn rounds_used(&self) -> usize {
        self.anchors.iter().map(|a| a.rounds.len()).max().unwrap_or(0)
    }

    pub fn converged(&self) -> bool {
        self.anchors.iter().all(|a| a.converged)
    }
}

/// Each device takes its verdict and channel estimates from the anchor whose
/// nadir is nearest (ties to the lowest anchor id).
pub fn aggregate_network_verdict<T: Real>(
    anchors: Vec<AnchorResult<T>>,
    topology: &NetworkTopology,
) -> Result<DetectionResult<T>> {
    let first = anchors
        .first()
        .ok_or_else(|| config_err("aggregation needs at least one anchor result"))?;
    let k = first.verdict.len();
    ensure_dim("device positions", k, topology.n_devices())?;
    let n_r = topology.n_antennas();
    let n_sub = first.estimates.len();
    let ids: Vec<usize> = anchors.iter().map(|a| a.anchor).collect();
    let mut sorted_ids = ids.clone();
    sorted_ids.sort_unstable();
    let mut served_by = Vec::with_capacity(k);
    let mut verdict = vec![false; k];
    let mut estimates: Vec<Vec<Array2<Cx<T>>>> =
        vec![vec![Array2::zeros((k, n_r)); topology.n_haps()]; n_sub];
    for (dev, v) in verdict.iter_mut().enumerate() {
        let anchor_id = topology
            .nearest_among(topology.device_positions[dev], &sorted_ids)
            .expect("anchor list is not empty");
        let idx = ids.iter().position(|&a| a == anchor_id).expect("anchor present");
        served_by.push(idx);
        let res = &anchors[idx];
        *v = res.verdict[dev];
        if !*v {
            continue;
        }
        for (p, est) in res.estimates.iter().enumerate() {
            for (j, &b) in res.members.iter().enumerate() {
                estimates[p][b]
                    .row_mut(dev)
                    .assign(&est.slice(s![dev, j * n_r..(j + 1) * n_r]));
            }
        }
    }
    Ok(DetectionResult {
        anchors,
        served_by,
        verdict,
        estimates,
    })
}
