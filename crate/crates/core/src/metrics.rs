//! Activity error rate, channel NMSE, region breakdowns and Monte-Carlo
//! aggregation.
//!
//! Definitions (also written into every run's metadata):
//! - AER = (missed detections + false alarms) / K.
//! - NMSE = sum over truly active devices, subcarriers and HAPs of
//!   |h_est - h|^2 divided by sum of |h|^2; missed devices count with a zero
//!   estimate and false alarms are left out.
//! - Confidence half-width = 1.96 s / sqrt(n) with the sample standard
//!   deviation `s`.

use crate::channel::{AccessChannelSet, ActivityPattern};
use crate::error::{ensure_dim, Result};
use crate::scalar::Real;
use crate::topology::Region;

pub const METRIC_DEFINITIONS: &str = "\
aer = (missed + false_alarms) / K over all K devices
aer_center, aer_edge = errors among devices of that region / region size; center iff distance to the serving HAP nadir <= center_fraction * footprint_radius
nmse = sum_{active k, p, b} |h_est - h|^2 / sum_{active k, p, b} |h|^2; missed devices contribute h_est = 0; false alarms excluded
nmse_db = 10 log10(nmse)
ci95 half-width = 1.96 * sample_std / sqrt(n); n <= 30 is flagged small-sample";

/// Sample counts above this are not flagged small.
pub const SMALL_SAMPLE_LIMIT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityErrors {
    pub aer: f64,
    pub missed: usize,
    pub false_alarms: usize,
}

pub fn activity_error_rate(truth: &ActivityPattern, verdict: &[bool]) -> Result<ActivityErrors> {
    ensure_dim("verdict length", truth.k_total, verdict.len())?;
    let mask = truth.mask();
    let (mut missed, mut false_alarms) = (0, 0);
    for (&t, &v) in mask.iter().zip(verdict) {
        match (t, v) {
            (true, false) => missed += 1,
            (false, true) => false_alarms += 1,
            _ => {}
        }
    }
    let aer = if truth.k_total == 0 {
        0.0
    } else {
        (missed + false_alarms) as f64 / truth.k_total as f64
    };
    Ok(ActivityErrors {
        aer,
        missed,
        false_alarms,
    })
}

/// NMSE over the truly active devices; `None` when nobody is active.
pub fn channel_nmse<T: Real>(
    truth: &AccessChannelSet<T>,
    estimate: &[Vec<ndarray::Array2<crate::scalar::Cx<T>>>],
    activity: &ActivityPattern,
) -> Result<Option<f64>> {
    ensure_dim("estimate subcarriers", truth.n_subcarriers(), estimate.len())?;
    let mut err = 0.0;
    let mut total = 0.0;
    for (hp, ep) in truth.h.iter().zip(estimate) {
        ensure_dim("estimate HAP blocks", hp.len(), ep.len())?;
        for (h, e) in hp.iter().zip(ep) {
            ensure_dim("estimate rows", h.nrows(), e.nrows())?;
            for &k in &activity.active_set {
                for (a, b) in h.row(k).iter().zip(e.row(k)) {
                    err += (b - a).norm_sqr().as_f64();
                    total += a.norm_sqr().as_f64();
                }
            }
        }
    }
    Ok(if activity.active_set.is_empty() || total == 0.0 {
        None
    } else {
        Some(err / total)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionErrors {
    pub aer_center: Option<f64>,
    pub aer_edge: Option<f64>,
    pub n_center: usize,
    pub n_edge: usize,
}

pub fn region_breakdown(
    truth: &ActivityPattern,
    verdict: &[bool],
    regions: &[Region],
) -> Result<RegionErrors> {
    ensure_dim("verdict length", truth.k_total, verdict.len())?;
    ensure_dim("region labels", truth.k_total, regions.len())?;
    let mask = truth.mask();
    let mut errors = [0usize; 2];
    let mut sizes = [0usize; 2];
    for k in 0..truth.k_total {
        let r = match regions[k] {
            Region::Center => 0,
            Region::Edge => 1,
        };
        sizes[r] += 1;
        if mask[k] != verdict[k] {
            errors[r] += 1;
        }
    }
    let rate = |r: usize| (sizes[r] > 0).then(|| errors[r] as f64 / sizes[r] as f64);
    Ok(RegionErrors {
        aer_center: rate(0),
        aer_edge: rate(1),
        n_center: sizes[0],
        n_edge: sizes[1],
    })
}

/// Per-trial outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub aer: f64,
    pub aer_center: Option<f64>,
    pub aer_edge: Option<f64>,
    pub nmse_linear: Option<f64>,
    pub nmse_db: Option<f64>,
    pub missed: usize,
    pub false_alarms: usize,
    pub pilot_duration_s: f64,
    pub detector_rounds: usize,
}

/// Sample mean with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
    pub small_sample: bool,
}

impl Estimate {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    /// Confidence intervals do not intersect and `self` lies below.
    pub fn clearly_below(&self, other: &Estimate) -> bool {
        self.upper() < other.lower()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower() && x <= self.upper()
    }
}

/// `None` when there are no samples.
pub fn estimate(samples: &[f64]) -> Option<Estimate> {
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let half_width = if n > 1 {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    Some(Estimate {
        mean,
        half_width,
        n,
        small_sample: n <= SMALL_SAMPLE_LIMIT,
    })
}

/// Aggregate of one sweep point. Metrics that were absent in some trials
/// average over the trials where they exist.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub trials: usize,
    pub aer: Estimate,
    pub aer_center: Option<Estimate>,
    pub aer_edge: Option<Estimate>,
    pub nmse_linear: Option<Estimate>,
    pub nmse_db: Option<Estimate>,
    pub missed: Estimate,
    pub false_alarms: Estimate,
    pub rounds: Estimate,
    pub pilot_duration_s: f64,
}

impl AggregateMetrics {
    pub fn small_sample(&self) -> bool {
        self.trials <= SMALL_SAMPLE_LIMIT
    }
}

pub fn monte_carlo_aggregate(trials: &[TrialMetrics]) -> Option<AggregateMetrics> {
    let collect =
        |f: &dyn Fn(&TrialMetrics) -> Option<f64>| -> Vec<f64> { trials.iter().filter_map(f).collect() };
    Some(AggregateMetrics {
        trials: trials.len(),
        aer: estimate(&collect(&|t| Some(t.aer)))?,
        aer_center: estimate(&collect(&|t| t.aer_center)),
        aer_edge: estimate(&collect(&|t| t.aer_edge)),
        nmse_linear: estimate(&collect(&|t| t.nmse_linear)),
        nmse_db: estimate(&collect(&|t| t.nmse_db)),
        missed: estimate(&collect(&|t| Some(t.missed as f64)))?,
        false_alarms: estimate(&collect(&|t| Some(t.false_alarms as f64)))?,
        rounds: estimate(&collect(&|t| Some(t.detector_rounds as f64)))?,
        pilot_duration_s: trials[0].pilot_duration_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pattern(active: &[usize], k: usize) -> ActivityPattern {
        ActivityPattern::new(active.to_vec(), k).unwrap()
    }

    #[test]
    fn aer_definition() {
        let t = pattern(&[3, 7], 100);
        let perfect = t.mask();
        assert_eq!(activity_error_rate(&t, &perfect).unwrap().aer, 0.0);
        let mut v = perfect.clone();
        v[3] = false;
        v[50] = true;
        let e = activity_error_rate(&t, &v).unwrap();
        assert_eq!((e.missed, e.false_alarms), (1, 1));
        assert!((e.aer - 0.02).abs() < 1e-15);
    }

    #[test]
    fn all_inactive_verdict_on_case_study_population() {
        let active: Vec<usize> = (0..140).map(|i| i * 20).collect();
        let t = pattern(&active, 2800);
        let e = activity_error_rate(&t, &vec![false; 2800]).unwrap();
        assert_eq!(e.missed, 140);
        assert!((e.aer - 0.05).abs() < 1e-15);
    }

    fn toy_truth() -> (AccessChannelSet<f64>, ActivityPattern) {
        let mut set = AccessChannelSet::<f64>::zeros(4, 2, 3, vec![0.0, 1.0]);
        let act = pattern(&[1, 2], 4);
        for (i, m) in set.h.iter_mut().flatten().enumerate() {
            for &k in &act.active_set {
                for n in 0..3 {
                    m[[k, n]] = Complex64::new((i + k + n) as f64, 1.0);
                }
            }
        }
        (set, act)
    }

    #[test]
    fn nmse_extremes() {
        let (truth, act) = toy_truth();
        assert_eq!(channel_nmse(&truth, &truth.h, &act).unwrap(), Some(0.0));
        let zeros: Vec<Vec<Array2<Complex64>>> = truth
            .h
            .iter()
            .map(|v| v.iter().map(|m| Array2::zeros(m.dim())).collect())
            .collect();
        assert_eq!(channel_nmse(&truth, &zeros, &act).unwrap(), Some(1.0));
        let none = pattern(&[], 4);
        assert_eq!(channel_nmse(&truth, &zeros, &none).unwrap(), None);
    }

    #[test]
    fn false_alarm_estimates_do_not_count() {
        let (truth, act) = toy_truth();
        let mut est = truth.h.clone();
        for m in est.iter_mut().flatten() {
            m[[0, 0]] = Complex64::new(100.0, 0.0);
        }
        assert_eq!(channel_nmse(&truth, &est, &act).unwrap(), Some(0.0));
    }

    #[test]
    fn regions() {
        let t = pattern(&[0, 3], 4);
        let all_center = vec![Region::Center; 4];
        let v = vec![true, false, false, false];
        let r = region_breakdown(&t, &v, &all_center).unwrap();
        assert_eq!(r.aer_edge, None);
        assert_eq!(r.aer_center, Some(activity_error_rate(&t, &v).unwrap().aer));
        let mixed = vec![Region::Center, Region::Edge, Region::Edge, Region::Edge];
        let r = region_breakdown(&t, &t.mask(), &mixed).unwrap();
        assert_eq!((r.aer_center, r.aer_edge), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn aggregate_edge_cases() {
        let one = TrialMetrics {
            aer: 0.1,
            aer_center: None,
            aer_edge: Some(0.2),
            nmse_linear: Some(0.5),
            nmse_db: Some(-3.0),
            missed: 1,
            false_alarms: 0,
            pilot_duration_s: 1e-3,
            detector_rounds: 2,
        };
        let agg = monte_carlo_aggregate(std::slice::from_ref(&one)).unwrap();
        assert_eq!(agg.aer.half_width, 0.0);
        assert!(agg.aer.small_sample && agg.small_sample());
        assert!(agg.aer_center.is_none());
        let many = vec![one.clone(); 50];
        let agg = monte_carlo_aggregate(&many).unwrap();
        assert!(agg.aer.half_width < 1e-15);
        assert!(!agg.small_sample());
        assert!(monte_carlo_aggregate(&[]).is_none());
    }

    #[test]
    fn uniform_samples_average_to_one_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let e = estimate(&xs).unwrap();
        assert!((e.mean - 0.5).abs() < 0.01);
        // 1.96 * sqrt(1/12) / 100
        assert!((e.half_width - 0.005658).abs() < 2e-4);
    }

    proptest! {
        #[test]
        fn aer_decomposes_and_regions_recombine(
            k in 1usize..60,
            seed in any::<u64>(),
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let active: Vec<usize> = (0..k).filter(|_| rng.random::<f64>() < 0.3).collect();
            let t = pattern(&active, k);
            let v: Vec<bool> = (0..k).map(|_| rng.random::<f64>() < 0.3).collect();
            let regions: Vec<Region> = (0..k)
                .map(|_| if rng.random::<bool>() { Region::Center } else { Region::Edge })
                .collect();
            let e = activity_error_rate(&t, &v).unwrap();
            prop_assert!((0.0..=1.0).contains(&e.aer));
            prop_assert!((e.aer * k as f64 - (e.missed + e.false_alarms) as f64).abs() < 1e-9);
            let r = region_breakdown(&t, &v, &regions).unwrap();
            prop_assert_eq!(r.n_center + r.n_edge, k);
            let recombined = r.aer_center.unwrap_or(0.0) * r.n_center as f64
                + r.aer_edge.unwrap_or(0.0) * r.n_edge as f64;
            prop_assert!((recombined / k as f64 - e.aer).abs() < 1e-12);
        }
    }
}
