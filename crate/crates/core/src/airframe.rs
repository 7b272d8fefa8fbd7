//! Grant-free frame structure, non-orthogonal pilots and received-signal
//! synthesis at each edge anchor.

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::channel::{AccessChannelSet, LargeScaleGains};
use crate::error::{config_err, ensure_dim, Error, Result};
use crate::rng::{complex_normal, SimRng};
use crate::scalar::{Cx, Real};
use crate::topology::CooperationSet;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    /// Cyclic-prefix length, samples.
    pub n_cp: usize,
    /// Pilot-phase DFT length, samples.
    pub p_dft: usize,
    /// Data-phase DFT length, samples.
    pub n_dft: usize,
    /// Two-sided bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Pilot symbols per frame.
    pub t_p: usize,
    /// Pilot subcarriers handed to the detector.
    pub p_pilot: usize,
    pub carrier_freq_hz: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            n_cp: 128,
            p_dft: 128,
            n_dft: 4096,
            bandwidth_hz: 10e6,
            t_p: 40,
            p_pilot: 4,
            carrier_freq_hz: 2e9,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_dft != self.n_cp {
            return Err(config_err(format!(
                "pilot DFT length p_dft = {} must equal the cyclic prefix n_cp = {}",
                self.p_dft, self.n_cp
            )));
        }
        if self.n_dft < 4 * self.p_dft {
            return Err(config_err(format!(
                "data DFT length n_dft = {} must be at least 4 x p_dft = {}",
                self.n_dft,
                4 * self.p_dft
            )));
        }
        if self.n_dft < 8 * self.p_dft {
            log::warn!(
                "n_dft = {} is less than 8 x p_dft = {}; the short pilot symbol gains little",
                self.n_dft,
                8 * self.p_dft
            );
        }
        if self.p_pilot == 0 || self.p_pilot > self.p_dft {
            return Err(config_err(format!(
                "pilot subcarriers p_pilot = {} must lie in 1..={}",
                self.p_pilot, self.p_dft
            )));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(config_err("bandwidth must be positive"));
        }
        if !(self.carrier_freq_hz > 0.0) {
            return Err(config_err("carrier frequency must be positive"));
        }
        Ok(())
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.p_dft as f64
    }

    /// Baseband offsets of `p_pilot` subcarriers spread evenly over the
    /// pilot-phase DFT grid.
    pub fn pilot_subcarrier_freqs(&self) -> Vec<f64> {
        let half = (self.p_dft / 2) as f64;
        (0..self.p_pilot)
            .map(|i| ((i * self.p_dft / self.p_pilot) as f64 - half) * self.subcarrier_spacing_hz())
            .collect()
    }

    /// Delay spread that fits inside the cyclic prefix.
    pub fn cp_duration_s(&self) -> f64 {
        self.n_cp as f64 / self.bandwidth_hz
    }
}

/// Pilot phase with the short DFT: `t_p (n_cp + p_dft) / B_s`.
pub fn pilot_phase_duration(frame: &FrameConfig) -> f64 {
    frame.t_p as f64 * (frame.n_cp + frame.p_dft) as f64 / frame.bandwidth_hz
}

/// Pilot phase when pilots reuse the data DFT length: `t_p (n_cp + n_dft) / B_s`.
pub fn conventional_pilot_phase_duration(frame: &FrameConfig) -> f64 {
    frame.t_p as f64 * (frame.n_cp + frame.n_dft) as f64 / frame.bandwidth_hz
}

/// Pilot matrices `s[p]` (T_p x K), entries CN(0, 1/T_p).
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook<T: Real> {
    pub s: Vec<Array2<Cx<T>>>,
}

impl<T: Real> PilotBook<T> {
    pub fn t_p(&self) -> usize {
        self.s.first().map_or(0, |m| m.nrows())
    }

    pub fn n_devices(&self) -> usize {
        self.s.first().map_or(0, |m| m.ncols())
    }

    pub fn n_subcarriers(&self) -> usize {
        self.s.len()
    }

    /// The same book with every entry multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            s: self.s.iter().map(|m| m.mapv(|z| z * c)).collect(),
        }
    }
}

/// Draws the pilot book. With `shared` every subcarrier reuses one matrix.
pub fn generate_pilots<T: Real>(
    k: usize,
    t_p: usize,
    p_pilot: usize,
    shared: bool,
    rng: &mut SimRng,
) -> Result<PilotBook<T>> {
    if t_p == 0 {
        return Err(config_err("pilot length t_p must be at least 1"));
    }
    let var = 1.0 / t_p as f64;
    let draw = |rng: &mut SimRng| {
        // column-major fill so device k's pilot does not depend on K
        let mut m = Array2::<Cx<T>>::zeros((t_p, k));
        for mut col in m.columns_mut() {
            col.mapv_inplace(|_| complex_normal(rng, var));
        }
        m
    };
    let s = if shared {
        let m = draw(rng);
        vec![m; p_pilot]
    } else {
        (0..p_pilot).map(|_| draw(rng)).collect()
    };
    Ok(PilotBook { s })
}

/// Received noise per HAP, `n[p][b]` (T_p x N_r).
#[derive(Debug, Clone, PartialEq)]
pub struct HapNoise<T: Real> {
    pub n: Vec<Vec<Array2<Cx<T>>>>,
    pub noise_var: f64,
}

impl<T: Real> HapNoise<T> {
    pub fn draw(
        p_pilot: usize,
        n_haps: usize,
        t_p: usize,
        n_r: usize,
        noise_var: f64,
        rng: &mut SimRng,
    ) -> Result<Self> {
        if !(noise_var >= 0.0) {
            return Err(config_err(format!(
                "noise variance must be non-negative, got {noise_var}"
            )));
        }
        let n = (0..p_pilot)
            .map(|_| {
                (0..n_haps)
                    .map(|_| Array2::from_shape_simple_fn((t_p, n_r), || complex_normal(rng, noise_var)))
                    .collect()
            })
            .collect();
        Ok(Self { n, noise_var })
    }

    pub fn silent(p_pilot: usize, n_haps: usize, t_p: usize, n_r: usize) -> Self {
        Self {
            n: vec![vec![Array2::zeros((t_p, n_r)); n_haps]; p_pilot],
            noise_var: 0.0,
        }
    }
}

/// Per-HAP observations `S_p H_{p,b} + N_{p,b}`.
pub fn hap_observations<T: Real>(
    pilots: &PilotBook<T>,
    channels: &AccessChannelSet<T>,
    noise: &HapNoise<T>,
) -> Result<Vec<Vec<Array2<Cx<T>>>>> {
    ensure_dim(
        "pilot subcarriers",
        channels.n_subcarriers(),
        pilots.n_subcarriers(),
    )?;
    ensure_dim(
        "pilot columns vs devices",
        channels.n_devices(),
        pilots.n_devices(),
    )?;
    ensure_dim("noise subcarriers", channels.n_subcarriers(), noise.n.len())?;
    pilots
        .s
        .iter()
        .zip(&channels.h)
        .zip(&noise.n)
        .map(|((s, hp), np)| {
            ensure_dim("noise HAP blocks", hp.len(), np.len())?;
            hp.iter()
                .zip(np)
                .map(|(h, n)| {
                    ensure_dim("noise rows", s.nrows(), n.nrows())?;
                    ensure_dim("noise columns", h.ncols(), n.ncols())?;
                    Ok(s.dot(h) + n)
                })
                .collect()
        })
        .collect()
}

/// Observations gathered at each anchor, `y[p][i]` (T_p x N_co N_r), with
/// column blocks in cooperation-set member order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame<T: Real> {
    pub y: Vec<Vec<Array2<Cx<T>>>>,
    pub anchors: Vec<CooperationSet>,
    pub noise_var: f64,
    pub n_antennas: usize,
}

impl<T: Real> ReceivedFrame<T> {
    /// Stacks per-HAP observations along the antenna axis for every anchor.
    pub fn gather(
        per_hap: &[Vec<Array2<Cx<T>>>],
        anchors: &[CooperationSet],
        noise_var: f64,
    ) -> Result<Self> {
        let n_haps = per_hap.first().map_or(0, Vec::len);
        let n_antennas = per_hap.first().and_then(|v| v.first()).map_or(0, |m| m.ncols());
        for set in anchors {
            if let Some(&bad) = set.members.iter().find(|&&m| m >= n_haps) {
                return Err(Error::Synthesis(format!(
                    "anchor {} lists HAP {bad} but channels cover {n_haps} HAPs",
                    set.anchor
                )));
            }
            if set.members.first() != Some(&set.anchor) {
                return Err(Error::Synthesis(format!(
                    "anchor {} is not the first member of its cooperation set",
                    set.anchor
                )));
            }
        }
        let y = per_hap
            .iter()
            .map(|blocks| {
                anchors
                    .iter()
                    .map(|set| {
                        let views: Vec<ArrayView2<'_, Cx<T>>> =
                            set.members.iter().map(|&m| blocks[m].view()).collect();
                        concatenate(Axis(1), &views).expect("blocks share T_p rows")
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            y,
            anchors: anchors.to_vec(),
            noise_var,
            n_antennas,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.y.len()
    }

    /// Observations of anchor `i` across subcarriers.
    pub fn anchor_observations(&self, i: usize) -> Vec<Array2<Cx<T>>> {
        self.y.iter().map(|yp| yp[i].clone()).collect()
    }
}

/// `Y_{p,i} = S_p [H_{p,B_i(1)} | ... | H_{p,B_i(N_co)}] + N_{p,i}` for every anchor.
///
/// Noise is drawn once per HAP, so anchors that share a HAP see the same
/// noise on its block.
pub fn synthesize_received<T: Real>(
    pilots: &PilotBook<T>,
    channels: &AccessChannelSet<T>,
    coop_sets: &[CooperationSet],
    noise_var: f64,
    rng: &mut SimRng,
) -> Result<ReceivedFrame<T>> {
    let noise = HapNoise::draw(
        channels.n_subcarriers(),
        channels.n_haps(),
        pilots.t_p(),
        channels.n_antennas(),
        noise_var,
        rng,
    )?;
    let per_hap = hap_observations(pilots, channels, &noise)?;
    ReceivedFrame::gather(&per_hap, coop_sets, noise_var)
}

/// Noise variance putting the median of `g[k][b] N_r / sigma^2` at the target SNR.
pub fn calibrate_noise(target_snr_db: f64, gains: &LargeScaleGains, n_antennas: usize) -> Result<f64> {
    let mut g: Vec<f64> = gains.g.iter().copied().collect();
    if g.is_empty() {
        return Err(config_err("cannot calibrate noise without any gains"));
    }
    g.sort_by(|a, b| a.total_cmp(b));
    let mid = g.len() / 2;
    let median = if g.len() % 2 == 1 {
        g[mid]
    } else {
        0.5 * (g[mid - 1] + g[mid])
    };
    let snr = 10f64.powf(target_snr_db / 10.0);
    Ok(median * n_antennas as f64 / snr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_access_channels, ActivityPattern, MultipathSet, Path, PathSet};
    use crate::linalg::frob_sq;
    use crate::rng::{stage_rng, Stage};
    use crate::topology::{build_cooperation_sets, build_hex_deployment};

    type C = Cx<f64>;

    #[test]
    fn durations_follow_frame_formulas() {
        let mut f = FrameConfig {
            t_p: 0,
            ..FrameConfig::default()
        };
        assert_eq!(pilot_phase_duration(&f), 0.0);
        f.t_p = 1;
        assert!((pilot_phase_duration(&f) - 25.6e-6).abs() < 1e-15);
        assert!((conventional_pilot_phase_duration(&f) - 422.4e-6).abs() < 1e-15);
        let ratio = pilot_phase_duration(&f) / conventional_pilot_phase_duration(&f);
        assert!((ratio - 256.0 / 4224.0).abs() < 1e-15);
    }

    #[test]
    fn frame_validation() {
        assert!(FrameConfig::default().validate().is_ok());
        let bad = FrameConfig {
            p_dft: 64,
            ..FrameConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FrameConfig {
            n_dft: 256,
            ..FrameConfig::default()
        };
        assert!(bad.validate().is_err());
        let ok = FrameConfig {
            n_dft: 512,
            ..FrameConfig::default()
        };
        assert!(ok.validate().is_ok());
        let bad = FrameConfig {
            p_pilot: 0,
            ..FrameConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pilot_subcarriers_span_the_band() {
        let f = FrameConfig::default().pilot_subcarrier_freqs();
        assert_eq!(f, vec![-5e6, -2.5e6, 0.0, 2.5e6]);
    }

    #[test]
    fn pilot_column_norm_concentrates() {
        // |s|^2 * 2 T_p ~ chi-square with 2 T_p dof: mean 1, sd 1/sqrt(T_p)
        let book: PilotBook<f64> =
            generate_pilots(1, 64, 1, false, &mut stage_rng(1, Stage::Pilots)).unwrap();
        let norm = frob_sq(&book.s[0].view());
        assert!((norm - 1.0).abs() < 3.0 / 8.0, "{norm}");
        // the mean over many books
        let mut rng = stage_rng(2, Stage::Pilots);
        let m: f64 = (0..2000)
            .map(|_| frob_sq(&generate_pilots::<f64>(1, 64, 1, false, &mut rng).unwrap().s[0].view()))
            .sum::<f64>()
            / 2000.0;
        assert!((m - 1.0).abs() < 3.0 / (8.0 * 2000f64.sqrt()));
    }

    #[test]
    fn pilots_are_deterministic_and_shared_on_request() {
        let a: PilotBook<f64> = generate_pilots(20, 8, 3, false, &mut stage_rng(4, Stage::Pilots)).unwrap();
        let b: PilotBook<f64> = generate_pilots(20, 8, 3, false, &mut stage_rng(4, Stage::Pilots)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.s[0], a.s[1]);
        let s: PilotBook<f64> = generate_pilots(20, 8, 3, true, &mut stage_rng(4, Stage::Pilots)).unwrap();
        assert_eq!(s.s[0], s.s[2]);
        assert!(generate_pilots::<f64>(20, 0, 3, false, &mut stage_rng(4, Stage::Pilots)).is_err());
    }

    #[test]
    fn any_active_subset_is_full_rank() {
        let book: PilotBook<f64> =
            generate_pilots(2800, 150, 1, false, &mut stage_rng(5, Stage::Pilots)).unwrap();
        let mut rng = stage_rng(6, Stage::Activity);
        for _ in 0..3 {
            let idx = rand::seq::index::sample(&mut rng, 2800, 140).into_vec();
            let sub = book.s[0].select(Axis(1), &idx);
            let gram = crate::linalg::adjoint(&sub.view()).dot(&sub);
            let l = crate::linalg::cholesky(&gram.view()).expect("full column rank");
            let d: Vec<f64> = (0..140).map(|i| l[[i, i]].re).collect();
            let ratio = d.iter().cloned().fold(0.0, f64::max) / d.iter().cloned().fold(f64::MAX, f64::min);
            assert!(ratio < 1e3, "ill-conditioned: {ratio}");
        }
    }

    fn toy_channels(active: Vec<usize>, k: usize) -> AccessChannelSet<f64> {
        let topo = build_hex_deployment(7, 86_600.0, 20_000.0, 4).unwrap();
        let activity = ActivityPattern::new(active, k).unwrap();
        let gains = LargeScaleGains {
            g: Array2::from_shape_fn((k, 7), |(i, b)| 1.0 + 0.1 * (i + b) as f64),
        };
        let mut rng = stage_rng(8, Stage::Channel);
        let mp = MultipathSet {
            devices: activity.active_set.clone(),
            paths: activity
                .active_set
                .iter()
                .map(|&i| {
                    topo.iter()
                        .map(|h| PathSet {
                            paths: vec![Path {
                                gain: complex_normal(&mut rng, 1.0),
                                delay_s: 1e-6 * (i + h.id) as f64,
                                angle_rad: 0.1 * i as f64,
                            }],
                        })
                        .collect()
                })
                .collect(),
            rician_kappa: 10.0,
        };
        assemble_access_channels(&activity, &gains, &mp, &[0.0, 1e6], 4).unwrap()
    }

    fn coop() -> Vec<CooperationSet> {
        build_cooperation_sets(&build_hex_deployment(7, 86_600.0, 20_000.0, 4).unwrap(), 3).unwrap()
    }

    #[test]
    fn noiseless_single_device_is_rank_one() {
        let ch = toy_channels(vec![2], 5);
        let book: PilotBook<f64> = generate_pilots(5, 6, 2, false, &mut stage_rng(1, Stage::Pilots)).unwrap();
        let sets = coop();
        let frame = synthesize_received(&book, &ch, &sets, 0.0, &mut stage_rng(1, Stage::Noise)).unwrap();
        for (p, yp) in frame.y.iter().enumerate() {
            for (i, y) in yp.iter().enumerate() {
                let blocks: Vec<_> = sets[i].members.iter().map(|&m| ch.h[p][m].view()).collect();
                let row = concatenate(Axis(1), &blocks).unwrap().row(2).to_owned();
                let s = book.s[p].column(2);
                for r in 0..6 {
                    for c in 0..12 {
                        assert!((y[[r, c]] - s[r] * row[c]).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn silent_network_observes_zero() {
        let ch = toy_channels(vec![], 5);
        let book: PilotBook<f64> = generate_pilots(5, 6, 2, false, &mut stage_rng(1, Stage::Pilots)).unwrap();
        let frame = synthesize_received(&book, &ch, &coop(), 0.0, &mut stage_rng(1, Stage::Noise)).unwrap();
        assert!(frame
            .y
            .iter()
            .flatten()
            .all(|y| y.iter().all(|z| *z == C::new(0.0, 0.0))));
    }

    #[test]
    fn synthesis_is_linear_in_the_active_set() {
        let book: PilotBook<f64> = generate_pilots(5, 6, 2, false, &mut stage_rng(1, Stage::Pilots)).unwrap();
        let both = toy_channels(vec![1, 3], 5);
        let mut only_a = both.clone();
        let mut only_b = both.clone();
        for m in only_a.h.iter_mut().flatten() {
            m.row_mut(3).fill(C::new(0.0, 0.0));
        }
        for m in only_b.h.iter_mut().flatten() {
            m.row_mut(1).fill(C::new(0.0, 0.0));
        }
        let sets = coop();
        let syn = |ch: &AccessChannelSet<f64>| {
            synthesize_received(&book, ch, &sets, 0.0, &mut stage_rng(1, Stage::Noise)).unwrap()
        };
        let (fab, fa, fb) = (syn(&both), syn(&only_a), syn(&only_b));
        for ((ab, a), b) in fab
            .y
            .iter()
            .flatten()
            .zip(fa.y.iter().flatten())
            .zip(fb.y.iter().flatten())
        {
            for ((x, y), z) in ab.iter().zip(a.iter()).zip(b.iter()) {
                assert!((x - y - z).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_statistics_match_variance() {
        let ch = toy_channels(vec![0, 4], 5);
        let book: PilotBook<f64> =
            generate_pilots(5, 100, 2, false, &mut stage_rng(1, Stage::Pilots)).unwrap();
        let sets =
            build_cooperation_sets(&build_hex_deployment(7, 86_600.0, 20_000.0, 4).unwrap(), 7).unwrap();
        let nv = 0.37;
        let frame = synthesize_received(&book, &ch, &sets[..1], nv, &mut stage_rng(3, Stage::Noise)).unwrap();
        let clean =
            synthesize_received(&book, &ch, &sets[..1], 0.0, &mut stage_rng(3, Stage::Noise)).unwrap();
        // 2 subcarriers x 100 x 28 = 5600 entries per draw; repeat with fresh noise
        let mut acc = 0.0;
        let mut count = 0usize;
        let mut rng = stage_rng(4, Stage::Noise);
        for _ in 0..18 {
            let f = synthesize_received(&book, &ch, &sets[..1], nv, &mut rng).unwrap();
            for (y, c) in f.y.iter().flatten().zip(clean.y.iter().flatten()) {
                acc += frob_sq(&(y - c).view());
                count += y.len();
            }
        }
        assert!(count >= 100_000);
        let var = acc / count as f64;
        assert!((var - nv).abs() / nv < 0.02, "{var}");
        assert_eq!(frame.noise_var, nv);
        // noiseless reconstruction is exact
        for (p, yp) in clean.y.iter().enumerate() {
            let blocks: Vec<_> = sets[0].members.iter().map(|&m| ch.h[p][m].view()).collect();
            let h = concatenate(Axis(1), &blocks).unwrap();
            assert!(frob_sq(&(&yp[0] - &book.s[p].dot(&h)).view()) < 1e-24);
        }
    }

    #[test]
    fn membership_outside_channel_set_is_rejected() {
        let ch = toy_channels(vec![1], 5);
        let book: PilotBook<f64> = generate_pilots(5, 6, 2, false, &mut stage_rng(1, Stage::Pilots)).unwrap();
        let bad = vec![CooperationSet {
            anchor: 0,
            members: vec![0, 9],
        }];
        let err = synthesize_received(&book, &ch, &bad, 0.0, &mut stage_rng(1, Stage::Noise)).unwrap_err();
        assert!(matches!(err, Error::Synthesis(_)));
    }

    #[test]
    fn noise_calibration() {
        let g = LargeScaleGains {
            g: Array2::from_shape_fn((4, 2), |(k, b)| (1 + k + 4 * b) as f64),
        };
        let nv0 = calibrate_noise(0.0, &g, 16).unwrap();
        let mut snrs: Vec<f64> = g.g.iter().map(|x| x * 16.0 / nv0).collect();
        snrs.sort_by(|a, b| a.total_cmp(b));
        assert!(((snrs[3] + snrs[4]) / 2.0 - 1.0).abs() < 1e-9);
        let nv10 = calibrate_noise(10.0, &g, 16).unwrap();
        assert!((nv0 / nv10 - 10.0).abs() < 1e-12);
        let flat = LargeScaleGains {
            g: Array2::from_elem((3, 3), 2e-12),
        };
        assert!((calibrate_noise(10.0, &flat, 16).unwrap() - 16.0 * 2e-12 / 10.0).abs() < 1e-24);
        let empty = LargeScaleGains {
            g: Array2::zeros((0, 3)),
        };
        assert!(calibrate_noise(0.0, &empty, 16).is_err());
    }
}
