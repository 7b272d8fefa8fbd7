//! Sporadic activity, large-scale gains and multipath access channels.
//!
//! Each active device reaches each HAP over an `L`-path geometric channel:
//! a Rician line-of-sight path whose angle follows the device azimuth, plus
//! `L - 1` scattered paths. The HAP carries a half-wavelength uniform linear
//! array along the ground-plane y axis, so a path at azimuth `theta`
//! (measured from the x axis) contributes the steering vector
//! `a_n = exp(j pi n sin theta)`.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::{Array1, Array2};
use num_traits::Zero;
use rand::Rng;

use crate::error::{config_err, ensure_dim, Result};
use crate::linalg::unitary_dft;
use crate::rng::{complex_normal, SimRng};
use crate::scalar::{Cx, Real};
use crate::topology::{HapNode, NetworkTopology};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rician factors at or above this value are treated as pure line of sight.
pub const KAPPA_LOS_ONLY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityPattern {
    /// Active device ids, ascending.
    pub active_set: Vec<usize>,
    pub k_total: usize,
}

impl ActivityPattern {
    pub fn new(mut active_set: Vec<usize>, k_total: usize) -> Result<Self> {
        active_set.sort_unstable();
        active_set.dedup();
        if let Some(&k) = active_set.last() {
            if k >= k_total {
                return Err(config_err(format!("active device {k} out of range 0..{k_total}")));
            }
        }
        Ok(Self { active_set, k_total })
    }

    pub fn k_active(&self) -> usize {
        self.active_set.len()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active_set.binary_search(&k).is_ok()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.k_total];
        for &k in &self.active_set {
            m[k] = true;
        }
        m
    }
}

/// Uniformly random `k_a`-subset of `0..k`.
pub fn draw_activity(k: usize, k_a: usize, rng: &mut SimRng) -> Result<ActivityPattern> {
    if k_a > k {
        return Err(config_err(format!(
            "active count K_a = {k_a} exceeds device count K = {k}"
        )));
    }
    let active = rand::seq::index::sample(rng, k, k_a).into_vec();
    ActivityPattern::new(active, k)
}

/// Free-space power gain `(c / (4 pi d f))^2`.
pub fn free_space_gain(distance: f64, carrier_freq: f64) -> f64 {
    (SPEED_OF_LIGHT / (4.0 * PI * distance * carrier_freq)).powi(2)
}

/// Linear power gain per (device, HAP).
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleGains {
    pub g: Array2<f64>,
}

impl LargeScaleGains {
    pub fn free_space(topology: &NetworkTopology, carrier_freq: f64) -> Self {
        let g = Array2::from_shape_fn((topology.n_devices(), topology.n_haps()), |(k, b)| {
            free_space_gain(
                topology.haps[b].slant_range(topology.device_positions[k]),
                carrier_freq,
            )
        });
        Self { g }
    }

    pub fn n_devices(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_haps(&self) -> usize {
        self.g.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Cx<f64>,
    pub delay_s: f64,
    pub angle_rad: f64,
}

/// Paths of one (device, HAP) link; index 0 is the line-of-sight path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Line-of-sight power fraction for `l_paths` paths at Rician factor `kappa`.
pub fn los_power_fraction(l_paths: usize, kappa: f64) -> f64 {
    if l_paths <= 1 || kappa >= KAPPA_LOS_ONLY {
        1.0
    } else {
        kappa / (kappa + 1.0)
    }
}

/// Draws the paths between a ground device and one HAP.
///
/// Scattered paths arrive `U[0, max_delay]` after the direct path, at
/// azimuths uniform on `[-pi/2, pi/2)`, and split the non-LoS power equally.
pub fn draw_multipath(
    device: [f64; 2],
    hap: &HapNode,
    l_paths: usize,
    kappa: f64,
    max_delay: f64,
    rng: &mut SimRng,
) -> PathSet {
    let l_paths = l_paths.max(1);
    let los_power = los_power_fraction(l_paths, kappa);
    let dx = device[0] - hap.position[0];
    let dy = device[1] - hap.position[1];
    let los_delay = hap.slant_range(device) / SPEED_OF_LIGHT;
    let phase = 2.0 * PI * rng.random::<f64>();
    let mut paths = Vec::with_capacity(l_paths);
    paths.push(Path {
        gain: Cx::from_polar(los_power.sqrt(), phase),
        delay_s: los_delay,
        angle_rad: dy.atan2(dx),
    });
    let nlos_var = (1.0 - los_power) / (l_paths - 1).max(1) as f64;
    for _ in 1..l_paths {
        let angle = PI * (rng.random::<f64>() - 0.5);
        let delay = los_delay + max_delay * rng.random::<f64>();
        paths.push(Path {
            gain: complex_normal(rng, nlos_var),
            delay_s: delay,
            angle_rad: angle,
        });
    }
    PathSet { paths }
}

/// Path sets for the active devices only, `paths[i][b]` for `devices[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathSet {
    pub devices: Vec<usize>,
    pub paths: Vec<Vec<PathSet>>,
    pub rician_kappa: f64,
}

impl MultipathSet {
    pub fn draw(
        topology: &NetworkTopology,
        activity: &ActivityPattern,
        l_paths: usize,
        kappa: f64,
        max_delay: f64,
        rng: &mut SimRng,
    ) -> Self {
        let paths = activity
            .active_set
            .iter()
            .map(|&k| {
                topology
                    .haps
                    .iter()
                    .map(|h| draw_multipath(topology.device_positions[k], h, l_paths, kappa, max_delay, rng))
                    .collect()
            })
            .collect();
        Self {
            devices: activity.active_set.clone(),
            paths,
            rician_kappa: kappa,
        }
    }
}

/// Half-wavelength ULA response, unit-modulus entries.
pub fn steering_vector<T: Real>(angle_rad: f64, n: usize) -> Array1<Cx<T>> {
    let u = PI * angle_rad.sin();
    Array1::from_shape_fn(n, |i| {
        let ph = u * i as f64;
        Cx::new(T::lit(ph.cos()), T::lit(ph.sin()))
    })
}

/// Activity-masked channel matrices `h[p][b]` (K x N_r) per pilot
/// subcarrier and HAP. Rows of inactive devices are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessChannelSet<T: Real> {
    pub h: Vec<Vec<Array2<Cx<T>>>>,
    /// Baseband offsets of the pilot subcarriers, Hz.
    pub subcarrier_freqs: Vec<f64>,
}

impl<T: Real> AccessChannelSet<T> {
    pub fn zeros(k: usize, n_haps: usize, n_r: usize, subcarrier_freqs: Vec<f64>) -> Self {
        let h = subcarrier_freqs
            .iter()
            .map(|_| (0..n_haps).map(|_| Array2::zeros((k, n_r))).collect())
            .collect();
        Self { h, subcarrier_freqs }
    }

    pub fn n_subcarriers(&self) -> usize {
        self.h.len()
    }

    pub fn n_haps(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    pub fn n_devices(&self) -> usize {
        self.h.first().and_then(|v| v.first()).map_or(0, |m| m.nrows())
    }

    pub fn n_antennas(&self) -> usize {
        self.h.first().and_then(|v| v.first()).map_or(0, |m| m.ncols())
    }

    /// Devices with a nonzero row in any block.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_devices())
            .filter(|&k| {
                self.h
                    .iter()
                    .flatten()
                    .any(|m| m.row(k).iter().any(|z| !z.is_zero()))
            })
            .collect()
    }

    pub fn energy(&self) -> T {
        self.h
            .iter()
            .flatten()
            .fold(T::zero(), |acc, m| acc + crate::linalg::frob_sq(&m.view()))
    }

    /// Right-multiplies every block by the unitary DFT.
    pub fn to_angular(&self) -> Self {
        self.map_blocks(&unitary_dft::<T>(self.n_antennas()))
    }

    /// Inverse of [`Self::to_angular`].
    pub fn from_angular(&self) -> Self {
        let f = unitary_dft::<T>(self.n_antennas()).mapv(|z| z.conj());
        self.map_blocks(&f.t().to_owned())
    }

    fn map_blocks(&self, f: &Array2<Cx<T>>) -> Self {
        Self {
            h: self
                .h
                .iter()
                .map(|row| row.iter().map(|m| m.dot(f)).collect())
                .collect(),
            subcarrier_freqs: self.subcarrier_freqs.clone(),
        }
    }

    /// `device,hap,subcarrier,antenna,re,im` for every nonzero entry row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "device,hap,subcarrier,antenna,re,im")?;
        let support = self.support();
        for &k in &support {
            for (b, _) in self.h[0].iter().enumerate() {
                for p in 0..self.n_subcarriers() {
                    for (n, z) in self.h[p][b].row(k).iter().enumerate() {
                        writeln!(w, "{k},{b},{p},{n},{:e},{:e}", z.re.as_f64(), z.im.as_f64())?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds `h[p][b]` rows `sqrt(g) * sum_l gain_l exp(-j 2 pi f_p tau_l) a(theta_l)`.
pub fn assemble_access_channels<T: Real>(
    activity: &ActivityPattern,
    gains: &LargeScaleGains,
    multipath: &MultipathSet,
    subcarrier_freqs: &[f64],
    n_antennas: usize,
) -> Result<AccessChannelSet<T>> {
    let k = activity.k_total;
    let n_haps = gains.n_haps();
    ensure_dim("large-scale gains (devices)", k, gains.n_devices())?;
    ensure_dim("multipath devices", activity.k_active(), multipath.devices.len())?;
    if multipath.devices != activity.active_set {
        return Err(config_err("multipath set does not match the active set"));
    }
    let mut set = AccessChannelSet::zeros(k, n_haps, n_antennas, subcarrier_freqs.to_vec());
    for (i, &dev) in multipath.devices.iter().enumerate() {
        ensure_dim("multipath HAPs", n_haps, multipath.paths[i].len())?;
        for b in 0..n_haps {
            let amp = gains.g[[dev, b]].sqrt();
            let steer: Vec<Array1<Cx<f64>>> = multipath.paths[i][b]
                .paths
                .iter()
                .map(|p| steering_vector::<f64>(p.angle_rad, n_antennas))
                .collect();
            for (p, &f) in subcarrier_freqs.iter().enumerate() {
                let mut row = Array1::<Cx<f64>>::zeros(n_antennas);
                for (path, a) in multipath.paths[i][b].paths.iter().zip(&steer) {
                    let coeff = amp * path.gain * Cx::from_polar(1.0, -2.0 * PI * f * path.delay_s);
                    row.scaled_add(coeff, a);
                }
                set.h[p][b]
                    .row_mut(dev)
                    .assign(&row.mapv(|z| Cx::new(T::lit(z.re), T::lit(z.im))));
            }
        }
    }
    Ok(set)
}
