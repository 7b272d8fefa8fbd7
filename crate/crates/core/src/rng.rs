//! Deterministic seeding and per-stage random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::{Cx, Real};

/// Random stream type used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Independent draw stages within one trial. Each stage gets its own
/// ChaCha stream so that changing one dimension (pilot length, say) leaves
/// every other draw of the trial untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Devices = 1,
    Activity = 2,
    Channel = 3,
    Pilots = 4,
    Noise = 5,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based per-trial seed derived from the master seed and trial index.
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    mix64(master_seed ^ mix64(trial.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Stream for one stage of one trial.
pub fn stage_rng(seed: u64, stage: Stage) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Cx<T> {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cx::new(T::lit(s * re), T::lit(s * im))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn trial_streams_are_uncorrelated() {
        let draws: Vec<Vec<f64>> = (0..6)
            .map(|t| {
                let mut rng = stage_rng(trial_seed(42, t), Stage::Channel);
                (0..10_000).map(|_| rng.random::<f64>()).collect()
            })
            .collect();
        for i in 0..draws.len() {
            for j in (i + 1)..draws.len() {
                let rho = pearson(&draws[i], &draws[j]);
                assert!(rho.abs() < 0.05, "trials {i},{j}: rho = {rho}");
            }
        }
    }

    #[test]
    fn stages_differ_and_repeat() {
        let mut a = stage_rng(7, Stage::Pilots);
        let mut b = stage_rng(7, Stage::Noise);
        let mut c = stage_rng(7, Stage::Pilots);
        let xa: u64 = a.random();
        assert_ne!(xa, b.random::<u64>());
        assert_eq!(xa, c.random::<u64>());
    }

    #[test]
    fn complex_normal_has_requested_variance() {
        let mut rng = stage_rng(3, Stage::Noise);
        let n = 100_000;
        let p: f64 = (0..n)
            .map(|_| complex_normal::<f64, _>(&mut rng, 2.5).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((p - 2.5).abs() < 0.05, "{p}");
    }
}
