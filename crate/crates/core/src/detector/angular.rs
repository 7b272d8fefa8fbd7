//! Angular-domain refinement of channel estimates.

use ndarray::{s, Array2};

use crate::linalg::unitary_dft;
use crate::scalar::{Cx, Real};

/// For each listed device row and each `n_r`-wide HAP block: move to the
/// angular domain, zero every entry below `keep_ratio` times the block's
/// largest magnitude, and move back.
pub fn angular_refine<T: Real>(
    estimates: &mut [Array2<Cx<T>>],
    devices: &[usize],
    n_r: usize,
    keep_ratio: f64,
) {
    if keep_ratio <= 0.0 || devices.is_empty() || n_r == 0 {
        return;
    }
    let f = unitary_dft::<T>(n_r);
    let f_inv = f.t().mapv(|z| z.conj());
    let rho = T::lit(keep_ratio);
    for x in estimates.iter_mut() {
        let n_blocks = x.ncols() / n_r;
        for &k in devices {
            for b in 0..n_blocks {
                let mut block = x.slice_mut(s![k, b * n_r..(b + 1) * n_r]);
                let mut ang = block.dot(&f);
                let peak = ang.iter().fold(T::zero(), |a, z| a.max(z.norm()));
                let cut = rho * peak;
                let mut touched = false;
                for z in ang.iter_mut() {
                    if z.norm() < cut {
                        *z = Cx::new(T::zero(), T::zero());
                        touched = true;
                    }
                }
                if touched {
                    block.assign(&ang.dot(&f_inv));
                }
            }
        }
    }
}
