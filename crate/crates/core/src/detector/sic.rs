//! Successive interference cancellation state.

use ndarray::{Array2, Axis};

use crate::airframe::PilotBook;
use crate::linalg::frob_sq;
use crate::scalar::{Cx, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub cancelled: usize,
    /// Residual energy after this round's cancellation.
    pub residual_energy: f64,
    pub module_a_iterations: usize,
    pub module_a_converged: bool,
}

#[derive(Debug, Clone)]
pub struct DetectionState<T: Real> {
    /// Residual observations per subcarrier.
    pub residual: Vec<Array2<Cx<T>>>,
    /// Devices still in the dictionary.
    pub remaining: Vec<bool>,
    /// Cancelled devices, in cancellation order.
    pub detected: Vec<usize>,
    /// `K x M` per subcarrier; rows filled for cancelled devices.
    pub estimates: Vec<Array2<Cx<T>>>,
    pub rounds: Vec<RoundLog>,
}

impl<T: Real> DetectionState<T> {
    pub fn new(observations: &[Array2<Cx<T>>], k: usize, dictionary: &[usize]) -> Self {
        let m = observations.first().map_or(0, |y| y.ncols());
        let mut remaining = vec![false; k];
        for &d in dictionary {
            remaining[d] = true;
        }
        Self {
            residual: observations.to_vec(),
            remaining,
            detected: Vec::new(),
            estimates: observations.iter().map(|_| Array2::zeros((k, m))).collect(),
            rounds: Vec::new(),
        }
    }

    pub fn remaining_ids(&self) -> Vec<usize> {
        self.remaining
            .iter()
            .enumerate()
            .filter(|&(_, &r)| r)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn residual_energy(&self) -> f64 {
        self.residual.iter().map(|r| frob_sq(&r.view()).as_f64()).sum()
    }
}

/// Subtracts the reliable devices' reconstructed signal from the residual
/// and moves them from the dictionary to the detected set.
///
/// `estimates[p]` holds `K x M` rows; only the rows of `reliable` are read.
pub fn module_c_sic<T: Real>(
    state: &mut DetectionState<T>,
    reliable: &[usize],
    estimates: &[Array2<Cx<T>>],
    pilots: &PilotBook<T>,
) {
    let reliable: Vec<usize> = reliable
        .iter()
        .copied()
        .filter(|&k| {
            debug_assert!(state.remaining[k], "device {k} is not in the dictionary");
            state.remaining[k]
        })
        .collect();
    if reliable.is_empty() {
        return;
    }
    for ((res, s), (est, keep)) in state
        .residual
        .iter_mut()
        .zip(&pilots.s)
        .zip(estimates.iter().zip(state.estimates.iter_mut()))
    {
        let rows = est.select(Axis(0), &reliable);
        *res -= &s.select(Axis(1), &reliable).dot(&rows);
        for (i, &k) in reliable.iter().enumerate() {
            keep.row_mut(k).assign(&rows.row(i));
        }
    }
    for &k in &reliable {
        state.remaining[k] = false;
        state.detected.push(k);
    }
}
