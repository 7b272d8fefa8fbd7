//! Least squares on a known support: the genie-aided reference estimator.

use ndarray::{Array2, Axis};

use crate::airframe::PilotBook;
use crate::linalg::{adjoint, hpd_inverse, least_squares};
use crate::scalar::{Cx, Real};

#[derive(Debug, Clone)]
pub struct LsEstimate<T: Real> {
    /// `K x M` per subcarrier, zero off the support.
    pub estimates: Vec<Array2<Cx<T>>>,
    /// Set when some pilot submatrix was rank-deficient and a ridge was used.
    pub regularized: bool,
}

/// Per-subcarrier least squares restricted to the `support` columns.
pub fn oracle_ls<T: Real>(
    observations: &[Array2<Cx<T>>],
    pilots: &PilotBook<T>,
    support: &[usize],
) -> LsEstimate<T> {
    let k = pilots.n_devices();
    let mut regularized = false;
    let estimates = observations
        .iter()
        .zip(&pilots.s)
        .map(|(y, s)| {
            let mut x = Array2::zeros((k, y.ncols()));
            if !support.is_empty() {
                let sub = s.select(Axis(1), support);
                let (c, reg) = least_squares(&sub.view(), &y.view());
                regularized |= reg;
                for (i, &dev) in support.iter().enumerate() {
                    x.row_mut(dev).assign(&c.row(i));
                }
            }
            x
        })
        .collect();
    LsEstimate {
        estimates,
        regularized,
    }
}

/// Expected squared error of [`oracle_ls`] summed over subcarriers:
/// `sum_p noise_var * columns * trace((S_A^H S_A)^{-1})`.
pub fn ls_expected_error<T: Real>(
    pilots: &PilotBook<T>,
    support: &[usize],
    noise_var: f64,
    columns: usize,
) -> Option<f64> {
    let mut total = 0.0;
    for s in &pilots.s {
        let sub = s.select(Axis(1), support);
        let gram = adjoint(&sub.view()).dot(&sub);
        let inv = hpd_inverse(&gram.view())?;
        let tr: f64 = (0..support.len()).map(|i| inv[[i, i]].re.as_f64()).sum();
        total += noise_var * columns as f64 * tr;
    }
    Some(total)
}
