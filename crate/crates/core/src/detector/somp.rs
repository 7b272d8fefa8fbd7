//! Simultaneous orthogonal matching pursuit across all columns and
//! subcarriers.

use ndarray::{Array2, Axis};

use crate::linalg::{frob_sq, least_squares};
use crate::scalar::{Cx, Real};

/// An atom is kept only if it removes at least this many times the
/// residual energy per remaining degree of freedom.
const PLATEAU_FACTOR: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct SompOutcome<T: Real> {
    /// Selected dictionary columns, in selection order.
    pub support: Vec<usize>,
    /// Least-squares fit on the support, `K' x M` per subcarrier.
    pub x: Vec<Array2<Cx<T>>>,
    pub regularized: bool,
}

fn fit<T: Real>(
    y: &[Array2<Cx<T>>],
    s: &[Array2<Cx<T>>],
    support: &[usize],
) -> (Vec<Array2<Cx<T>>>, T, bool) {
    let mut energy = T::zero();
    let mut flagged = false;
    let coefs = y
        .iter()
        .zip(s)
        .map(|(yp, sp)| {
            let sub = sp.select(Axis(1), support);
            let (c, reg) = least_squares(&sub.view(), &yp.view());
            flagged |= reg;
            energy += frob_sq(&(yp - &sub.dot(&c)).view());
            c
        })
        .collect();
    (coefs, energy, flagged)
}

pub fn somp<T: Real>(y: &[Array2<Cx<T>>], s: &[Array2<Cx<T>>]) -> SompOutcome<T> {
    let (t, m) = y[0].dim();
    let k = s[0].ncols();
    let e0: T = y.iter().fold(T::zero(), |a, yp| a + frob_sq(&yp.view()));
    let col_pow: Vec<Vec<T>> = s
        .iter()
        .map(|sp| {
            sp.columns()
                .into_iter()
                .map(|c| {
                    c.iter()
                        .fold(T::zero(), |a, z| a + z.norm_sqr())
                        .max(T::min_positive_value())
                })
                .collect()
        })
        .collect();

    let mut support: Vec<usize> = Vec::new();
    let mut coefs: Vec<Array2<Cx<T>>> = Vec::new();
    let mut residual: Vec<Array2<Cx<T>>> = y.to_vec();
    let mut energy = e0;
    let mut regularized = false;
    let exact = e0 * T::lit(1e-20);

    while energy > exact && support.len() < k && support.len() + 1 < t {
        let mut score = vec![T::zero(); k];
        for (p, (rp, sp)) in residual.iter().zip(s).enumerate() {
            let corr = sp.t().mapv(|z| z.conj()).dot(rp);
            for (kk, row) in corr.rows().into_iter().enumerate() {
                score[kk] += row.iter().fold(T::zero(), |a, z| a + z.norm_sqr()) / col_pow[p][kk];
            }
        }
        let pick = (0..k)
            .filter(|c| !support.contains(c))
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if score[b] >= score[c] => Some(b),
                _ => Some(c),
            });
        let Some(pick) = pick else { break };
        let mut trial = support.clone();
        trial.push(pick);
        let (c, e_new, reg) = fit(y, s, &trial);
        let dof = T::lit((t - trial.len()) as f64);
        let gain = energy - e_new;
        if e_new > exact && gain < T::lit(PLATEAU_FACTOR) * e_new / dof {
            break;
        }
        support = trial;
        coefs = c;
        energy = e_new;
        regularized |= reg;
        residual = y
            .iter()
            .zip(s)
            .zip(&coefs)
            .map(|((yp, sp), cp)| yp - &sp.select(Axis(1), &support).dot(cp))
            .collect();
    }

    let x = (0..y.len())
        .map(|p| {
            let mut xp = Array2::zeros((k, m));
            for (i, &c) in support.iter().enumerate() {
                xp.row_mut(c).assign(&coefs[p].row(i));
            }
            xp
        })
        .collect();
    SompOutcome {
        support,
        x,
        regularized,
    }
}
