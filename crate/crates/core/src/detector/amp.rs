//! Approximate message passing with a row-sparse Bernoulli-Gaussian prior
//! and expectation-maximization hyperparameter learning.
//!
//! Each row `k` of every `X_p` (one per subcarrier) is nonzero with prior
//! probability `rho`; a nonzero row has CN(0, phi_{k,b}) entries in the
//! column block of HAP `b`. Activity is one event per device, so the
//! evidence is pooled over every antenna, HAP block and subcarrier before
//! the posterior `lambda_k` is formed. `rho`, `phi` and the noise variance
//! are learned by EM. The denoiser's effective noise is measured on the
//! Onsager-corrected residual of each HAP block rather than predicted, which
//! keeps the posterior calibrated when the hyperparameters are off.

use ndarray::{Array2, Axis, Zip};

use crate::linalg::{adjoint, frob_sq};
use crate::scalar::{Cx, Real};

/// Activity posterior below which a row is set to exactly zero.
const PRUNE_BELOW: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct AmpParams {
    pub max_iterations: usize,
    /// Weight of the new iterate, in (0, 1].
    pub damping: f64,
    /// Relative iterate change that counts as converged.
    pub tolerance: f64,
    /// Absolute lower bound on the per-entry noise seen by the denoiser.
    pub noise_floor: f64,
}

#[derive(Debug, Clone)]
pub struct AmpOutcome<T: Real> {
    /// Learned activity probability per dictionary column.
    pub lambda: Vec<T>,
    /// Posterior means, one `K' x M` matrix per subcarrier.
    pub x: Vec<Array2<Cx<T>>>,
    pub noise_var: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Stationarity score, iterate, posteriors and noise variance.
type Snapshot<T> = (T, Vec<Array2<Cx<T>>>, Vec<T>, T);

struct Hyper<T> {
    /// Prior activity probability shared by every device.
    rho: T,
    /// Posterior activity probability per device.
    lambda: Vec<T>,
    /// `phi[k * n_blocks + b]`
    phi: Vec<T>,
    sigma2: T,
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Runs EM-AMP on `y[p] = s[p] x[p] + noise` where the columns of `y[p]` are
/// grouped in blocks of `block` (one per HAP).
pub fn amp_em<T: Real>(
    y: &[Array2<Cx<T>>],
    s: &[Array2<Cx<T>>],
    block: usize,
    params: &AmpParams,
) -> AmpOutcome<T> {
    let n_sub = y.len();
    let (t, m) = y[0].dim();
    let k = s[0].ncols();
    let n_blocks = m / block.max(1);
    let zero_out = |converged| AmpOutcome {
        lambda: vec![T::zero(); k],
        x: (0..n_sub).map(|_| Array2::zeros((k, m))).collect(),
        noise_var: T::zero(),
        iterations: 0,
        converged,
    };

    let energy: T = y.iter().fold(T::zero(), |a, yp| a + frob_sq(&yp.view()));
    if k == 0 || !(energy > T::zero()) {
        return zero_out(true);
    }

    let tl = T::lit(t as f64);
    let entries = T::lit((t * m * n_sub) as f64);
    let per_entry = energy / entries;
    let sigma2_floor = (per_entry * T::epsilon() * T::lit(1e3)).max(T::lit(params.noise_floor));
    let tiny = per_entry * T::epsilon();

    let sh: Vec<Array2<Cx<T>>> = s.iter().map(|sp| adjoint(&sp.view())).collect();
    let col_pow: Vec<Vec<T>> = s
        .iter()
        .map(|sp| {
            sp.columns()
                .into_iter()
                .map(|c| {
                    c.iter()
                        .fold(T::zero(), |a, z| a + z.norm_sqr())
                        .max(T::epsilon())
                })
                .collect()
        })
        .collect();
    let mean_col_sum: T = col_pow
        .iter()
        .map(|c| c.iter().fold(T::zero(), |a, &x| a + x))
        .fold(T::zero(), |a, x| a + x)
        / T::lit(n_sub as f64);

    let lambda_min = T::lit(1e-9);
    let lambda_max = T::one() - T::lit(1e-9);
    let lambda0 = T::lit((t as f64 / (2.0 * k as f64)).clamp(1e-3, 0.5));
    let sigma2_0 = (per_entry * T::lit(0.5)).max(sigma2_floor);
    let mut hyper = Hyper {
        rho: lambda0,
        lambda: vec![lambda0; k],
        phi: vec![T::zero(); k * n_blocks],
        sigma2: sigma2_0,
    };
    for b in 0..n_blocks {
        let e_b = y
            .iter()
            .map(|yp| {
                yp.slice(ndarray::s![.., b * block..(b + 1) * block])
                    .iter()
                    .fold(T::zero(), |a, z| a + z.norm_sqr())
            })
            .fold(T::zero(), |a, x| a + x)
            / T::lit((t * block * n_sub) as f64);
        // a block weaker than the global noise guess still starts with half
        // of its excess over the known noise as signal; a zero slab could
        // never grow back under EM
        let known = T::lit(params.noise_floor);
        let excess = (e_b - sigma2_0).max((e_b - known) * T::lit(0.5));
        let phi_b = (excess.max(tiny) * tl / (lambda0 * mean_col_sum)).max(tiny);
        for kk in 0..k {
            hyper.phi[kk * n_blocks + b] = phi_b;
        }
    }

    let mut xhat: Vec<Array2<Cx<T>>> = (0..n_sub).map(|_| Array2::zeros((k, m))).collect();
    let mut vx: Vec<Array2<T>> = (0..n_sub)
        .map(|_| Array2::from_shape_fn((k, m), |(kk, mm)| lambda0 * hyper.phi[kk * n_blocks + mm / block]))
        .collect();
    let mut shat: Vec<Array2<Cx<T>>> = (0..n_sub).map(|_| Array2::zeros((t, m))).collect();
    let inv_c: Vec<Vec<T>> = col_pow
        .iter()
        .map(|c| c.iter().map(|&x| T::one() / x).collect())
        .collect();

    let beta = T::lit(params.damping.clamp(1e-3, 1.0));
    let keep = T::one() - beta;
    let tol2 = T::lit(params.tolerance * params.tolerance);

    let mut best: Option<Snapshot<T>> = None;
    let mut iterations = 0;
    let mut converged = false;

    // pseudo-observations r = x + CN(0, tau_r) and the output-side
    // variances w = tau_p + sigma^2, with tau_r = w / c_k
    let mut r_all = vec![Array2::<Cx<T>>::zeros((k, m)); n_sub];
    let mut w_all = vec![vec![T::zero(); m]; n_sub];
    let mut post = vec![T::zero(); k];
    let prune_below = T::lit(PRUNE_BELOW);
    let mut live: Vec<usize> = (0..k).collect();
    let mut s_live: Vec<Array2<Cx<T>>> = Vec::new();

    for it in 0..params.max_iterations.max(1) {
        iterations = it + 1;
        let mut noise_acc = T::zero();
        let sigma2 = hyper.sigma2;

        if live.len() != k {
            s_live = s.iter().map(|sp| sp.select(Axis(1), &live)).collect();
        }
        for p in 0..n_sub {
            let cp = &col_pow[p];
            // output variances, uniform over rows
            let mut tau_p = vec![T::zero(); m];
            for (row, &c) in vx[p].rows().into_iter().zip(cp) {
                for (tp, &v) in tau_p.iter_mut().zip(row) {
                    *tp += c * v;
                }
            }
            for tp in tau_p.iter_mut() {
                *tp /= tl;
            }

            let sx = if live.len() == k {
                s[p].dot(&xhat[p])
            } else {
                s_live[p].dot(&xhat[p].select(Axis(0), &live))
            };
            let mut resid = Array2::<Cx<T>>::zeros((t, m));
            let mut block_energy = vec![T::zero(); n_blocks];
            for ((((rz, &sxv), &yv), sh_o), c) in resid
                .iter_mut()
                .zip(sx.iter())
                .zip(y[p].iter())
                .zip(shat[p].iter())
                .zip((0..m).cycle())
            {
                *rz = yv - sxv + *sh_o * tau_p[c];
                block_energy[c / block] += rz.norm_sqr();
                // posterior of z = S x under the AWGN output channel
                let shrink = sigma2 / (tau_p[c] + sigma2);
                noise_acc += rz.norm_sqr() * shrink * shrink + tau_p[c] * shrink;
            }
            // effective noise measured on the corrected residual, per HAP block
            let w = &mut w_all[p];
            let per_block = T::lit((t * block) as f64);
            for (c, wm) in w.iter_mut().enumerate() {
                *wm = (block_energy[c / block] / per_block).max(sigma2_floor);
            }
            let first = it == 0;
            for ((sh_o, &rz), c) in shat[p].iter_mut().zip(resid.iter()).zip((0..m).cycle()) {
                let s_next = rz / w[c];
                *sh_o = if first {
                    s_next
                } else {
                    s_next * beta + *sh_o * keep
                };
            }

            let q = sh[p].dot(&shat[p]);
            let ic = &inv_c[p];
            Zip::indexed(&mut r_all[p])
                .and(&xhat[p])
                .and(&q)
                .for_each(|(kk, mm), r, &x, &qv| {
                    *r = x + qv * (w[mm] * ic[kk]);
                });
        }

        // device activity: evidence pooled over antennas, HAPs and subcarriers
        let logit_prior = (hyper.rho / (T::one() - hyper.rho)).ln();
        for (kk, pk) in post.iter_mut().enumerate() {
            let phis = &hyper.phi[kk * n_blocks..(kk + 1) * n_blocks];
            let mut llr = logit_prior;
            for p in 0..n_sub {
                let ick = inv_c[p][kk];
                let row = r_all[p].row(kk);
                let mut ratio = T::one();
                for (mm, (rv, &wm)) in row.iter().zip(&w_all[p]).enumerate() {
                    let phi = phis[mm / block];
                    let tau_r = wm * ick;
                    let tot = phi + tau_r;
                    llr += rv.norm_sqr() * phi / (tau_r * tot);
                    // fold four log terms into one
                    ratio *= tot / tau_r;
                    if mm % 4 == 3 {
                        llr -= ratio.ln();
                        ratio = T::one();
                    }
                }
                llr -= ratio.ln();
            }
            *pk = sigmoid(llr);
        }

        let mut phi_num = vec![T::zero(); k * n_blocks];
        let mut phi_den = vec![T::zero(); k * n_blocks];
        let mut change = T::zero();
        let mut norm = T::zero();
        for p in 0..n_sub {
            let w = &w_all[p];
            for kk in 0..k {
                let pi = post[kk];
                let ick = inv_c[p][kk];
                let base = kk * n_blocks;
                let mut xrow = xhat[p].row_mut(kk);
                let mut vrow = vx[p].row_mut(kk);
                let rrow = r_all[p].row(kk);
                // rows the posterior has written off are pruned to exact zeros
                let prune = pi < prune_below;
                for (mm, ((x, v), rv)) in xrow.iter_mut().zip(vrow.iter_mut()).zip(rrow).enumerate() {
                    let b = mm / block;
                    let phi = hyper.phi[base + b];
                    let tau_r = w[mm] * ick;
                    let gain = phi / (phi + tau_r);
                    let mu = *rv * gain;
                    let second = mu.norm_sqr() + tau_r * gain;
                    let xm = mu * pi;
                    let vm = (pi * second - xm.norm_sqr()).max(T::zero());
                    phi_num[base + b] += pi * second;
                    phi_den[base + b] += pi;
                    let upd = if prune {
                        Cx::new(T::zero(), T::zero())
                    } else if it == 0 {
                        xm
                    } else {
                        xm * beta + *x * keep
                    };
                    change += (upd - *x).norm_sqr();
                    norm += upd.norm_sqr();
                    *x = upd;
                    *v = if it == 0 { vm } else { vm * beta + *v * keep };
                }
            }
        }

        hyper.lambda.clone_from(&post);
        let next_live: Vec<usize> = (0..k).filter(|&kk| post[kk] >= prune_below).collect();
        if next_live != live {
            live = next_live;
        }
        // keep the most nearly stationary iterate in case the budget runs out
        let rel = if norm > T::zero() {
            change / norm
        } else {
            T::zero()
        };
        if best.as_ref().is_none_or(|(r, ..)| rel < *r) {
            best = Some((rel, xhat.clone(), post.clone(), hyper.sigma2));
        }

        // EM hyperparameter updates
        let mean_post = post.iter().fold(T::zero(), |a, &l| a + l) / T::lit(k as f64);
        hyper.rho = mean_post.max(lambda_min).min(lambda_max);
        // only rows the posterior calls active re-estimate their slab
        // variance; a near-empty row would otherwise learn to fit noise
        let min_weight = T::lit(0.5 * (block * n_sub) as f64);
        for (i, phi) in hyper.phi.iter_mut().enumerate() {
            if phi_den[i] >= min_weight {
                *phi = (phi_num[i] / phi_den[i]).max(tiny);
            }
        }
        hyper.sigma2 = (noise_acc / entries).max(sigma2_floor);

        if change <= tol2 * norm {
            converged = true;
            break;
        }
    }

    if converged {
        // report the posterior activity of the final sweep, unclamped
        AmpOutcome {
            lambda: hyper.lambda,
            x: xhat,
            noise_var: hyper.sigma2,
            iterations,
            converged,
        }
    } else {
        let (_, x, lambda, sigma2) = best.expect("at least one iteration ran");
        AmpOutcome {
            lambda,
            x,
            noise_var: sigma2,
            iterations,
            converged,
        }
    }
}
