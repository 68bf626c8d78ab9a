//! Batch normalization over the channel axis of `[N, C, H, W]` tensors.
//!
//! Training mode normalizes with biased batch statistics over `(N, H, W)`
//! per channel and updates the running statistics as
//! `running = momentum * running + (1 - momentum) * batch`; evaluation mode
//! normalizes with the running statistics. Defaults match the framework the
//! reference models were trained in: `eps = 1e-3`, `momentum = 0.99`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

pub const BN_EPS: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct BnCache<E: Elem> {
    /// Normalized activations (before scale and shift).
    pub x_hat: Tensor<E>,
    /// Per-channel `1 / sqrt(var + eps)` used by the forward pass.
    pub inv_std: Vec<E>,
    /// Whether batch statistics (true) or running statistics (false) were used.
    pub train: bool,
}

fn check_channels<E: Elem>(input: &Tensor<E>, len: usize, what: &str) -> Result<usize> {
    let (_, c, _, _) = input.dims4()?;
    if len != c {
        return Err(Error::ShapeMismatch(format!(
            "batchnorm {what} has length {len}, input has {c} channels"
        )));
    }
    Ok(c)
}

/// Forward pass. In training mode `running_mean` / `running_var` are updated
/// in place. Before any update they hold the documented init (mean 0, var 1).
#[allow(clippy::too_many_arguments)]
pub fn batchnorm<E: Elem>(
    input: &Tensor<E>,
    gamma: &[E],
    beta: &[E],
    running_mean: &mut [E],
    running_var: &mut [E],
    train: bool,
) -> Result<(Tensor<E>, BnCache<E>)> {
    let c = check_channels(input, gamma.len(), "gamma")?;
    check_channels(input, beta.len(), "beta")?;
    check_channels(input, running_mean.len(), "running_mean")?;
    check_channels(input, running_var.len(), "running_var")?;
    let (n, _, h, w) = input.dims4()?;
    let plane = h * w;
    let count = (n * plane) as f64;
    let x = input.data();

    let (mean, var): (Vec<E>, Vec<E>) = if train {
        let mut mean = vec![E::zero(); c];
        for img in 0..n {
            for (ch, m) in mean.iter_mut().enumerate() {
                let s = &x[(img * c + ch) * plane..(img * c + ch + 1) * plane];
                let mut acc = E::zero();
                for &v in s {
                    acc = acc + v;
                }
                *m = *m + acc;
            }
        }
        let inv_count = E::from_f64(1.0 / count);
        for m in &mut mean {
            *m = *m * inv_count;
        }
        let mut var = vec![E::zero(); c];
        for img in 0..n {
            for (ch, vv) in var.iter_mut().enumerate() {
                let mu = mean[ch];
                let s = &x[(img * c + ch) * plane..(img * c + ch + 1) * plane];
                let mut acc = E::zero();
                for &v in s {
                    let d = v - mu;
                    acc = acc + d * d;
                }
                *vv = *vv + acc;
            }
        }
        for v in &mut var {
            *v = *v * inv_count;
        }
        let mom = E::from_f64(BN_MOMENTUM);
        let one_m = E::from_f64(1.0 - BN_MOMENTUM);
        for ch in 0..c {
            running_mean[ch] = mom * running_mean[ch] + one_m * mean[ch];
            running_var[ch] = mom * running_var[ch] + one_m * var[ch];
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };

    let eps = E::from_f64(BN_EPS);
    let inv_std: Vec<E> = var.iter().map(|&v| E::one() / (v + eps).sqrt()).collect();

    let mut x_hat = Tensor::zeros(input.shape())?;
    let mut out = Tensor::zeros(input.shape())?;
    let per_img = c * plane;
    x_hat
        .data_mut()
        .par_chunks_mut(per_img)
        .zip(out.data_mut().par_chunks_mut(per_img))
        .enumerate()
        .for_each(|(img, (xh_n, out_n))| {
            let x_n = &x[img * per_img..(img + 1) * per_img];
            for ch in 0..c {
                let (mu, istd, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                for i in ch * plane..(ch + 1) * plane {
                    let xh = (x_n[i] - mu) * istd;
                    xh_n[i] = xh;
                    out_n[i] = g * xh + b;
                }
            }
        });
    Ok((out, BnCache { x_hat, inv_std, train }))
}

/// Gradients with respect to the input, gamma and beta.
pub fn batchnorm_backward<E: Elem>(
    cache: &BnCache<E>,
    gamma: &[E],
    d_out: &Tensor<E>,
) -> Result<(Tensor<E>, Vec<E>, Vec<E>)> {
    let (n, c, h, w) = d_out.dims4()?;
    if cache.x_hat.shape() != d_out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "cache shape {:?} vs upstream gradient shape {:?}",
            cache.x_hat.shape(),
            d_out.shape()
        )));
    }
    let plane = h * w;
    let per_img = c * plane;
    let count = E::from_f64((n * plane) as f64);
    let dy = d_out.data();
    let xh = cache.x_hat.data();

    let mut d_beta = vec![E::zero(); c];
    let mut d_gamma = vec![E::zero(); c];
    for img in 0..n {
        for ch in 0..c {
            let lo = (img * c + ch) * plane;
            let mut sb = E::zero();
            let mut sg = E::zero();
            for i in lo..lo + plane {
                sb = sb + dy[i];
                sg = sg + dy[i] * xh[i];
            }
            d_beta[ch] = d_beta[ch] + sb;
            d_gamma[ch] = d_gamma[ch] + sg;
        }
    }

    let mut d_input = Tensor::zeros(d_out.shape())?;
    if cache.train {
        d_input
            .data_mut()
            .par_chunks_mut(per_img)
            .enumerate()
            .for_each(|(img, dx_n)| {
                for ch in 0..c {
                    let scale = gamma[ch] * cache.inv_std[ch];
                    let mean_dy = d_beta[ch] / count;
                    let mean_dy_xh = d_gamma[ch] / count;
                    let lo = (img * c + ch) * plane;
                    for i in 0..plane {
                        let j = lo + i;
                        dx_n[ch * plane + i] =
                            scale * (dy[j] - mean_dy - xh[j] * mean_dy_xh);
                    }
                }
            });
    } else {
        // Running statistics are constants in eval mode.
        d_input
            .data_mut()
            .par_chunks_mut(per_img)
            .enumerate()
            .for_each(|(img, dx_n)| {
                for ch in 0..c {
                    let scale = gamma[ch] * cache.inv_std[ch];
                    let lo = (img * c + ch) * plane;
                    for i in 0..plane {
                        dx_n[ch * plane + i] = scale * dy[lo + i];
                    }
                }
            });
    }
    Ok((d_input, d_gamma, d_beta))
}
