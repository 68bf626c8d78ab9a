//! Depthwise convolution with a depth multiplier.
//!
//! Filters have layout `[M, delta, k, k]`: input channel `m` is convolved
//! with `delta` independent filters, producing output channels `m * delta + d`
//! for `d in 0..delta`. That channel order is normative; checkpoints and the
//! pointwise layer that follows both rely on it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ops::conv::{same_out, same_pad_before};
use crate::tensor::{Elem, Tensor};

fn dw_dims<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, m, h, w) = input.dims4()?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[2] != ws[3] {
        return Err(Error::ShapeMismatch(format!(
            "depthwise weights must be [M, delta, k, k], got {ws:?}"
        )));
    }
    if ws[0] != m {
        return Err(Error::ShapeMismatch(format!(
            "depthwise channel mismatch: input has {m} channels, weights expect {}",
            ws[0]
        )));
    }
    Ok((n, m, h, w, ws[1], ws[2]))
}

/// Depthwise convolution: `input [N, M, H, W] x weights [M, delta, k, k]`
/// with same padding, producing `[N, M * delta, H', W']`.
pub fn depthwise_conv2d<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: usize,
) -> Result<Tensor<E>> {
    if stride != 1 && stride != 2 {
        return Err(Error::InvalidArgument(format!(
            "depthwise stride must be 1 or 2, got {stride}"
        )));
    }
    let (n, m, h, w, delta, k) = dw_dims(input, weights)?;
    let (oh, ow) = (same_out(h, stride), same_out(w, stride));
    let (ph, pw) = (same_pad_before(h, k, stride), same_pad_before(w, k, stride));
    let mut out = Tensor::zeros(&[n, m * delta, oh, ow])?;
    let in_per = m * h * w;
    let out_per = m * delta * oh * ow;
    let x = input.data();
    let wt = weights.data();
    out.data_mut()
        .par_chunks_mut(out_per)
        .enumerate()
        .for_each(|(img, out_n)| {
            let x_n = &x[img * in_per..(img + 1) * in_per];
            for ch in 0..m {
                let x_c = &x_n[ch * h * w..(ch + 1) * h * w];
                for d in 0..delta {
                    let f = &wt[(ch * delta + d) * k * k..(ch * delta + d + 1) * k * k];
                    let o = &mut out_n[(ch * delta + d) * oh * ow..(ch * delta + d + 1) * oh * ow];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = E::zero();
                            for kh in 0..k {
                                let iy = (oy * stride + kh).wrapping_sub(ph);
                                if iy >= h {
                                    continue;
                                }
                                for kw in 0..k {
                                    let ix = (ox * stride + kw).wrapping_sub(pw);
                                    if ix < w {
                                        acc = acc + f[kh * k + kw] * x_c[iy * w + ix];
                                    }
                                }
                            }
                            o[oy * ow + ox] = acc;
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Gradients of [`depthwise_conv2d`] with respect to input and weights.
pub fn depthwise_conv2d_backward<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: usize,
    d_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let (n, m, h, w, delta, k) = dw_dims(input, weights)?;
    let (oh, ow) = (same_out(h, stride), same_out(w, stride));
    if d_out.shape() != [n, m * delta, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient shape {:?}, expected {:?}",
            d_out.shape(),
            [n, m * delta, oh, ow]
        )));
    }
    let (ph, pw) = (same_pad_before(h, k, stride), same_pad_before(w, k, stride));
    let in_per = m * h * w;
    let out_per = m * delta * oh * ow;
    let x = input.data();
    let wt = weights.data();
    let dy = d_out.data();

    let mut d_input = Tensor::zeros(input.shape())?;
    d_input
        .data_mut()
        .par_chunks_mut(in_per)
        .enumerate()
        .for_each(|(img, dx_n)| {
            let dy_n = &dy[img * out_per..(img + 1) * out_per];
            for ch in 0..m {
                let dx_c = &mut dx_n[ch * h * w..(ch + 1) * h * w];
                for d in 0..delta {
                    let f = &wt[(ch * delta + d) * k * k..(ch * delta + d + 1) * k * k];
                    let g = &dy_n[(ch * delta + d) * oh * ow..(ch * delta + d + 1) * oh * ow];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let up = g[oy * ow + ox];
                            for kh in 0..k {
                                let iy = (oy * stride + kh).wrapping_sub(ph);
                                if iy >= h {
                                    continue;
                                }
                                for kw in 0..k {
                                    let ix = (ox * stride + kw).wrapping_sub(pw);
                                    if ix < w {
                                        dx_c[iy * w + ix] =
                                            dx_c[iy * w + ix] + up * f[kh * k + kw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });

    let imgs: Vec<usize> = (0..n).collect();
    let chunk = n.div_ceil(rayon::current_num_threads().max(1)).max(1);
    let partials: Vec<Vec<E>> = imgs
        .par_chunks(chunk)
        .map(|chunk_imgs| {
            let mut dw = vec![E::zero(); m * delta * k * k];
            for &img in chunk_imgs {
                let x_n = &x[img * in_per..(img + 1) * in_per];
                let dy_n = &dy[img * out_per..(img + 1) * out_per];
                for ch in 0..m {
                    let x_c = &x_n[ch * h * w..(ch + 1) * h * w];
                    for d in 0..delta {
                        let g = &dy_n[(ch * delta + d) * oh * ow..(ch * delta + d + 1) * oh * ow];
                        let fw = &mut dw[(ch * delta + d) * k * k..(ch * delta + d + 1) * k * k];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let up = g[oy * ow + ox];
                                for kh in 0..k {
                                    let iy = (oy * stride + kh).wrapping_sub(ph);
                                    if iy >= h {
                                        continue;
                                    }
                                    for kw in 0..k {
                                        let ix = (ox * stride + kw).wrapping_sub(pw);
                                        if ix < w {
                                            fw[kh * k + kw] =
                                                fw[kh * k + kw] + up * x_c[iy * w + ix];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dw
        })
        .collect();
    let mut d_weights = Tensor::zeros(weights.shape())?;
    for p in partials {
        for (d, s) in d_weights.data_mut().iter_mut().zip(p) {
            *d = *d + s;
        }
    }
    Ok((d_input, d_weights))
}
