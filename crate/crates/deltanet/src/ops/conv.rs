//! Standard and pointwise convolution kernels.
//!
//! Convolutions use "same" zero padding: the output extent is
//! `ceil(input / stride)` and the total padding, when odd, puts the extra row
//! and column at the bottom/right. The forward pass lowers each image to a
//! column matrix (im2col) and multiplies by the filter matrix; 1x1 stride-1
//! convolutions skip the lowering and multiply the input in place.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ops::gemm::{gemm, gemm_nt, gemm_tn};
use crate::tensor::{Elem, Tensor};

/// Output extent under same padding.
pub fn same_out(extent: usize, stride: usize) -> usize {
    extent.div_ceil(stride)
}

/// Rows/columns of zero padding before the first element.
pub fn same_pad_before(extent: usize, kernel: usize, stride: usize) -> usize {
    let out = same_out(extent, stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(extent);
    total / 2
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 1 || stride == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "convolution stride must be 1 or 2, got {stride}"
        )))
    }
}

/// Lowers one image `[C, H, W]` to a `[C*k*k, OH*OW]` column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<E: Elem>(
    x: &[E],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    col: &mut [E],
) {
    let ph = same_pad_before(h, k, stride);
    let pw = same_pad_before(w, k, stride);
    let o_cells = oh * ow;
    for ci in 0..c_in {
        let x_c = &x[ci * h * w..(ci + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = ((ci * k + kh) * k + kw) * o_cells;
                for oy in 0..oh {
                    let iy = (oy * stride + kh).wrapping_sub(ph);
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    if iy >= h {
                        dst.fill(E::zero());
                        continue;
                    }
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kw).wrapping_sub(pw);
                        *d = if ix < w { x_c[iy * w + ix] } else { E::zero() };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back into an image (adjoint of im2col).
#[allow(clippy::too_many_arguments)]
fn col2im<E: Elem>(
    col: &[E],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    x: &mut [E],
) {
    let ph = same_pad_before(h, k, stride);
    let pw = same_pad_before(w, k, stride);
    let o_cells = oh * ow;
    for ci in 0..c_in {
        let x_c = &mut x[ci * h * w..(ci + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = ((ci * k + kh) * k + kw) * o_cells;
                for oy in 0..oh {
                    let iy = (oy * stride + kh).wrapping_sub(ph);
                    if iy >= h {
                        continue;
                    }
                    let src = &col[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix = (ox * stride + kw).wrapping_sub(pw);
                        if ix < w {
                            x_c[iy * w + ix] = x_c[iy * w + ix] + s;
                        }
                    }
                }
            }
        }
    }
}

fn conv_dims<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    check_stride(stride)?;
    let (n, c_in, h, w) = input.dims4()?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[2] != ws[3] {
        return Err(Error::ShapeMismatch(format!(
            "conv weights must be [C_out, C_in, k, k], got {ws:?}"
        )));
    }
    if ws[1] != c_in {
        return Err(Error::ShapeMismatch(format!(
            "conv channel mismatch: input has {c_in}, weights expect {}",
            ws[1]
        )));
    }
    let _ = (n, h, w);
    Ok((n, c_in, h, w, ws[0], ws[2]))
}

/// Cross-correlation of `input [N, C_in, H, W]` with
/// `weights [C_out, C_in, k, k]`, same padding.
pub fn conv2d<E: Elem>(input: &Tensor<E>, weights: &Tensor<E>, stride: usize) -> Result<Tensor<E>> {
    let (n, c_in, h, w, c_out, k) = conv_dims(input, weights, stride)?;
    let (oh, ow) = (same_out(h, stride), same_out(w, stride));
    let mut out = Tensor::zeros(&[n, c_out, oh, ow])?;
    let in_per = c_in * h * w;
    let out_per = c_out * oh * ow;
    let x = input.data();
    let wt = weights.data();
    out.data_mut()
        .par_chunks_mut(out_per)
        .enumerate()
        .for_each(|(img, out_n)| {
            let x_n = &x[img * in_per..(img + 1) * in_per];
            if k == 1 && stride == 1 {
                gemm(c_out, c_in, h * w, E::one(), wt, x_n, E::zero(), out_n);
            } else {
                let mut col = vec![E::zero(); c_in * k * k * oh * ow];
                im2col(x_n, c_in, h, w, k, stride, oh, ow, &mut col);
                gemm(c_out, c_in * k * k, oh * ow, E::one(), wt, &col, E::zero(), out_n);
            }
        });
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to the input and the weights.
pub fn conv2d_backward<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    stride: usize,
    d_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let (n, c_in, h, w, c_out, k) = conv_dims(input, weights, stride)?;
    let (oh, ow) = (same_out(h, stride), same_out(w, stride));
    if d_out.shape() != [n, c_out, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient shape {:?}, expected {:?}",
            d_out.shape(),
            [n, c_out, oh, ow]
        )));
    }
    let in_per = c_in * h * w;
    let out_per = c_out * oh * ow;
    let kk = c_in * k * k;
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
            if k == 1 && stride == 1 {
                gemm_tn(c_in, c_out, h * w, E::one(), wt, dy_n, E::zero(), dx_n);
            } else {
                let mut dcol = vec![E::zero(); kk * oh * ow];
                gemm_tn(kk, c_out, oh * ow, E::one(), wt, dy_n, E::zero(), &mut dcol);
                col2im(&dcol, c_in, h, w, k, stride, oh, ow, dx_n);
            }
        });

    // dW = sum_n dY_n @ col_n^T, accumulated over fixed image chunks so the
    // floating-point order depends only on the thread count.
    let imgs: Vec<usize> = (0..n).collect();
    let chunk = n.div_ceil(rayon::current_num_threads().max(1)).max(1);
    let partials: Vec<Vec<E>> = imgs
        .par_chunks(chunk)
        .map(|chunk_imgs| {
            let mut dw = vec![E::zero(); c_out * kk];
            let mut col = vec![E::zero(); kk * oh * ow];
            for &img in chunk_imgs {
                let x_n = &x[img * in_per..(img + 1) * in_per];
                let dy_n = &dy[img * out_per..(img + 1) * out_per];
                if k == 1 && stride == 1 {
                    gemm_nt(c_out, oh * ow, c_in, E::one(), dy_n, x_n, E::one(), &mut dw);
                } else {
                    im2col(x_n, c_in, h, w, k, stride, oh, ow, &mut col);
                    gemm_nt(c_out, oh * ow, kk, E::one(), dy_n, &col, E::one(), &mut dw);
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

/// 1x1 convolution mixing channels at every pixel:
/// `input [N, C, H, W] x weights [C_out, C, 1, 1]`.
pub fn pointwise_conv2d<E: Elem>(input: &Tensor<E>, weights: &Tensor<E>) -> Result<Tensor<E>> {
    let ws = weights.shape();
    if ws.len() != 4 || ws[2] != 1 || ws[3] != 1 {
        return Err(Error::ShapeMismatch(format!(
            "pointwise weights must be [C_out, C_in, 1, 1], got {ws:?}"
        )));
    }
    conv2d(input, weights, 1)
}

/// Gradients of [`pointwise_conv2d`].
pub fn pointwise_conv2d_backward<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    d_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>)> {
    conv2d_backward(input, weights, 1, d_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: &[usize]) -> Tensor<f32> {
        Tensor::from_vec(shape, vec![1.0; shape.iter().product()]).unwrap()
    }

    #[test]
    fn all_ones_counts_window_overlap() {
        let input = ones(&[1, 1, 3, 3]);
        let kernel = ones(&[1, 1, 3, 3]);
        let out = conv2d(&input, &kernel, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        assert_eq!(out.at4(0, 0, 1, 1), 9.0);
        assert_eq!(out.at4(0, 0, 0, 0), 4.0);
        assert_eq!(out.at4(0, 0, 0, 2), 4.0);
        assert_eq!(out.at4(0, 0, 2, 2), 4.0);
        assert_eq!(out.at4(0, 0, 0, 1), 6.0);
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let mut rng = crate::rng::Rng::new(3);
        let input: Tensor<f32> =
            Tensor::filled(&[2, 1, 4, 5], crate::tensor::Fill::HeNormal, &mut rng).unwrap();
        let mut kernel = Tensor::zeros(&[1, 1, 3, 3]).unwrap();
        kernel.data_mut()[4] = 1.0; // center tap
        let out = conv2d(&input, &kernel, 1).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let input = ones(&[1, 2, 4, 4]);
        let kernel = ones(&[3, 5, 3, 3]);
        assert!(matches!(
            conv2d(&input, &kernel, 1),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn stride_two_halves_extent() {
        let input = ones(&[1, 3, 32, 32]);
        let kernel = ones(&[8, 3, 3, 3]);
        let out = conv2d(&input, &kernel, 2).unwrap();
        assert_eq!(out.shape(), &[1, 8, 16, 16]);
    }

    #[test]
    fn pointwise_scales_single_channel() {
        let input = ones(&[1, 1, 2, 2]);
        let weights = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0f32]).unwrap();
        let out = pointwise_conv2d(&input, &weights).unwrap();
        assert_eq!(out.data(), &[2.0; 4]);
    }

    #[test]
    fn same_padding_on_unit_extent() {
        // 3x3 conv on a 1x1 input must be well-defined under same padding.
        let input = ones(&[1, 1, 1, 1]);
        let kernel = ones(&[1, 1, 3, 3]);
        let out = conv2d(&input, &kernel, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data()[0], 1.0); // only the center tap sees data
    }
}
