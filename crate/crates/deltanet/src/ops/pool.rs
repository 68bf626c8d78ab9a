//! Overlapping 3x3 stride-2 max pooling and global average pooling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ops::conv::{same_out, same_pad_before};
use crate::tensor::{Elem, Tensor};

/// Max over 3x3 windows with stride 2 and same padding. Padded cells never
/// win. Returns the pooled tensor and, per output cell, the linear index of
/// the winning input element (first maximum in row-major window order), which
/// the backward pass scatters into.
pub fn maxpool_3x3_s2<E: Elem>(input: &Tensor<E>) -> Result<(Tensor<E>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    let (k, stride) = (3usize, 2usize);
    let (oh, ow) = (same_out(h, stride), same_out(w, stride));
    let (ph, pw) = (same_pad_before(h, k, stride), same_pad_before(w, k, stride));
    let mut out = Tensor::zeros(&[n, c, oh, ow])?;
    let mut argmax = vec![0usize; n * c * oh * ow];
    let x = input.data();
    let plane = h * w;
    let out_plane = oh * ow;
    out.data_mut()
        .par_chunks_mut(out_plane)
        .zip(argmax.par_chunks_mut(out_plane))
        .enumerate()
        .for_each(|(pc, (out_p, arg_p))| {
            // pc indexes (n, c) planes jointly.
            let base = pc * plane;
            let x_p = &x[base..base + plane];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best: Option<(E, usize)> = None;
                    for kh in 0..k {
                        let iy = (oy * stride + kh).wrapping_sub(ph);
                        if iy >= h {
                            continue;
                        }
                        for kw in 0..k {
                            let ix = (ox * stride + kw).wrapping_sub(pw);
                            if ix >= w {
                                continue;
                            }
                            let v = x_p[iy * w + ix];
                            match best {
                                Some((b, _)) if v <= b => {}
                                _ => best = Some((v, iy * w + ix)),
                            }
                        }
                    }
                    let (v, idx) = best.expect("window always contains a valid cell");
                    out_p[oy * ow + ox] = v;
                    arg_p[oy * ow + ox] = base + idx;
                }
            }
        });
    Ok((out, argmax))
}

/// Routes each upstream gradient to the argmax recorded by the forward pass.
pub fn maxpool_backward<E: Elem>(
    input_shape: &[usize],
    argmax: &[usize],
    d_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    if argmax.len() != d_out.len() {
        return Err(Error::ShapeMismatch(format!(
            "argmax length {} vs upstream gradient length {}",
            argmax.len(),
            d_out.len()
        )));
    }
    let mut d_input = Tensor::zeros(input_shape)?;
    let dx = d_input.data_mut();
    for (&idx, &g) in argmax.iter().zip(d_out.data()) {
        dx[idx] = dx[idx] + g;
    }
    Ok(d_input)
}

/// Spatial mean per channel: `[N, C, H, W] -> [N, C, 1, 1]`.
pub fn global_avg_pool<E: Elem>(input: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = input.dims4()?;
    let mut out = Tensor::zeros(&[n, c, 1, 1])?;
    let inv = E::from_f64(1.0 / (h * w) as f64);
    let plane = h * w;
    let x = input.data();
    for (pc, o) in out.data_mut().iter_mut().enumerate() {
        let mut acc = E::zero();
        for &v in &x[pc * plane..(pc + 1) * plane] {
            acc = acc + v;
        }
        *o = acc * inv;
    }
    Ok(out)
}

/// Spreads each upstream gradient uniformly over its spatial plane.
pub fn global_avg_pool_backward<E: Elem>(
    input_shape: &[usize],
    d_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    let mut d_input = Tensor::zeros(input_shape)?;
    let (h, w) = (input_shape[2], input_shape[3]);
    let inv = E::from_f64(1.0 / (h * w) as f64);
    let plane = h * w;
    let dx = d_input.data_mut();
    for (pc, &g) in d_out.data().iter().enumerate() {
        let v = g * inv;
        for d in &mut dx[pc * plane..(pc + 1) * plane] {
            *d = v;
        }
    }
    Ok(d_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Fill;

    #[test]
    fn halves_a_32_extent() {
        let input: Tensor<f32> = Tensor::zeros(&[1, 2, 32, 32]).unwrap();
        let (out, _) = maxpool_3x3_s2(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2, 16, 16]);
    }

    #[test]
    fn constant_input_stays_constant() {
        let input = Tensor::from_vec(&[1, 1, 5, 5], vec![3.5f32; 25]).unwrap();
        let (out, _) = maxpool_3x3_s2(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn ties_go_to_the_first_in_row_major_order() {
        let input = Tensor::from_vec(&[1, 1, 2, 2], vec![7.0f32, 7.0, 7.0, 7.0]).unwrap();
        let (_, argmax) = maxpool_3x3_s2(&input).unwrap();
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn backward_scatters_to_argmax() {
        let input = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 9.0, 2.0, 3.0]).unwrap();
        let (out, argmax) = maxpool_3x3_s2(&input).unwrap();
        assert_eq!(out.data(), &[9.0]);
        let d_out = Tensor::from_vec(&[1, 1, 1, 1], vec![5.0f32]).unwrap();
        let dx = maxpool_backward(&[1, 1, 2, 2], &argmax, &d_out).unwrap();
        assert_eq!(dx.data(), &[0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn gap_means_and_identity() {
        let t = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&t).unwrap().data(), &[2.5]);

        let mut rng = Rng::new(5);
        let u: Tensor<f32> = Tensor::filled(&[2, 3, 1, 1], Fill::HeNormal, &mut rng).unwrap();
        assert_eq!(global_avg_pool(&u).unwrap().data(), u.data());
    }
}
