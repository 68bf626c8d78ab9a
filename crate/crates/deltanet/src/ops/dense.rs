//! Fully connected layer.

use crate::error::{Error, Result};
use crate::ops::gemm::{gemm, gemm_nt, gemm_tn};
use crate::tensor::{Elem, Tensor};

fn dense_dims<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    bias: &[E],
) -> Result<(usize, usize, usize)> {
    let (n, f) = input.dims2()?;
    let (wf, k) = weights.dims2()?;
    if wf != f {
        return Err(Error::ShapeMismatch(format!(
            "dense input features {f} vs weight rows {wf}"
        )));
    }
    if bias.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "dense bias length {} vs {k} outputs",
            bias.len()
        )));
    }
    Ok((n, f, k))
}

/// `input [N, F] @ weights [F, K] + bias [K]`.
pub fn dense<E: Elem>(input: &Tensor<E>, weights: &Tensor<E>, bias: &[E]) -> Result<Tensor<E>> {
    let (n, f, k) = dense_dims(input, weights, bias)?;
    let mut out = Tensor::zeros(&[n, k])?;
    gemm(n, f, k, E::one(), input.data(), weights.data(), E::zero(), out.data_mut());
    for row in out.data_mut().chunks_mut(k) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
    Ok(out)
}

/// Gradients of [`dense`] for input, weights and bias.
pub fn dense_backward<E: Elem>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    d_out: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Vec<E>)> {
    let (n, f) = input.dims2()?;
    let (_, k) = weights.dims2()?;
    if d_out.shape() != [n, k] {
        return Err(Error::ShapeMismatch(format!(
            "dense upstream gradient {:?}, expected {:?}",
            d_out.shape(),
            [n, k]
        )));
    }
    let mut d_input = Tensor::zeros(&[n, f])?;
    gemm_nt(n, k, f, E::one(), d_out.data(), weights.data(), E::zero(), d_input.data_mut());

    let mut d_weights = Tensor::zeros(&[f, k])?;
    gemm_tn(f, n, k, E::one(), input.data(), d_out.data(), E::zero(), d_weights.data_mut());

    let mut d_bias = vec![E::zero(); k];
    for row in d_out.data().chunks(k) {
        for (b, &g) in d_bias.iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    Ok((d_input, d_weights, d_bias))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_zero_bias() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let out = dense(&input, &eye, &[0.0; 3]).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn feature_mismatch_is_an_error() {
        let input: Tensor<f32> = Tensor::zeros(&[1, 4]).unwrap();
        let weights: Tensor<f32> = Tensor::zeros(&[5, 2]).unwrap();
        assert!(dense(&input, &weights, &[0.0; 2]).is_err());
    }

    #[test]
    fn cifar10_head_weight_count() {
        // 1024 features to 10 classes: 10,240 weights plus 10 biases.
        let weights: Tensor<f32> = Tensor::zeros(&[1024, 10]).unwrap();
        assert_eq!(weights.len(), 10_240);
        let bias = vec![0.0f32; 10];
        let input: Tensor<f32> = Tensor::zeros(&[1, 1024]).unwrap();
        let out = dense(&input, &weights, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 10]);
    }
}
