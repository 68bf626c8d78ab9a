//! ReLU and inverted dropout.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Elem, Tensor};

/// `max(0, x)` elementwise.
pub fn relu<E: Elem>(input: &Tensor<E>) -> Tensor<E> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < E::zero() {
            *v = E::zero();
        }
    }
    out
}

/// Masks the upstream gradient where the forward output was zero.
pub fn relu_backward<E: Elem>(output: &Tensor<E>, d_out: &Tensor<E>) -> Result<Tensor<E>> {
    if output.shape() != d_out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "relu backward on {:?} vs {:?}",
            output.shape(),
            d_out.shape()
        )));
    }
    let mut d_input = d_out.clone();
    for (d, &y) in d_input.data_mut().iter_mut().zip(output.data()) {
        if y <= E::zero() {
            *d = E::zero();
        }
    }
    Ok(d_input)
}

/// Inverted dropout: zeroes each element with probability `rate` and scales
/// survivors by `1 / (1 - rate)`. Returns the output and the per-element
/// multiplier mask (0 or the survivor scale), which the backward pass and
/// gradient checks reuse. Evaluation mode is the identity and never calls
/// this; `rate = 0` keeps every element.
pub fn dropout<E: Elem>(input: &Tensor<E>, rate: f64, rng: &mut Rng) -> Result<(Tensor<E>, Vec<E>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    let scale = E::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<E> = (0..input.len())
        .map(|_| {
            if rng.next_f64() < rate {
                E::zero()
            } else {
                scale
            }
        })
        .collect();
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v = *v * m;
    }
    Ok((out, mask))
}

/// Applies the forward mask to the upstream gradient.
pub fn dropout_backward<E: Elem>(d_out: &Tensor<E>, mask: &[E]) -> Result<Tensor<E>> {
    if d_out.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "dropout mask length {} vs gradient length {}",
            mask.len(),
            d_out.len()
        )));
    }
    let mut d_input = d_out.clone();
    for (d, &m) in d_input.data_mut().iter_mut().zip(mask) {
        *d = *d * m;
    }
    Ok(d_input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let t = Tensor::from_vec(&[2], vec![-1.0f32, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 2.0]);
        let neg = Tensor::from_vec(&[3], vec![-1.0f32, -0.5, -7.0]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = Rng::new(1);
        let t = Tensor::from_vec(&[4], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (out, mask) = dropout(&t, 0.0, &mut rng).unwrap();
        assert_eq!(out.data(), t.data());
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = Rng::new(1);
        let t: Tensor<f32> = Tensor::zeros(&[4]).unwrap();
        assert!(dropout(&t, 1.0, &mut rng).is_err());
    }

    #[test]
    fn drop_fraction_matches_rate() {
        let mut rng = Rng::new(17);
        let t: Tensor<f32> = Tensor::from_vec(&[100_000], vec![1.0; 100_000]).unwrap();
        let (_, mask) = dropout(&t, 0.1, &mut rng).unwrap();
        let dropped = mask.iter().filter(|&&m| m == 0.0).count() as f64 / 100_000.0;
        assert!((dropped - 0.1).abs() < 0.01, "dropped {dropped}");
    }
}
