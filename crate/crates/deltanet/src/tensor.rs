//! Dense tensor value type.
//!
//! Activations use the canonical layout `[batch, channel, height, width]`,
//! row-major: element `(n, c, h, w)` lives at offset
//! `((n * C + c) * H + h) * W + w`. Filter layouts are documented per op.
//! Kernels are generic over [`Elem`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Scalar element type the kernels are generic over (`f32` or `f64`).
pub trait Elem:
    Float + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * a @ b + beta * c` with explicit row/column strides per
    /// operand, so callers can multiply by a transposed view without copying.
    /// Strides are in elements; all matrices are dense in-memory buffers.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_elem {
    ($t:ty, $gemm:path) => {
        impl Elem for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn gemm_strided(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!((m - 1) * rsa + (k - 1) * csa < a.len());
                assert!((k - 1) * rsb + (n - 1) * csb < b.len());
                assert!(c.len() >= m * n);
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_elem!(f32, matrixmultiply::sgemm);
impl_elem!(f64, matrixmultiply::dgemm);

/// Fill rule for [`Tensor::filled`].
#[derive(Debug, Clone, Copy)]
pub enum Fill {
    Const(f64),
    /// `N(0, 2 / fan_in)` with the fan derived from the shape.
    HeNormal,
    /// `N(0, 2 / fan_in)` with an explicit fan-in (used for depthwise
    /// filters, where each output channel sees a single input channel).
    HeNormalFanIn(usize),
    /// `U(+-sqrt(6 / (fan_in + fan_out)))` with fans derived from the shape.
    GlorotUniform,
}

/// Dense rank-1..4 floating-point array with shape metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Elem = f32> {
    shape: Vec<usize>,
    data: Vec<E>,
}

/// Fan-in / fan-out derived from a filter or weight shape.
///
/// Rank 4 `[out, in, kh, kw]`: fan_in = in*kh*kw, fan_out = out*kh*kw.
/// Rank 2 `[in, out]`: fan_in = in, fan_out = out.
/// Otherwise both fans are the element count.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [o, i, kh, kw] => (i * kh * kw, o * kh * kw),
        [i, o] => (*i, *o),
        _ => {
            let n = shape.iter().product();
            (n, n)
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape(format!(
            "dimensions must all be positive, got {shape:?}"
        )));
    }
    Ok(())
}

impl<E: Elem> Tensor<E> {
    /// All-zero tensor.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let len = shape.iter().product();
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![E::zero(); len],
        })
    }

    /// Tensor filled according to `fill`, drawing from `rng` where random.
    pub fn filled(shape: &[usize], fill: Fill, rng: &mut Rng) -> Result<Self> {
        check_shape(shape)?;
        let len: usize = shape.iter().product();
        let (fan_in, fan_out) = fans(shape);
        let data = match fill {
            Fill::Const(v) => vec![E::from_f64(v); len],
            Fill::HeNormal | Fill::HeNormalFanIn(_) => {
                let fan = match fill {
                    Fill::HeNormalFanIn(f) => f,
                    _ => fan_in,
                };
                let std = (2.0 / fan as f64).sqrt();
                (0..len)
                    .map(|_| E::from_f64(rng.next_normal() * std))
                    .collect()
            }
            Fill::GlorotUniform => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len)
                    .map(|_| E::from_f64(rng.uniform(-limit, limit)))
                    .collect()
            }
        };
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Wraps an existing buffer. `data.len()` must equal the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        check_shape(shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::InvalidShape(format!(
                "buffer length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// The four dims of an activation tensor `(N, C, H, W)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected rank-4 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [n, k] => Ok((n, k)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected rank-2 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Row-major offset of `(n, c, h, w)`.
    #[inline]
    pub fn idx4(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let (_, cs, hs, ws) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        ((n * cs + c) * hs + h) * ws + w
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> E {
        self.data[self.idx4(n, c, h, w)]
    }

    #[inline]
    pub fn set4(&mut self, n: usize, c: usize, h: usize, w: usize, v: E) {
        let i = self.idx4(n, c, h, w);
        self.data[i] = v;
    }

    /// Same buffer under a new shape with equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} ({} elems) to {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Pointwise sum; shapes must be equal.
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Pointwise product; shapes must be equal.
    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Multiplies every element by a scalar.
    pub fn scale(&self, k: E) -> Tensor<E> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| x * k).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor<E>, f: impl Fn(E, E) -> E) -> Result<Tensor<E>> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Converts the element type (used by the f64 gradient-check mode).
    pub fn cast<T: Elem>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| T::from_f64(x.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_fill() {
        let mut rng = Rng::new(0);
        let t: Tensor<f32> = Tensor::filled(&[1, 1, 2, 2], Fill::Const(0.0), &mut rng).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(matches!(
            Tensor::<f32>::zeros(&[2, 0, 3]),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn he_normal_sample_mean_within_three_sigma() {
        let mut rng = Rng::new(7);
        let t: Tensor<f32> = Tensor::filled(&[2, 3, 4, 4], Fill::HeNormal, &mut rng).unwrap();
        assert_eq!(t.len(), 96);
        let sigma = (2.0_f64 / 48.0).sqrt();
        let mean = t.data().iter().map(|&x| x as f64).sum::<f64>() / 96.0;
        assert!(mean.abs() <= 3.0 * sigma, "mean {mean} vs sigma {sigma}");
    }

    #[test]
    fn same_seed_bit_identical_fill() {
        let a: Tensor<f32> =
            Tensor::filled(&[4, 4], Fill::HeNormal, &mut Rng::new(9)).unwrap();
        let b: Tensor<f32> =
            Tensor::filled(&[4, 4], Fill::HeNormal, &mut Rng::new(9)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn init_statistics_match_target_variance() {
        // Empirical variance of >= 1e5 samples within 5% of target.
        let mut rng = Rng::new(21);
        let t: Tensor<f64> =
            Tensor::filled(&[100, 25, 4, 2], Fill::HeNormal, &mut rng).unwrap();
        let n = t.len() as f64;
        assert!(t.len() >= 100_000);
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let target = 2.0 / 200.0;
        assert!((var - target).abs() / target < 0.05, "var {var} target {target}");

        let g: Tensor<f64> =
            Tensor::filled(&[400, 300], Fill::GlorotUniform, &mut rng).unwrap();
        let n = g.len() as f64;
        let mean = g.data().iter().sum::<f64>() / n;
        let var = g.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        // Var of U(-l, l) = l^2/3 = 2 / (fan_in + fan_out).
        let target = 2.0 / 700.0;
        assert!((var - target).abs() / target < 0.05, "var {var} target {target}");
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0f32, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.scale(0.0).data(), &[0.0, 0.0]);
        let c = Tensor::from_vec(&[2], vec![2.0f32, 3.0]).unwrap();
        let d = Tensor::from_vec(&[2], vec![4.0f32, 5.0]).unwrap();
        assert_eq!(c.mul(&d).unwrap().data(), &[8.0, 15.0]);
        let e = Tensor::from_vec(&[3], vec![1.0f32, 1.0, 1.0]).unwrap();
        assert!(a.add(&e).is_err());
    }

    #[test]
    fn gemm_small_case() {
        // [1 2; 3 4] @ [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [5.0f32, 6.0, 7.0, 8.0];
        let mut c = [0.0f32; 4];
        f32::gemm_strided(2, 2, 2, 1.0, &a, 2, 1, &b, 2, 1, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    proptest! {
        #[test]
        fn index_round_trip(n in 1usize..3, c in 1usize..4, h in 1usize..6, w in 1usize..6,
                            pn in 0usize..3, pc in 0usize..4, ph in 0usize..6, pw in 0usize..6) {
            prop_assume!(pn < n && pc < c && ph < h && pw < w);
            let mut t: Tensor<f32> = Tensor::zeros(&[n, c, h, w]).unwrap();
            t.set4(pn, pc, ph, pw, 42.5);
            prop_assert_eq!(t.at4(pn, pc, ph, pw), 42.5);
            // exactly one element written
            prop_assert_eq!(t.data().iter().filter(|&&x| x != 0.0).count(), 1);
        }
    }
}
