//! Fractional max pooling: non-integer downsampling through pseudorandom
//! sequences of size-1 and size-2 pooling regions.
//!
//! One axis is described by a boundary list `b_0 = 0 < b_1 < ... < b_R =
//! extent_in`. Region `i` covers `[b_i, b_{i+1})`, extended one cell to the
//! right (clamped to the extent) in overlapping mode. For a pooling ratio
//! `r = extent_in / extent_out` below 2 the boundaries follow the ceiling
//! sequence `b_i = ceil(r * (i + u)) - ceil(r * u)` with a single uniform
//! `u` drawn from `(0, 1)` per pass, which yields region sizes in `{1, 2}`
//! and exact coverage of the input. A ratio of 2 or more leaves the
//! fractional regime and degrades to uniform pooling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Elem, Tensor};

/// Pooling regions along one axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolRegions {
    /// `extent_out + 1` strictly increasing boundaries from 0 to `extent_in`.
    bounds: Vec<usize>,
    /// Extend each region one cell past its right boundary (clamped).
    overlap: bool,
}

impl PoolRegions {
    pub fn new(bounds: Vec<usize>, overlap: bool) -> Result<Self> {
        if bounds.len() < 2 || bounds[0] != 0 {
            return Err(Error::InvalidArgument(format!(
                "boundary list must start at 0 and describe at least one region, got {bounds:?}"
            )));
        }
        if !bounds.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument(format!(
                "boundaries must be strictly increasing, got {bounds:?}"
            )));
        }
        Ok(PoolRegions { bounds, overlap })
    }

    pub fn extent_in(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    pub fn extent_out(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn overlap(&self) -> bool {
        self.overlap
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    /// Half-open index range `[start, end)` of region `i`, overlap applied.
    pub fn region(&self, i: usize) -> (usize, usize) {
        let start = self.bounds[i];
        let mut end = self.bounds[i + 1];
        if self.overlap {
            end = (end + 1).min(self.extent_in());
        }
        (start, end)
    }
}

/// Draws the pooling regions for one axis.
pub fn fmp_regions(
    extent_in: usize,
    extent_out: usize,
    overlap: bool,
    rng: &mut Rng,
) -> Result<PoolRegions> {
    if extent_out == 0 || extent_out > extent_in {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= extent_out <= extent_in, got {extent_out} of {extent_in}"
        )));
    }
    if extent_in >= 2 * extent_out {
        // Integer-ratio regime: uniform regions, remainder spread over the
        // leading regions one cell each.
        let base = extent_in / extent_out;
        let rem = extent_in % extent_out;
        let mut bounds = Vec::with_capacity(extent_out + 1);
        let mut pos = 0;
        bounds.push(0);
        for i in 0..extent_out {
            pos += base + usize::from(i < rem);
            bounds.push(pos);
        }
        return PoolRegions::new(bounds, false);
    }
    let r = extent_in as f64 / extent_out as f64;
    let u = rng.open01();
    let anchor = (r * u).ceil() as usize;
    let mut bounds = Vec::with_capacity(extent_out + 1);
    for i in 0..=extent_out {
        let b = (r * (i as f64 + u)).ceil() as usize - anchor;
        bounds.push(b);
    }
    // The ceiling sequence is strictly increasing for r >= 1 and lands on
    // extent_in exactly; clamp defensively against float edge cases.
    bounds[0] = 0;
    bounds[extent_out] = extent_in;
    for i in 1..extent_out {
        bounds[i] = bounds[i].max(i).min(extent_in - (extent_out - i));
    }
    PoolRegions::new(bounds, overlap)
}

/// Max over the cartesian product of row and column regions. Returns the
/// pooled tensor and per-output-cell argmax indices into the input buffer
/// (first maximum in row-major order within each region).
pub fn fmp_pool<E: Elem>(
    input: &Tensor<E>,
    rows: &PoolRegions,
    cols: &PoolRegions,
) -> Result<(Tensor<E>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    if rows.extent_in() != h || cols.extent_in() != w {
        return Err(Error::ShapeMismatch(format!(
            "pool regions cover {}x{}, input is {h}x{w}",
            rows.extent_in(),
            cols.extent_in()
        )));
    }
    let (oh, ow) = (rows.extent_out(), cols.extent_out());
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
            let base = pc * plane;
            let x_p = &x[base..base + plane];
            for oy in 0..oh {
                let (y0, y1) = rows.region(oy);
                for ox in 0..ow {
                    let (x0, x1) = cols.region(ox);
                    let mut best_v = x_p[y0 * w + x0];
                    let mut best_i = y0 * w + x0;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            let v = x_p[iy * w + ix];
                            if v > best_v {
                                best_v = v;
                                best_i = iy * w + ix;
                            }
                        }
                    }
                    out_p[oy * ow + ox] = best_v;
                    arg_p[oy * ow + ox] = base + best_i;
                }
            }
        });
    Ok((out, argmax))
}

/// Routes each upstream gradient to the argmax recorded by the forward pass.
pub fn fmp_pool_backward<E: Elem>(
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

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(r: &PoolRegions) -> Vec<usize> {
        r.bounds().windows(2).map(|p| p[1] - p[0]).collect()
    }

    #[test]
    fn covers_32_to_22_with_sizes_one_and_two() {
        for seed in 0..50 {
            let mut rng = Rng::new(seed);
            let r = fmp_regions(32, 22, false, &mut rng).unwrap();
            assert_eq!(r.extent_out(), 22);
            assert_eq!(r.extent_in(), 32);
            assert!(sizes(&r).iter().all(|&s| s == 1 || s == 2), "{:?}", r.bounds());
        }
    }

    #[test]
    fn full_extent_pool_is_a_single_region() {
        let mut rng = Rng::new(0);
        let r = fmp_regions(2, 1, true, &mut rng).unwrap();
        assert_eq!(r.bounds(), &[0, 2]);
        assert_eq!(r.region(0), (0, 2));
    }

    #[test]
    fn boundary_formula_hand_evaluation() {
        // extent_in = 5, extent_out = 3, r = 5/3. The boundary list is
        // ceil(r*(i+u)) - ceil(r*u); evaluated by hand for three u values.
        for (u, expect) in [
            (0.1, vec![0, 1, 3, 5]),
            (0.5, vec![0, 2, 4, 5]),
            (0.9, vec![0, 2, 3, 5]),
        ] {
            let r = 5.0_f64 / 3.0;
            let anchor = (r * u).ceil() as usize;
            let got: Vec<usize> = (0..=3)
                .map(|i| (r * (i as f64 + u)).ceil() as usize - anchor)
                .collect();
            assert_eq!(got, expect, "u = {u}");
            assert_eq!(*got.last().unwrap(), 5, "covers [0, 5) for u = {u}");
        }
    }

    #[test]
    fn ratio_two_degrades_to_uniform() {
        let mut rng = Rng::new(9);
        let r = fmp_regions(4, 2, true, &mut rng).unwrap();
        assert_eq!(r.bounds(), &[0, 2, 4]);
        assert!(!r.overlap());
        // remainder spread
        let r = fmp_regions(7, 3, false, &mut rng).unwrap();
        assert_eq!(r.bounds(), &[0, 3, 5, 7]);
    }

    #[test]
    fn rejects_upsampling() {
        let mut rng = Rng::new(0);
        assert!(fmp_regions(3, 5, false, &mut rng).is_err());
    }

    #[test]
    fn constant_input_pools_to_constant() {
        let mut rng = Rng::new(33);
        let rows = fmp_regions(6, 4, true, &mut rng).unwrap();
        let cols = fmp_regions(6, 4, true, &mut rng).unwrap();
        let input = Tensor::from_vec(&[1, 2, 6, 6], vec![1.25f32; 72]).unwrap();
        let (out, _) = fmp_pool(&input, &rows, &cols).unwrap();
        assert_eq!(out.shape(), &[1, 2, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn region_extent_mismatch_is_an_error() {
        let mut rng = Rng::new(1);
        let rows = fmp_regions(6, 4, true, &mut rng).unwrap();
        let cols = fmp_regions(6, 4, true, &mut rng).unwrap();
        let input: Tensor<f32> = Tensor::zeros(&[1, 1, 5, 6]).unwrap();
        assert!(fmp_pool(&input, &rows, &cols).is_err());
    }
}
