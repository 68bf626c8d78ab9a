//! Closed-form parameter and Mult-Adds accounting.
//!
//! One multiply-accumulate counts as one Mult-Add. Convolutions and the
//! dense layer are charged at their output spatial size; pooling, batch
//! norm, ReLU and softmax are free. Batch-norm scale/shift parameters are
//! tracked per layer and included in the headline totals when `count_bn` is
//! set (the default; the published tables count them); running statistics
//! are reported as a separate non-trainable line and never enter the
//! headline count.

use crate::arch::{scale_channels, ArchSpec, LayerKind, LayerSpec};
use crate::error::{Error, Result};

/// Per-layer cost line.
#[derive(Debug, Clone)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub mult_adds: u64,
}

/// Whole-model accounting.
#[derive(Debug, Clone)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    /// Trainable parameter total (conv + dense weights, dense bias, and
    /// batch-norm gamma/beta when `count_bn`).
    pub params: u64,
    pub mult_adds: u64,
    /// Trainable batch-norm parameters (gamma + beta) across the model.
    pub bn_params: u64,
    /// Non-trainable running mean/variance element count (informational).
    pub bn_running: u64,
    pub count_bn: bool,
}

/// Half-up rounding to 2 decimals, in millions, as presented in the tables.
pub fn millions(count: u64) -> f64 {
    (count as f64 / 1e6 * 100.0 + 0.5).floor() / 100.0
}

impl CostReport {
    pub fn params_millions(&self) -> f64 {
        millions(self.params)
    }

    pub fn mult_adds_millions(&self) -> f64 {
        millions(self.mult_adds)
    }
}

/// Parameters of a depthwise convolution: `D_K^2 * (alpha*M * delta)`.
pub fn dw_params(d_k: usize, m: usize, alpha: f64, delta: usize) -> u64 {
    (d_k * d_k * scale_channels(m, alpha) * delta) as u64
}

/// Parameters of a pointwise convolution: `(alpha*M * delta) * alpha*N`.
pub fn pw_params(m: usize, n: usize, alpha: f64, delta: usize) -> u64 {
    (scale_channels(m, alpha) * delta * scale_channels(n, alpha)) as u64
}

/// Mult-Adds of a depthwise convolution at feature-map extent `d_f`.
pub fn dw_madds(d_k: usize, m: usize, alpha: f64, delta: usize, d_f: usize) -> u64 {
    dw_params(d_k, m, alpha, delta) * (d_f * d_f) as u64
}

/// Mult-Adds of a pointwise convolution at feature-map extent `d_f`.
pub fn pw_madds(m: usize, n: usize, alpha: f64, delta: usize, d_f: usize) -> u64 {
    pw_params(m, n, alpha, delta) * (d_f * d_f) as u64
}

/// Cost of a scaled depthwise separable pair relative to the unscaled
/// baseline. The exact ratio `(alpha*D_K^2 + alpha^2*N) * delta / (D_K^2 +
/// N)` governs both parameters and Mult-Adds (the feature-map factor
/// cancels); the closing approximation is `alpha^2 * delta`.
pub fn separable_ratio(d_k: usize, n: usize, alpha: f64, delta: usize) -> (f64, f64) {
    let k2 = (d_k * d_k) as f64;
    let n = n as f64;
    let exact = (alpha * k2 + alpha * alpha * n) * delta as f64 / (k2 + n);
    (exact, alpha * alpha * delta as f64)
}

/// Analytical cost of a shape-annotated layer list.
pub fn model_cost(layers: &[LayerSpec], count_bn: bool) -> Result<CostReport> {
    let mut report = CostReport {
        layers: Vec::new(),
        params: 0,
        mult_adds: 0,
        bn_params: 0,
        bn_running: 0,
        count_bn,
    };
    for (i, l) in layers.iter().enumerate() {
        if l.in_extent == 0 || l.out_extent == 0 {
            return Err(Error::InvalidShape(format!(
                "layer {i} is not shape-annotated"
            )));
        }
        let d_f = (l.out_extent * l.out_extent) as u64;
        let (mut params, madds, has_bn) = match l.kind {
            LayerKind::Conv { .. } => {
                let p = (9 * l.in_channels * l.out_channels) as u64;
                (p, p * d_f, true)
            }
            LayerKind::DwConv { .. } => {
                let p = (9 * l.out_channels) as u64;
                (p, p * d_f, true)
            }
            LayerKind::PwConv => {
                let p = (l.in_channels * l.out_channels) as u64;
                (p, p * d_f, true)
            }
            LayerKind::Dense => {
                let w = (l.in_channels * l.out_channels) as u64;
                (w + l.out_channels as u64, w, false)
            }
            LayerKind::MaxPool | LayerKind::Fmp | LayerKind::Gap | LayerKind::Softmax => {
                (0, 0, false)
            }
        };
        if has_bn {
            let bn = 2 * l.out_channels as u64;
            report.bn_params += bn;
            report.bn_running += bn;
            if count_bn {
                params += bn;
            }
        }
        report.params += params;
        report.mult_adds += madds;
        report.layers.push(LayerCost {
            name: format!("layer{i}"),
            params,
            mult_adds: madds,
        });
    }
    Ok(report)
}

/// Presentation-ready cost of an architecture.
pub fn arch_cost(spec: &ArchSpec, count_bn: bool) -> Result<CostReport> {
    model_cost(&crate::arch::build(spec)?, count_bn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build, Variant};

    #[test]
    fn depthwise_parameter_formula() {
        assert_eq!(dw_params(3, 64, 0.5, 2), 576);
        assert_eq!(dw_params(3, 32, 1.0, 1), 288);
        assert_eq!(dw_params(3, 32, 1.0, 2), 2 * dw_params(3, 32, 1.0, 1));
    }

    #[test]
    fn pointwise_parameter_formula() {
        assert_eq!(pw_params(64, 128, 0.5, 2), 4096);
        assert_eq!(pw_params(32, 64, 1.0, 1), 2048);
        assert_eq!(pw_params(32, 64, 0.5, 1) * 4, pw_params(32, 64, 1.0, 1));
    }

    #[test]
    fn madds_formulas() {
        assert_eq!(dw_madds(3, 64, 0.5, 2, 32), 589_824);
        assert_eq!(dw_madds(3, 64, 0.5, 2, 1), dw_params(3, 64, 0.5, 2));
        assert_eq!(dw_madds(3, 64, 0.5, 2, 16) * 4, dw_madds(3, 64, 0.5, 2, 32));
        assert_eq!(pw_madds(64, 128, 0.5, 2, 32), 4_194_304);
        assert_eq!(pw_madds(64, 128, 0.5, 2, 1), pw_params(64, 128, 0.5, 2));
        assert_eq!(pw_madds(64, 128, 0.5, 4, 8), 2 * pw_madds(64, 128, 0.5, 2, 8));
    }

    #[test]
    fn ratio_matches_published_example() {
        let (exact, approx) = separable_ratio(3, 128, 0.5, 2);
        assert!((exact - 73.0 / 137.0).abs() < 1e-12);
        assert_eq!(format!("{exact:.2}"), "0.53");
        assert!((approx - 0.5).abs() < 1e-12);
        let (one, _) = separable_ratio(3, 128, 1.0, 1);
        assert!((one - 1.0).abs() < 1e-12);
        let (one, _) = separable_ratio(5, 999, 1.0, 1);
        assert!((one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_delta_doubles_separable_costs() {
        for &alpha in &[1.0, 0.5, 0.25] {
            let s1 = ArchSpec::new(Variant::Baseline, alpha, 1, 10).unwrap();
            let s2 = ArchSpec::new(Variant::Baseline, alpha, 2, 10).unwrap();
            let (l1, l2) = (build(&s1).unwrap(), build(&s2).unwrap());
            let (c1, c2) = (
                model_cost(&l1, false).unwrap(),
                model_cost(&l2, false).unwrap(),
            );
            for ((a, b), l) in c1.layers.iter().zip(&c2.layers).zip(&l1) {
                if matches!(l.kind, LayerKind::DwConv { .. } | LayerKind::PwConv) {
                    assert_eq!(2 * a.params, b.params, "{}", a.name);
                    assert_eq!(2 * a.mult_adds, b.mult_adds, "{}", a.name);
                }
            }
        }
    }

    #[test]
    fn totals_are_layer_sums() {
        let spec = ArchSpec::new(Variant::Fmp, 0.5, 2, 100).unwrap();
        let report = arch_cost(&spec, true).unwrap();
        assert_eq!(
            report.params,
            report.layers.iter().map(|l| l.params).sum::<u64>()
        );
        assert_eq!(
            report.mult_adds,
            report.layers.iter().map(|l| l.mult_adds).sum::<u64>()
        );
    }

    #[test]
    fn presentation_rounding_is_half_up() {
        assert_eq!(millions(11_596_288), 11.6);
        assert_eq!(millions(3_195_338), 3.2);
        assert_eq!(millions(125_000), 0.13);
        assert_eq!(millions(124_999), 0.12);
    }
}
