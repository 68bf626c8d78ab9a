//! Symbolic network descriptions for the three model variants.
//!
//! [`build`] materializes a variant as a list of [`LayerSpec`]s with full
//! shape annotations, parameterized by the width multiplier `alpha`, the
//! depth multiplier `delta` and the class count. Convolution stages imply a
//! batch norm and ReLU; those are materialized by the graph module and
//! accounted separately by the cost module.

use crate::error::{Error, Result};
use crate::ops::same_out;

/// Which table of the model family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Stride-2 downsampling inside the depthwise convolutions.
    Baseline,
    /// Stride-1 convolutions with overlapping 3x3/s2 max pooling.
    MaxPool3,
    /// Stride-1 convolutions with fractional max pooling at ratio 1.4.
    Fmp,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "table1",
            Variant::MaxPool3 => "table2",
            Variant::Fmp => "table3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table1" | "baseline" => Ok(Variant::Baseline),
            "table2" | "maxpool3" => Ok(Variant::MaxPool3),
            "table3" | "fmp" => Ok(Variant::Fmp),
            other => Err(Error::Config(format!(
                "variant: unknown value {other:?} (expected table1, table2 or table3)"
            ))),
        }
    }
}

/// Spatial extents the fractional max pooling stages step through.
/// The 10 -> 6 step follows the published schedule rather than
/// `floor(10 / 1.4) = 7`.
pub const FMP_SCHEDULE: [usize; 8] = [32, 22, 15, 10, 6, 4, 2, 1];

/// One network variant instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchSpec {
    pub variant: Variant,
    pub alpha: f64,
    pub delta: usize,
    pub classnum: usize,
}

impl ArchSpec {
    pub fn new(variant: Variant, alpha: f64, delta: usize, classnum: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha: must be in (0, 1], got {alpha}"
            )));
        }
        if delta == 0 {
            return Err(Error::Config("delta: must be a positive integer".into()));
        }
        if classnum == 0 {
            return Err(Error::Config("classnum: must be positive".into()));
        }
        Ok(ArchSpec {
            variant,
            alpha,
            delta,
            classnum,
        })
    }
}

/// Layer kinds as they appear in the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Standard 3x3 convolution.
    Conv { stride: usize },
    /// 3x3 depthwise convolution with the depth multiplier applied.
    DwConv { stride: usize },
    /// 1x1 pointwise convolution.
    PwConv,
    /// 3x3 stride-2 overlapping max pool.
    MaxPool,
    /// Fractional max pool at ratio 1.4.
    Fmp,
    /// Global average pool.
    Gap,
    /// Fully connected classifier head.
    Dense,
    /// Presentation-only classifier row; identity at runtime.
    Softmax,
}

/// One table row with resolved shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_extent: usize,
    pub out_extent: usize,
}

/// Width-multiplier channel scaling: `max(1, round(alpha * c))`, half-up.
pub fn scale_channels(c: usize, alpha: f64) -> usize {
    ((alpha * c as f64 + 0.5).floor() as usize).max(1)
}

/// Base output channels of the thirteen depthwise separable pairs, with the
/// depthwise stride used by the stride-downsampling variant.
const PAIRS: [(usize, usize, usize); 13] = [
    (32, 64, 1),
    (64, 128, 2),
    (128, 128, 1),
    (128, 256, 2),
    (256, 256, 1),
    (256, 512, 2),
    (512, 512, 1),
    (512, 512, 1),
    (512, 512, 1),
    (512, 512, 1),
    (512, 512, 1),
    (512, 1024, 2),
    (1024, 1024, 1),
];

struct Builder {
    alpha: f64,
    delta: usize,
    extent: usize,
    layers: Vec<LayerSpec>,
}

impl Builder {
    fn push(&mut self, kind: LayerKind, in_ch: usize, out_ch: usize, out_extent: usize) {
        self.layers.push(LayerSpec {
            kind,
            in_channels: in_ch,
            out_channels: out_ch,
            in_extent: self.extent,
            out_extent,
        });
        self.extent = out_extent;
    }

    fn conv(&mut self, stride: usize, in_ch: usize, out_ch: usize) {
        let out = same_out(self.extent, stride);
        self.push(LayerKind::Conv { stride }, in_ch, out_ch, out);
    }

    /// Depthwise + pointwise pair for base channels `m -> n`.
    fn pair(&mut self, m: usize, n: usize, dw_stride: usize) {
        let m_s = scale_channels(m, self.alpha);
        let n_s = scale_channels(n, self.alpha);
        let out = same_out(self.extent, dw_stride);
        self.push(LayerKind::DwConv { stride: dw_stride }, m_s, m_s * self.delta, out);
        self.push(LayerKind::PwConv, m_s * self.delta, n_s, self.extent);
    }

    fn maxpool(&mut self, channels: usize) {
        let out = same_out(self.extent, 2);
        self.push(LayerKind::MaxPool, channels, channels, out);
    }

    fn fmp(&mut self, channels: usize, out_extent: usize) {
        self.push(LayerKind::Fmp, channels, channels, out_extent);
    }

    fn head(&mut self, classnum: usize) {
        let c = scale_channels(1024, self.alpha);
        self.push(LayerKind::Gap, c, c, 1);
        self.push(LayerKind::Dense, c, classnum, 1);
        self.push(LayerKind::Softmax, classnum, classnum, 1);
    }
}

/// Materializes the layer list for `spec`, shape-annotated.
pub fn build(spec: &ArchSpec) -> Result<Vec<LayerSpec>> {
    let mut b = Builder {
        alpha: spec.alpha,
        delta: spec.delta,
        extent: 32,
        layers: Vec::new(),
    };
    let first_out = scale_channels(32, spec.alpha);
    match spec.variant {
        Variant::Baseline => {
            b.conv(2, 3, first_out);
            for (m, n, s) in PAIRS {
                b.pair(m, n, s);
            }
        }
        Variant::MaxPool3 => {
            b.conv(1, 3, first_out);
            b.maxpool(first_out);
            // Pools replace the stride-2 depthwise stages: each pool sits
            // before the pair whose depthwise carried stride 2 above.
            for (m, n, s) in PAIRS {
                if s == 2 {
                    b.maxpool(scale_channels(m, spec.alpha));
                }
                b.pair(m, n, 1);
            }
        }
        Variant::Fmp => {
            b.conv(1, 3, first_out);
            // Pair layout per the published table: the pools move to ratio
            // 1.4 and the two late 5x blocks split into 2x + 2x.
            b.fmp(first_out, 22);
            b.pair(32, 64, 1);
            b.pair(64, 128, 1);
            b.fmp(scale_channels(128, spec.alpha), 15);
            b.pair(128, 128, 1);
            b.pair(128, 256, 1);
            b.fmp(scale_channels(256, spec.alpha), 10);
            b.pair(256, 256, 1);
            b.pair(256, 512, 1);
            b.fmp(scale_channels(512, spec.alpha), 6);
            b.pair(512, 512, 1);
            b.pair(512, 512, 1);
            b.fmp(scale_channels(512, spec.alpha), 4);
            b.pair(512, 512, 1);
            b.pair(512, 512, 1);
            b.fmp(scale_channels(512, spec.alpha), 2);
            b.pair(512, 1024, 1);
            b.fmp(scale_channels(1024, spec.alpha), 1);
            b.pair(1024, 1024, 1);
        }
    }
    b.head(spec.classnum);
    infer_shapes(&b.layers)?;
    Ok(b.layers)
}

/// Re-derives every layer's shapes from the chain rules and checks them
/// against the annotations, naming the first offending layer.
pub fn infer_shapes(layers: &[LayerSpec]) -> Result<()> {
    let mut extent = 32;
    let mut channels = 3;
    for (i, l) in layers.iter().enumerate() {
        let fail = |what: String| {
            Err(Error::InvalidShape(format!(
                "layer {i} ({:?}): {what}",
                l.kind
            )))
        };
        if l.in_extent != extent {
            return fail(format!("expected input extent {extent}, got {}", l.in_extent));
        }
        if l.in_channels != channels {
            return fail(format!(
                "expected {channels} input channels, got {}",
                l.in_channels
            ));
        }
        let expect_out_extent = match l.kind {
            LayerKind::Conv { stride } | LayerKind::DwConv { stride } => same_out(extent, stride),
            LayerKind::PwConv | LayerKind::Softmax => extent,
            LayerKind::MaxPool => same_out(extent, 2),
            LayerKind::Fmp => {
                let pos = FMP_SCHEDULE.iter().position(|&e| e == extent);
                match pos {
                    Some(p) if p + 1 < FMP_SCHEDULE.len() => FMP_SCHEDULE[p + 1],
                    _ => return fail(format!("extent {extent} not in the FMP schedule")),
                }
            }
            LayerKind::Gap | LayerKind::Dense => 1,
        };
        if l.out_extent != expect_out_extent {
            return fail(format!(
                "expected output extent {expect_out_extent}, got {}",
                l.out_extent
            ));
        }
        if matches!(
            l.kind,
            LayerKind::MaxPool | LayerKind::Fmp | LayerKind::Gap
        ) && l.out_channels != l.in_channels
        {
            return fail("pooling must preserve channels".into());
        }
        extent = l.out_extent;
        channels = l.out_channels;
    }
    Ok(())
}
