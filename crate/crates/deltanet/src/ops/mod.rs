//! Forward and backward kernels for every layer type in the model family.

mod activation;
mod batchnorm;
mod conv;
mod depthwise;
mod dense;
mod fmp;
mod gemm;
mod pool;
mod softmax;

pub use activation::{dropout, dropout_backward, relu, relu_backward};
pub use batchnorm::{batchnorm, batchnorm_backward, BnCache, BN_EPS, BN_MOMENTUM};
pub use conv::{
    conv2d, conv2d_backward, pointwise_conv2d, pointwise_conv2d_backward, same_out,
    same_pad_before,
};
pub use dense::{dense, dense_backward};
pub use depthwise::{depthwise_conv2d, depthwise_conv2d_backward};
pub use fmp::{fmp_pool, fmp_pool_backward, fmp_regions, PoolRegions};
pub use pool::{global_avg_pool, global_avg_pool_backward, maxpool_3x3_s2, maxpool_backward};
pub use softmax::softmax_xent;
