//! Differentiable primitive operations.
//!
//! Every operation comes as a forward function plus an explicit backward
//! function; there is no tape. Composite layers cache whatever their
//! backward needs (inputs, normalization statistics, argmax positions) and
//! call the backwards in reverse order. All reductions run in a fixed
//! sequential order so results are reproducible bit-for-bit.

pub mod activ;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod shape;

pub use activ::{relu, relu_backward, softmax, softmax_rows};
pub use conv::{
    conv2d, conv2d_backward, depthwise_conv2d, depthwise_conv2d_backward, Conv2dGrads,
    DepthwiseGrads,
};
pub use gradcheck::{check_gradients, GradCheckCfg, GradCheckReport};
pub use loss::{smooth_l1, softmax_cross_entropy};
pub use norm::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, BnCache, BnParams, BN_EPS, BN_MOMENTUM,
};
pub use pool::{
    global_avgpool, global_avgpool_backward, maxpool2d, maxpool2d_backward, pool_out_dim,
};
pub use shape::{concat_channels, split_channels};
