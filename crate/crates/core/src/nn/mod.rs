//! Minimal single-sample network building blocks with hand-written backward passes.

mod adam;
mod conv;
mod norm;
mod params;
mod pconv;
mod tensor;

pub use adam::Adam;
pub use conv::{Conv2d, ConvShape};
pub use norm::{
    instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, InstanceNormCache, Norm,
    INSTANCE_NORM_EPS, LEAKY_SLOPE,
};
pub use params::{Grads, Param, ParamId, ParamStore};
pub use pconv::{PartialConv2d, PartialConvOutput};
pub use tensor::Tensor;

