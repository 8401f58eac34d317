//! Complex-valued U-Net enhancement: layers, losses, training and
//! checkpoints. Gradients are computed by hand over the real and imaginary
//! parts as independent real parameters.

mod checkpoint;
mod conv;
mod encoder;
mod loss;
mod optim;
mod tensor;
mod train;
mod unet;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use conv::{
    complex_conv_forward, real_conv2d, ComplexConvLayer, ConvGeometry, Direction, LayerParams,
};
pub use encoder::{ConvFeatureEncoder, EncoderConfig, FeatureEncoder, FeatureMap};
pub use loss::{mse_loss, perceptual_loss, perceptual_loss_from_features, LossKind};
pub use optim::Adam;
pub use tensor::ComplexTensor;
pub use train::{loss_and_gradients, LossRegion, TrainConfig, TrainExample, Trainer};
pub use unet::{
    apply_mask, enhance, unet_forward, ComplexMask, ComplexUNet, Gradients, MaskMode, UNetConfig,
};
