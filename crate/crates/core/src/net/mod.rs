//! Recurrent sub-aperture deblurring network: per-view residual restoration
//! from `2b + 1` consecutive spiral-ordered views, with a half-resolution
//! hidden state carried from step to step.

mod infer;
pub mod layers;
mod model;
mod params;
pub mod real;
mod train;

pub use infer::{
    deblur_lightfield, deblur_lightfield_padded, deblur_lightfield_timed, tensor_view, view_tensor,
    Deblurred,
};
pub use layers::Tensor;
pub use model::{
    frame_window, initial_hidden, loss, mse, net_forward, run_sequence, unroll_gradients,
    unroll_loss, StepOutput, UnrollLoss,
};
pub use params::{
    layout, Architecture, NetworkConfig, NetworkParams, Norm, ResBlock, TensorInfo,
    CHECKPOINT_VERSION,
};
pub use real::Real;
pub use train::{
    crop_view, smooth, smoothed_endpoints, train, train_from, Adam, TrainConfig, TrainOutcome,
    TrainRecord,
};
