//! Convolutional autoencoder over padded word-embedding matrices, with an
//! optional unit-norm bottleneck.

mod adam;
mod checkpoint;
mod model;
pub mod ops;
mod train;

pub use adam::Adam;
pub use checkpoint::{parse_checkpoint, read_checkpoint, write_checkpoint};
pub use model::{CaeConfig, CaeModel, Gradients, NORM_EPS};
pub use ops::{conv2d, maxpool2d, mse_loss, upsample2d, ConvLayer, Tensor3};
pub use train::{
    adam_step, epochs_to_plateau, featurize, train, train_tensors, train_with_progress,
    LearningCurve, Trained,
};
