//! A minimal spatial-temporal graph convolution network.
//!
//! Everything is hand-rolled: dense f64 tensors, analytic gradients per
//! operation, and plain SGD. Parameters are kept exactly representable as
//! f32 (initialization samples f32 values and every update rounds through
//! f32) so binary checkpoints round-trip without loss.

pub mod checkpoint;
pub mod model;
pub mod ops;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{
    LayerGrads, LayerParams, Matrix, ModelGrads, ModelMeta, ModelParams, ParamKind, ParamView,
    TrainConfig,
};
pub use ops::{
    backward_sample, features_from_sequence, forward_eval, forward_train, FeatureMap, FeatureMode,
    SampleCache,
};
pub use train::{
    evaluate, learning_rate, prepare_samples, sgd_step, train, EpochMetrics, PreparedSample,
};
