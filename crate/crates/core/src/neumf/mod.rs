//! Neural scorers (GMF, MLP, NeuMF) trained on implicit feedback.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod train;

pub use gradcheck::grad_check;
pub use model::{
    pretrain_and_fuse, AnyModel, GmfModel, LatentConfig, MlpModel, ModelKind, NeumfModel, NeuralModel, PairInput,
};
pub use train::{train, train_with, TrainConfig};
