//! Invariant feature space: two encoders into a shared space and two
//! decoders back, trained on paired states with ADAM.

mod adam;
mod checkpoint;
mod mlp;
mod model;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{check_version, NetworkDoc, CHECKPOINT_VERSION};
pub use mlp::{Activation, ForwardCache, Layer, Mlp, MlpGrads};
pub use model::{
    train_embedding, train_from, EmbedConfig, EmbeddingModel, Losses, ModelGrads, Side,
    TrainingHistory,
};
