//! Hashed character n-gram features, a linear projection to a unit-norm
//! embedding, and symmetric InfoNCE training.

mod features;
mod loss;
mod params;
mod train;

pub use features::{featurize, featurize_with, FeatureVector, NGRAM_MAX, NGRAM_MIN};
pub use loss::{infonce_grad, infonce_loss, ContrastiveBatch};
pub use params::{
    EmbeddingVector, EncoderParams, DEFAULT_EMBED_DIM, DEFAULT_FEATURE_DIM, DEFAULT_TEMPERATURE,
};
pub use train::{materialize, train_contrastive, train_on_pairs, TrainConfig, TrainOutcome};

pub(crate) use params::{dot, hex16, write_atomic};
