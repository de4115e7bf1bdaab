//! Contextual speech-enhancement frontend.
//!
//! A mask-estimating network that conditions noisy log-mel features on up to
//! three optional context signals: a playback reference (stacked with the
//! input), a noise-only context preceding the utterance (encoded and
//! cross-attended), and a speaker embedding (FiLM). Includes a small
//! reverse-mode gradient engine, a synthetic scene generator and an ablation
//! harness.
//!
//! Everything numeric is generic over [`Scalar`] (`f32`, `f64`, or the
//! double-double [`DoubleDouble`] used for gradient checks); the aliases below fix
//! the common choices.

pub mod autodiff;
pub mod blocks;
pub mod config;
pub mod datagen;
pub mod double_double;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use autodiff::{ParameterStore, Tape};
pub use blocks::{CrossAttentionVariant, PositionalMode};
pub use config::KvConfig;
pub use datagen::{SceneSpec, SynthSpeaker, Task, TrainExample};
pub use error::{Error, Result};
pub use eval::{EvalCondition, MetricRow, Missing};
pub use features::{FeatureMap, MaskEstimate, Waveform};
pub use model::{ContextBundle, FrontendModel, ModelConfig, SpeakerEmbedding};
pub use scalar::{DoubleDouble, Scalar};
pub use tensor::Matrix;
pub use training::{TrainConfig, Trainer};

pub type Model = FrontendModel<f32>;
pub type Model64 = FrontendModel<f64>;
pub type Features = FeatureMap<f32>;
pub type Features64 = FeatureMap<f64>;
pub type Mask = MaskEstimate<f32>;
pub type Mask64 = MaskEstimate<f64>;
pub type Bundle = ContextBundle<f32>;
pub type Example = TrainExample<f32>;
