//! Image-to-image diffusion for semantic image synthesis.
//!
//! A style reference is encoded, noised part of the way along a linear
//! schedule and denoised under a segmentation mask. Optional refinement
//! rounds repeat the cycle on the output after matching its color
//! statistics to the reference.
//!
//! The denoiser here is a small perceptron and the codecs are linear, which
//! keeps every stage checkable against closed forms.
#![allow(clippy::needless_range_loop)]

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod imaging;
pub mod latent;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod schedule;
pub mod toy;
pub mod training;
pub mod weights;

pub use denoiser::{AnalyticGaussian, Architecture, DenoiserParams, GaussianPrior, NoisePredictor, Tensor, Tensors};
pub use diffusion::{SynthesisConditions, DEFAULT_T_START};
pub use error::{Error, Result};
pub use imaging::{LabelGrid, RgbImage};
pub use latent::{Codec, CodecKind, Latent, Shape};
pub use metrics::{total_score, ScoreReport};
pub use pipeline::PipelineConfig;
pub use rng::{Domain, Seed};
pub use schedule::{NoiseSchedule, SamplerCoefficients, SamplerMode};
pub use training::{TrainConfig, TrainRun};
pub use weights::WeightFile;
