//! Semi-supervised fake-tweet classification: weak-labelling pipeline,
//! feature extraction, external-knowledge retrieval, a BiLSTM + cross-stitch
//! fusion network trained with a mixed supervised / adversarial / virtual
//! adversarial objective, evaluation harness and an online-learning service.

pub mod autograd;
pub mod dataset;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gradcheck;
pub mod knowledge;
pub mod layers;
pub mod network;
pub mod nli;
pub mod params;
pub mod pipeline;
pub mod plots;
pub mod service;
pub mod synthetic;
pub mod text;
pub mod training;

pub use error::{Error, Result};
