//! Binary-free firmware zero-day risk estimation.
//!
//! A firmware specimen is described by a triple of metadata, a configuration
//! vector and a structural-abstraction vector. Three symbolic layers map the
//! descriptor into embeddings (configuration interpreter, structural analyzer,
//! affine fusion); cross-layer divergence, entropy, misalignment and a
//! symbolic energy model are then coupled into a final probability.
//!
//! The crate also carries the evaluation machinery used to study the model:
//! seeded synthetic descriptor generation with exposure perturbations, a
//! self-contained statistics engine, the exposure / cross-layer / ablation
//! studies and a calibration search.

pub mod alignment;
pub mod backends;
pub mod cost_model;
pub mod descriptors;
pub mod error;
pub mod experiments;
pub mod files;
pub mod linalg;
pub mod params;
pub mod reasoner;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
