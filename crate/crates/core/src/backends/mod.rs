//! Per-layer reasoning backends.
//!
//! The synthetic backend wraps the symbolic layers and is always available.
//! The remote backend sends each layer a templated prompt over a
//! chat-completion style endpoint and reads back a risk score plus auxiliary
//! signals; embeddings, divergences and energies still come from the
//! synthetic forward pass, so every record has a complete numeric core.

pub mod mock;
pub mod prompt;
pub mod remote;
pub mod synthetic;

use serde::Serialize;
use thiserror::Error;

pub use prompt::serialize_prompt;
pub use remote::{RemoteClient, RemoteConfig, RemoteReply, CREDENTIAL_ENV};
pub use synthetic::{evaluate_layer, uncertainty_from_probability, LayerInput, LayerOutput};

/// Auxiliary signals attached to every layer evaluation.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AuxSignals {
    /// In `[0, 1]`.
    pub uncertainty: f64,
    pub reasoning_depth: u32,
    /// Wall-clock milliseconds spent producing the layer output.
    pub wall_latency_ms: f64,
    /// Opaque signature string, when the backend supplies one.
    pub signature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendErrorKind {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("unparseable reply: {0}")]
    Unparseable(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("layer {layer} of instance {instance}: {kind} (after {retries} retries)")]
pub struct BackendError {
    pub layer: u8,
    pub instance: u64,
    pub retries: u32,
    /// Milliseconds spent before giving up.
    pub wall_latency_ms: f64,
    pub kind: BackendErrorKind,
}

/// Which backend scores the layers.
#[derive(Debug, Clone)]
pub enum Backend {
    Synthetic,
    Remote(RemoteClient),
}

impl Backend {
    pub fn is_remote(&self) -> bool {
        matches!(self, Backend::Remote(_))
    }

    /// Concurrent requests the backend tolerates; `None` for unbounded.
    pub fn max_in_flight(&self) -> Option<usize> {
        match self {
            Backend::Synthetic => None,
            Backend::Remote(c) => Some(c.config().max_in_flight.max(1)),
        }
    }
}
