//! The evaluation boundary: anything that maps genomes to embeddings (and
//! optionally discriminator probabilities) is an [`Oracle`].
//!
//! Model processes are reached through [`RemoteOracle`] over the line
//! protocol in [`protocol`]; [`synthetic`] holds deterministic in-process
//! oracles used by tests, benchmarks and the acceptance suite.

pub mod corpus;
mod evaluator;
pub mod protocol;
mod remote;
mod server;
pub mod synthetic;
mod transport;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{Embedding, Measurement};
use crate::space::Genome;

pub use evaluator::OracleEvaluator;
pub use protocol::{Message, TargetKind, PROTOCOL_VERSION};
pub use remote::RemoteOracle;
pub use server::serve;
pub use synthetic::{Landscape, SyntheticBenchmarkOracle, SyntheticLinearOracle};
pub use transport::{LineTransport, Transport};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("could not start oracle: {0}")]
    Spawn(String),
    #[error("oracle i/o error: {0}")]
    Io(String),
    #[error("oracle connection closed")]
    Closed,
    #[error("no reply from oracle within {0:?}")]
    Timeout(Duration),
    #[error("malformed message at line {line}, column {column}: {message}")]
    Malformed { line: usize, column: usize, message: String },
    #[error("expected `{expected}` from oracle, got `{got}`")]
    UnexpectedMessage { expected: &'static str, got: String },
    #[error("protocol version mismatch: engine speaks {engine}, oracle speaks {oracle}")]
    VersionMismatch { engine: u32, oracle: u32 },
    #[error("latent space fingerprint mismatch: engine {engine}, oracle {oracle}")]
    FingerprintMismatch { engine: String, oracle: String },
    #[error("reply id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("oracle returned {got} results for {expected} genomes")]
    ResultCount { expected: usize, got: usize },
    #[error("genome {index}: embedding dimension {got}, handshake promised {expected}")]
    DimensionDrift { index: usize, expected: usize, got: usize },
    #[error("oracle error: {0}")]
    Remote(String),
    #[error("oracle does not support {0}")]
    Unsupported(&'static str),
    #[error("oracle cannot serve this latent space: {0}")]
    InvalidSpace(String),
    #[error("unknown benchmark landscape `{0}` (expected sphere or zdt1)")]
    UnknownLandscape(String),
    #[error("invalid handshake: {0}")]
    InvalidHandshake(String),
}

impl From<std::io::Error> for OracleError {
    fn from(e: std::io::Error) -> Self {
        OracleError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleHandshake {
    pub protocol_version: u32,
    pub embedding_dim: usize,
    pub supports_discriminator: bool,
    pub space_fingerprint: String,
    /// Non-zero for oracles reporting objective values instead of embeddings.
    pub raw_objectives: usize,
    pub supports_render: bool,
}

impl OracleHandshake {
    pub fn from_message(msg: Message) -> Result<Self, OracleError> {
        match msg {
            Message::Hello {
                version,
                embedding_dim,
                supports_discriminator,
                space_fingerprint,
                raw_objectives,
                supports_render,
                ..
            } => Ok(Self {
                protocol_version: version,
                embedding_dim,
                supports_discriminator,
                space_fingerprint,
                raw_objectives,
                supports_render,
            }),
            other => Err(OracleError::UnexpectedMessage { expected: "hello", got: other.type_name().into() }),
        }
    }

    pub fn to_message(&self) -> Message {
        Message::Hello {
            version: self.protocol_version,
            embedding_dim: self.embedding_dim,
            supports_discriminator: self.supports_discriminator,
            space_fingerprint: self.space_fingerprint.clone(),
            raw_objectives: self.raw_objectives,
            supports_render: self.supports_render,
            metadata: None,
        }
    }

    /// Checks protocol version, space fingerprint and dimension.
    pub fn validate(&self, expected_fingerprint: &str) -> Result<(), OracleError> {
        if self.protocol_version != PROTOCOL_VERSION {
            return Err(OracleError::VersionMismatch { engine: PROTOCOL_VERSION, oracle: self.protocol_version });
        }
        if self.space_fingerprint != expected_fingerprint {
            return Err(OracleError::FingerprintMismatch {
                engine: expected_fingerprint.to_string(),
                oracle: self.space_fingerprint.clone(),
            });
        }
        if self.embedding_dim == 0 {
            return Err(OracleError::InvalidHandshake("embedding_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRequest {
    pub kind: TargetKind,
    pub payload: String,
}

impl TargetRequest {
    pub fn text(payload: impl Into<String>) -> Self {
        Self { kind: TargetKind::Text, payload: payload.into() }
    }

    pub fn image_path(payload: impl Into<String>) -> Self {
        Self { kind: TargetKind::ImagePath, payload: payload.into() }
    }
}

/// A decoded output (picture or caption) for one genome.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub media_type: String,
    pub data: Vec<u8>,
}

impl Rendered {
    /// File extension matching the media type.
    pub fn extension(&self) -> &'static str {
        match self.media_type.as_str() {
            "image/png" => "png",
            "image/jpeg" => "jpg",
            "text/plain" => "txt",
            "application/json" => "json",
            _ => "bin",
        }
    }
}

pub trait Oracle {
    fn handshake(&mut self) -> Result<OracleHandshake, OracleError>;

    fn target(&mut self, request: &TargetRequest) -> Result<Embedding, OracleError>;

    /// One measurement per genome, in input order.
    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Measurement>, OracleError>;

    fn render(&mut self, _genome: &Genome) -> Result<Rendered, OracleError> {
        Err(OracleError::Unsupported("render"))
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn handshake(&mut self) -> Result<OracleHandshake, OracleError> {
        (**self).handshake()
    }

    fn target(&mut self, request: &TargetRequest) -> Result<Embedding, OracleError> {
        (**self).target(request)
    }

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Measurement>, OracleError> {
        (**self).evaluate(genomes)
    }

    fn render(&mut self, genome: &Genome) -> Result<Rendered, OracleError> {
        (**self).render(genome)
    }
}

/// Evaluates a batch and checks the reply against the handshake: one entry
/// per genome and every embedding of the promised dimension.
pub fn evaluate_batch(
    oracle: &mut dyn Oracle,
    handshake: &OracleHandshake,
    genomes: &[Genome],
) -> Result<Vec<Measurement>, OracleError> {
    if genomes.is_empty() {
        return Ok(Vec::new());
    }
    let measurements = oracle.evaluate(genomes)?;
    if measurements.len() != genomes.len() {
        return Err(OracleError::ResultCount { expected: genomes.len(), got: measurements.len() });
    }
    for (index, m) in measurements.iter().enumerate() {
        if let Measurement::Embedded { embedding, .. } = m {
            if embedding.dim() != handshake.embedding_dim {
                return Err(OracleError::DimensionDrift {
                    index,
                    expected: handshake.embedding_dim,
                    got: embedding.dim(),
                });
            }
        }
    }
    Ok(measurements)
}
