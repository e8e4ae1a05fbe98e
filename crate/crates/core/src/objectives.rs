//! Objective math: cosine similarity between embeddings, the discriminator
//! realness loss, and the mapping of every objective onto the engine's
//! all-minimized convention.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding contains non-finite values")]
    NonFiniteEmbedding,
    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("objective value {0} is not finite")]
    NonFinite(f64),
    #[error("measurement has no discriminator probability")]
    MissingDiscriminator,
    #[error("measurement has no embedding")]
    MissingEmbedding,
    #[error("raw objective #{0} missing from measurement")]
    MissingRawObjective(usize),
    #[error("oracle reported an error: {0}")]
    OracleEntry(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(values: Vec<f64>) -> Self {
        Embedding(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Cosine similarity between the genome's embedding and the target.
    Similarity,
    /// Binary cross-entropy of the discriminator output against `real_label`.
    DiscriminatorLoss {
        #[serde(default = "default_real_label")]
        real_label: f64,
    },
    /// A value the oracle reports directly (benchmark landscapes).
    Custom { name: String },
}

fn default_real_label() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    #[serde(flatten)]
    pub kind: ObjectiveKind,
    pub direction: Direction,
}

impl ObjectiveSpec {
    pub fn similarity() -> Self {
        Self { kind: ObjectiveKind::Similarity, direction: Direction::Maximize }
    }

    pub fn discriminator_loss(real_label: f64) -> Self {
        Self { kind: ObjectiveKind::DiscriminatorLoss { real_label }, direction: Direction::Minimize }
    }

    pub fn custom(name: impl Into<String>, direction: Direction) -> Self {
        Self { kind: ObjectiveKind::Custom { name: name.into() }, direction }
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            ObjectiveKind::Similarity => "similarity",
            ObjectiveKind::DiscriminatorLoss { .. } => "discriminator_loss",
            ObjectiveKind::Custom { name } => name,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if let ObjectiveKind::DiscriminatorLoss { real_label } = self.kind {
            if !(real_label > 0.0 && real_label <= 1.0) {
                return Err(ObjectiveError::OutOfRange {
                    name: "real_label",
                    value: real_label,
                    range: "(0, 1]",
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.direction {
            Direction::Maximize => "max",
            Direction::Minimize => "min",
        };
        write!(f, "{}({dir})", self.name())
    }
}

/// What an oracle returns for one genome.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Embedded { embedding: Embedding, d_prob: Option<f64> },
    /// Objective values reported directly, in the order of the run's custom objectives.
    Raw { objectives: Vec<f64> },
    Failed { message: String },
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, ObjectiveError> {
    if a.dim() != b.dim() {
        return Err(ObjectiveError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if !(dot.is_finite() && na.is_finite() && nb.is_finite()) {
        return Err(ObjectiveError::NonFiniteEmbedding);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(ObjectiveError::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// `-[R ln p + (1 - R) ln(1 - p)]` with `p` clamped to `[1e-7, 1 - 1e-7]`.
///
/// `real_label` is accepted on `[0, 1]`; run configs restrict it to `(0, 1]`.
pub fn discriminator_loss(d_prob: f64, real_label: f64) -> Result<f64, ObjectiveError> {
    if !(0.0..=1.0).contains(&d_prob) {
        return Err(ObjectiveError::OutOfRange { name: "d_prob", value: d_prob, range: "[0, 1]" });
    }
    if !(0.0..=1.0).contains(&real_label) {
        return Err(ObjectiveError::OutOfRange {
            name: "real_label",
            value: real_label,
            range: "[0, 1]",
        });
    }
    let p = d_prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    Ok(-(real_label * p.ln() + (1.0 - real_label) * (1.0 - p).ln()))
}

pub fn to_minimization(direction: Direction, raw: f64) -> Result<f64, ObjectiveError> {
    if !raw.is_finite() {
        return Err(ObjectiveError::NonFinite(raw));
    }
    Ok(match direction {
        Direction::Minimize => raw,
        Direction::Maximize => -raw,
    })
}

/// Inverse of [`to_minimization`].
pub fn from_minimization(direction: Direction, internal: f64) -> f64 {
    match direction {
        Direction::Minimize => internal,
        Direction::Maximize => -internal,
    }
}

/// Builds one genome's minimized objective vector, in spec order.
pub fn assemble(
    specs: &[ObjectiveSpec],
    measurement: &Measurement,
    target: Option<&Embedding>,
) -> Result<Vec<f64>, ObjectiveError> {
    if let Measurement::Failed { message } = measurement {
        return Err(ObjectiveError::OracleEntry(message.clone()));
    }
    let mut custom_index = 0;
    specs
        .iter()
        .map(|spec| {
            let raw = match (&spec.kind, measurement) {
                (ObjectiveKind::Similarity, Measurement::Embedded { embedding, .. }) => {
                    let target = target.ok_or(ObjectiveError::MissingEmbedding)?;
                    cosine_similarity(embedding, target)?
                }
                (ObjectiveKind::DiscriminatorLoss { real_label }, Measurement::Embedded { d_prob, .. }) => {
                    let p = d_prob.ok_or(ObjectiveError::MissingDiscriminator)?;
                    discriminator_loss(p, *real_label)?
                }
                (ObjectiveKind::Custom { .. }, Measurement::Raw { objectives }) => {
                    let value = objectives
                        .get(custom_index)
                        .copied()
                        .ok_or(ObjectiveError::MissingRawObjective(custom_index))?;
                    custom_index += 1;
                    value
                }
                (ObjectiveKind::Custom { .. }, _) => {
                    return Err(ObjectiveError::MissingRawObjective(custom_index))
                }
                (_, _) => return Err(ObjectiveError::MissingEmbedding),
            };
            to_minimization(spec.direction, raw)
        })
        .collect()
}

/// [`assemble`] over a batch; failures stay per-genome.
pub fn assemble_objectives(
    specs: &[ObjectiveSpec],
    measurements: &[Measurement],
    target: Option<&Embedding>,
) -> Vec<Result<Vec<f64>, ObjectiveError>> {
    measurements.iter().map(|m| assemble(specs, m, target)).collect()
}
