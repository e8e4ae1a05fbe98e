//! Line-delimited JSON messages exchanged with an oracle process.
//!
//! One message per line, UTF-8, tagged by `"type"`. The oracle speaks first
//! with `hello`; afterwards the engine sends `target`, `eval` and `render`
//! requests and waits for exactly one reply to each.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::OracleError;
use crate::objectives::{Embedding, Measurement};
use crate::space::Genome;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Text,
    ImagePath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        version: u32,
        embedding_dim: usize,
        supports_discriminator: bool,
        space_fingerprint: String,
        /// Extension: number of objective values reported directly per genome.
        #[serde(default, skip_serializing_if = "is_zero")]
        raw_objectives: usize,
        /// Extension: the oracle answers `render` requests.
        #[serde(default, skip_serializing_if = "is_false")]
        supports_render: bool,
        /// Free-form notes, e.g. how a boolean class block is interpreted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metadata: Option<serde_json::Map<String, serde_json::Value>>,
    },
    Target {
        kind: TargetKind,
        payload: String,
    },
    TargetOk {
        embedding: Vec<WireF64>,
    },
    Eval {
        id: u64,
        genomes: Vec<WireGenome>,
    },
    EvalOk {
        id: u64,
        results: Vec<WireResult>,
    },
    Render {
        id: u64,
        genome: WireGenome,
    },
    RenderOk {
        id: u64,
        media_type: String,
        /// Base64-encoded payload.
        data: String,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        message: String,
    },
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

fn is_false(v: &bool) -> bool {
    !*v
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Target { .. } => "target",
            Message::TargetOk { .. } => "target_ok",
            Message::Eval { .. } => "eval",
            Message::EvalOk { .. } => "eval_ok",
            Message::Render { .. } => "render",
            Message::RenderOk { .. } => "render_ok",
            Message::Error { .. } => "error",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, OracleError> {
        serde_json::from_str(line).map_err(|e| OracleError::Malformed {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// A gene vector on the wire. Integral values are written without a
/// fractional part so booleans travel as `0`/`1` and token ids as integers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct WireGenome(pub Vec<f64>);

impl Serialize for WireGenome {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        // 2^53: beyond this not every integer is representable
        const EXACT: f64 = 9_007_199_254_740_992.0;
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for &v in &self.0 {
            if v.fract() == 0.0 && v.abs() <= EXACT && !(v == 0.0 && v.is_sign_negative()) {
                seq.serialize_element(&(v as i64))?;
            } else {
                seq.serialize_element(&v)?;
            }
        }
        seq.end()
    }
}

impl From<&Genome> for WireGenome {
    fn from(g: &Genome) -> Self {
        WireGenome(g.values().to_vec())
    }
}

impl From<WireGenome> for Genome {
    fn from(g: WireGenome) -> Self {
        Genome(g.0)
    }
}

/// A float that travels as `null` when it is not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireF64(pub f64);

impl Serialize for WireF64 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for WireF64 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(WireF64(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::NAN)))
    }
}

pub fn to_wire(values: &[f64]) -> Vec<WireF64> {
    values.iter().copied().map(WireF64).collect()
}

pub fn from_wire(values: &[WireF64]) -> Vec<f64> {
    values.iter().map(|v| v.0).collect()
}

/// One genome's entry in `eval_ok`: exactly one of `embedding`,
/// `objectives` or `error` is present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WireResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<WireF64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_prob: Option<WireF64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectives: Option<Vec<WireF64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&Measurement> for WireResult {
    fn from(m: &Measurement) -> Self {
        match m {
            Measurement::Embedded { embedding, d_prob } => WireResult {
                embedding: Some(to_wire(embedding.values())),
                d_prob: d_prob.map(WireF64),
                ..Default::default()
            },
            Measurement::Raw { objectives } => {
                WireResult { objectives: Some(to_wire(objectives)), ..Default::default() }
            }
            Measurement::Failed { message } => {
                WireResult { error: Some(message.clone()), ..Default::default() }
            }
        }
    }
}

impl WireResult {
    /// Converts to a measurement; a structurally invalid entry becomes a
    /// per-genome failure rather than a batch error.
    pub fn into_measurement(self) -> Measurement {
        match (self.embedding, self.objectives, self.error) {
            (_, _, Some(message)) => Measurement::Failed { message },
            (Some(embedding), None, None) => Measurement::Embedded {
                embedding: Embedding(from_wire(&embedding)),
                d_prob: self.d_prob.map(|p| p.0),
            },
            (None, Some(objectives), None) => Measurement::Raw { objectives: from_wire(&objectives) },
            (None, None, None) => Measurement::Failed { message: "empty result entry".into() },
            (Some(_), Some(_), None) => Measurement::Failed {
                message: "result carries both embedding and objectives".into(),
            },
        }
    }
}
