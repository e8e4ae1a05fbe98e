//! Protocol conformance corpus: a deterministic list of request lines with
//! the reply each one must produce, replayed against an oracle process.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{Message, WireGenome, WireResult};
use super::{OracleError, OracleHandshake, TargetKind, Transport};
use crate::engine::rng_from_seed;
use crate::space::{self, BlockSpec, Genome, LatentSpaceSpec, RealDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "snake_case")]
pub enum Expectation {
    TargetOk,
    EvalOk { id: u64, count: usize },
    /// Same `results` as an earlier case (determinism).
    SameAs { id: u64, count: usize, case: String },
    RenderOkOrError { id: u64 },
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusCase {
    pub name: String,
    /// Raw request line; deliberately malformed for some cases.
    pub request: String,
    pub expect: Expectation,
}

fn extreme_genome(space: &LatentSpaceSpec, high: bool) -> Genome {
    Genome(
        space
            .gene_blocks()
            .map(|block| match *block {
                BlockSpec::Boolean { .. } => f64::from(u8::from(high)),
                BlockSpec::Integer { lo, hi, .. } => (if high { hi } else { lo }) as f64,
                BlockSpec::Real { distribution, .. } => match distribution {
                    RealDistribution::TruncatedNormal { lo, hi, .. } => {
                        if high { hi } else { lo }
                    }
                    RealDistribution::Normal { mean, stddev } => {
                        if high { mean + 3.0 * stddev } else { mean - 3.0 * stddev }
                    }
                },
            })
            .collect(),
    )
}

/// Builds the corpus for an oracle serving `space` as described by `handshake`.
pub fn generate_corpus(space: &LatentSpaceSpec, handshake: &OracleHandshake, seed: u64) -> Vec<CorpusCase> {
    let mut rng = rng_from_seed(seed);
    let mut id = 0u64;
    let mut cases = Vec::new();
    let mut eval = |name: &str, genomes: &[Genome], cases: &mut Vec<CorpusCase>| {
        id += 1;
        let request = Message::Eval { id, genomes: genomes.iter().map(WireGenome::from).collect() }.to_line();
        cases.push(CorpusCase {
            name: name.into(),
            request,
            expect: Expectation::EvalOk { id, count: genomes.len() },
        });
        id
    };

    if handshake.raw_objectives == 0 {
        cases.push(CorpusCase {
            name: "target_text".into(),
            request: Message::Target { kind: TargetKind::Text, payload: "a dog in the woods".into() }.to_line(),
            expect: Expectation::TargetOk,
        });
    }
    eval("eval_empty", &[], &mut cases);
    eval("eval_single", &[space::sample(space, &mut rng)], &mut cases);
    let triple: Vec<Genome> = (0..3).map(|_| space::sample(space, &mut rng)).collect();
    eval("eval_triple", &triple, &mut cases);
    let eight: Vec<Genome> = (0..8).map(|_| space::sample(space, &mut rng)).collect();
    eval("eval_batch_8", &eight, &mut cases);
    eval("eval_extremes", &[extreme_genome(space, false), extreme_genome(space, true)], &mut cases);
    let repeat = eval("eval_triple_repeat", &triple, &mut cases);
    if let Some(last) = cases.last_mut() {
        last.expect = Expectation::SameAs { id: repeat, count: 3, case: "eval_triple".into() };
    }

    cases.push(CorpusCase {
        name: "malformed_line".into(),
        request: r#"{"type":"eval","id":"#.into(),
        expect: Expectation::Error,
    });
    cases.push(CorpusCase {
        name: "unknown_type".into(),
        request: r#"{"type":"teleport"}"#.into(),
        expect: Expectation::Error,
    });
    if handshake.supports_render {
        id += 1;
        cases.push(CorpusCase {
            name: "render".into(),
            request: Message::Render { id, genome: (&triple[0]).into() }.to_line(),
            expect: Expectation::RenderOkOrError { id },
        });
    }
    cases
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub handshake: OracleHandshake,
    pub cases: Vec<CaseOutcome>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

fn check_results(handshake: &OracleHandshake, results: &[WireResult]) -> Result<(), String> {
    for (i, r) in results.iter().enumerate() {
        if r.error.is_some() {
            continue;
        }
        match (&r.embedding, &r.objectives) {
            (Some(e), None) => {
                if e.len() != handshake.embedding_dim {
                    return Err(format!("result {i}: embedding dim {} != {}", e.len(), handshake.embedding_dim));
                }
                match r.d_prob {
                    Some(p) if !(0.0..=1.0).contains(&p.0) => {
                        return Err(format!("result {i}: d_prob {} outside [0, 1]", p.0))
                    }
                    None if handshake.supports_discriminator => {
                        return Err(format!("result {i}: discriminator advertised but d_prob missing"))
                    }
                    _ => {}
                }
            }
            (None, Some(o)) => {
                if o.len() != handshake.raw_objectives {
                    return Err(format!("result {i}: {} objectives, handshake says {}", o.len(), handshake.raw_objectives));
                }
            }
            _ => return Err(format!("result {i}: needs exactly one of embedding, objectives, error")),
        }
    }
    Ok(())
}

/// Reads the oracle's greeting from a fresh transport.
pub fn read_handshake<T: Transport + ?Sized>(
    transport: &mut T,
    timeout: Duration,
) -> Result<OracleHandshake, OracleError> {
    OracleHandshake::from_message(Message::from_line(&transport.recv_line(timeout)?)?)
}

/// Replays `corpus` after the greeting has been read and checks every reply.
pub fn run_conformance<T: Transport + ?Sized>(
    transport: &mut T,
    handshake: &OracleHandshake,
    corpus: &[CorpusCase],
    timeout: Duration,
) -> Result<ConformanceReport, OracleError> {
    let mut seen: Vec<(String, Vec<WireResult>)> = Vec::new();
    let mut cases = Vec::new();
    for case in corpus {
        transport.send_line(&case.request)?;
        let reply = Message::from_line(&transport.recv_line(timeout)?);
        let verdict: Result<(), String> = match (&case.expect, reply) {
            (_, Err(e)) => Err(format!("unparseable reply: {e}")),
            (Expectation::TargetOk, Ok(Message::TargetOk { embedding })) => {
                if embedding.len() == handshake.embedding_dim {
                    Ok(())
                } else {
                    Err(format!("target embedding dim {} != {}", embedding.len(), handshake.embedding_dim))
                }
            }
            (Expectation::EvalOk { id, count }, Ok(Message::EvalOk { id: got, results }))
            | (Expectation::SameAs { id, count, .. }, Ok(Message::EvalOk { id: got, results })) => {
                if *id != got {
                    Err(format!("reply id {got}, expected {id}"))
                } else if results.len() != *count {
                    Err(format!("{} results for {count} genomes", results.len()))
                } else {
                    let shape = check_results(handshake, &results);
                    let same = match &case.expect {
                        Expectation::SameAs { case: earlier, .. } => {
                            match seen.iter().find(|(name, _)| name == earlier) {
                                Some((_, prev)) if prev == &results => Ok(()),
                                Some(_) => Err(format!("results differ from `{earlier}`")),
                                None => Err(format!("reference case `{earlier}` did not run")),
                            }
                        }
                        _ => Ok(()),
                    };
                    seen.push((case.name.clone(), results));
                    shape.and(same)
                }
            }
            (Expectation::RenderOkOrError { id }, Ok(Message::RenderOk { id: got, .. }))
            | (Expectation::RenderOkOrError { id }, Ok(Message::Error { id: Some(got), .. })) => {
                if *id == got { Ok(()) } else { Err(format!("reply id {got}, expected {id}")) }
            }
            (Expectation::Error, Ok(Message::Error { .. })) => Ok(()),
            (expect, Ok(other)) => Err(format!("expected {expect:?}, got `{}`", other.type_name())),
        };
        cases.push(CaseOutcome {
            name: case.name.clone(),
            passed: verdict.is_ok(),
            detail: verdict.err().unwrap_or_default(),
        });
    }
    Ok(ConformanceReport { handshake: handshake.clone(), cases })
}
