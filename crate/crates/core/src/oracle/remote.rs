use std::time::Duration;

use base64::Engine as _;

use super::protocol::{from_wire, Message, WireGenome, WireResult};
use super::{Oracle, OracleError, OracleHandshake, Rendered, TargetRequest, Transport, DEFAULT_TIMEOUT};
use crate::objectives::{Embedding, Measurement};
use crate::space::Genome;

/// An oracle in another process, spoken to over a [`Transport`].
/// Requests and replies strictly alternate.
pub struct RemoteOracle<T: Transport> {
    transport: T,
    timeout: Duration,
    next_id: u64,
    handshake: Option<OracleHandshake>,
}

impl<T: Transport> RemoteOracle<T> {
    pub fn new(transport: T) -> Self {
        Self { transport, timeout: DEFAULT_TIMEOUT, next_id: 1, handshake: None }
    }

    /// Per-request reply timeout (300 s by default).
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn recv(&mut self) -> Result<Message, OracleError> {
        let line = self.transport.recv_line(self.timeout)?;
        Message::from_line(&line)
    }

    fn request(&mut self, msg: &Message) -> Result<Message, OracleError> {
        self.transport.send_line(&msg.to_line())?;
        self.recv()
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

fn check_id(expected: u64, got: u64) -> Result<(), OracleError> {
    if expected == got {
        Ok(())
    } else {
        Err(OracleError::IdMismatch { expected, got })
    }
}

fn unexpected(expected: &'static str, got: Message) -> OracleError {
    match got {
        Message::Error { message, .. } => OracleError::Remote(message),
        other => OracleError::UnexpectedMessage { expected, got: other.type_name().into() },
    }
}

impl<T: Transport> Oracle for RemoteOracle<T> {
    /// Waits for the oracle's greeting; later calls return the cached one.
    fn handshake(&mut self) -> Result<OracleHandshake, OracleError> {
        if let Some(h) = &self.handshake {
            return Ok(h.clone());
        }
        let hello = OracleHandshake::from_message(self.recv()?)?;
        self.handshake = Some(hello.clone());
        Ok(hello)
    }

    fn target(&mut self, request: &TargetRequest) -> Result<Embedding, OracleError> {
        let msg = Message::Target { kind: request.kind.clone(), payload: request.payload.clone() };
        match self.request(&msg)? {
            Message::TargetOk { embedding } => Ok(Embedding(from_wire(&embedding))),
            other => Err(unexpected("target_ok", other)),
        }
    }

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Measurement>, OracleError> {
        let id = self.take_id();
        let msg = Message::Eval { id, genomes: genomes.iter().map(WireGenome::from).collect() };
        match self.request(&msg)? {
            Message::EvalOk { id: got, results } => {
                check_id(id, got)?;
                if results.len() != genomes.len() {
                    return Err(OracleError::ResultCount { expected: genomes.len(), got: results.len() });
                }
                Ok(results.into_iter().map(WireResult::into_measurement).collect())
            }
            other => Err(unexpected("eval_ok", other)),
        }
    }

    fn render(&mut self, genome: &Genome) -> Result<Rendered, OracleError> {
        let id = self.take_id();
        match self.request(&Message::Render { id, genome: genome.into() })? {
            Message::RenderOk { id: got, media_type, data } => {
                check_id(id, got)?;
                let data = base64::engine::general_purpose::STANDARD
                    .decode(data)
                    .map_err(|e| OracleError::Remote(format!("render payload is not base64: {e}")))?;
                Ok(Rendered { media_type, data })
            }
            other => Err(unexpected("render_ok", other)),
        }
    }
}
