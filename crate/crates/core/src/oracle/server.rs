use std::io::{BufRead, Write};

use base64::Engine as _;
use tracing::debug;

use super::protocol::{to_wire, Message, WireResult};
use super::{Oracle, OracleError, TargetRequest};
use crate::space::Genome;

/// Serves an in-process oracle over the line protocol until `reader` hits
/// end of input. Bad requests get an `error` reply; the loop keeps going.
pub fn serve<O, R, W>(oracle: &mut O, reader: R, mut writer: W) -> Result<(), OracleError>
where
    O: Oracle + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut send = |msg: &Message| -> Result<(), OracleError> {
        let mut line = msg.to_line();
        line.push('\n');
        writer.write_all(line.as_bytes())?;
        writer.flush()?;
        Ok(())
    };
    send(&oracle.handshake()?.to_message())?;

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match Message::from_line(&line) {
            Err(e) => Message::Error { id: None, message: e.to_string() },
            Ok(request) => handle(oracle, request),
        };
        debug!(reply = reply.type_name(), "oracle reply");
        send(&reply)?;
    }
    Ok(())
}

fn handle<O: Oracle + ?Sized>(oracle: &mut O, request: Message) -> Message {
    match request {
        Message::Target { kind, payload } => match oracle.target(&TargetRequest { kind, payload }) {
            Ok(embedding) => Message::TargetOk { embedding: to_wire(embedding.values()) },
            Err(e) => Message::Error { id: None, message: e.to_string() },
        },
        Message::Eval { id, genomes } => {
            let genomes: Vec<Genome> = genomes.into_iter().map(Genome::from).collect();
            match oracle.evaluate(&genomes) {
                Ok(ms) => Message::EvalOk { id, results: ms.iter().map(WireResult::from).collect() },
                Err(e) => Message::Error { id: Some(id), message: e.to_string() },
            }
        }
        Message::Render { id, genome } => match oracle.render(&Genome::from(genome)) {
            Ok(r) => Message::RenderOk {
                id,
                media_type: r.media_type,
                data: base64::engine::general_purpose::STANDARD.encode(r.data),
            },
            Err(e) => Message::Error { id: Some(id), message: e.to_string() },
        },
        other => Message::Error {
            id: None,
            message: format!("`{}` is not a request", other.type_name()),
        },
    }
}
