use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use tracing::{debug, warn};

use super::OracleError;

/// A bidirectional, line-oriented channel to an oracle.
pub trait Transport: Send {
    fn send_line(&mut self, line: &str) -> Result<(), OracleError>;

    /// Next non-empty line, waiting at most `timeout`.
    fn recv_line(&mut self, timeout: Duration) -> Result<String, OracleError>;
}

/// Lines are read on a background thread so that replies can be awaited
/// with a timeout regardless of the underlying stream.
pub struct LineTransport {
    writer: Option<Box<dyn Write + Send>>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    shutdown_grace: Duration,
}

impl LineTransport {
    pub fn new<R, W>(reader: R, writer: W) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self { writer: Some(Box::new(writer)), lines: rx, child: None, shutdown_grace: Duration::from_secs(5) }
    }

    /// Runs `command` through the shell and talks to it over stdin/stdout.
    /// The child's stderr is inherited.
    pub fn spawn(command: &str) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Spawn(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        debug!(pid = child.id(), command, "spawned oracle");
        let mut transport = Self::new(stdout, stdin);
        transport.child = Some(child);
        Ok(transport)
    }

    /// How long a spawned oracle gets to exit after its stdin is closed
    /// before it is killed (5 s by default).
    pub fn with_shutdown_grace(mut self, grace: Duration) -> Self {
        self.shutdown_grace = grace;
        self
    }

    pub fn connect(addr: &str) -> Result<Self, OracleError> {
        let stream = TcpStream::connect(addr).map_err(|e| OracleError::Spawn(format!("{addr}: {e}")))?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(reader, stream))
    }
}

impl Transport for LineTransport {
    fn send_line(&mut self, line: &str) -> Result<(), OracleError> {
        let writer = self.writer.as_mut().ok_or(OracleError::Closed)?;
        let mut framed = String::with_capacity(line.len() + 1);
        framed.push_str(line);
        framed.push('\n');
        writer.write_all(framed.as_bytes())?;
        writer.flush()?;
        Ok(())
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String, OracleError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => return Err(e.into()),
                Err(RecvTimeoutError::Timeout) => return Err(OracleError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(OracleError::Closed),
            }
        }
    }
}

impl Drop for LineTransport {
    fn drop(&mut self) {
        // closing stdin is the shutdown signal
        self.writer.take();
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + self.shutdown_grace;
            while Instant::now() < deadline {
                match child.try_wait() {
                    Ok(Some(_)) => return,
                    Ok(None) => thread::sleep(Duration::from_millis(20)),
                    Err(_) => break,
                }
            }
            warn!(pid = child.id(), "oracle did not exit after stdin closed; killing it");
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
