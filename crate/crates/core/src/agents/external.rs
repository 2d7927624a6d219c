//! Out-of-process agents speaking the line protocol over a child process's
//! standard streams, a TCP socket, or this process's own stdin/stdout.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::protocol::{decision_from_reply, decode, encode, AgentMessage, CoreMessage, PROTOCOL_VERSION};
use super::{AgentContext, AgentError, BidDecision, BidRequest, BiddingStrategy, EpisodeSummary};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalEndpoint {
    /// Spawn `argv[0]` with the remaining arguments.
    Command(Vec<String>),
    /// Connect to `host:port`.
    Tcp(String),
    /// Use this process's stdin and stdout.
    Stdio,
}

/// Newline-delimited transport with a reader thread so reads can time out.
pub struct LineTransport {
    writer: Box<dyn Write + Send>,
    lines: Lines,
    child: Option<Child>,
}

type LineReceiver = Receiver<io::Result<String>>;

enum Lines {
    Owned(LineReceiver),
    /// This process's stdin, read by one thread for the process lifetime so
    /// successive sessions do not race for lines.
    Shared(&'static Mutex<LineReceiver>),
}

fn stdin_lines() -> &'static Mutex<LineReceiver> {
    static LINES: OnceLock<Mutex<LineReceiver>> = OnceLock::new();
    LINES.get_or_init(|| Mutex::new(spawn_reader(io::stdin())))
}

fn spawn_reader<R: Read + Send + 'static>(source: R) -> LineReceiver {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(source);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

impl LineTransport {
    pub fn open(endpoint: &ExternalEndpoint) -> io::Result<Self> {
        match endpoint {
            ExternalEndpoint::Command(argv) => {
                let (program, args) = argv
                    .split_first()
                    .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty agent command"))?;
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Self { writer: Box::new(stdin), lines: Lines::Owned(spawn_reader(stdout)), child: Some(child) })
            }
            ExternalEndpoint::Tcp(address) => {
                let stream = TcpStream::connect(address)?;
                stream.set_nodelay(true)?;
                let read_half = stream.try_clone()?;
                Ok(Self { writer: Box::new(stream), lines: Lines::Owned(spawn_reader(read_half)), child: None })
            }
            ExternalEndpoint::Stdio => {
                Ok(Self { writer: Box::new(io::stdout()), lines: Lines::Shared(stdin_lines()), child: None })
            }
        }
    }

    pub fn send(&mut self, line: &str) -> Result<(), AgentError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv(&mut self, timeout: Duration) -> Result<String, AgentError> {
        let received = match &self.lines {
            Lines::Owned(rx) => rx.recv_timeout(timeout),
            Lines::Shared(rx) => rx.lock().unwrap_or_else(|e| e.into_inner()).recv_timeout(timeout),
        };
        match received {
            Ok(line) => Ok(line?),
            Err(RecvTimeoutError::Timeout) => Err(AgentError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(AgentError::Closed),
        }
    }

    /// Closes the write side and reaps the child, killing it after `grace`.
    pub fn close(&mut self, grace: Duration) {
        self.writer = Box::new(io::sink());
        if let Some(mut child) = self.child.take() {
            let deadline = std::time::Instant::now() + grace;
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => return,
                    Ok(None) if std::time::Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                    _ => break,
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Drop for LineTransport {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

pub struct ExternalAgent {
    transport: LineTransport,
    timeout: Duration,
    seq: u64,
    faulted: bool,
}

impl ExternalAgent {
    /// Opens the endpoint and completes the hello exchange.
    pub fn connect(endpoint: &ExternalEndpoint, context: &AgentContext, timeout: Duration) -> Result<Self, AgentError> {
        let mut transport = LineTransport::open(endpoint)?;
        transport.send(&encode(&CoreMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            agent_index: context.agent_index,
            category_index: context.category_index,
            num_steps: context.num_steps,
            budget: context.budget,
            cpa_constraint: context.cpa_constraint,
        }))?;
        let line = transport.recv(timeout)?;
        match decode::<AgentMessage>(&line)? {
            AgentMessage::Hello { protocol_version } if protocol_version == PROTOCOL_VERSION => {}
            AgentMessage::Hello { protocol_version } => {
                return Err(AgentError::Protocol(format!(
                    "agent speaks protocol {protocol_version}, core speaks {PROTOCOL_VERSION}"
                )))
            }
            other => return Err(AgentError::Protocol(format!("expected hello, got {other:?}"))),
        }
        debug!("external agent {} connected", context.agent_index);
        Ok(Self { transport, timeout, seq: 0, faulted: false })
    }

    pub fn faulted(&self) -> bool {
        self.faulted
    }

    fn exchange(&mut self, request: &BidRequest<'_>) -> Result<BidDecision, AgentError> {
        let seq = self.seq;
        self.seq += 1;
        self.transport.send(&encode(&CoreMessage::BidRequest {
            seq,
            step: request.step_index,
            remaining_budget: request.remaining_budget,
            time_left: request.time_left(),
            values: request.values.to_vec(),
            sigmas: request.sigmas.to_vec(),
            history: request.history.to_vec(),
        }))?;
        let line = self.transport.recv(self.timeout)?;
        decision_from_reply(decode(&line)?, seq)
    }
}

impl BiddingStrategy for ExternalAgent {
    fn label(&self) -> &str {
        "External"
    }

    fn decide(&mut self, request: &BidRequest<'_>) -> Result<BidDecision, AgentError> {
        if self.faulted {
            return Ok(BidDecision::Alpha(0.0));
        }
        self.exchange(request).inspect_err(|e| {
            warn!("external agent {} faulted at step {}: {e}", request.agent_index, request.step_index);
            self.faulted = true;
        })
    }

    fn finish(&mut self, summary: &EpisodeSummary) {
        if !self.faulted {
            let _ = self.transport.send(&encode(&CoreMessage::episode_end(summary)));
        }
        self.transport.close(Duration::from_secs(2));
    }
}
