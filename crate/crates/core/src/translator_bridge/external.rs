//! JSON Lines protocol for out-of-process translation backends.
//!
//! Requests and responses are single-line JSON objects on the child's stdin
//! and stdout:
//!
//! ```text
//! {"id": 7, "op": "translate", "direction": "fwd", "src": ["a", "b"]}
//! {"id": 7, "tokens": ["x", "y"]}
//! {"id": 8, "op": "score", "direction": "rev", "src": ["x"], "tgt": ["a"]}
//! {"id": 8, "logprobs": [-0.25]}
//! {"id": 9, "error": "model not loaded"}
//! ```
//!
//! The child is a serial channel; [`ExternalProcess`] serializes requests.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Bridge, Capabilities, Direction, TranslationBackend};
use crate::corpus::Sentence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Translate,
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: Op,
    pub direction: Direction,
    pub src: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// A spawned backend process speaking the JSON Lines protocol.
pub struct ExternalProcess {
    channel: Mutex<Channel>,
    next_id: AtomicU64,
    program: String,
}

impl ExternalProcess {
    pub fn spawn(program: &str, args: &[String]) -> Result<Arc<Self>> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Arc::new(ExternalProcess {
            channel: Mutex::new(Channel {
                child,
                stdin: Some(stdin),
                stdout,
            }),
            next_id: AtomicU64::new(1),
            program: program.to_owned(),
        }))
    }

    /// Sends one request and waits for its response. Error responses become
    /// [`Error::Backend`]; malformed or mismatched responses become
    /// [`Error::Protocol`].
    pub fn call(
        &self,
        op: Op,
        direction: Direction,
        src: &[String],
        tgt: Option<&[String]>,
    ) -> Result<Response> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = Request {
            id,
            op,
            direction,
            src: src.to_vec(),
            tgt: tgt.map(<[String]>::to_vec),
        };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');

        let mut channel = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        let stdin = channel
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Backend(format!("`{}` input is closed", self.program)))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Backend(format!("writing to `{}`: {e}", self.program)))?;
        let mut reply = String::new();
        let read = channel
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::Backend(format!("reading from `{}`: {e}", self.program)))?;
        if read == 0 {
            let status = channel.child.try_wait().ok().flatten();
            return Err(Error::Backend(format!(
                "`{}` closed its output{}",
                self.program,
                status.map(|s| format!(" ({s})")).unwrap_or_default()
            )));
        }
        drop(channel);

        let response: Response = serde_json::from_str(reply.trim_end()).map_err(|e| {
            Error::Protocol(format!("unparseable response {:?}: {e}", reply.trim_end()))
        })?;
        if response.id != id {
            return Err(Error::Protocol(format!(
                "response id {} does not echo request id {id}",
                response.id
            )));
        }
        if let Some(message) = response.error {
            return Err(Error::Backend(message));
        }
        match op {
            Op::Translate if response.tokens.is_none() => Err(Error::Protocol(format!(
                "translate response {id} has no `tokens`"
            ))),
            Op::Score if response.logprobs.is_none() => Err(Error::Protocol(format!(
                "score response {id} has no `logprobs`"
            ))),
            _ => Ok(response),
        }
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        let channel = self.channel.get_mut().unwrap_or_else(|p| p.into_inner());
        channel.stdin.take();
        let _ = channel.child.kill();
        let _ = channel.child.wait();
    }
}

/// One direction of an [`ExternalProcess`].
#[derive(Clone)]
pub struct ExternalBackend {
    process: Arc<ExternalProcess>,
    direction: Direction,
}

impl ExternalBackend {
    pub fn new(process: Arc<ExternalProcess>, direction: Direction) -> Self {
        ExternalBackend { process, direction }
    }
}

impl TranslationBackend for ExternalBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            translate: true,
            score: true,
            direction: self.direction,
        }
    }

    fn translate(&self, source: &[String]) -> Result<Sentence> {
        let response = self
            .process
            .call(Op::Translate, self.direction, source, None)?;
        Ok(response.tokens.unwrap_or_default())
    }

    fn token_logprobs(&self, source: &[String], target: &[String]) -> Result<Vec<f64>> {
        let response = self
            .process
            .call(Op::Score, self.direction, source, Some(target))?;
        Ok(response.logprobs.unwrap_or_default())
    }
}

fn handle(bridge: &Bridge, line: &str) -> Response {
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            // Echo the id when it can be recovered.
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64))
                .unwrap_or(0);
            return Response {
                id,
                tokens: None,
                logprobs: None,
                error: Some(format!("bad request: {e}")),
            };
        }
    };
    let result = match request.op {
        Op::Translate => bridge
            .translate(request.direction, &request.src)
            .map(|t| (Some(t), None)),
        Op::Score => match &request.tgt {
            Some(tgt) => bridge
                .token_logprobs(request.direction, &request.src, tgt)
                .map(|lp| (None, Some(lp))),
            None => Err(Error::InvalidArgument("score request without `tgt`".into())),
        },
    };
    match result {
        Ok((tokens, logprobs)) => Response {
            id: request.id,
            tokens,
            logprobs,
            error: None,
        },
        Err(e) => Response {
            id: request.id,
            tokens: None,
            logprobs: None,
            error: Some(e.to_string()),
        },
    }
}

/// Serves `bridge` over the protocol until `input` is exhausted.
pub fn serve(bridge: &Bridge, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle(bridge, line.trim_end());
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

pub mod conformance {
    //! Fixed requests checking that an external backend honours the schema.

    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    pub struct Check {
        pub name: &'static str,
        pub outcome: std::result::Result<(), String>,
    }

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    /// Runs every check; a failing check does not stop the suite.
    pub fn run(process: &ExternalProcess) -> Vec<Check> {
        let mut checks = Vec::new();
        for direction in [Direction::Fwd, Direction::Rev] {
            let src = words("the quick brown fox");
            let outcome = process
                .call(Op::Translate, direction, &src, None)
                .map(|_| ())
                .map_err(|e| e.to_string());
            checks.push(Check {
                name: if direction == Direction::Fwd {
                    "translate fwd"
                } else {
                    "translate rev"
                },
                outcome,
            });

            let tgt = words("a b c");
            let outcome = process
                .call(Op::Score, direction, &src, Some(&tgt))
                .map_err(|e| e.to_string())
                .and_then(|r| {
                    let lp = r.logprobs.unwrap_or_default();
                    if lp.len() != tgt.len() {
                        Err(Error::ScoringLengthMismatch {
                            expected: tgt.len(),
                            got: lp.len(),
                        }
                        .to_string())
                    } else if lp.iter().any(|v| v.is_nan() || *v > 0.0) {
                        Err(format!("log-probabilities must be <= 0: {lp:?}"))
                    } else {
                        Ok(())
                    }
                });
            checks.push(Check {
                name: if direction == Direction::Fwd {
                    "score fwd"
                } else {
                    "score rev"
                },
                outcome,
            });
        }
        let outcome = process
            .call(Op::Translate, Direction::Fwd, &[], None)
            .map(|_| ())
            .map_err(|e| e.to_string());
        checks.push(Check {
            name: "translate empty source",
            outcome,
        });
        checks
    }
}
