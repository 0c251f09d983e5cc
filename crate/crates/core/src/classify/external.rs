//! Client for an out-of-process classifier speaking newline-delimited JSON
//! over a subprocess's standard streams or a TCP connection.
//!
//! Request: `{"id": int, "task": ..., "text": ..., "text_b"?: ..., "role"?: ...}`
//! Response: `{"id": int, "label"?: string, "score": number}`
//!
//! One request is in flight per channel. Responses carrying an id older than
//! the pending request are leftovers from timed-out calls and are skipped.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BaselineClassifier, ClassifierVerdict, ClassifyError, Sentence, SentenceClassifier, Source, Task};
use crate::transcript::Role;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command line; spawned once and kept alive.
    Command(String),
    /// `host:port`
    Tcp(String),
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(cmd) = s.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err("empty command".into());
            }
            return Ok(Endpoint::Command(cmd.trim().to_string()));
        }
        if let Some(addr) = s.strip_prefix("tcp:") {
            if !addr.contains(':') {
                return Err(format!("`{addr}` is not host:port"));
            }
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        Err(format!("`{s}` must start with `cmd:` or `tcp:`"))
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Command(c) => write!(f, "cmd:{c}"),
            Endpoint::Tcp(a) => write!(f, "tcp:{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    Baseline,
    Error,
}

impl FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Fallback::Baseline),
            "error" => Ok(Fallback::Error),
            other => Err(format!("unknown fallback `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalClassifierConfig {
    pub endpoint: Endpoint,
    pub timeout_ms: u64,
    pub fallback: Fallback,
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    id: u64,
    task: Task,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text_b: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    role: Option<Role>,
}

#[derive(Debug, Deserialize)]
struct Response {
    id: u64,
    #[serde(default)]
    label: Option<String>,
    score: f64,
}

struct Channel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
}

impl Channel {
    fn open(endpoint: &Endpoint, timeout: Duration) -> Result<Channel, ClassifyError> {
        let unavailable = |e: std::io::Error| ClassifyError::Unavailable(format!("{endpoint}: {e}"));
        match endpoint {
            Endpoint::Command(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(unavailable)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Channel {
                    writer: Box::new(stdin),
                    lines: spawn_reader(stdout),
                    child: Some(child),
                })
            }
            Endpoint::Tcp(addr) => {
                let sock = addr
                    .to_socket_addrs()
                    .map_err(unavailable)?
                    .next()
                    .ok_or_else(|| ClassifyError::Unavailable(format!("{endpoint}: no address")))?;
                let stream = TcpStream::connect_timeout(&sock, timeout).map_err(unavailable)?;
                let _ = stream.set_nodelay(true);
                let reader = stream.try_clone().map_err(unavailable)?;
                Ok(Channel {
                    writer: Box::new(stream),
                    lines: spawn_reader(reader),
                    child: None,
                })
            }
        }
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn spawn_reader<R: Read + Send + 'static>(source: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(source).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

/// External classifier with a baseline fallback. The channel is opened on
/// first use and reopened after transport failures.
pub struct ExternalClassifier {
    config: ExternalClassifierConfig,
    baseline: BaselineClassifier,
    channel: Option<Channel>,
    next_id: u64,
}

impl ExternalClassifier {
    pub fn new(config: ExternalClassifierConfig, baseline: BaselineClassifier) -> ExternalClassifier {
        ExternalClassifier {
            config,
            baseline,
            channel: None,
            next_id: 1,
        }
    }

    pub fn config(&self) -> &ExternalClassifierConfig {
        &self.config
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.config.timeout_ms.max(1))
    }

    /// Sends one request and waits for its response, without applying the
    /// fallback policy.
    pub fn request(
        &mut self,
        task: Task,
        text: &str,
        text_b: Option<&str>,
        role: Option<Role>,
    ) -> Result<ClassifierVerdict, ClassifyError> {
        let timeout = self.timeout();
        if self.channel.is_none() {
            self.channel = Some(Channel::open(&self.config.endpoint, timeout)?);
        }
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&Request {
            id,
            task,
            text,
            text_b,
            role,
        })
        .expect("request serializes");
        line.push('\n');

        let channel = self.channel.as_mut().expect("opened above");
        let sent = channel
            .writer
            .write_all(line.as_bytes())
            .and_then(|_| channel.writer.flush());
        if let Err(e) = sent {
            self.channel = None;
            return Err(ClassifyError::Unavailable(e.to_string()));
        }

        let deadline = Instant::now() + timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let channel = self.channel.as_mut().expect("still open");
            let raw = match channel.lines.recv_timeout(remaining) {
                Ok(Ok(raw)) => raw,
                Ok(Err(e)) => {
                    self.channel = None;
                    return Err(ClassifyError::Unavailable(e.to_string()));
                }
                Err(RecvTimeoutError::Timeout) => return Err(ClassifyError::Timeout(self.config.timeout_ms)),
                Err(RecvTimeoutError::Disconnected) => {
                    self.channel = None;
                    return Err(ClassifyError::Unavailable("endpoint closed the stream".into()));
                }
            };
            if raw.trim().is_empty() {
                continue;
            }
            let resp: Response =
                serde_json::from_str(&raw).map_err(|e| ClassifyError::Malformed(format!("{e}: {raw}")))?;
            if resp.id < id {
                log::debug!("dropping stale classifier response {}", resp.id);
                continue;
            }
            if resp.id > id {
                return Err(ClassifyError::IdMismatch {
                    expected: id,
                    got: resp.id,
                });
            }
            return validate(task, resp);
        }
    }

    fn with_fallback(
        &mut self,
        result: Result<ClassifierVerdict, ClassifyError>,
        baseline: impl FnOnce(&BaselineClassifier) -> Result<ClassifierVerdict, ClassifyError>,
    ) -> Result<ClassifierVerdict, ClassifyError> {
        match (result, self.config.fallback) {
            (Ok(v), _) => Ok(v),
            (Err(e), Fallback::Error) => Err(e),
            (Err(e), Fallback::Baseline) => {
                log::warn!("external classifier failed ({e}); using baseline");
                baseline(&self.baseline)
            }
        }
    }
}

fn validate(task: Task, resp: Response) -> Result<ClassifierVerdict, ClassifyError> {
    if !resp.score.is_finite() || !(0.0..=1.0).contains(&resp.score) {
        return Err(ClassifyError::ScoreOutOfRange(resp.score));
    }
    let label = match (task, resp.label) {
        (Task::Similarity, None) => None,
        (_, Some(l)) if task.labels().contains(&l.as_str()) => Some(l),
        (_, Some(l)) => return Err(ClassifyError::BadLabel { task, label: l }),
        (_, None) => {
            return Err(ClassifyError::BadLabel {
                task,
                label: String::new(),
            })
        }
    };
    let label = label.filter(|l| task != Task::Similarity || l != "none");
    Ok(ClassifierVerdict {
        task,
        label,
        score: resp.score,
        source: Source::External,
    })
}

impl SentenceClassifier for ExternalClassifier {
    fn open_question(&mut self, sentence: Sentence<'_>) -> Result<ClassifierVerdict, ClassifyError> {
        let r = self.request(Task::OpenQuestion, sentence.text, None, Some(Role::Provider));
        self.with_fallback(r, |b| Ok(b.detect_open_question(sentence.span)))
    }

    fn empathy(&mut self, sentence: Sentence<'_>, role: Role) -> Result<ClassifierVerdict, ClassifyError> {
        let r = self.request(Task::Empathy, sentence.text, None, Some(role));
        self.with_fallback(r, |b| Ok(b.classify_empathy(sentence.span, role)))
    }

    fn similarity(&mut self, a: Sentence<'_>, b: Sentence<'_>) -> Result<ClassifierVerdict, ClassifyError> {
        let r = self.request(Task::Similarity, a.text, Some(b.text), None);
        self.with_fallback(r, |base| base.similarity(&a.span.tokens, &b.span.tokens))
    }
}
