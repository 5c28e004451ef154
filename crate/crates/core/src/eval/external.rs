//! Client side of the worker protocol.
//!
//! Newline-delimited JSON over the worker's standard streams or a local
//! socket. The worker greets with `{"protocol":"emo-eval/1","subnets":M}`,
//! then answers each `{"id":..,"subnet":..,"genes":[..]}` with either
//! `{"id":..,"error":..}` or `{"id":..,"status":"failed","reason":".."}`.
//! Replies may arrive in any order and are matched by id.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{EvalError, Evaluator};

pub const PROTOCOL: &str = "emo-eval/1";

/// Per-batch wait before unanswered requests are retried (and, on a second
/// expiry, reported as failed).
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("failed to start worker `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("worker i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad handshake: {0}")]
    Handshake(String),
    #[error("malformed worker line ({reason}): {line}")]
    Malformed { line: String, reason: String },
    #[error("worker exited before answering {pending} request(s)")]
    WorkerExited { pending: usize },
    #[error("duplicate request id {0} in batch")]
    DuplicateId(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRequest {
    #[serde(rename = "id")]
    pub request_id: u64,
    #[serde(rename = "subnet")]
    pub subnet_index: usize,
    pub genes: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalStatus {
    Ok(f64),
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub request_id: u64,
    pub status: EvalStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase", tag = "kind", content = "path")]
pub enum Transport {
    #[default]
    Stdio,
    Unix(PathBuf),
}

#[derive(Deserialize)]
struct Handshake {
    protocol: String,
    subnets: usize,
}

#[derive(Deserialize)]
struct Reply {
    id: u64,
    error: Option<f64>,
    status: Option<String>,
    reason: Option<String>,
}

fn parse_reply(line: &str) -> Result<EvalResult, ProtocolError> {
    let malformed = |reason: String| ProtocolError::Malformed {
        line: line.to_string(),
        reason,
    };
    let reply: Reply = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let status = match (reply.error, reply.status.as_deref()) {
        (_, Some("failed")) => EvalStatus::Failed(reply.reason.unwrap_or_default()),
        (Some(e), None | Some("ok")) => EvalStatus::Ok(e),
        (None, _) => return Err(malformed("reply carries neither error nor failed status".into())),
        (Some(_), Some(other)) => return Err(malformed(format!("unknown status `{other}`"))),
    };
    Ok(EvalResult {
        request_id: reply.id,
        status,
    })
}

fn write_error(err: io::Error) -> ProtocolError {
    match err.kind() {
        io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => ProtocolError::WorkerExited { pending: 0 },
        _ => ProtocolError::Io(err),
    }
}

/// One connection to a worker. Requests are pipelined; a background thread
/// turns the worker's output into lines.
pub struct WorkerClient {
    writer: Option<Box<dyn Write + Send>>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    subnets: usize,
    timeout: Duration,
    next_id: u64,
}

impl WorkerClient {
    /// Starts `argv` as a child process speaking the protocol on stdin/stdout.
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self, ProtocolError> {
        let command = argv.join(" ");
        let (program, args) = argv.split_first().ok_or_else(|| ProtocolError::Spawn {
            command: command.clone(),
            source: io::Error::new(io::ErrorKind::InvalidInput, "empty worker command"),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ProtocolError::Spawn { command, source })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::from_streams(stdout, stdin, Some(child), timeout)
    }

    #[cfg(unix)]
    pub fn connect_unix(path: &std::path::Path, timeout: Duration) -> Result<Self, ProtocolError> {
        let stream = std::os::unix::net::UnixStream::connect(path)?;
        let reader = stream.try_clone()?;
        Self::from_streams(reader, stream, None, timeout)
    }

    pub fn connect(transport: &Transport, argv: &[String], timeout: Duration) -> Result<Self, ProtocolError> {
        match transport {
            Transport::Stdio => Self::spawn(argv, timeout),
            #[cfg(unix)]
            Transport::Unix(path) => Self::connect_unix(path, timeout),
            #[cfg(not(unix))]
            Transport::Unix(_) => Err(ProtocolError::Io(io::Error::new(
                io::ErrorKind::Unsupported,
                "unix sockets are unavailable on this platform",
            ))),
        }
    }

    /// Wraps an established byte stream and performs the handshake.
    pub fn from_streams<R, W>(
        reader: R,
        writer: W,
        child: Option<Child>,
        timeout: Duration,
    ) -> Result<Self, ProtocolError>
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
        let mut client = WorkerClient {
            writer: Some(Box::new(writer)),
            lines: rx,
            child,
            subnets: 0,
            timeout,
            next_id: 0,
        };
        client.handshake()?;
        Ok(client)
    }

    fn handshake(&mut self) -> Result<(), ProtocolError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Handshake("worker sent no greeting".into())),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ProtocolError::Handshake(
                    "worker closed its output before greeting".into(),
                ))
            }
        };
        let hello: Handshake =
            serde_json::from_str(&line).map_err(|e| ProtocolError::Handshake(format!("{e}: {line}")))?;
        if hello.protocol != PROTOCOL {
            return Err(ProtocolError::Handshake(format!(
                "worker speaks `{}`, expected `{PROTOCOL}`",
                hello.protocol
            )));
        }
        self.subnets = hello.subnets;
        Ok(())
    }

    /// Sub-network count announced in the handshake.
    pub fn subnets(&self) -> usize {
        self.subnets
    }

    pub fn next_request_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn send(&mut self, req: &EvalRequest) -> Result<(), ProtocolError> {
        let w = self.writer.as_mut().ok_or(ProtocolError::WorkerExited { pending: 1 })?;
        let mut line = serde_json::to_vec(req).expect("requests serialize");
        line.push(b'\n');
        w.write_all(&line).map_err(write_error)
    }

    fn flush(&mut self) -> Result<(), ProtocolError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush().map_err(write_error)?;
        }
        Ok(())
    }

    /// Sends every request, then collects replies by id. Requests still
    /// unanswered after one timeout are resent once; after a second timeout
    /// they are reported as failed. Results come back in request order.
    pub fn evaluate_batch(&mut self, requests: &[EvalRequest]) -> Result<Vec<EvalResult>, ProtocolError> {
        let mut pending: HashMap<u64, (usize, bool)> = HashMap::with_capacity(requests.len());
        for (i, r) in requests.iter().enumerate() {
            if pending.insert(r.request_id, (i, false)).is_some() {
                return Err(ProtocolError::DuplicateId(r.request_id));
            }
        }
        let mut results: Vec<Option<EvalResult>> = vec![None; requests.len()];
        for r in requests {
            self.send(r)?;
        }
        self.flush()?;

        let mut deadline = Instant::now() + self.timeout;
        while !pending.is_empty() {
            let wait = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(wait) {
                Ok(line) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let res = parse_reply(&line)?;
                    match pending.remove(&res.request_id) {
                        Some((idx, _)) => results[idx] = Some(res),
                        None => log::debug!("ignoring reply to unknown or settled id {}", res.request_id),
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    let mut retry = Vec::new();
                    pending.retain(|&id, (idx, retried)| {
                        if *retried {
                            results[*idx] = Some(EvalResult {
                                request_id: id,
                                status: EvalStatus::Failed("timed out after retry".into()),
                            });
                            false
                        } else {
                            *retried = true;
                            retry.push(*idx);
                            true
                        }
                    });
                    retry.sort_unstable();
                    for idx in retry {
                        log::warn!("request {} timed out; retrying", requests[idx].request_id);
                        self.send(&requests[idx])?;
                    }
                    self.flush()?;
                    deadline = Instant::now() + self.timeout;
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ProtocolError::WorkerExited { pending: pending.len() })
                }
            }
        }
        Ok(results.into_iter().map(|r| r.expect("every request settled")).collect())
    }
}

impl Drop for WorkerClient {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved worker exit on its own
        self.writer.take();
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// [`Evaluator`] backed by an external worker.
pub struct ExternalEvaluator {
    client: Mutex<WorkerClient>,
    fingerprint: String,
}

impl ExternalEvaluator {
    /// `identity` names the worker configuration (command line, profile) for
    /// cache keying. Fails if the worker serves fewer sub-networks than needed.
    pub fn new(client: WorkerClient, identity: &str, subnets: usize) -> Result<Self, ProtocolError> {
        if client.subnets() != subnets {
            return Err(ProtocolError::Handshake(format!(
                "worker serves {} sub-networks, partition has {subnets}",
                client.subnets()
            )));
        }
        Ok(Self {
            client: Mutex::new(client),
            fingerprint: format!("external:{identity}"),
        })
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, subnet: usize, genes: &[u32]) -> Result<f64, EvalError> {
        self.evaluate_batch(subnet, &[genes.to_vec()])
            .pop()
            .expect("one result per request")
    }

    fn evaluate_batch(&self, subnet: usize, batch: &[Vec<u32>]) -> Vec<Result<f64, EvalError>> {
        if batch.is_empty() {
            return Vec::new();
        }
        let mut client = self.client.lock().expect("worker lock");
        let requests: Vec<EvalRequest> = batch
            .iter()
            .map(|genes| EvalRequest {
                request_id: client.next_request_id(),
                subnet_index: subnet,
                genes: genes.clone(),
            })
            .collect();
        match client.evaluate_batch(&requests) {
            Ok(results) => results
                .into_iter()
                .map(|r| match r.status {
                    EvalStatus::Ok(e) => Ok(e),
                    EvalStatus::Failed(reason) => Err(EvalError::Failed(reason)),
                })
                .collect(),
            Err(err) => {
                let msg = err.to_string();
                let mut out = vec![Err(EvalError::Protocol(err))];
                out.extend((1..batch.len()).map(|_| Err(EvalError::Failed(msg.clone()))));
                out
            }
        }
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use proptest::prelude::{Just, Strategy};
    use std::os::unix::net::UnixStream;

    #[derive(Clone, Copy)]
    enum Mode {
        Echo,
        Reverse,
        FailOdd,
        DropFirstOnce,
        Garbage,
        ExitAfterOne,
        Silent,
    }

    /// In-process worker on one end of a socket pair.
    fn fake_worker(mode: Mode, hello: &'static str) -> WorkerClient {
        let (ours, theirs) = UnixStream::pair().unwrap();
        thread::spawn(move || {
            let mut out = theirs.try_clone().unwrap();
            writeln!(out, "{hello}").unwrap();
            let mut buffered: Vec<EvalRequest> = Vec::new();
            let mut dropped = false;
            for line in BufReader::new(theirs).lines() {
                let Ok(line) = line else { break };
                let req: EvalRequest = serde_json::from_str(&line).unwrap();
                match mode {
                    Mode::Echo => writeln!(out, r#"{{"id":{},"error":0.5}}"#, req.request_id).unwrap(),
                    Mode::Reverse => {
                        buffered.push(req);
                        if buffered.len() == 4 {
                            for r in buffered.drain(..).rev() {
                                let e = f64::from(r.genes[0]) / 10.0;
                                writeln!(out, r#"{{"id":{},"error":{e}}}"#, r.request_id).unwrap();
                            }
                        }
                    }
                    Mode::FailOdd if req.request_id % 2 == 1 => writeln!(
                        out,
                        r#"{{"id":{},"status":"failed","reason":"diverged"}}"#,
                        req.request_id
                    )
                    .unwrap(),
                    Mode::FailOdd => writeln!(out, r#"{{"id":{},"error":0.1}}"#, req.request_id).unwrap(),
                    Mode::DropFirstOnce if !dropped && req.request_id == 0 => dropped = true,
                    Mode::DropFirstOnce => writeln!(out, r#"{{"id":{},"error":0.2}}"#, req.request_id).unwrap(),
                    Mode::Garbage => writeln!(out, "not json").unwrap(),
                    Mode::ExitAfterOne => {
                        writeln!(out, r#"{{"id":{},"error":0.2}}"#, req.request_id).unwrap();
                        return;
                    }
                    Mode::Silent => {}
                }
            }
        });
        let reader = ours.try_clone().unwrap();
        WorkerClient::from_streams(reader, ours, None, Duration::from_millis(300)).unwrap()
    }

    const HELLO: &str = r#"{"protocol":"emo-eval/1","subnets":3}"#;

    /// Worker that collects `order.len()` requests and answers them in `order`.
    fn permuting_worker(order: Vec<usize>) -> WorkerClient {
        let (ours, theirs) = UnixStream::pair().unwrap();
        thread::spawn(move || {
            let mut out = theirs.try_clone().unwrap();
            writeln!(out, "{HELLO}").unwrap();
            let mut buffered: Vec<EvalRequest> = Vec::new();
            for line in BufReader::new(theirs).lines() {
                let Ok(line) = line else { break };
                buffered.push(serde_json::from_str(&line).unwrap());
                if buffered.len() == order.len() {
                    for &i in &order {
                        let r = &buffered[i];
                        let e = f64::from(r.genes[0]) / 10.0;
                        writeln!(out, r#"{{"id":{},"error":{e}}}"#, r.request_id).unwrap();
                    }
                    buffered.clear();
                }
            }
        });
        let reader = ours.try_clone().unwrap();
        WorkerClient::from_streams(reader, ours, None, Duration::from_secs(5)).unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn any_reply_interleaving_gives_the_same_results(
            order in (1usize..10).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        ) {
            let n = order.len() as u64;
            let mut c = permuting_worker(order);
            let out = c.evaluate_batch(&reqs(n)).unwrap();
            let expected: Vec<EvalResult> = reqs(n)
                .iter()
                .map(|r| EvalResult {
                    request_id: r.request_id,
                    status: EvalStatus::Ok(f64::from(r.genes[0]) / 10.0),
                })
                .collect();
            proptest::prop_assert_eq!(out, expected);
        }
    }

    fn reqs(n: u64) -> Vec<EvalRequest> {
        (0..n)
            .map(|i| EvalRequest {
                request_id: i,
                subnet_index: 0,
                genes: vec![i as u32 + 1, 2],
            })
            .collect()
    }

    #[test]
    fn request_wire_format() {
        let r = EvalRequest {
            request_id: 4,
            subnet_index: 1,
            genes: vec![3, 5],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"id":4,"subnet":1,"genes":[3,5]}"#
        );
    }

    #[test]
    fn handshake_announces_subnets() {
        assert_eq!(fake_worker(Mode::Echo, HELLO).subnets(), 3);
    }

    #[test]
    fn wrong_protocol_is_rejected() {
        let (ours, theirs) = UnixStream::pair().unwrap();
        let mut t = theirs;
        writeln!(t, r#"{{"protocol":"other/9","subnets":3}}"#).unwrap();
        let reader = ours.try_clone().unwrap();
        let err = WorkerClient::from_streams(reader, ours, None, Duration::from_millis(300));
        assert!(matches!(err, Err(ProtocolError::Handshake(_))));
    }

    #[test]
    fn empty_batch() {
        let mut c = fake_worker(Mode::Echo, HELLO);
        assert!(c.evaluate_batch(&[]).unwrap().is_empty());
    }

    #[test]
    fn echo_worker_preserves_ids() {
        let mut c = fake_worker(Mode::Echo, HELLO);
        let out = c.evaluate_batch(&reqs(5)).unwrap();
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.request_id, i as u64);
            assert_eq!(r.status, EvalStatus::Ok(0.5));
        }
    }

    #[test]
    fn out_of_order_replies_are_matched() {
        let mut c = fake_worker(Mode::Reverse, HELLO);
        let out = c.evaluate_batch(&reqs(4)).unwrap();
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.request_id, i as u64);
            assert_eq!(r.status, EvalStatus::Ok(f64::from(i as u32 + 1) / 10.0));
        }
    }

    #[test]
    fn failed_status_is_reported_per_request() {
        let mut c = fake_worker(Mode::FailOdd, HELLO);
        let out = c.evaluate_batch(&reqs(4)).unwrap();
        assert_eq!(out[0].status, EvalStatus::Ok(0.1));
        assert_eq!(out[1].status, EvalStatus::Failed("diverged".into()));
    }

    #[test]
    fn lost_request_is_retried_once() {
        let mut c = fake_worker(Mode::DropFirstOnce, HELLO);
        let out = c.evaluate_batch(&reqs(3)).unwrap();
        assert!(out.iter().all(|r| r.status == EvalStatus::Ok(0.2)));
    }

    #[test]
    fn silent_worker_times_out_to_failure() {
        let mut c = fake_worker(Mode::Silent, HELLO);
        let out = c.evaluate_batch(&reqs(2)).unwrap();
        assert!(out.iter().all(|r| matches!(r.status, EvalStatus::Failed(_))));
    }

    #[test]
    fn malformed_line_is_a_protocol_error() {
        let mut c = fake_worker(Mode::Garbage, HELLO);
        match c.evaluate_batch(&reqs(1)) {
            Err(ProtocolError::Malformed { line, .. }) => assert_eq!(line, "not json"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn worker_exit_aborts_batch() {
        let mut c = fake_worker(Mode::ExitAfterOne, HELLO);
        assert!(matches!(
            c.evaluate_batch(&reqs(3)),
            Err(ProtocolError::WorkerExited { .. })
        ));
    }

    #[test]
    fn evaluator_adapter() {
        let eval = ExternalEvaluator::new(fake_worker(Mode::Echo, HELLO), "fake", 3).unwrap();
        let out = eval.evaluate_batch(1, &[vec![1], vec![2]]);
        assert!(out.iter().all(|r| *r.as_ref().unwrap() == 0.5));
        assert_eq!(eval.evaluate(0, &[3]).unwrap(), 0.5);
        assert!(ExternalEvaluator::new(fake_worker(Mode::Echo, HELLO), "fake", 4).is_err());
    }

    #[test]
    fn spawn_failure_is_reported() {
        let err = WorkerClient::spawn(&["/nonexistent/worker".into()], Duration::from_millis(100));
        assert!(matches!(err, Err(ProtocolError::Spawn { .. })));
    }
}
