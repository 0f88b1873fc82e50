//! Ways of delivering a protocol request to a model.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use inconsistency_core::protocol::{encode, parse_reply, salvage_id, ModelHandler, ProtocolError, Reply, Request};
use log::warn;
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::process::{Child, Command};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::EndpointError;

#[async_trait]
pub trait Transport: Send + Sync {
    async fn call(&self, request: Request) -> Result<Reply, EndpointError>;
}

type Waiter = oneshot::Sender<Result<Reply, EndpointError>>;

#[derive(Default)]
struct Pending {
    waiting: HashMap<String, Waiter>,
    closed: bool,
}

/// Removes a pending entry if the call is abandoned (e.g. on timeout).
struct PendingGuard {
    pending: Arc<Mutex<Pending>>,
    id: String,
}

impl Drop for PendingGuard {
    fn drop(&mut self) {
        self.pending.lock().expect("pending lock").waiting.remove(&self.id);
    }
}

/// Pipelined newline-delimited JSON over a byte stream pair. Writes are
/// serialized; replies are matched to callers by request id, in whatever
/// order they arrive.
pub struct LineTransport {
    writer: tokio::sync::Mutex<Box<dyn AsyncWrite + Send + Unpin>>,
    pending: Arc<Mutex<Pending>>,
    reader: JoinHandle<()>,
    _child: Option<Child>,
}

impl LineTransport {
    pub fn new<R, W>(reader: R, writer: W) -> Self
    where
        R: AsyncRead + Send + Unpin + 'static,
        W: AsyncWrite + Send + Unpin + 'static,
    {
        let pending = Arc::new(Mutex::new(Pending::default()));
        let reader = tokio::spawn(read_replies(reader, Arc::clone(&pending)));
        LineTransport {
            writer: tokio::sync::Mutex::new(Box::new(writer)),
            pending,
            reader,
            _child: None,
        }
    }

    /// Starts `program` and talks to it over its stdin/stdout. The child is
    /// killed when the transport is dropped.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, EndpointError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| EndpointError::Startup(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut t = LineTransport::new(stdout, stdin);
        t._child = Some(child);
        Ok(t)
    }
}

impl Drop for LineTransport {
    fn drop(&mut self) {
        self.reader.abort();
    }
}

async fn read_replies<R: AsyncRead + Unpin>(reader: R, pending: Arc<Mutex<Pending>>) {
    let mut lines = BufReader::new(reader).lines();
    loop {
        let line = match lines.next_line().await {
            Ok(Some(line)) => line,
            Ok(None) => break,
            Err(e) => {
                warn!("reply stream failed: {e}");
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let (id, outcome) = match parse_reply(&line) {
            Ok(reply) => (Some(reply.id.clone()), Ok(reply)),
            Err(e) => (salvage_id(&line), Err(EndpointError::Protocol(e))),
        };
        let waiter = id.and_then(|id| pending.lock().expect("pending lock").waiting.remove(&id));
        match waiter {
            Some(tx) => {
                let _ = tx.send(outcome);
            }
            None => warn!("dropping reply with no matching request: {line}"),
        }
    }
    let mut p = pending.lock().expect("pending lock");
    p.closed = true;
    for (_, tx) in p.waiting.drain() {
        let _ = tx.send(Err(EndpointError::Closed));
    }
}

#[async_trait]
impl Transport for LineTransport {
    async fn call(&self, request: Request) -> Result<Reply, EndpointError> {
        let (tx, rx) = oneshot::channel();
        {
            let mut p = self.pending.lock().expect("pending lock");
            if p.closed {
                return Err(EndpointError::Closed);
            }
            p.waiting.insert(request.id.clone(), tx);
        }
        let _guard = PendingGuard {
            pending: Arc::clone(&self.pending),
            id: request.id.clone(),
        };
        let mut line = encode(&request);
        line.push('\n');
        {
            let mut w = self.writer.lock().await;
            let written = async {
                w.write_all(line.as_bytes()).await?;
                w.flush().await
            }
            .await;
            written.map_err(|e| EndpointError::Transport(e.to_string()))?;
        }
        rx.await.unwrap_or(Err(EndpointError::Closed))
    }
}

/// One HTTP POST per request, the reply being the response body.
pub struct HttpTransport {
    client: reqwest::Client,
    url: String,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>) -> Self {
        HttpTransport {
            client: reqwest::Client::new(),
            url: url.into(),
        }
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn call(&self, request: Request) -> Result<Reply, EndpointError> {
        let response = self
            .client
            .post(&self.url)
            .header("content-type", "application/json")
            .body(encode(&request))
            .send()
            .await
            .map_err(|e| EndpointError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .await
            .map_err(|e| EndpointError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EndpointError::Transport(format!("HTTP {status}: {body}")));
        }
        parse_reply(body.trim_end()).map_err(EndpointError::Protocol)
    }
}

/// Calls a handler directly, without serialization.
pub struct InProcessTransport {
    handler: Arc<dyn ModelHandler>,
}

impl InProcessTransport {
    pub fn new(handler: Arc<dyn ModelHandler>) -> Self {
        InProcessTransport { handler }
    }
}

#[async_trait]
impl Transport for InProcessTransport {
    async fn call(&self, request: Request) -> Result<Reply, EndpointError> {
        tokio::task::yield_now().await;
        Ok(self.handler.handle(&request))
    }
}

impl From<ProtocolError> for EndpointError {
    fn from(e: ProtocolError) -> Self {
        EndpointError::Protocol(e)
    }
}
