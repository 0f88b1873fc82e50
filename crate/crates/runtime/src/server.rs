//! Serving a [`ModelHandler`] over newline-delimited JSON or HTTP.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::post;
use axum::Router;
use inconsistency_core::protocol::{encode, handle_line, ModelHandler};
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::EndpointError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeOptions {
    /// Answer requests concurrently with small per-request delays, so that
    /// replies come back out of order. For exercising client-side pairing.
    pub reorder: bool,
}

fn reorder_delay(line: &str) -> Duration {
    let mut h = DefaultHasher::new();
    line.hash(&mut h);
    Duration::from_millis(h.finish() % 5)
}

/// Reads requests until end of input, writing one reply line per request.
pub async fn serve_lines<R, W>(
    handler: Arc<dyn ModelHandler>,
    reader: R,
    writer: W,
    options: ServeOptions,
) -> std::io::Result<()>
where
    R: AsyncRead + Unpin,
    W: AsyncWrite + Unpin + Send + 'static,
{
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let sink = tokio::spawn(async move {
        let mut writer = writer;
        while let Some(mut line) = rx.recv().await {
            line.push('\n');
            writer.write_all(line.as_bytes()).await?;
            writer.flush().await?;
        }
        Ok::<_, std::io::Error>(())
    });

    let mut lines = BufReader::new(reader).lines();
    let mut line_no = 0;
    while let Some(line) = lines.next_line().await? {
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        if options.reorder {
            let handler = Arc::clone(&handler);
            let tx = tx.clone();
            tokio::spawn(async move {
                tokio::time::sleep(reorder_delay(&line)).await;
                let _ = tx.send(encode(&handle_line(handler.as_ref(), &line, line_no)));
            });
        } else {
            let _ = tx.send(encode(&handle_line(handler.as_ref(), &line, line_no)));
        }
    }
    drop(tx);
    sink.await.map_err(std::io::Error::other)?
}

pub async fn serve_stdio(handler: Arc<dyn ModelHandler>, options: ServeOptions) -> std::io::Result<()> {
    serve_lines(handler, tokio::io::stdin(), tokio::io::stdout(), options).await
}

async fn answer(State(handler): State<Arc<dyn ModelHandler>>, body: String) -> String {
    encode(&handle_line(handler.as_ref(), body.trim(), 1))
}

/// Binds `addr` and returns the bound address with the server future. Each
/// POST to `/` carries one request and gets one reply.
pub async fn bind_http(
    handler: Arc<dyn ModelHandler>,
    addr: SocketAddr,
) -> Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>), EndpointError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| EndpointError::Startup(format!("bind {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| EndpointError::Startup(e.to_string()))?;
    let app = Router::new().route("/", post(answer)).with_state(handler);
    Ok((local, async move { axum::serve(listener, app).await }))
}
