use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use inconsistency_core::protocol::{ForwardResponse, ModelHandler, ProtocolError, Query, Request, Reply, ReverseResponse};
use tokio::sync::Semaphore;

use crate::transport::{HttpTransport, InProcessTransport, LineTransport, Transport};
use crate::EndpointError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportSpec {
    /// Child process speaking the protocol on stdin/stdout.
    Command(Vec<String>),
    Http(String),
}

impl TransportSpec {
    /// `http://` and `https://` addresses select HTTP; anything else is a
    /// shell-quoted command line.
    pub fn parse(text: &str) -> Result<Self, EndpointError> {
        let text = text.trim();
        if text.starts_with("http://") || text.starts_with("https://") {
            return Ok(TransportSpec::Http(text.to_string()));
        }
        match shlex::split(text) {
            Some(argv) if !argv.is_empty() => Ok(TransportSpec::Command(argv)),
            _ => Err(EndpointError::Startup(format!("cannot parse endpoint `{text}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelEndpoint {
    pub transport: TransportSpec,
    pub timeout: Duration,
    pub max_inflight: usize,
}

impl ModelEndpoint {
    pub fn new(transport: TransportSpec) -> Self {
        ModelEndpoint {
            transport,
            timeout: Duration::from_secs(60),
            max_inflight: 8,
        }
    }

    pub fn validate(&self) -> Result<(), EndpointError> {
        if self.timeout.is_zero() {
            return Err(EndpointError::Startup("timeout must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(EndpointError::Startup("max in-flight must be at least 1".into()));
        }
        Ok(())
    }
}

/// A shareable handle on one model. Requests are tagged with fresh ids and
/// at most `max_inflight` are outstanding at a time.
pub struct Endpoint {
    transport: Arc<dyn Transport>,
    limit: Semaphore,
    timeout: Duration,
    next_id: AtomicU64,
}

impl Endpoint {
    pub fn connect(spec: &ModelEndpoint) -> Result<Self, EndpointError> {
        spec.validate()?;
        let transport: Arc<dyn Transport> = match &spec.transport {
            TransportSpec::Command(argv) => Arc::new(LineTransport::spawn(&argv[0], &argv[1..])?),
            TransportSpec::Http(url) => Arc::new(HttpTransport::new(url.clone())),
        };
        Ok(Self::with_transport(transport, spec.timeout, spec.max_inflight))
    }

    pub fn with_transport(transport: Arc<dyn Transport>, timeout: Duration, max_inflight: usize) -> Self {
        Endpoint {
            transport,
            limit: Semaphore::new(max_inflight.max(1)),
            timeout,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn in_process(handler: Arc<dyn ModelHandler>, max_inflight: usize) -> Self {
        Self::with_transport(
            Arc::new(InProcessTransport::new(handler)),
            Duration::from_secs(60),
            max_inflight,
        )
    }

    pub async fn call(&self, query: Query) -> Result<Reply, EndpointError> {
        let _permit = self.limit.acquire().await.map_err(|_| EndpointError::Closed)?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed).to_string();
        let request = Request { id: id.clone(), query };
        let reply = tokio::time::timeout(self.timeout, self.transport.call(request))
            .await
            .map_err(|_| EndpointError::Timeout(self.timeout))??;
        if reply.id != id {
            return Err(EndpointError::Protocol(ProtocolError::Malformed {
                message: format!("reply id `{}` does not match request id `{id}`", reply.id),
                raw: inconsistency_core::protocol::encode(&reply),
            }));
        }
        Ok(reply)
    }

    pub async fn forward(&self, context: &str, variable: &str) -> Result<ForwardResponse, EndpointError> {
        let reply = self
            .call(Query::Forward {
                context: context.to_string(),
                variable: variable.to_string(),
            })
            .await?;
        Ok(reply.into_forward()?)
    }

    pub async fn reverse(&self, context: &str, explanation: &str) -> Result<ReverseResponse, EndpointError> {
        let reply = self
            .call(Query::Reverse {
                context: context.to_string(),
                explanation: explanation.to_string(),
            })
            .await?;
        Ok(reply.into_reverse()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_endpoint_strings() {
        assert_eq!(
            TransportSpec::parse("http://127.0.0.1:9000/").unwrap(),
            TransportSpec::Http("http://127.0.0.1:9000/".into())
        );
        assert_eq!(
            TransportSpec::parse("incheck oracle --spec 'my spec.json'").unwrap(),
            TransportSpec::Command(vec!["incheck".into(), "oracle".into(), "--spec".into(), "my spec.json".into()])
        );
        assert!(TransportSpec::parse("  ").is_err());
        assert!(TransportSpec::parse("unterminated 'quote").is_err());
    }

    #[test]
    fn validates_limits() {
        let mut e = ModelEndpoint::new(TransportSpec::Http("http://x".into()));
        assert!(e.validate().is_ok());
        e.max_inflight = 0;
        assert!(e.validate().is_err());
        e.max_inflight = 1;
        e.timeout = Duration::ZERO;
        assert!(e.validate().is_err());
    }
}
