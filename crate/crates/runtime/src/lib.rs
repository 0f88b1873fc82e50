//! Talking to models over the wire protocol and running attacks against
//! them.

pub mod attack;
pub mod endpoint;
pub mod server;
pub mod transport;

use std::time::Duration;

use inconsistency_core::protocol::ProtocolError;
use thiserror::Error;

pub use attack::{attack_all, attack_dataset, attack_instance, AttackConfig, AttackError, AttackItem, RunStatus};
pub use endpoint::{Endpoint, ModelEndpoint, TransportSpec};
pub use server::{bind_http, serve_lines, serve_stdio, ServeOptions};
pub use transport::{HttpTransport, InProcessTransport, LineTransport, Transport};

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint closed the connection")]
    Closed,
    #[error(transparent)]
    Protocol(ProtocolError),
    #[error("could not start endpoint: {0}")]
    Startup(String),
}

impl EndpointError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EndpointError::Timeout(_) | EndpointError::Transport(_))
    }
}
