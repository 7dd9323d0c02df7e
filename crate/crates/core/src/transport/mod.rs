//! Best-effort datagram delivery. Agents see only [`Transport`]; whether
//! datagrams cross real sockets or the seeded simulator is a deployment
//! choice.

mod sim;
mod udp;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sim::{SimConfig, SimConfigError, SimNetwork, SimTransport, TraceEntry, TraceOutcome};
pub use udp::UdpTransport;

use crate::runtime::MAX_DATAGRAM_BYTES;

/// A network address: `host:port` for UDP, a node name in the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Endpoint(pub String);

impl Endpoint {
    pub fn new(address: impl Into<String>) -> Self {
        Self(address.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Endpoint {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("payload of {0} bytes exceeds the datagram limit")]
    Oversize(usize),
    #[error("cannot route to {0}")]
    Unroutable(Endpoint),
    #[error("endpoint {0} is not bound")]
    Unbound(Endpoint),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait Transport {
    fn local(&self) -> &Endpoint;

    /// Queue a datagram. Success says nothing about delivery.
    fn send(&mut self, to: &Endpoint, payload: &[u8]) -> Result<(), TransportError>;

    /// One pending datagram and its source, without blocking.
    fn poll_receive(&mut self) -> Result<Option<(Vec<u8>, Endpoint)>, TransportError>;
}

fn check_size(payload: &[u8]) -> Result<(), TransportError> {
    if payload.len() > MAX_DATAGRAM_BYTES {
        Err(TransportError::Oversize(payload.len()))
    } else {
        Ok(())
    }
}
