//! Interaction-oriented programming with information protocols.
//!
//! * [`protocol`] parses and validates protocol source text.
//! * [`enactment`] gives schema-level enactment semantics and an exhaustive
//!   path enumerator.
//! * [`verify`] checks safety and liveness over canonical enactments.
//! * [`runtime`] runs protocol-compliant agents: local state, enabled forms,
//!   decision makers and the adapter loop.
//! * [`resilience`] implements remind-until retransmission policies.
//! * [`transport`] provides UDP and a seeded network simulator.

pub mod clock;
pub mod config;
pub mod cron;
pub mod demo;
pub mod enactment;
pub mod fixtures;
pub mod listmap;
pub mod protocol;
pub mod resilience;
pub mod runtime;
pub mod simulation;
pub mod transport;
pub mod verify;

pub use protocol::{
    format_protocol, parse_protocol, validate_protocol, Adornment, Diagnostic, MessageSchema,
    ParameterDecl, ParseError, ProtocolSpec, Severity,
};
