//! Protocol-compliant agents: local state, enabled forms, attempts, and the
//! adapter loop that ties decision makers to a transport.

mod adapter;
mod forms;
mod instance;
mod state;

pub use adapter::{
    receive, Agent, AgentError, AgentEvent, DecisionError, DecisionFn, DecisionMaker, LoggedEvent,
    Reception, RetransmitCause, Trigger,
};
pub use forms::{check, enabled_forms, Attempt, EnabledForms, Form, UnknownRole, Violation};
pub use instance::{EnactmentKey, Identity, MessageInstance, MAX_DATAGRAM_BYTES};
pub use state::{Direction, LocalState, Query, StateError};
