use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};
use serde::Serialize;
use thiserror::Error;

use super::forms::{check, enabled_forms, Attempt, EnabledForms};
use super::instance::MessageInstance;
use super::state::{Direction, LocalState, StateError};
use crate::clock::Clock;
use crate::cron::{minute_of, Schedule};
use crate::protocol::{Adornment, ProtocolSpec};
use crate::resilience::{due_retransmissions, Policy, RetryLedger};
use crate::transport::{Endpoint, Transport};

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)] // a handful per agent
pub enum Trigger {
    Cron(Schedule),
    OnReceive(String),
    OnStart,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct DecisionError(pub String);

pub type DecisionFn =
    Box<dyn FnMut(&EnabledForms, &LocalState) -> Result<Vec<Attempt>, DecisionError> + Send>;

pub struct DecisionMaker {
    pub name: String,
    pub trigger: Trigger,
    body: DecisionFn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reception {
    Accepted(MessageInstance),
    DuplicateIgnored(MessageInstance),
    Rejected(String),
}

/// Decodes and validates an inbound datagram for `role`, recording it in
/// `state` if it is new and consistent.
pub fn receive(datagram: &[u8], state: &mut LocalState, spec: &ProtocolSpec, role: &str) -> Reception {
    let Ok(instance) = MessageInstance::decode(datagram) else {
        return Reception::Rejected("malformed".into());
    };
    if instance.protocol != spec.name {
        return Reception::Rejected(format!("unknown protocol {}", instance.protocol));
    }
    let Some(schema) = spec.message(&instance.message) else {
        return Reception::Rejected("unknown message".into());
    };
    if schema.receiver != role {
        return Reception::Rejected(format!("{} is not received by {role}", schema.name));
    }
    for p in &schema.parameters {
        let present = instance.bindings.contains_key(&p.name);
        match (p.adornment, present) {
            (Adornment::Nil, true) => return Reception::Rejected(format!("unexpected parameter {}", p.name)),
            (Adornment::In | Adornment::Out, false) => {
                return Reception::Rejected(format!("missing parameter {}", p.name))
            }
            _ => {}
        }
    }
    if let Some(p) = instance.bindings.keys().find(|p| schema.parameter(p).is_none()) {
        return Reception::Rejected(format!("unexpected parameter {p}"));
    }
    match state.insert(instance.clone(), Direction::Received) {
        Ok(true) => Reception::Accepted(instance),
        Ok(false) => Reception::DuplicateIgnored(instance),
        Err(StateError::Unkeyed(_)) => Reception::Rejected("missing key".into()),
        Err(_) => Reception::Rejected("integrity violation".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RetransmitCause {
    /// A remind-until policy fired.
    Policy,
    /// A peer re-sent something we already had.
    Reply,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AgentEvent {
    Started { role: String, system: String, endpoint: Endpoint },
    Emitted { instance: MessageInstance, to: Endpoint },
    Accepted { instance: MessageInstance, from: Endpoint },
    Duplicate { message: String, from: Endpoint },
    Rejected { reason: String, from: Endpoint },
    Retransmitted { instance: MessageInstance, tries: u32, cause: RetransmitCause },
    CheckFailed { decision: String, violations: Vec<String> },
    DecisionFailed { decision: String, error: String },
    SendFailed { message: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoggedEvent {
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: AgentEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("unknown role {0}")]
    UnknownRole(String),
    #[error("no address configured for role {0}")]
    MissingAddress(String),
    #[error("policy for {subject} does not belong to role {role}")]
    ForeignPolicy { subject: String, role: String },
    #[error("unknown message {0}")]
    UnknownMessage(String),
}

/// A protocol adapter for one role: local state, decision makers, reminder
/// policies and a transport, driven by [`Agent::poll`] and [`Agent::tick`].
pub struct Agent<T: Transport> {
    spec: ProtocolSpec,
    role: String,
    system: String,
    peers: BTreeMap<String, Endpoint>,
    transport: T,
    state: LocalState,
    makers: Vec<DecisionMaker>,
    policies: Vec<Policy>,
    ledger: RetryLedger,
    reply_cap: Option<u32>,
    log: Vec<LoggedEvent>,
    last_minute: Option<DateTime<Utc>>,
}

impl<T: Transport> Agent<T> {
    /// `peers` maps every role this agent sends to onto its address.
    pub fn new(
        spec: ProtocolSpec,
        role: &str,
        system: &str,
        peers: BTreeMap<String, Endpoint>,
        transport: T,
    ) -> Result<Self, AgentError> {
        if !spec.has_role(role) {
            return Err(AgentError::UnknownRole(role.to_string()));
        }
        if let Some(m) = spec.sent_by(role).find(|m| !peers.contains_key(&m.receiver)) {
            return Err(AgentError::MissingAddress(m.receiver.clone()));
        }
        Ok(Self {
            state: LocalState::new(&spec),
            role: role.to_string(),
            system: system.to_string(),
            spec,
            peers,
            transport,
            makers: Vec::new(),
            policies: Vec::new(),
            ledger: RetryLedger::default(),
            reply_cap: None,
            log: Vec::new(),
            last_minute: None,
        })
    }

    pub fn add_decision_maker<F>(&mut self, name: &str, trigger: Trigger, body: F) -> Result<(), AgentError>
    where
        F: FnMut(&EnabledForms, &LocalState) -> Result<Vec<Attempt>, DecisionError> + Send + 'static,
    {
        if let Trigger::OnReceive(m) = &trigger {
            if self.spec.message(m).is_none() {
                return Err(AgentError::UnknownMessage(m.clone()));
            }
        }
        self.makers.push(DecisionMaker {
            name: name.to_string(),
            trigger,
            body: Box::new(body),
        });
        Ok(())
    }

    pub fn add_policy(&mut self, policy: Policy) -> Result<(), AgentError> {
        if policy.owner(&self.spec) != self.role {
            return Err(AgentError::ForeignPolicy {
                subject: policy.subject,
                role: self.role.clone(),
            });
        }
        self.policies.push(policy);
        Ok(())
    }

    /// Answer a duplicate from a peer by re-sending, at most `cap` times per
    /// instance, whatever we sent that peer in the same enactment and that
    /// carries information the duplicate does not. A duplicate is how a
    /// reminder looks on arrival; the reply covers the case where our
    /// response was lost. Off by default.
    pub fn answer_reminders(&mut self, cap: u32) {
        self.reply_cap = Some(cap);
    }

    pub fn spec(&self) -> &ProtocolSpec {
        &self.spec
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn state(&self) -> &LocalState {
        &self.state
    }

    pub fn ledger(&self) -> &RetryLedger {
        &self.ledger
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn log(&self) -> &[LoggedEvent] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<LoggedEvent> {
        std::mem::take(&mut self.log)
    }

    fn record(&mut self, at: DateTime<Utc>, event: AgentEvent) {
        log::debug!("{} {:?}", self.role, event);
        self.log.push(LoggedEvent { at, event });
    }

    /// Fires start-triggered decision makers. Cron schedules become due from
    /// the current minute on.
    pub fn start(&mut self, now: DateTime<Utc>) {
        let endpoint = self.transport.local().clone();
        self.record(
            now,
            AgentEvent::Started {
                role: self.role.clone(),
                system: self.system.clone(),
                endpoint,
            },
        );
        self.last_minute = Some(minute_of(now) - TimeDelta::minutes(1));
        for i in 0..self.makers.len() {
            if self.makers[i].trigger == Trigger::OnStart {
                self.decide(i, now);
            }
        }
    }

    /// Fires every schedule with a minute in `(last tick, now]`, once each,
    /// then evaluates reminder policies the same way. Repeated calls within
    /// one minute do nothing.
    pub fn tick(&mut self, now: DateTime<Utc>) {
        let minute = minute_of(now);
        let last = *self.last_minute.get_or_insert(minute - TimeDelta::minutes(1));
        if minute <= last {
            return;
        }
        let due = |s: &Schedule| s.next_after(last).filter(|t| *t <= minute);
        let fired: Vec<_> = (0..self.makers.len())
            .filter(|&i| matches!(&self.makers[i].trigger, Trigger::Cron(s) if due(s).is_some()))
            .collect();
        for i in fired {
            self.decide(i, now);
        }
        let mut resend = Vec::new();
        for p in &self.policies {
            if let Some(at) = due(&p.when) {
                resend.extend(due_retransmissions(&self.state, std::slice::from_ref(p), &mut self.ledger, at));
            }
        }
        for instance in resend {
            let tries = self.ledger.tries(&self.state.identity(&instance).expect("sent instances are keyed"));
            self.retransmit(instance, tries, RetransmitCause::Policy, now);
        }
        self.last_minute = Some(minute);
    }

    /// Next minute at which [`Agent::tick`] would fire something.
    pub fn next_wakeup(&self) -> Option<DateTime<Utc>> {
        let last = self.last_minute?;
        self.makers
            .iter()
            .filter_map(|m| match &m.trigger {
                Trigger::Cron(s) => Some(s),
                _ => None,
            })
            .chain(self.policies.iter().map(|p| &p.when))
            .filter_map(|s| s.next_after(last))
            .min()
    }

    /// Drains the transport. Returns the number of datagrams handled.
    pub fn poll(&mut self, now: DateTime<Utc>) -> usize {
        let mut n = 0;
        loop {
            match self.transport.poll_receive() {
                Ok(Some((bytes, from))) => {
                    self.on_datagram(&bytes, from, now);
                    n += 1;
                }
                Ok(None) => return n,
                Err(e) => {
                    log::warn!("{}: receive failed: {e}", self.role);
                    return n;
                }
            }
        }
    }

    pub fn on_datagram(&mut self, bytes: &[u8], from: Endpoint, now: DateTime<Utc>) -> Reception {
        let reception = receive(bytes, &mut self.state, &self.spec, &self.role);
        match &reception {
            Reception::Accepted(instance) => {
                self.record(now, AgentEvent::Accepted { instance: instance.clone(), from });
                let fired: Vec<_> = (0..self.makers.len())
                    .filter(|&i| matches!(&self.makers[i].trigger, Trigger::OnReceive(m) if *m == instance.message))
                    .collect();
                for i in fired {
                    self.decide(i, now);
                }
            }
            Reception::DuplicateIgnored(instance) => {
                self.record(now, AgentEvent::Duplicate { message: instance.message.clone(), from });
                if let Some(cap) = self.reply_cap {
                    self.reply(instance, cap, now);
                }
            }
            Reception::Rejected(reason) => {
                log::warn!("{}: rejected datagram from {from}: {reason}", self.role);
                self.record(now, AgentEvent::Rejected { reason: reason.clone(), from });
            }
        }
        reception
    }

    fn reply(&mut self, duplicate: &MessageInstance, cap: u32, now: DateTime<Utc>) {
        let Some(id) = self.state.identity(duplicate) else { return };
        let peer = &self.spec.message(&duplicate.message).expect("validated").sender;
        let answers: Vec<_> = self
            .state
            .sent()
            .filter(|m| {
                m.system == duplicate.system
                    && self.spec.message(&m.message).is_some_and(|s| s.receiver == *peer)
                    && self.state.identity(m).is_some_and(|i| i.enactment == id.enactment)
                    && m.bindings.keys().any(|k| !duplicate.bindings.contains_key(k))
            })
            .cloned()
            .collect();
        for m in answers {
            let mid = self.state.identity(&m).expect("keyed");
            if self.ledger.tries(&mid) < cap {
                let tries = self.ledger.record(mid, now);
                self.retransmit(m, tries, RetransmitCause::Reply, now);
            }
        }
    }

    fn retransmit(&mut self, instance: MessageInstance, tries: u32, cause: RetransmitCause, now: DateTime<Utc>) {
        self.send(&instance, now);
        self.record(now, AgentEvent::Retransmitted { instance, tries, cause });
    }

    fn send(&mut self, instance: &MessageInstance, now: DateTime<Utc>) -> Option<Endpoint> {
        let receiver = &self.spec.message(&instance.message).expect("validated").receiver;
        let to = self.peers[receiver].clone();
        match self.transport.send(&to, &instance.encode()) {
            Ok(()) => Some(to),
            Err(e) => {
                log::warn!("{}: send of {} failed: {e}", self.role, instance.message);
                self.record(
                    now,
                    AgentEvent::SendFailed {
                        message: instance.message.clone(),
                        error: e.to_string(),
                    },
                );
                None
            }
        }
    }

    /// Runs one decision maker against a snapshot, then checks and commits
    /// its attempts as a batch.
    fn decide(&mut self, index: usize, now: DateTime<Utc>) {
        let snapshot = self.state.clone();
        let forms = enabled_forms(&snapshot, &self.role, &self.spec, &self.system).expect("role checked at construction");
        let maker = &mut self.makers[index];
        let name = maker.name.clone();
        let outcome = catch_unwind(AssertUnwindSafe(|| (maker.body)(&forms, &snapshot)));
        let attempts = match outcome {
            Ok(Ok(attempts)) => attempts,
            Ok(Err(e)) => {
                self.record(now, AgentEvent::DecisionFailed { decision: name, error: e.0 });
                return;
            }
            Err(panic) => {
                let error = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".into());
                log::error!("{}: decision maker {name} panicked: {error}", self.role);
                self.record(now, AgentEvent::DecisionFailed { decision: name, error });
                return;
            }
        };
        if let Err(violations) = self.commit_and_emit(&attempts, now) {
            self.record(
                now,
                AgentEvent::CheckFailed {
                    decision: name,
                    violations: violations.iter().map(ToString::to_string).collect(),
                },
            );
        }
    }

    /// Checks the batch against the live state; if it passes, records every
    /// instance and only then sends them. Send failures are logged and left
    /// to reminder policies.
    pub fn commit_and_emit(
        &mut self,
        attempts: &[Attempt],
        now: DateTime<Utc>,
    ) -> Result<Vec<MessageInstance>, Vec<super::forms::Violation>> {
        check(attempts, &self.state)?;
        let instances: Vec<_> = attempts.iter().map(Attempt::instance).collect();
        for i in &instances {
            self.state
                .insert(i.clone(), Direction::Sent)
                .expect("checked attempts are consistent with state");
        }
        for i in &instances {
            if let Some(to) = self.send(i, now) {
                self.record(now, AgentEvent::Emitted { instance: i.clone(), to });
            }
        }
        Ok(instances)
    }

    /// Real-time loop: polls and ticks until `stop` is set, sleeping `idle`
    /// when there is nothing to do.
    pub fn run(&mut self, clock: &dyn Clock, stop: &AtomicBool, idle: Duration, mut on_event: impl FnMut(&LoggedEvent)) {
        if self.last_minute.is_none() {
            self.start(clock.now());
        }
        // Events from before the loop (start, earlier calls) go out first.
        while !stop.load(Ordering::Relaxed) {
            let now = clock.now();
            let n = self.poll(now);
            self.tick(now);
            for e in self.take_log() {
                on_event(&e);
            }
            if n == 0 {
                std::thread::sleep(idle);
            }
        }
    }
}
