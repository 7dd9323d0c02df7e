//! Remind-until policies: scheduled, bounded, verbatim retransmission of
//! sent instances that have not yet drawn the expected response.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::cron::Schedule;
use crate::listmap::{parse_listmap, Entry};
use crate::protocol::ProtocolSpec;
use crate::runtime::{Identity, LocalState, MessageInstance};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    /// The subject's receiver, as resolved against the protocol's roles.
    pub remind_role: String,
    pub subject: String,
    pub until: String,
    pub when: Schedule,
    pub max_tries: u32,
}

impl Policy {
    /// Role that sends the subject and so owns the policy.
    pub fn owner<'a>(&self, spec: &'a ProtocolSpec) -> &'a str {
        &spec.message(&self.subject).expect("validated").sender
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("entry {entry}: {message}")]
    Syntax { entry: usize, message: String },
    #[error("entry {entry}: unknown message {name}")]
    UnknownMessage { entry: usize, name: String },
    #[error("entry {entry}: unknown role {name}")]
    UnknownRole { entry: usize, name: String },
    #[error("entry {entry}: {message}")]
    Invalid { entry: usize, message: String },
}

/// Resolves a role name as written in a policy. Exact names win; otherwise
/// a protocol role that is a case-insensitive prefix of the written name
/// (`Buyer` for `B`) is accepted if it is the only one.
pub fn resolve_role<'a>(spec: &'a ProtocolSpec, written: &str) -> Option<&'a str> {
    if let Some(r) = spec.roles.iter().find(|r| *r == written) {
        return Some(r);
    }
    let lower = written.to_lowercase();
    let mut hits = spec
        .roles
        .iter()
        .filter(|r| lower.starts_with(&r.to_lowercase()));
    match (hits.next(), hits.next()) {
        (Some(r), None) => Some(r),
        _ => None,
    }
}

pub fn parse_policies(text: &str, spec: &ProtocolSpec) -> Result<Vec<Policy>, PolicyError> {
    let entries = parse_listmap(text).map_err(|e| PolicyError::Syntax {
        entry: 0,
        message: e.to_string(),
    })?;
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| parse_entry(i + 1, e, spec))
        .collect()
}

fn parse_entry(entry: usize, e: &Entry, spec: &ProtocolSpec) -> Result<Policy, PolicyError> {
    let syntax = |message: String| PolicyError::Syntax { entry, message };
    for f in &e.fields {
        if !["action", "when", "max tries"].contains(&f.key.as_str()) {
            return Err(syntax(format!("unknown field `{}`", f.key)));
        }
    }
    let field = |k: &str| e.get(k).ok_or_else(|| syntax(format!("missing `{k}`")));

    let action = field("action")?;
    let words: Vec<_> = action.split_whitespace().collect();
    let [remind, role, of, subject, until_kw, until] = words[..] else {
        return Err(syntax(format!("expected `remind <Role> of <Message> until <Message>`, got `{action}`")));
    };
    if (remind, of, until_kw) != ("remind", "of", "until") {
        return Err(syntax(format!("expected `remind <Role> of <Message> until <Message>`, got `{action}`")));
    }
    let when = Schedule::parse(field("when")?).map_err(|e| syntax(e.to_string()))?;
    let max_tries = field("max tries")?
        .parse::<u32>()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| syntax("`max tries` must be a positive integer".into()))?;

    let unknown = |name: &str| PolicyError::UnknownMessage {
        entry,
        name: name.to_string(),
    };
    let subj = spec.message(subject).ok_or_else(|| unknown(subject))?;
    let resp = spec.message(until).ok_or_else(|| unknown(until))?;
    let remind_role = resolve_role(spec, role).ok_or_else(|| PolicyError::UnknownRole {
        entry,
        name: role.to_string(),
    })?;
    let invalid = |message: String| PolicyError::Invalid { entry, message };
    if remind_role != subj.receiver {
        return Err(invalid(format!("{role} does not receive {subject}")));
    }
    if resp.receiver != subj.sender {
        return Err(invalid(format!("{until} is not received by {}, the sender of {subject}", subj.sender)));
    }
    for k in spec.keys() {
        if subj.parameter(k).is_none() || resp.parameter(k).is_none() {
            return Err(invalid(format!("{subject} and {until} do not share key {k}")));
        }
    }
    Ok(Policy {
        remind_role: remind_role.to_string(),
        subject: subject.to_string(),
        until: until.to_string(),
        when,
        max_tries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub tries: u32,
    pub last: DateTime<Utc>,
}

/// Retransmissions so far, per sent instance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetryLedger(BTreeMap<Identity, LedgerEntry>);

impl RetryLedger {
    pub fn tries(&self, id: &Identity) -> u32 {
        self.0.get(id).map_or(0, |e| e.tries)
    }

    pub fn get(&self, id: &Identity) -> Option<&LedgerEntry> {
        self.0.get(id)
    }

    pub fn record(&mut self, id: Identity, now: DateTime<Utc>) -> u32 {
        let e = self.0.entry(id).or_insert(LedgerEntry { tries: 0, last: now });
        e.tries += 1;
        e.last = now;
        e.tries
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Identity, &LedgerEntry)> {
        self.0.iter()
    }
}

/// Instances to retransmit at `now`, with the ledger updated. Policies whose
/// schedule does not match `now` contribute nothing.
pub fn due_retransmissions(
    state: &LocalState,
    policies: &[Policy],
    ledger: &mut RetryLedger,
    now: DateTime<Utc>,
) -> Vec<MessageInstance> {
    let mut due = Vec::new();
    for policy in policies.iter().filter(|p| p.when.matches(now)) {
        for sent in state.sent().filter(|m| m.message == policy.subject) {
            let Some(id) = state.identity(sent) else { continue };
            let answered = Identity {
                message: policy.until.clone(),
                enactment: id.enactment.clone(),
            };
            if state.get(&answered).is_some() || ledger.tries(&id) >= policy.max_tries {
                continue;
            }
            ledger.record(id, now);
            due.push(sent.clone());
        }
    }
    due
}
