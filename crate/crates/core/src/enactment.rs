//! Schema-level enactment semantics.
//!
//! A path is a sequence of emissions (`R!M`) and receptions (`R?M`) for a
//! single enactment. A role observes a parameter once it has emitted or
//! received a message carrying it; emission of `m` by its sender is enabled
//! when every `in` parameter of `m` is observed and no `out` or `nil`
//! parameter is. Receptions are enabled as soon as the message is emitted and
//! impose no order among themselves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::protocol::{Adornment, ProtocolSpec};

/// Largest protocol the bitset model handles.
pub const MAX_MESSAGES: usize = 32;
pub const MAX_PARAMETERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Emit,
    Receive,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub role: String,
    pub kind: EventKind,
    pub message: String,
}

impl Event {
    pub fn emit(role: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            kind: EventKind::Emit,
            message: message.into(),
        }
    }

    pub fn receive(role: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            kind: EventKind::Receive,
            message: message.into(),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = match self.kind {
            EventKind::Emit => '!',
            EventKind::Receive => '?',
        };
        write!(f, "{}{}{}", self.role, sep, self.message)
    }
}

impl FromStr for Event {
    type Err = EnactmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (idx, kind) = s
            .char_indices()
            .find_map(|(i, c)| match c {
                '!' => Some((i, EventKind::Emit)),
                '?' => Some((i, EventKind::Receive)),
                _ => None,
            })
            .ok_or_else(|| EnactmentError::Malformed(s.to_string()))?;
        let (role, message) = (&s[..idx], &s[idx + 1..]);
        if role.is_empty() || message.is_empty() {
            return Err(EnactmentError::Malformed(s.to_string()));
        }
        Ok(Event {
            role: role.to_string(),
            kind,
            message: message.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Path {
    events: Vec<Event>,
}

impl Path {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, event: &Event) -> bool {
        self.events.contains(event)
    }

    pub fn position(&self, event: &Event) -> Option<usize> {
        self.events.iter().position(|e| e == event)
    }
}

impl From<Vec<Event>> for Path {
    fn from(events: Vec<Event>) -> Self {
        Self { events }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Path {
    type Err = EnactmentError;

    /// Parses the transcript rendering `(B!Request, S?Request, ...)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| EnactmentError::Malformed(s.to_string()))?;
        if inner.trim().is_empty() {
            return Ok(Path::new());
        }
        inner
            .split(',')
            .map(Event::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map(Path::from)
    }
}

/// Per-role observations plus emitted and received messages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViewState {
    pub observed: BTreeMap<String, BTreeSet<String>>,
    pub emitted: BTreeSet<String>,
    pub received: BTreeSet<(String, String)>,
}

impl ViewState {
    pub fn observes(&self, role: &str, parameter: &str) -> bool {
        self.observed
            .get(role)
            .is_some_and(|ps| ps.contains(parameter))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnactmentError {
    #[error("invalid path at position {position}: {event} {reason}")]
    InvalidPath {
        position: usize,
        event: String,
        reason: String,
    },
    #[error("{0} is not enabled")]
    NotEnabled(String),
    #[error("malformed event or path `{0}`")]
    Malformed(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("protocol too large for the enactment model ({0})")]
    TooLarge(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStats {
    /// Number of distinct nonempty valid paths.
    pub paths: u64,
    pub longest: usize,
    pub maximal_paths: Vec<Path>,
}

// ---------------------------------------------------------------------------
// Bitset model shared with the verifier.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct EventId {
    pub msg: u8,
    pub receive: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct MsgInfo {
    pub sender: usize,
    pub receiver: usize,
    pub ins: u64,
    pub outs: u64,
    pub nils: u64,
}

impl MsgInfo {
    pub fn carried(&self) -> u64 {
        self.ins | self.outs
    }
}

pub(crate) struct Model<'a> {
    pub spec: &'a ProtocolSpec,
    pub msgs: Vec<MsgInfo>,
    pub public: u64,
}

impl<'a> Model<'a> {
    pub fn new(spec: &'a ProtocolSpec) -> Result<Self, EnactmentError> {
        if spec.messages.len() > MAX_MESSAGES {
            return Err(EnactmentError::TooLarge(format!(
                "{} messages, limit {MAX_MESSAGES}",
                spec.messages.len()
            )));
        }
        if spec.parameters.len() > MAX_PARAMETERS {
            return Err(EnactmentError::TooLarge(format!(
                "{} parameters, limit {MAX_PARAMETERS}",
                spec.parameters.len()
            )));
        }
        for m in &spec.messages {
            for role in [&m.sender, &m.receiver] {
                if !spec.has_role(role) {
                    return Err(EnactmentError::InvalidProtocol(format!(
                        "message {} names undeclared role {role}",
                        m.name
                    )));
                }
            }
        }
        let bit = |name: &str| {
            spec.parameters
                .iter()
                .position(|p| p.name == name)
                .map_or(0, |i| 1u64 << i)
        };
        let role = |name: &str| spec.role_index(name).expect("checked above");
        let msgs = spec
            .messages
            .iter()
            .map(|m| {
                let mask = |a: Adornment| {
                    m.with_adornment(a)
                        .fold(0u64, |acc, p| acc | bit(&p.name))
                };
                MsgInfo {
                    sender: role(&m.sender),
                    receiver: role(&m.receiver),
                    ins: mask(Adornment::In),
                    outs: mask(Adornment::Out),
                    nils: mask(Adornment::Nil),
                }
            })
            .collect();
        let public = (0..spec.parameters.len()).fold(0u64, |acc, i| acc | 1 << i);
        Ok(Self { spec, msgs, public })
    }

    pub fn initial(&self) -> State {
        State {
            emitted: 0,
            received: 0,
            observed: vec![0; self.spec.roles.len()],
        }
    }

    pub fn event(&self, id: EventId) -> Event {
        let m = &self.spec.messages[id.msg as usize];
        if id.receive {
            Event::receive(&m.receiver, &m.name)
        } else {
            Event::emit(&m.sender, &m.name)
        }
    }

    pub fn event_id(&self, event: &Event) -> Option<EventId> {
        let msg = self.spec.message_index(&event.message)?;
        let m = &self.spec.messages[msg];
        let (role, receive) = match event.kind {
            EventKind::Emit => (&m.sender, false),
            EventKind::Receive => (&m.receiver, true),
        };
        (role == &event.role).then_some(EventId {
            msg: msg as u8,
            receive,
        })
    }

    pub fn path(&self, ids: &[EventId]) -> Path {
        Path::from(ids.iter().map(|&id| self.event(id)).collect::<Vec<_>>())
    }

    /// Replays `path`, checking every step.
    pub fn replay(&self, path: &Path) -> Result<(State, Vec<EventId>), EnactmentError> {
        let mut state = self.initial();
        let mut ids = Vec::with_capacity(path.len());
        for (position, event) in path.events().iter().enumerate() {
            let invalid = |reason: &str| EnactmentError::InvalidPath {
                position,
                event: event.to_string(),
                reason: reason.to_string(),
            };
            let id = self
                .event_id(event)
                .ok_or_else(|| invalid("does not name a message of this protocol with that role"))?;
            if !state.is_enabled(self, id) {
                return Err(invalid(if id.receive && !state.is_emitted(id.msg) {
                    "receives a message that was not emitted"
                } else if state.contains(id) {
                    "occurs twice"
                } else {
                    "is not enabled"
                }));
            }
            state.apply(self, id);
            ids.push(id);
        }
        Ok((state, ids))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct State {
    pub emitted: u32,
    pub received: u32,
    pub observed: Vec<u64>,
}

impl State {
    pub fn key(&self) -> u64 {
        self.emitted as u64 | (self.received as u64) << 32
    }

    pub fn is_emitted(&self, msg: u8) -> bool {
        self.emitted & 1 << msg != 0
    }

    pub fn contains(&self, id: EventId) -> bool {
        let set = if id.receive { self.received } else { self.emitted };
        set & 1 << id.msg != 0
    }

    pub fn is_enabled(&self, model: &Model<'_>, id: EventId) -> bool {
        if self.contains(id) {
            return false;
        }
        if id.receive {
            return self.is_emitted(id.msg);
        }
        let m = &model.msgs[id.msg as usize];
        let seen = self.observed[m.sender];
        seen & m.ins == m.ins && seen & (m.outs | m.nils) == 0
    }

    /// Enabled events in exploration order: emissions before receptions, each
    /// in message declaration order.
    pub fn enabled(&self, model: &Model<'_>) -> Vec<EventId> {
        let n = model.msgs.len() as u8;
        let emits = (0..n).map(|msg| EventId { msg, receive: false });
        let receives = (0..n).map(|msg| EventId { msg, receive: true });
        emits
            .chain(receives)
            .filter(|&id| self.is_enabled(model, id))
            .collect()
    }

    pub fn apply(&mut self, model: &Model<'_>, id: EventId) {
        let m = &model.msgs[id.msg as usize];
        if id.receive {
            self.received |= 1 << id.msg;
            self.observed[m.receiver] |= m.carried();
        } else {
            self.emitted |= 1 << id.msg;
            self.observed[m.sender] |= m.carried();
        }
    }

    pub fn all_observed(&self) -> u64 {
        self.observed.iter().fold(0, |acc, o| acc | o)
    }

    pub fn is_complete(&self, model: &Model<'_>) -> bool {
        self.all_observed() & model.public == model.public
    }
}

// ---------------------------------------------------------------------------
// Public operations.

/// Events enabled after `path`, emissions first, in message declaration order.
pub fn enabled_events(spec: &ProtocolSpec, path: &Path) -> Result<Vec<Event>, EnactmentError> {
    let model = Model::new(spec)?;
    let (state, _) = model.replay(path)?;
    Ok(state
        .enabled(&model)
        .into_iter()
        .map(|id| model.event(id))
        .collect())
}

pub fn extend(spec: &ProtocolSpec, path: &Path, event: Event) -> Result<Path, EnactmentError> {
    let model = Model::new(spec)?;
    let (state, _) = model.replay(path)?;
    match model.event_id(&event) {
        Some(id) if state.is_enabled(&model, id) => {
            let mut events = path.events().to_vec();
            events.push(event);
            Ok(Path::from(events))
        }
        _ => Err(EnactmentError::NotEnabled(event.to_string())),
    }
}

pub fn view_state(spec: &ProtocolSpec, path: &Path) -> Result<ViewState, EnactmentError> {
    let model = Model::new(spec)?;
    model.replay(path)?;
    let mut view = ViewState::default();
    for role in &spec.roles {
        view.observed.insert(role.clone(), BTreeSet::new());
    }
    for event in path.events() {
        let m = spec.message(&event.message).expect("replayed");
        view.observed
            .get_mut(&event.role)
            .expect("replayed")
            .extend(m.carried().map(|p| p.name.clone()));
        match event.kind {
            EventKind::Emit => {
                view.emitted.insert(m.name.clone());
            }
            EventKind::Receive => {
                view.received.insert((event.role.clone(), m.name.clone()));
            }
        }
    }
    Ok(view)
}

/// True when every public parameter is observed by some role.
pub fn is_complete(spec: &ProtocolSpec, path: &Path) -> Result<bool, EnactmentError> {
    let model = Model::new(spec)?;
    let (state, _) = model.replay(path)?;
    Ok(state.is_complete(&model))
}

pub fn is_maximal(spec: &ProtocolSpec, path: &Path) -> Result<bool, EnactmentError> {
    Ok(enabled_events(spec, path)?.is_empty())
}

/// Exhaustive depth-first enumeration of every valid path.
pub fn enumerate_all_paths(spec: &ProtocolSpec) -> Result<PathStats, EnactmentError> {
    let model = Model::new(spec)?;
    let mut stats = PathStats {
        paths: 0,
        longest: 0,
        maximal_paths: Vec::new(),
    };
    walk(&model, |ids, _, maximal| {
        if !ids.is_empty() {
            stats.paths += 1;
            stats.longest = stats.longest.max(ids.len());
        }
        if maximal {
            stats.maximal_paths.push(model.path(ids));
        }
    });
    Ok(stats)
}

/// Visits every path (including the empty one) depth-first, reporting whether
/// it is maximal.
pub(crate) fn walk(model: &Model<'_>, mut visit: impl FnMut(&[EventId], &State, bool)) {
    fn go(
        model: &Model<'_>,
        state: &State,
        ids: &mut Vec<EventId>,
        visit: &mut dyn FnMut(&[EventId], &State, bool),
    ) {
        let enabled = state.enabled(model);
        visit(ids, state, enabled.is_empty());
        for id in enabled {
            let mut next = state.clone();
            next.apply(model, id);
            ids.push(id);
            go(model, &next, ids, visit);
            ids.pop();
        }
    }
    go(model, &model.initial(), &mut Vec::new(), &mut visit);
}
