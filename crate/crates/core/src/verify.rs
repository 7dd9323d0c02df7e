//! Safety and liveness checking over canonical enactments.
//!
//! The search explores paths of a single enactment. At each state, if some
//! enabled event is invisible (it commutes with everything that can happen
//! before it), only that event is taken; otherwise every enabled event is a
//! branch. States are memoized by their event set, which fully determines
//! enablement and observations.
//!
//! An emission is visible when its message
//! * has an `out` parameter that is `out` in another message (a conflict), or
//! * has a `nil` parameter, or an `out` parameter that is `nil` in another
//!   message of the same sender.
//!
//! A reception is visible when it makes its role newly observe a parameter
//! that is `out` or `nil` in some message that role sends.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use serde::ser::{Serialize, SerializeMap, Serializer};
use thiserror::Error;

use crate::enactment::{enumerate_all_paths, EnactmentError, Event, EventId, Model, Path, PathStats, State};
use crate::protocol::{validate_protocol, Diagnostic, ProtocolSpec};

pub const LIVENESS_FAILURE: &str = "Found path that does not extend to completion";
pub const SAFETY_FAILURE: &str = "Found parameter with multiple sources in a path";

#[derive(Debug, Clone, Error)]
pub enum VerifyError {
    #[error("protocol has validation errors: {}", render_diagnostics(.0))]
    InvalidProtocol(Vec<Diagnostic>),
    #[error(transparent)]
    Model(#[from] EnactmentError),
}

fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Safety,
    Liveness,
}

impl Property {
    pub fn key(self) -> &'static str {
        match self {
            Property::Safety => "safe",
            Property::Liveness => "live",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Visible,
    Invisible,
}

/// Parameters with several sources, and the per-event visibility they induce.
#[derive(Debug, Clone)]
pub struct ConflictRelation {
    conflicted: u64,
    /// Per message: visible whenever emitted.
    visible_emit: Vec<bool>,
    /// Per role: parameters whose observation can disable one of its emissions.
    guarded: Vec<u64>,
    names: Vec<String>,
}

impl ConflictRelation {
    pub fn new(spec: &ProtocolSpec) -> Result<Self, EnactmentError> {
        let model = Model::new(spec)?;
        Ok(Self::from_model(&model))
    }

    pub(crate) fn from_model(model: &Model<'_>) -> Self {
        let spec = model.spec;
        let mut seen_out = 0u64;
        let mut conflicted = 0u64;
        for m in &model.msgs {
            conflicted |= seen_out & m.outs;
            seen_out |= m.outs;
        }
        let mut guarded = vec![0u64; spec.roles.len()];
        for m in &model.msgs {
            guarded[m.sender] |= m.outs | m.nils;
        }
        let visible_emit = model
            .msgs
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let sibling_nils = model
                    .msgs
                    .iter()
                    .enumerate()
                    .filter(|&(j, o)| j != i && o.sender == m.sender)
                    .fold(0u64, |acc, (_, o)| acc | o.nils);
                m.outs & conflicted != 0 || m.nils != 0 || m.outs & sibling_nils != 0
            })
            .collect();
        Self {
            conflicted,
            visible_emit,
            guarded,
            names: spec.parameters.iter().map(|p| p.name.clone()).collect(),
        }
    }

    /// Parameters adorned `out` in at least two messages, in declaration order.
    pub fn conflicted_parameters(&self) -> Vec<&str> {
        self.names
            .iter()
            .enumerate()
            .filter(|(i, _)| self.conflicted & 1 << i != 0)
            .map(|(_, n)| n.as_str())
            .collect()
    }

    pub fn is_conflicted(&self, parameter: &str) -> bool {
        self.conflicted_parameters().contains(&parameter)
    }

    /// Classifies `event` as it would occur right after `path`.
    pub fn classify(
        &self,
        spec: &ProtocolSpec,
        path: &Path,
        event: &Event,
    ) -> Result<Visibility, EnactmentError> {
        let model = Model::new(spec)?;
        let (state, _) = model.replay(path)?;
        let id = model
            .event_id(event)
            .ok_or_else(|| EnactmentError::NotEnabled(event.to_string()))?;
        Ok(if self.is_visible(&model, &state, id) {
            Visibility::Visible
        } else {
            Visibility::Invisible
        })
    }

    pub(crate) fn is_visible(&self, model: &Model<'_>, state: &State, id: EventId) -> bool {
        let m = &model.msgs[id.msg as usize];
        if id.receive {
            let fresh = m.carried() & !state.observed[m.receiver];
            fresh & self.guarded[m.receiver] != 0
        } else {
            self.visible_emit[id.msg as usize]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationResult {
    /// Distinct memoized states, including the empty one.
    pub states_checked: usize,
    pub canonical_maximal_paths: Vec<Path>,
    /// Incomplete canonical maximal paths, in discovery order.
    pub incomplete_paths: Vec<Path>,
    /// First state found holding two sources for a parameter.
    pub safety_violation: Option<(String, Path)>,
}

/// Reduced depth-first search over canonical enactments.
pub fn canonical_explore(spec: &ProtocolSpec) -> Result<ExplorationResult, VerifyError> {
    let diags = validate_protocol(spec);
    if diags.iter().any(Diagnostic::is_error) {
        return Err(VerifyError::InvalidProtocol(
            diags.into_iter().filter(Diagnostic::is_error).collect(),
        ));
    }
    let model = Model::new(spec)?;
    let conflicts = ConflictRelation::from_model(&model);
    let mut search = Search {
        model: &model,
        conflicts: &conflicts,
        visited: HashSet::new(),
        maximal: Vec::new(),
        incomplete: Vec::new(),
        violation: None,
    };
    let mut ids = Vec::new();
    search.visit(model.initial(), &mut ids);

    Ok(ExplorationResult {
        states_checked: search.visited.len(),
        canonical_maximal_paths: search.maximal.iter().map(|p| model.path(p)).collect(),
        incomplete_paths: search.incomplete.iter().map(|p| model.path(p)).collect(),
        safety_violation: search
            .violation
            .map(|(param, ids)| (spec.parameters[param].name.clone(), model.path(&ids))),
    })
}

struct Search<'m, 'a> {
    model: &'m Model<'a>,
    conflicts: &'m ConflictRelation,
    visited: HashSet<u64>,
    maximal: Vec<Vec<EventId>>,
    incomplete: Vec<Vec<EventId>>,
    violation: Option<(usize, Vec<EventId>)>,
}

impl Search<'_, '_> {
    fn visit(&mut self, state: State, ids: &mut Vec<EventId>) {
        if !self.visited.insert(state.key()) {
            return;
        }
        if self.violation.is_none() {
            if let Some(param) = double_source(self.model, &state) {
                self.violation = Some((param, ids.clone()));
            }
        }

        let enabled = state.enabled(self.model);
        if enabled.is_empty() {
            if !state.is_complete(self.model) {
                self.incomplete.push(ids.clone());
            }
            self.maximal.push(ids.clone());
            return;
        }

        let branches = match self.pick_invisible(&state, &enabled, ids) {
            Some(id) => vec![id],
            None => enabled,
        };
        for id in branches {
            let mut next = state.clone();
            next.apply(self.model, id);
            ids.push(id);
            self.visit(next, ids);
            ids.pop();
        }
    }

    /// Highest-priority invisible event: emissions in declaration order, then
    /// receptions of the most recently emitted message.
    fn pick_invisible(&self, state: &State, enabled: &[EventId], ids: &[EventId]) -> Option<EventId> {
        let invisible = |id: &&EventId| !self.conflicts.is_visible(self.model, state, **id);
        if let Some(id) = enabled.iter().filter(|id| !id.receive).find(invisible) {
            return Some(*id);
        }
        let emitted_at = |msg: u8| {
            ids.iter()
                .position(|e| !e.receive && e.msg == msg)
                .unwrap_or(0)
        };
        enabled
            .iter()
            .filter(|id| id.receive)
            .filter(invisible)
            .max_by_key(|id| emitted_at(id.msg))
            .copied()
    }
}

/// Index of a parameter that two emitted messages both adorn `out`.
fn double_source(model: &Model<'_>, state: &State) -> Option<usize> {
    let mut seen = 0u64;
    for (i, m) in model.msgs.iter().enumerate() {
        if state.emitted & 1 << i == 0 {
            continue;
        }
        let clash = seen & m.outs;
        if clash != 0 {
            return Some(clash.trailing_zeros() as usize);
        }
        seen |= m.outs;
    }
    None
}

/// Outcome of a safety or liveness query.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub property: Property,
    pub holds: bool,
    pub reason: Option<String>,
    pub counterexample_path: Option<Path>,
    pub offending_parameter: Option<String>,
    pub checked: usize,
    pub maximal_paths: usize,
    pub elapsed: Duration,
}

impl Verdict {
    /// Single-line rendering in the `bspl` transcript style.
    pub fn transcript(&self) -> String {
        let mut out = format!(
            "{{'{}': {}",
            self.property.key(),
            if self.holds { "True" } else { "False" }
        );
        if let Some(reason) = &self.reason {
            let _ = write!(out, ", 'reason': '{reason}'");
        }
        if let Some(path) = &self.counterexample_path {
            let _ = write!(out, ", 'path': {path}");
        }
        if let Some(param) = &self.offending_parameter {
            let _ = write!(out, ", 'parameter': '{param}'");
        }
        let _ = write!(
            out,
            ", 'checked': {}, 'maximal paths': {}, 'elapsed': {}}}",
            self.checked,
            self.maximal_paths,
            self.elapsed.as_secs_f64()
        );
        out
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.transcript())
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry(self.property.key(), &self.holds)?;
        if let Some(reason) = &self.reason {
            map.serialize_entry("reason", reason)?;
        }
        if let Some(path) = &self.counterexample_path {
            map.serialize_entry("path", &path.to_string())?;
        }
        if let Some(param) = &self.offending_parameter {
            map.serialize_entry("parameter", param)?;
        }
        map.serialize_entry("checked", &self.checked)?;
        map.serialize_entry("maximal paths", &self.maximal_paths)?;
        map.serialize_entry("elapsed", &self.elapsed.as_secs_f64())?;
        map.end()
    }
}

/// Live iff every canonical maximal path is complete. The counterexample is
/// the shortest incomplete canonical maximal path.
pub fn check_liveness(spec: &ProtocolSpec) -> Result<Verdict, VerifyError> {
    let start = Instant::now();
    let result = canonical_explore(spec)?;
    // Shortest incomplete path, earliest discovered among equals.
    let counterexample = result
        .incomplete_paths
        .iter()
        .min_by_key(|p| p.len())
        .cloned();
    Ok(Verdict {
        property: Property::Liveness,
        holds: counterexample.is_none(),
        reason: counterexample.as_ref().map(|_| LIVENESS_FAILURE.to_string()),
        counterexample_path: counterexample,
        offending_parameter: None,
        checked: result.states_checked,
        maximal_paths: result.canonical_maximal_paths.len(),
        elapsed: start.elapsed(),
    })
}

/// Safe iff no reachable canonical state has two sources for a parameter.
pub fn check_safety(spec: &ProtocolSpec) -> Result<Verdict, VerifyError> {
    let start = Instant::now();
    let result = canonical_explore(spec)?;
    let model = Model::new(spec)?;
    let no_conflicts = ConflictRelation::from_model(&model).conflicted == 0;
    debug_assert!(
        !no_conflicts || result.safety_violation.is_none(),
        "fast path disagrees with search"
    );
    let violation = if no_conflicts {
        None
    } else {
        result.safety_violation
    };
    let (offending_parameter, counterexample_path) = match violation {
        Some((param, path)) => (Some(param), Some(path)),
        None => (None, None),
    };
    Ok(Verdict {
        property: Property::Safety,
        holds: offending_parameter.is_none(),
        reason: offending_parameter.as_ref().map(|_| SAFETY_FAILURE.to_string()),
        counterexample_path,
        offending_parameter,
        checked: result.states_checked,
        maximal_paths: result.canonical_maximal_paths.len(),
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllPathsReport {
    pub stats: PathStats,
    pub elapsed: Duration,
}

impl AllPathsReport {
    pub fn summary(&self) -> String {
        format!(
            "{} paths, longest path: {}, maximal paths: {}, elapsed: {}",
            self.stats.paths,
            self.stats.longest,
            self.stats.maximal_paths.len(),
            self.elapsed.as_secs_f64()
        )
    }

    pub fn render(&self) -> String {
        let mut out = self.summary();
        for path in &self.stats.maximal_paths {
            out.push('\n');
            out.push_str(&path.to_string());
        }
        out
    }
}

impl Serialize for AllPathsReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let paths: Vec<String> = self.stats.maximal_paths.iter().map(ToString::to_string).collect();
        let mut map = serializer.serialize_map(Some(5))?;
        map.serialize_entry("paths", &self.stats.paths)?;
        map.serialize_entry("longest path", &self.stats.longest)?;
        map.serialize_entry("maximal paths", &paths.len())?;
        map.serialize_entry("elapsed", &self.elapsed.as_secs_f64())?;
        map.serialize_entry("paths list", &paths)?;
        map.end()
    }
}

/// Full enumeration without reduction.
pub fn all_paths_report(spec: &ProtocolSpec) -> Result<AllPathsReport, VerifyError> {
    let start = Instant::now();
    let stats = enumerate_all_paths(spec)?;
    Ok(AllPathsReport {
        stats,
        elapsed: start.elapsed(),
    })
}
