use std::collections::HashSet;
use std::fmt;

use super::{Adornment, ProtocolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn new(severity: Severity, message: impl Into<String>) -> Self {
        Self {
            severity,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.severity, self.message)
    }
}

/// Checks structural invariants (errors) and reports suspicious but legal
/// conditions (warnings, informational notes). Output order is fixed:
/// protocol-level errors, per-message errors, then warnings, then notes.
pub fn validate_protocol(spec: &ProtocolSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if spec.roles.len() < 2 {
        out.push(Diagnostic::new(Severity::Error, "protocol declares fewer than two roles"));
    }
    if spec.messages.is_empty() {
        out.push(Diagnostic::new(Severity::Error, "protocol declares no messages"));
    }
    let keys = spec.keys();
    if keys.is_empty() {
        out.push(Diagnostic::new(Severity::Error, "protocol declares no key parameter"));
    }
    duplicates(spec.roles.iter().map(String::as_str), "role", &mut out);
    duplicates(spec.parameters.iter().map(|p| p.name.as_str()), "parameter", &mut out);
    duplicates(spec.messages.iter().map(|m| m.name.as_str()), "message", &mut out);

    for m in &spec.messages {
        for role in [&m.sender, &m.receiver] {
            if !spec.has_role(role) {
                out.push(Diagnostic::new(
                    Severity::Error,
                    format!("message {} names undeclared role {role}", m.name),
                ));
            }
        }
        if m.sender == m.receiver {
            out.push(Diagnostic::new(
                Severity::Error,
                format!("message {} has the same sender and receiver {}", m.name, m.sender),
            ));
        }
        if m.parameters.is_empty() {
            out.push(Diagnostic::new(
                Severity::Error,
                format!("message {} has no parameters", m.name),
            ));
        }
        for key in &keys {
            if m.parameter(key).is_none() {
                out.push(Diagnostic::new(
                    Severity::Error,
                    format!("message {} missing key {key}", m.name),
                ));
            }
        }
        let mut seen = HashSet::new();
        for p in &m.parameters {
            if !seen.insert(p.name.as_str()) {
                out.push(Diagnostic::new(
                    Severity::Error,
                    format!("message {} repeats parameter {}", m.name, p.name),
                ));
            }
            if !spec.parameters.iter().any(|q| q.name == p.name) {
                out.push(Diagnostic::new(
                    Severity::Error,
                    format!("message {} uses undeclared parameter {}", m.name, p.name),
                ));
            }
        }
    }

    for p in &spec.parameters {
        if p.adornment != Adornment::Out {
            continue;
        }
        if !spec
            .messages
            .iter()
            .any(|m| m.adornment_of(&p.name) == Some(Adornment::Out))
        {
            out.push(Diagnostic::new(
                Severity::Warning,
                format!("{} never adorned out in any message", p.name),
            ));
        }
    }

    for p in &spec.parameters {
        let sources: Vec<&str> = spec
            .messages
            .iter()
            .filter(|m| m.adornment_of(&p.name) == Some(Adornment::Out))
            .map(|m| m.name.as_str())
            .collect();
        if sources.len() >= 2 {
            out.push(Diagnostic::new(
                Severity::Info,
                format!(
                    "{} adorned out in {}: potential safety conflict",
                    p.name,
                    sources.join(" and ")
                ),
            ));
        }
    }

    out
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>, kind: &str, out: &mut Vec<Diagnostic>) {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name) {
            out.push(Diagnostic::new(Severity::Error, format!("duplicate {kind} {name}")));
        }
    }
}
