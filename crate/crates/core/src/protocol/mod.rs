//! Information protocol source language: types, parser, validator and printer.

mod format;
mod lexer;
mod parser;
mod validate;

use std::fmt;

use thiserror::Error;

pub use format::format_protocol;
pub use parser::parse_protocol;
pub use validate::{validate_protocol, Diagnostic, Severity};

/// Information adornment of a parameter within a message or protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Adornment {
    /// The binding must already be known to the sender.
    In,
    /// The binding must be unknown to the sender; sending creates it.
    Out,
    /// The binding must be unknown to the sender and is not created.
    Nil,
}

impl Adornment {
    pub fn keyword(self) -> &'static str {
        match self {
            Adornment::In => "in",
            Adornment::Out => "out",
            Adornment::Nil => "nil",
        }
    }
}

impl fmt::Display for Adornment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterDecl {
    pub name: String,
    pub adornment: Adornment,
    pub is_key: bool,
}

impl ParameterDecl {
    pub fn new(name: impl Into<String>, adornment: Adornment, is_key: bool) -> Self {
        Self {
            name: name.into(),
            adornment,
            is_key,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSchema {
    pub name: String,
    pub sender: String,
    pub receiver: String,
    pub parameters: Vec<ParameterDecl>,
}

impl MessageSchema {
    pub fn parameter(&self, name: &str) -> Option<&ParameterDecl> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn adornment_of(&self, name: &str) -> Option<Adornment> {
        self.parameter(name).map(|p| p.adornment)
    }

    /// Parameters the message carries a binding for (everything but `nil`).
    pub fn carried(&self) -> impl Iterator<Item = &ParameterDecl> {
        self.parameters
            .iter()
            .filter(|p| p.adornment != Adornment::Nil)
    }

    pub fn with_adornment(&self, adornment: Adornment) -> impl Iterator<Item = &ParameterDecl> {
        self.parameters
            .iter()
            .filter(move |p| p.adornment == adornment)
    }
}

/// A parsed information protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub name: String,
    pub roles: Vec<String>,
    pub parameters: Vec<ParameterDecl>,
    pub messages: Vec<MessageSchema>,
}

impl ProtocolSpec {
    pub fn message(&self, name: &str) -> Option<&MessageSchema> {
        self.messages.iter().find(|m| m.name == name)
    }

    pub fn message_index(&self, name: &str) -> Option<usize> {
        self.messages.iter().position(|m| m.name == name)
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }

    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    /// Key parameter names in protocol declaration order. Their bindings,
    /// in this order, identify an enactment.
    pub fn keys(&self) -> Vec<&str> {
        self.parameters
            .iter()
            .filter(|p| p.is_key)
            .map(|p| p.name.as_str())
            .collect()
    }

    pub fn is_key(&self, name: &str) -> bool {
        self.parameters.iter().any(|p| p.is_key && p.name == name)
    }

    /// Messages whose sender is `role`, in declaration order.
    pub fn sent_by<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a MessageSchema> + 'a {
        self.messages.iter().filter(move |m| m.sender == role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate {kind} `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("unknown role `{role}` in message {message}")]
    UnknownRole { role: String, message: String },
    #[error("unsupported at {line}:{column}: {what}")]
    Unsupported {
        line: usize,
        column: usize,
        what: String,
    },
}
