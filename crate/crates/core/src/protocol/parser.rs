use std::collections::HashSet;

use super::lexer::{tokenize, Token, TokenKind};
use super::{Adornment, MessageSchema, ParameterDecl, ParseError, ProtocolSpec};

/// Parses protocol source text.
///
/// Both keyword spellings (`role`/`roles`, `parameter`/`parameters`) and both
/// arrows (`->`, `↦`) are accepted. A parameter marked `key` anywhere, in the
/// protocol declaration or in any message, is a key everywhere.
pub fn parse_protocol(source: &str) -> Result<ProtocolSpec, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let raw = parser.protocol()?;
    raw.resolve()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

struct RawParam {
    decl: ParameterDecl,
    line: usize,
    column: usize,
}

struct RawMessage {
    sender: String,
    receiver: String,
    name: String,
    parameters: Vec<RawParam>,
}

struct RawProtocol {
    name: String,
    roles: Vec<String>,
    parameters: Vec<RawParam>,
    messages: Vec<RawMessage>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error_at(tok: &Token, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: tok.line,
            column: tok.column,
            message: message.into(),
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token, ParseError> {
        let tok = self.next();
        if tok.kind == kind {
            Ok(tok)
        } else {
            Err(Self::error_at(
                &tok,
                format!("expected {what}, found {}", tok.describe()),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        let tok = self.next();
        match &tok.kind {
            TokenKind::Ident(s) => Ok((s.clone(), tok)),
            _ => Err(Self::error_at(
                &tok,
                format!("expected {what}, found {}", tok.describe()),
            )),
        }
    }

    fn at_keyword(&self, words: &[&str]) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if words.contains(&s.as_str()))
    }

    fn keyword(&mut self, words: &[&str]) -> Result<(), ParseError> {
        if self.at_keyword(words) {
            self.next();
            Ok(())
        } else {
            let tok = self.peek().clone();
            Err(Self::error_at(
                &tok,
                format!("expected `{}`, found {}", words.join("` or `"), tok.describe()),
            ))
        }
    }

    fn protocol(&mut self) -> Result<RawProtocol, ParseError> {
        let mut words = Vec::new();
        while let TokenKind::Ident(w) = &self.peek().kind {
            words.push(w.clone());
            self.next();
        }
        if words.is_empty() {
            let tok = self.peek().clone();
            return Err(Self::error_at(&tok, "expected protocol name"));
        }
        self.expect(TokenKind::LBrace, "`{`")?;

        self.keyword(&["role", "roles"])?;
        let mut roles = vec![self.ident("role name")?.0];
        while self.peek().kind == TokenKind::Comma {
            self.next();
            roles.push(self.ident("role name")?.0);
        }

        self.keyword(&["parameter", "parameters"])?;
        let parameters = self.parameter_list()?;

        let mut messages = Vec::new();
        while self.peek().kind != TokenKind::RBrace {
            messages.push(self.message()?);
        }
        self.next();
        let tok = self.peek().clone();
        if tok.kind != TokenKind::Eof {
            return Err(Self::error_at(
                &tok,
                format!("expected end of input, found {}", tok.describe()),
            ));
        }
        if messages.is_empty() {
            return Err(Self::error_at(&tok, "protocol declares no messages"));
        }

        Ok(RawProtocol {
            name: words.join(" "),
            roles,
            parameters,
            messages,
        })
    }

    fn parameter_list(&mut self) -> Result<Vec<RawParam>, ParseError> {
        let mut params = vec![self.parameter()?];
        while self.peek().kind == TokenKind::Comma {
            self.next();
            params.push(self.parameter()?);
        }
        Ok(params)
    }

    fn parameter(&mut self) -> Result<RawParam, ParseError> {
        let tok = self.next();
        let adornment = match &tok.kind {
            TokenKind::Ident(s) if s == "in" => Adornment::In,
            TokenKind::Ident(s) if s == "out" => Adornment::Out,
            TokenKind::Ident(s) if s == "nil" => Adornment::Nil,
            _ => {
                return Err(Self::error_at(
                    &tok,
                    format!(
                        "expected adornment `in`, `out` or `nil`, found {}",
                        tok.describe()
                    ),
                ))
            }
        };
        let (name, name_tok) = self.ident("parameter name")?;
        let is_key = if self.at_keyword(&["key"]) {
            self.next();
            true
        } else {
            false
        };
        Ok(RawParam {
            decl: ParameterDecl::new(name, adornment, is_key),
            line: name_tok.line,
            column: name_tok.column,
        })
    }

    fn message(&mut self) -> Result<RawMessage, ParseError> {
        let (sender, sender_tok) = self.ident("message sender")?;
        if self.peek().kind == TokenKind::LParen {
            return Err(ParseError::Unsupported {
                line: sender_tok.line,
                column: sender_tok.column,
                what: format!("protocol reference `{sender}(...)`; composition is not supported"),
            });
        }
        self.expect(TokenKind::Arrow, "`->` or `↦`")?;
        let (receiver, _) = self.ident("message receiver")?;
        self.expect(TokenKind::Colon, "`:`")?;
        let (name, _) = self.ident("message name")?;
        self.expect(TokenKind::LBracket, "`[`")?;
        let parameters = self.parameter_list()?;
        self.expect(TokenKind::RBracket, "`]`")?;
        Ok(RawMessage {
            sender,
            receiver,
            name,
            parameters,
        })
    }
}

impl RawProtocol {
    fn resolve(self) -> Result<ProtocolSpec, ParseError> {
        let mut seen = HashSet::new();
        for role in &self.roles {
            if !seen.insert(role.as_str()) {
                return Err(ParseError::DuplicateName {
                    kind: "role",
                    name: role.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for p in &self.parameters {
            if !seen.insert(p.decl.name.as_str()) {
                return Err(ParseError::DuplicateName {
                    kind: "parameter",
                    name: p.decl.name.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for m in &self.messages {
            if !seen.insert(m.name.as_str()) {
                return Err(ParseError::DuplicateName {
                    kind: "message",
                    name: m.name.clone(),
                });
            }
        }

        let mut keys: HashSet<String> = self
            .parameters
            .iter()
            .filter(|p| p.decl.is_key)
            .map(|p| p.decl.name.clone())
            .collect();

        for m in &self.messages {
            for role in [&m.sender, &m.receiver] {
                if !self.roles.contains(role) {
                    return Err(ParseError::UnknownRole {
                        role: role.clone(),
                        message: m.name.clone(),
                    });
                }
            }
            let mut seen = HashSet::new();
            for p in &m.parameters {
                if !seen.insert(p.decl.name.as_str()) {
                    return Err(ParseError::DuplicateName {
                        kind: "parameter",
                        name: format!("{}.{}", m.name, p.decl.name),
                    });
                }
                if !self.parameters.iter().any(|q| q.decl.name == p.decl.name) {
                    return Err(ParseError::Unsupported {
                        line: p.line,
                        column: p.column,
                        what: format!(
                            "private parameter `{}` in message {}; every message parameter must be declared by the protocol",
                            p.decl.name, m.name
                        ),
                    });
                }
                if p.decl.is_key {
                    keys.insert(p.decl.name.clone());
                }
            }
        }

        let mark = |p: RawParam| ParameterDecl {
            is_key: keys.contains(&p.decl.name),
            ..p.decl
        };
        Ok(ProtocolSpec {
            name: self.name,
            roles: self.roles,
            parameters: self.parameters.into_iter().map(mark).collect(),
            messages: self
                .messages
                .into_iter()
                .map(|m| MessageSchema {
                    name: m.name,
                    sender: m.sender,
                    receiver: m.receiver,
                    parameters: m.parameters.into_iter().map(mark).collect(),
                })
                .collect(),
        })
    }
}
