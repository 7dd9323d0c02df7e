use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Ident(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Pipe,
    Comma,
    Colon,
    Arrow,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

impl Token {
    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::LBrace => "`{`".into(),
            TokenKind::RBrace => "`}`".into(),
            TokenKind::LBracket => "`[`".into(),
            TokenKind::RBracket => "`]`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Pipe => "`|`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Colon => "`:`".into(),
            TokenKind::Arrow => "arrow".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub(crate) fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = source.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, column);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };

        let single = match c {
            '{' => Some(TokenKind::LBrace),
            '}' => Some(TokenKind::RBrace),
            '[' => Some(TokenKind::LBracket),
            ']' => Some(TokenKind::RBracket),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            '|' => Some(TokenKind::Pipe),
            ',' => Some(TokenKind::Comma),
            ':' => Some(TokenKind::Colon),
            '↦' => Some(TokenKind::Arrow),
            _ => None,
        };
        if let Some(kind) = single {
            bump(&mut chars);
            tokens.push(Token {
                kind,
                line: tl,
                column: tc,
            });
            continue;
        }

        if c.is_whitespace() {
            bump(&mut chars);
        } else if c == '-' {
            bump(&mut chars);
            if chars.peek() == Some(&'>') {
                bump(&mut chars);
                tokens.push(Token {
                    kind: TokenKind::Arrow,
                    line: tl,
                    column: tc,
                });
            } else {
                return Err(ParseError::Syntax {
                    line: tl,
                    column: tc,
                    message: "expected `->`".into(),
                });
            }
        } else if c == '/' {
            bump(&mut chars);
            if chars.peek() != Some(&'/') {
                return Err(ParseError::Syntax {
                    line: tl,
                    column: tc,
                    message: "unexpected `/`".into(),
                });
            }
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump(&mut chars);
            }
        } else if is_ident_char(c) {
            let mut ident = String::new();
            while let Some(&c) = chars.peek() {
                if !is_ident_char(c) {
                    break;
                }
                ident.push(c);
                bump(&mut chars);
            }
            tokens.push(Token {
                kind: TokenKind::Ident(ident),
                line: tl,
                column: tc,
            });
        } else {
            return Err(ParseError::Syntax {
                line: tl,
                column: tc,
                message: format!("unexpected character `{c}`"),
            });
        }
    }

    tokens.push(Token {
        kind: TokenKind::Eof,
        line,
        column,
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn both_arrow_spellings() {
        assert_eq!(kinds("->"), vec![TokenKind::Arrow, TokenKind::Eof]);
        assert_eq!(kinds("↦"), vec![TokenKind::Arrow, TokenKind::Eof]);
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("P {\n  roles").unwrap();
        assert_eq!((toks[2].line, toks[2].column), (2, 3));
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(
            kinds("a // b c\nd"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Ident("d".into()),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn stray_character_is_reported() {
        let err = tokenize("P { $ }").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 1, column: 5, .. }));
    }
}
