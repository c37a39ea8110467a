//! Recursive-descent parser for the datalog-style query DSL:
//!
//! ```text
//! Q(A,B,C) :- R1(A,B), R2(B,C)[C != 'c1'].
//! ```
//!
//! Identifiers are `[A-Za-z_][A-Za-z0-9_]*`; literals are single-quoted
//! (`''` escapes a quote) or bare numbers. `%` starts a line comment.
//! The head may be omitted (`Q :- ...`); when present it must list exactly
//! the body attributes.

use std::collections::BTreeSet;

use super::{Atom, CmpOp, ConjunctiveQuery, QueryError, Selection};

pub fn parse_query(text: &str) -> Result<ConjunctiveQuery, QueryError> {
    let mut p = Parser::new(text);
    let query = p.query()?;
    p.skip_ws();
    if let Some(c) = p.peek() {
        return Err(p.error(format!("unexpected {c:?} after end of query")));
    }
    Ok(query)
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    _src: &'a str,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
            _src: src,
        }
    }

    fn error(&self, message: impl Into<String>) -> QueryError {
        QueryError::Syntax {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '%' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        let end = self.pos + token.chars().count();
        if end <= self.chars.len() && self.chars[self.pos..end].iter().copied().eq(token.chars()) {
            for _ in 0..token.chars().count() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), QueryError> {
        if self.eat(token) {
            Ok(())
        } else {
            let found = match self.peek() {
                Some(c) => format!("{c:?}"),
                None => "end of input".to_owned(),
            };
            Err(self.error(format!("expected '{token}', found {found}")))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            Some(c) => return Err(self.error(format!("expected identifier, found {c:?}"))),
            None => return Err(self.error("expected identifier, found end of input")),
        }
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                out.push(c);
                self.bump();
            } else {
                break;
            }
        }
        Ok(out)
    }

    fn literal(&mut self) -> Result<String, QueryError> {
        self.skip_ws();
        match self.peek() {
            Some('\'') => {
                self.bump();
                let mut out = String::new();
                loop {
                    match self.bump() {
                        Some('\'') if self.peek() == Some('\'') => {
                            self.bump();
                            out.push('\'');
                        }
                        Some('\'') => return Ok(out),
                        Some(c) => out.push(c),
                        None => return Err(self.error("unterminated string literal")),
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == '-' => {
                let mut out = String::new();
                while let Some(c) = self.peek() {
                    if c.is_ascii_digit() || c == '-' || c == '.' {
                        out.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Ok(out)
            }
            Some(c) => Err(self.error(format!("expected literal, found {c:?}"))),
            None => Err(self.error("expected literal, found end of input")),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>, QueryError> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn query(&mut self) -> Result<ConjunctiveQuery, QueryError> {
        let name = self.ident()?;
        self.skip_ws();
        let head = if self.peek() == Some('(') {
            Some(self.ident_list()?)
        } else {
            None
        };
        self.expect(":-")?;
        let mut atoms = Vec::new();
        loop {
            atoms.push(self.atom()?);
            if self.eat(".") {
                break;
            }
            self.expect(",")?;
        }
        let query = ConjunctiveQuery::new(name, atoms)?;
        if let Some(head) = head {
            let head_set: BTreeSet<String> = head.iter().cloned().collect();
            let body = query.attributes();
            if head_set != body || head_set.len() != head.len() {
                return Err(QueryError::HeadMismatch {
                    head,
                    body: body.into_iter().collect(),
                });
            }
        }
        Ok(query)
    }

    fn atom(&mut self) -> Result<Atom, QueryError> {
        let relation = self.ident()?;
        let attrs = self.ident_list()?;
        if attrs.is_empty() {
            return Err(self.error(format!("atom {relation} has no attributes")));
        }
        let mut atom = Atom {
            relation,
            attrs,
            selections: Vec::new(),
        };
        if self.eat("[") {
            loop {
                let attr = self.ident()?;
                let op = if self.eat("!=") {
                    CmpOp::Ne
                } else if self.eat("=") {
                    CmpOp::Eq
                } else {
                    return Err(self.error("expected '=' or '!='"));
                };
                let literal = self.literal()?;
                atom.selections.push(Selection { attr, op, literal });
                if self.eat("]") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(atom)
    }
}
