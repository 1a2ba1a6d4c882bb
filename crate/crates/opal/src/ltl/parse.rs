//! Surface syntax: `F φ` (eventually), `G φ` (always), `X φ` (next),
//! `φ U ψ` (until), `&`, `|`, `!`, parentheses, and atom literals such as
//! `Visited(r3)` or bare `ready` (zero-arity shorthand). Operator precedence:
//! unary > U > & > |. Negation is pushed through Boolean connectives; a
//! negation landing on a temporal operator is not co-safe.

use crate::relational::{Atom, ObjectId};

use super::{Formula, LtlError};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Atom(Atom),
    LParen,
    RParen,
    And,
    Or,
    Not,
    Eventually,
    Always,
    Next,
    Until,
    True,
    False,
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    tokens: Vec<(usize, Token)>,
}

impl<'a> Lexer<'a> {
    fn run(text: &'a str) -> Result<Vec<(usize, Token)>, LtlError> {
        let mut lx = Lexer { text, pos: 0, tokens: Vec::new() };
        lx.lex()?;
        Ok(lx.tokens)
    }

    fn lex(&mut self) -> Result<(), LtlError> {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() {
            let start = self.pos;
            let c = bytes[self.pos] as char;
            match c {
                ' ' | '\t' | '\n' | '\r' => self.pos += 1,
                '(' => {
                    self.tokens.push((start, Token::LParen));
                    self.pos += 1;
                }
                ')' => {
                    self.tokens.push((start, Token::RParen));
                    self.pos += 1;
                }
                '&' => {
                    self.tokens.push((start, Token::And));
                    self.pos += 1;
                }
                '|' => {
                    self.tokens.push((start, Token::Or));
                    self.pos += 1;
                }
                '!' => {
                    self.tokens.push((start, Token::Not));
                    self.pos += 1;
                }
                c if c.is_alphanumeric() || c == '_' => {
                    let ident = self.take_ident();
                    let tok = match ident.as_str() {
                        "F" => Token::Eventually,
                        "G" => Token::Always,
                        "X" => Token::Next,
                        "U" => Token::Until,
                        "true" => Token::True,
                        "false" => Token::False,
                        _ => {
                            if self.peek_char() == Some('(') {
                                let atom = self.take_atom(start, ident)?;
                                Token::Atom(atom)
                            } else {
                                Token::Ident(ident)
                            }
                        }
                    };
                    self.tokens.push((start, tok));
                }
                other => {
                    return Err(LtlError::Parse {
                        pos: start,
                        msg: format!("unexpected character {other:?}"),
                    })
                }
            }
        }
        Ok(())
    }

    fn peek_char(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn take_ident(&mut self) -> String {
        let start = self.pos;
        while self
            .peek_char()
            .map(|c| c.is_alphanumeric() || c == '_' || c == '-')
            .unwrap_or(false)
        {
            self.pos += self.peek_char().unwrap().len_utf8();
        }
        self.text[start..self.pos].to_string()
    }

    /// Parses the `(arg, ...)` suffix of a predicate literal.
    fn take_atom(&mut self, start: usize, name: String) -> Result<Atom, LtlError> {
        debug_assert_eq!(self.peek_char(), Some('('));
        self.pos += 1;
        let mut args = Vec::new();
        loop {
            while matches!(self.peek_char(), Some(c) if c.is_whitespace()) {
                self.pos += 1;
            }
            match self.peek_char() {
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some(',') => {
                    self.pos += 1;
                }
                Some(c) if c.is_alphanumeric() || c == '_' => {
                    args.push(ObjectId::new(self.take_ident()));
                }
                _ => {
                    return Err(LtlError::Parse {
                        pos: self.pos,
                        msg: format!("unterminated argument list for {name}"),
                    })
                }
            }
        }
        let _ = start;
        Ok(Atom::new(name, args))
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.cursor).map(|(p, _)| *p).unwrap_or(usize::MAX)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.cursor).map(|(_, t)| t.clone());
        self.cursor += 1;
        t
    }

    fn parse_or(&mut self) -> Result<Formula, LtlError> {
        let mut parts = vec![self.parse_and()?];
        while self.peek() == Some(&Token::Or) {
            self.bump();
            parts.push(self.parse_and()?);
        }
        Ok(Formula::or(parts))
    }

    fn parse_and(&mut self) -> Result<Formula, LtlError> {
        let mut parts = vec![self.parse_until()?];
        while self.peek() == Some(&Token::And) {
            self.bump();
            parts.push(self.parse_until()?);
        }
        Ok(Formula::and(parts))
    }

    fn parse_until(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.parse_unary()?;
        if self.peek() == Some(&Token::Until) {
            self.bump();
            let rhs = self.parse_until()?;
            Ok(Formula::until(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_unary(&mut self) -> Result<Formula, LtlError> {
        let pos = self.pos();
        match self.bump() {
            Some(Token::Eventually) => Ok(Formula::eventually(self.parse_unary()?)),
            Some(Token::Always) => Ok(Formula::always(self.parse_unary()?)),
            Some(Token::Next) => Ok(Formula::next(self.parse_unary()?)),
            Some(Token::Not) => {
                let inner = self.parse_unary()?;
                negate(inner)
            }
            Some(Token::LParen) => {
                let inner = self.parse_or()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(LtlError::Parse { pos, msg: "unbalanced parenthesis".into() }),
                }
            }
            Some(Token::Atom(a)) => Ok(Formula::atom(a)),
            Some(Token::Ident(name)) => Ok(Formula::atom(Atom::nullary(name))),
            Some(Token::True) => Ok(Formula::True),
            Some(Token::False) => Ok(Formula::False),
            other => Err(LtlError::Parse {
                pos,
                msg: format!("expected a formula, found {other:?}"),
            }),
        }
    }
}

/// Pushes negation inward; reaching a temporal operator is a co-safety
/// violation (the result would need negation over temporal structure).
fn negate(phi: Formula) -> Result<Formula, LtlError> {
    match phi {
        Formula::True => Ok(Formula::False),
        Formula::False => Ok(Formula::True),
        Formula::Atom(a) => Ok(Formula::NotAtom(a)),
        Formula::NotAtom(a) => Ok(Formula::Atom(a)),
        Formula::And(parts) => {
            let negated: Result<Vec<_>, _> = parts.into_iter().map(negate).collect();
            Ok(Formula::or(negated?))
        }
        Formula::Or(parts) => {
            let negated: Result<Vec<_>, _> = parts.into_iter().map(negate).collect();
            Ok(Formula::and(negated?))
        }
        temporal => Err(LtlError::NotCoSafe(format!(
            "negation over a temporal operator: !({temporal})"
        ))),
    }
}

/// Parses a co-safe formula; rejects syntax errors and co-safety violations.
pub fn parse_ltl(text: &str) -> Result<Formula, LtlError> {
    let tokens = Lexer::run(text)?;
    if tokens.is_empty() {
        return Err(LtlError::Parse { pos: 0, msg: "empty formula".into() });
    }
    let mut parser = Parser { tokens, cursor: 0 };
    let phi = parser.parse_or()?;
    if parser.cursor != parser.tokens.len() {
        return Err(LtlError::Parse {
            pos: parser.pos(),
            msg: "trailing input after formula".into(),
        });
    }
    phi.check_co_safe()?;
    Ok(phi)
}
