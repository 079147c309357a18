//! Infix parser for the expression language.
//!
//! Precedence, loosest to tightest: `+ -`, `* /`, unary `-`, `^`.
//! `^` is right-associative and its exponent must be a constant literal
//! (optionally signed, optionally parenthesized). Functions are written
//! `name(args)`; whitespace is insignificant.

use super::{BinaryOp, Expr, NaryOp, UnaryOp, VarSet};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },
    #[error("unknown variable `{name}` at position {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: String,
        got: usize,
    },
    #[error("exponent at position {pos} must be a constant")]
    NonConstantExponent { pos: usize },
    #[error("empty input")]
    Empty,
}

pub fn parse(text: &str, vars: &VarSet) -> Result<Expr, ParseError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.len(),
        vars,
    };
    let e = p.parse_sum()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => Err(ParseError::Syntax {
            pos: t.pos,
            expected: "end of input".into(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '+' => {
                out.push(Token { tok: Tok::Plus, pos });
                i += 1;
            }
            '-' | '\u{2212}' => {
                out.push(Token { tok: Tok::Minus, pos });
                i += c.len_utf8();
            }
            '*' => {
                out.push(Token { tok: Tok::Star, pos });
                i += 1;
            }
            '/' => {
                out.push(Token { tok: Tok::Slash, pos });
                i += 1;
            }
            '^' => {
                out.push(Token { tok: Tok::Caret, pos });
                i += 1;
            }
            '(' => {
                out.push(Token { tok: Tok::LParen, pos });
                i += 1;
            }
            ')' => {
                out.push(Token { tok: Tok::RParen, pos });
                i += 1;
            }
            ',' => {
                out.push(Token { tok: Tok::Comma, pos });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    expected: "number".into(),
                })?;
                out.push(Token {
                    tok: Tok::Num(v),
                    pos: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    pos: start,
                });
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos,
                    expected: "token".into(),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
    vars: &'a VarSet,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t.tok == tok => Ok(()),
            Some(t) => Err(ParseError::Syntax {
                pos: t.pos,
                expected: what.into(),
            }),
            None => Err(ParseError::Syntax {
                pos: self.end,
                expected: what.into(),
            }),
        }
    }

    fn parse_sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_signed_term()?;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Plus) => {
                    self.next();
                    let rhs = self.parse_signed_term()?;
                    lhs = Expr::Binary(BinaryOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.next();
                    let rhs = self.parse_signed_term()?;
                    lhs = Expr::Binary(BinaryOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary minus binds looser than * / but tighter than + -, so
    // `-1/abs(x1)` is `neg(div(1, abs(x1)))`
    fn parse_signed_term(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek().map(|t| t.tok.clone()) {
            self.next();
            let inner = self.parse_signed_term()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.parse_term()
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_power()?;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Star) => {
                    self.next();
                    let rhs = self.parse_signed_factor()?;
                    lhs = Expr::Binary(BinaryOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.next();
                    let rhs = self.parse_signed_factor()?;
                    lhs = Expr::Binary(BinaryOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // right operand of * and / accepts a leading minus: `x * -2`
    fn parse_signed_factor(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek().map(|t| t.tok.clone()) {
            self.next();
            let inner = self.parse_signed_factor()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if let Some(Tok::Caret) = self.peek().map(|t| t.tok.clone()) {
            self.next();
            let exponent = self.parse_exponent()?;
            return Ok(Expr::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    // exponent := ['-'] (number | '(' exponent ')') ['^' exponent]
    fn parse_exponent(&mut self) -> Result<Expr, ParseError> {
        let pos = self.here();
        let mut sign = 1.0;
        if let Some(Tok::Minus) = self.peek().map(|t| t.tok.clone()) {
            self.next();
            sign = -1.0;
        }
        let value = match self.next() {
            Some(Token { tok: Tok::Num(v), .. }) => v,
            Some(Token {
                tok: Tok::LParen, ..
            }) => {
                let inner = self.parse_exponent()?;
                self.expect(Tok::RParen, "`)`")?;
                match inner {
                    Expr::Const(v) => v,
                    _ => return Err(ParseError::NonConstantExponent { pos }),
                }
            }
            _ => return Err(ParseError::NonConstantExponent { pos }),
        };
        let mut value = sign * value;
        if let Some(Tok::Caret) = self.peek().map(|t| t.tok.clone()) {
            // right-associative tower of constants
            self.next();
            match self.parse_exponent()? {
                Expr::Const(e) => value = value.powf(e),
                _ => return Err(ParseError::NonConstantExponent { pos }),
            }
        }
        Ok(Expr::Const(value))
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Token { tok: Tok::Num(v), .. }) => Ok(Expr::Const(v)),
            Some(Token {
                tok: Tok::LParen, ..
            }) => {
                let e = self.parse_sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Token {
                tok: Tok::Ident(name),
                pos,
            }) => {
                if let Some(Tok::LParen) = self.peek().map(|t| t.tok.clone()) {
                    self.next();
                    self.parse_call(&name, pos)
                } else {
                    if !self.vars.contains(&name) {
                        return Err(ParseError::UnknownVariable { name, pos });
                    }
                    Ok(Expr::Var(name))
                }
            }
            Some(t) => Err(ParseError::Syntax {
                pos: t.pos,
                expected: "expression".into(),
            }),
            None => Err(ParseError::Syntax {
                pos: self.end,
                expected: "expression".into(),
            }),
        }
    }

    fn parse_call(&mut self, name: &str, pos: usize) -> Result<Expr, ParseError> {
        let mut args = Vec::new();
        if let Some(Tok::RParen) = self.peek().map(|t| t.tok.clone()) {
            self.next();
        } else {
            loop {
                args.push(self.parse_sum()?);
                match self.next() {
                    Some(Token { tok: Tok::Comma, .. }) => continue,
                    Some(Token {
                        tok: Tok::RParen, ..
                    }) => break,
                    Some(t) => {
                        return Err(ParseError::Syntax {
                            pos: t.pos,
                            expected: "`,` or `)`".into(),
                        })
                    }
                    None => {
                        return Err(ParseError::Syntax {
                            pos: self.end,
                            expected: "`,` or `)`".into(),
                        })
                    }
                }
            }
        }
        let unary = |op: UnaryOp, mut args: Vec<Expr>| -> Result<Expr, ParseError> {
            if args.len() != 1 {
                return Err(ParseError::Arity {
                    name: op.name().into(),
                    expected: "1".into(),
                    got: args.len(),
                });
            }
            Ok(Expr::Unary(op, Box::new(args.remove(0))))
        };
        match name {
            "exp" => unary(UnaryOp::Exp, args),
            "log" => unary(UnaryOp::Log, args),
            "abs" => unary(UnaryOp::Abs, args),
            "sqrt" => unary(UnaryOp::Sqrt, args),
            "pos" => unary(UnaryOp::Pos, args),
            "sign" => unary(UnaryOp::Sign, args),
            "min" | "max" => {
                if args.is_empty() {
                    return Err(ParseError::Arity {
                        name: name.into(),
                        expected: "at least 1".into(),
                        got: 0,
                    });
                }
                let op = if name == "min" { NaryOp::Min } else { NaryOp::Max };
                Ok(Expr::Nary(op, args))
            }
            "norm" => {
                if args.is_empty() {
                    return Err(ParseError::Arity {
                        name: "norm".into(),
                        expected: "at least 1".into(),
                        got: 0,
                    });
                }
                let mut names = Vec::with_capacity(args.len());
                for a in args {
                    match a {
                        Expr::Var(v) => names.push(v),
                        _ => {
                            return Err(ParseError::Syntax {
                                pos,
                                expected: "variable names inside norm(...)".into(),
                            })
                        }
                    }
                }
                Ok(Expr::Norm(names))
            }
            _ => Err(ParseError::Syntax {
                pos,
                expected: format!("known function, got `{name}`"),
            }),
        }
    }
}
