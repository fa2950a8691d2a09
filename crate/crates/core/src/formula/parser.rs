use std::sync::Arc;

use super::expr::{BinaryOp, CellAddr, CellPos, CmpOp, Expr, UnaryOp};
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::values::{Array, ErrorValue, Value};

const MAX_DEPTH: usize = 200;

/// Parses a formula. The text must start with `=`.
pub fn parse_formula(text: &str) -> Result<Expr, ParseError> {
    let lead = text.len() - text.trim_start().len();
    let body = &text[lead..];
    if !body.starts_with('=') {
        return Err(ParseError::at(text, 0, lead, "formula must start with '='"));
    }
    parse_at(text, lead + 1)
}

/// Parses an expression without the leading `=`.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    parse_at(text, 0)
}

fn parse_at(full: &str, base: usize) -> Result<Expr, ParseError> {
    let tokens = tokenize(full, base)?;
    let mut p = Parser {
        full,
        tokens,
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    if p.pos < p.tokens.len() {
        return Err(p.error_here("unexpected input after expression"));
    }
    Ok(e)
}

struct Parser<'a> {
    full: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn offset(&self) -> usize {
        match self.tokens.get(self.pos) {
            Some(t) => t.offset,
            None => self.full.len(),
        }
    }

    fn error_here(&self, msg: &str) -> ParseError {
        ParseError::at(self.full, 0, self.offset(), msg)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(&format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error_here("formula nested too deeply"));
        }
        let e = self.comparison();
        self.depth -= 1;
        e
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.concat()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Eq) => CmpOp::Eq,
                Some(Tok::Ne) => CmpOp::Ne,
                Some(Tok::Lt) => CmpOp::Lt,
                Some(Tok::Le) => CmpOp::Le,
                Some(Tok::Gt) => CmpOp::Gt,
                Some(Tok::Ge) => CmpOp::Ge,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.concat()?;
            lhs = Expr::compare(op, lhs, rhs);
        }
    }

    fn concat(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.additive()?;
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            let rhs = self.additive()?;
            lhs = Expr::binary(BinaryOp::Concat, lhs, rhs);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.power()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(BinaryOp::Pow, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return Err(self.error_here("formula nested too deeply"));
                }
                let e = self.unary()?;
                self.depth -= 1;
                Ok(Expr::unary(UnaryOp::Neg, e))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        match self.next() {
            Some(Tok::Number(d)) => Ok(Expr::Number(d)),
            Some(Tok::Text(s)) => Ok(Expr::Text(Arc::from(s.as_str()))),
            Some(Tok::Error(name)) => match error_literal(&name) {
                Some(e) => Ok(Expr::Error(e)),
                None => Err(ParseError::at(
                    self.full,
                    0,
                    start,
                    &format!("unknown error literal '{name}'"),
                )),
            },
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Some(Tok::LBrace) => self.array_literal(start),
            Some(Tok::Sheet(sheet)) => {
                self.expect(Tok::Bang, "'!' after sheet name")?;
                self.qualified_ref(sheet)
            }
            Some(Tok::Word(word)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    return self.call(word, start);
                }
                if self.peek() == Some(&Tok::Bang) {
                    self.pos += 1;
                    return self.qualified_ref(word);
                }
                if let Some(pos) = CellPos::parse(&word) {
                    if self.peek() == Some(&Tok::Colon) {
                        self.pos += 1;
                        let to = self.area_end()?;
                        return Ok(Expr::NormalCellArea(
                            CellAddr::local(pos),
                            CellAddr::local(to),
                        ));
                    }
                    return Ok(Expr::CellRef(CellAddr::local(pos)));
                }
                if word.eq_ignore_ascii_case("TRUE") || word.eq_ignore_ascii_case("FALSE") {
                    return Ok(Expr::Call(Arc::from(word.to_ascii_uppercase().as_str()), vec![]));
                }
                Err(ParseError::at(
                    self.full,
                    0,
                    start,
                    &format!("unknown name '{word}'"),
                ))
            }
            Some(_) => Err(ParseError::at(self.full, 0, start, "expected an expression")),
            None => Err(ParseError::at(self.full, 0, start, "unexpected end of formula")),
        }
    }

    fn area_end(&mut self) -> Result<CellPos, ParseError> {
        match self.next() {
            Some(Tok::Word(w)) => CellPos::parse(&w).ok_or_else(|| {
                self.pos -= 1;
                self.error_here("expected a cell reference after ':'")
            }),
            _ => {
                self.pos -= 1;
                Err(self.error_here("expected a cell reference after ':'"))
            }
        }
    }

    fn qualified_ref(&mut self, sheet: String) -> Result<Expr, ParseError> {
        let pos = self.area_end_or_ref()?;
        let from = CellAddr {
            sheet: Some(Arc::from(sheet.as_str())),
            pos,
        };
        if self.peek() == Some(&Tok::Colon) {
            self.pos += 1;
            let to = self.area_end()?;
            let to = CellAddr {
                sheet: from.sheet.clone(),
                pos: to,
            };
            return Ok(Expr::NormalCellArea(from, to));
        }
        Ok(Expr::NormalCellRef(from))
    }

    fn area_end_or_ref(&mut self) -> Result<CellPos, ParseError> {
        match self.next() {
            Some(Tok::Word(w)) => match CellPos::parse(&w) {
                Some(p) => Ok(p),
                None => {
                    self.pos -= 1;
                    Err(self.error_here("expected a cell reference"))
                }
            },
            _ => {
                self.pos -= 1;
                Err(self.error_here("expected a cell reference"))
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.next() {
                Some(Tok::Comma) => {
                    // A trailing empty argument, as in CLOSURE("K",), is dropped.
                    if self.peek() == Some(&Tok::RParen) {
                        self.pos += 1;
                        return Ok(args);
                    }
                }
                Some(Tok::RParen) => return Ok(args),
                _ => {
                    self.pos -= 1;
                    return Err(self.error_here("expected ',' or ')'"));
                }
            }
        }
    }

    fn call(&mut self, name: String, start: usize) -> Result<Expr, ParseError> {
        if name.contains('$') {
            return Err(ParseError::at(self.full, 0, start, "bad function name"));
        }
        let mut args = self.args()?;
        let upper = name.to_ascii_uppercase();
        let arity_error = |what: &str| {
            Err(ParseError::at(
                self.full,
                0,
                start,
                &format!("{upper} expects {what}"),
            ))
        };
        Ok(match upper.as_str() {
            "IF" => {
                if args.len() != 3 {
                    return arity_error("3 arguments");
                }
                let c = args.remove(0);
                let a = args.remove(0);
                let b = args.remove(0);
                Expr::if_(c, a, b)
            }
            "CHOOSE" => {
                if args.len() < 2 {
                    return arity_error("at least 2 arguments");
                }
                let sel = args.remove(0);
                Expr::Choose(Box::new(sel), args)
            }
            "NOT" => {
                if args.len() != 1 {
                    return arity_error("1 argument");
                }
                Expr::unary(UnaryOp::Not, args.remove(0))
            }
            "AND" => Expr::And(args),
            "OR" => Expr::Or(args),
            "CLOSURE" => {
                if args.is_empty() {
                    return arity_error("at least 1 argument");
                }
                Expr::MakeClosure(args)
            }
            "APPLY" => {
                if args.is_empty() {
                    return arity_error("at least 1 argument");
                }
                let f = args.remove(0);
                Expr::Apply(Box::new(f), args)
            }
            _ => Expr::Call(Arc::from(name.as_str()), args),
        })
    }

    fn array_literal(&mut self, start: usize) -> Result<Expr, ParseError> {
        let mut rows: Vec<Vec<Value>> = vec![vec![]];
        loop {
            let v = self.array_element()?;
            rows.last_mut().unwrap().push(v);
            match self.next() {
                Some(Tok::Comma) => {}
                Some(Tok::Semi) => rows.push(vec![]),
                Some(Tok::RBrace) => break,
                _ => {
                    self.pos -= 1;
                    return Err(self.error_here("expected ',', ';' or '}'"));
                }
            }
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ParseError::at(self.full, 0, start, "array rows differ in length"));
        }
        let n = rows.len();
        let array = Array::new(n, cols, rows.into_iter().flatten().collect()).unwrap();
        Ok(Expr::Const(Value::Array(Arc::new(array))))
    }

    fn array_element(&mut self) -> Result<Value, ParseError> {
        let negate = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let at = self.offset();
        let v = match self.next() {
            Some(Tok::Number(d)) => Value::Number(if negate { -d } else { d }),
            Some(Tok::Text(s)) if !negate => Value::text(&s),
            Some(Tok::Error(name)) if !negate => match error_literal(&name) {
                Some(e) => Value::Error(e),
                None => return Err(ParseError::at(self.full, 0, at, "unknown error literal")),
            },
            Some(Tok::Word(w)) if !negate && w.eq_ignore_ascii_case("TRUE") => Value::bool(true),
            Some(Tok::Word(w)) if !negate && w.eq_ignore_ascii_case("FALSE") => Value::bool(false),
            _ => return Err(ParseError::at(self.full, 0, at, "expected a constant in array")),
        };
        Ok(v)
    }
}

/// Resolves an error literal. `#N/A` is accepted as an alias of `#NA`.
pub fn error_literal(name: &str) -> Option<ErrorValue> {
    if name.eq_ignore_ascii_case("#N/A") {
        return Some(ErrorValue::NA);
    }
    ErrorValue::builtins()
        .into_iter()
        .find(|e| e.name().eq_ignore_ascii_case(name))
}
