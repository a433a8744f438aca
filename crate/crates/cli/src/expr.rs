//! Arithmetic expressions accepted in numeric scenario fields, e.g.
//! `"2^1.5"` or `"1/C(1.5)"`.
//!
//! Grammar: `+ - * /`, right-associative `^`, unary minus, parentheses,
//! constants `pi`, `e`, functions `sqrt exp ln gamma C` where `C(a)` is the
//! stable constant `Gamma(2-a)/(a(a-1))`.

use affine_levy::special::{gamma, stable_constant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {0:?} at {1}")]
    Char(char, usize),
    #[error("unexpected end of expression")]
    End,
    #[error("unexpected token at {0}")]
    Token(usize),
    #[error("unknown name {0:?}")]
    Name(String),
    #[error("{0}")]
    Domain(String),
    #[error("expression nests too deeply")]
    Depth,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(s: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    while j < b.len() && b[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &s[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Token(start))?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < b.len() && b[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((Tok::Ident(s[start..i].to_string()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            let ch = s[i..].chars().next().unwrap_or('?');
            return Err(ExprError::Char(ch, i));
        }
    }
    Ok(out)
}

const MAX_DEPTH: usize = 64;

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(usize::MAX, |t| t.1)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        if self.eat(op) {
            Ok(())
        } else if self.peek().is_none() {
            Err(ExprError::End)
        } else {
            Err(ExprError::Token(self.at()))
        }
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ExprError::Depth);
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<f64, ExprError> {
        self.enter()?;
        let mut v = self.term()?;
        loop {
            if self.eat('+') {
                v += self.term()?;
            } else if self.eat('-') {
                v -= self.term()?;
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(v)
    }

    fn term(&mut self) -> Result<f64, ExprError> {
        let mut v = self.unary()?;
        loop {
            if self.eat('*') {
                v *= self.unary()?;
            } else if self.eat('/') {
                v /= self.unary()?;
            } else {
                break;
            }
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<f64, ExprError> {
        self.enter()?;
        let v = if self.eat('-') {
            -self.unary()?
        } else if self.eat('+') {
            self.unary()?
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(v)
    }

    fn power(&mut self) -> Result<f64, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(base.powf(exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<f64, ExprError> {
        let at = self.at();
        match self.toks.get(self.pos).map(|t| t.0.clone()) {
            None => Err(ExprError::End),
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(v)
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let v = self.expr()?;
                self.expect(')')?;
                Ok(v)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let arg = self.expr()?;
                    self.expect(')')?;
                    call(&name, arg)
                } else {
                    match name.as_str() {
                        "pi" => Ok(std::f64::consts::PI),
                        "e" => Ok(std::f64::consts::E),
                        _ => Err(ExprError::Name(name)),
                    }
                }
            }
            Some(Tok::Op(_)) => Err(ExprError::Token(at)),
        }
    }
}

fn call(name: &str, x: f64) -> Result<f64, ExprError> {
    match name {
        "sqrt" => Ok(x.sqrt()),
        "exp" => Ok(x.exp()),
        "ln" => Ok(x.ln()),
        "gamma" => Ok(gamma(x)),
        "C" => stable_constant(x).map_err(|e| ExprError::Domain(e.to_string())),
        _ => Err(ExprError::Name(name.to_string())),
    }
}

/// Evaluates an expression; the result must be finite.
pub fn eval(s: &str) -> Result<f64, ExprError> {
    let toks = lex(s)?;
    let mut p = Parser { toks, pos: 0, depth: 0 };
    let v = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(ExprError::Token(p.at()));
    }
    if !v.is_finite() {
        return Err(ExprError::Domain(format!("{s:?} evaluates to {v}")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        assert_eq!(eval("2^1.5").unwrap(), 2f64.powf(1.5));
        assert_eq!(eval("2^3^2").unwrap(), 512.0);
        assert_eq!(eval("-2^2").unwrap(), -4.0);
        assert_eq!(eval("1 + 2 * 3").unwrap(), 7.0);
        assert_eq!(eval("(1 + 2) * 3").unwrap(), 9.0);
        assert_eq!(eval("1e-3").unwrap(), 1e-3);
        assert_eq!(eval("2.5E+2").unwrap(), 250.0);
        assert_eq!(eval("1/C(1.5)").unwrap(), 1.0 / stable_constant(1.5).unwrap());
        assert_eq!(eval("sqrt(4)").unwrap(), 2.0);
    }

    #[test]
    fn rejects() {
        for bad in ["", "1 +", "foo", "finite", "2 3", "1/0", "C(2.5)", "((1)", "x_y", "é"] {
            assert!(eval(bad).is_err(), "{bad}");
        }
        assert_eq!(eval(&"(".repeat(100)), Err(ExprError::Depth));
    }
}
