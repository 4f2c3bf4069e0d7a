//! Arithmetic expressions over the single variable `x`, used for the source
//! terms of the builtin families.
//!
//! Grammar (unary minus allowed at the head of an expression):
//!
//! ```text
//! expr   := ('+' | '-')? term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' factor)?            // right-associative
//! base   := number | 'x' | '(' expr ')' | func '(' expr ')'
//! func   := sin | cos | exp | abs
//! ```
//!
//! Evaluation is plain IEEE double composition and deterministic.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Var,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Number(v) => *v,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(out, "{v}"),
            Expr::Var => write!(out, "x"),
            Expr::Neg(e) => write!(out, "(0 - {e})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(out, "({a} {sym} {b})")
            }
            Expr::Call(f, e) => {
                let name = match f {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Abs => "abs",
                };
                write!(out, "{name}({e})")
            }
        }
    }
}

/// Syntax error with a byte position into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "at column {}: {}", self.position + 1, self.message)
    }
}

impl std::error::Error for ParseError {}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser { chars: text.char_indices().collect(), pos: 0, len: text.len() };
    let expr = parser.expr()?;
    parser.skip_ws();
    if let Some((at, c)) = parser.peek() {
        return Err(ParseError { position: at, message: format!("unexpected '{c}'") });
    }
    Ok(expr)
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, char)> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some((_, c)) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn here(&self) -> usize {
        self.peek().map(|(at, _)| at).unwrap_or(self.len)
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some((_, c)) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some((at, c)) => {
                Err(ParseError { position: at, message: format!("expected '{want}', found '{c}'") })
            }
            None => Err(ParseError {
                position: self.len,
                message: format!("expected '{want}', found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let negated = match self.peek() {
            Some((_, '-')) => {
                self.pos += 1;
                true
            }
            Some((_, '+')) => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        let mut lhs = self.term()?;
        if negated {
            lhs = Expr::Neg(Box::new(lhs));
        }
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some((_, '+')) => BinOp::Add,
                Some((_, '-')) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some((_, '*')) => BinOp::Mul,
                Some((_, '/')) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        self.skip_ws();
        if matches!(self.peek(), Some((_, '^'))) {
            self.pos += 1;
            let exponent = self.factor()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some((_, '(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some((_, c)) if c.is_ascii_digit() => self.number(),
            Some((at, c)) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                if name == "x" {
                    return Ok(Expr::Var);
                }
                let func = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "abs" => Func::Abs,
                    _ => {
                        return Err(ParseError {
                            position: at,
                            message: format!("unknown function '{name}'"),
                        })
                    }
                };
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Some((at, c)) => {
                Err(ParseError { position: at, message: format!("unexpected '{c}'") })
            }
            None => Err(ParseError {
                position: self.len,
                message: "unexpected end of input".to_string(),
            }),
        }
    }

    fn ident(&mut self) -> String {
        let mut name = String::new();
        while let Some((_, c)) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                name.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        name
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        let mut text = String::new();
        while matches!(self.peek(), Some((_, c)) if c.is_ascii_digit()) {
            text.push(self.bump().unwrap().1);
        }
        if matches!(self.peek(), Some((_, '.'))) {
            text.push(self.bump().unwrap().1);
            while matches!(self.peek(), Some((_, c)) if c.is_ascii_digit()) {
                text.push(self.bump().unwrap().1);
            }
        }
        if matches!(self.peek(), Some((_, 'e' | 'E'))) {
            // Only treat as an exponent when digits (or a signed digit run)
            // actually follow; otherwise 'e' starts an identifier like 'exp'.
            let save = self.pos;
            let mut tail = String::new();
            tail.push(self.bump().unwrap().1);
            if matches!(self.peek(), Some((_, '+' | '-'))) {
                tail.push(self.bump().unwrap().1);
            }
            let mut digits = false;
            while matches!(self.peek(), Some((_, c)) if c.is_ascii_digit()) {
                tail.push(self.bump().unwrap().1);
                digits = true;
            }
            if digits {
                text.push_str(&tail);
            } else {
                self.pos = save;
            }
        }
        text.parse::<f64>().map(Expr::Number).map_err(|_| ParseError {
            position: start,
            message: format!("invalid number '{text}'"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, x: f64) -> f64 {
        parse_expr(text).unwrap().eval(x)
    }

    #[test]
    fn literals_and_variable() {
        assert_eq!(eval("1", 0.7), 1.0);
        assert_eq!(eval("2.5", 0.0), 2.5);
        assert_eq!(eval("1e-3", 0.0), 1e-3);
        assert_eq!(eval("x", 0.25), 0.25);
    }

    #[test]
    fn reference_values() {
        assert!((eval("exp(-x)", 1.0) - (-1.0_f64).exp()).abs() < 1e-15);
        assert!((eval("exp(-x)", 1.0) - 0.367879).abs() < 1e-6);
        assert_eq!(eval("2*x^2 + sin(x)", 0.0), 0.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2*3", 0.0), 7.0);
        assert_eq!(eval("2^3^2", 0.0), 512.0, "power is right-associative");
        assert_eq!(eval("8/4/2", 0.0), 1.0, "division is left-associative");
        assert_eq!(eval("-x^2", 2.0), -4.0, "unary minus binds the whole term");
        assert_eq!(eval("(1+2)*3", 0.0), 9.0);
        assert_eq!(eval("cos(0) + abs(0 - 3)", 0.0), 4.0);
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_expr("1 + ").unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse_expr("tan(x)").unwrap_err();
        assert!(err.message.contains("tan"));
        assert_eq!(err.position, 0);
        let err = parse_expr("2 * (x").unwrap_err();
        assert!(err.message.contains("')'"));
        assert!(parse_expr("").is_err());
        let err = parse_expr("1 2").unwrap_err();
        assert_eq!(err.position, 2);
    }

    #[test]
    fn exponent_suffix_needs_digits() {
        assert_eq!(eval("2e1", 0.0), 20.0);
        assert_eq!(eval("1e+2", 0.0), 100.0);
        // A bare 'e' after digits is not an exponent and cannot continue the
        // expression either.
        assert!(parse_expr("2e").is_err());
    }

    #[test]
    fn display_round_trips_semantics() {
        for text in ["1 + 2*x", "exp(-x) - cos(x^2)", "abs(x)/2 + 1e-2", "-x^2 + 3"] {
            let ast = parse_expr(text).unwrap();
            let printed = ast.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            for x in [-1.0, 0.0, 0.3, 2.7] {
                assert_eq!(ast.eval(x), reparsed.eval(x), "{text} vs {printed}");
            }
        }
    }
}
