//! Initial-condition presets and a small parser for sums of scaled
//! trigonometric terms, e.g. `0.4*cos(pi*x)*sin(pi*y) + 0.2`.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := ['-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number | 'pi' | 'x' | 'y' | ('cos'|'sin') '(' expr ')' | '(' expr ')'
//! ```

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{Field, SpectralBasis};

/// Named presets (grid formulas reused across experiments).
pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "zero" => Some("0"),
        // two-mode mixture used by the blow-up and convergence experiments
        "fig1" | "fig3" => Some("0.4*cos(pi*x)*sin(pi*y) + 0.4*sin(pi*x)*cos(2*pi*y) + 0.2"),
        // offset single mode used by the regularization sweep
        "fig4" => Some("0.5*cos(pi*x)*cos(pi*y) + 0.3"),
        // small seed for the coarsening runs
        "fig5" | "coarsen" => Some("0.01*cos(pi*x)*sin(pi*y)"),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Cos(Box<Expr>),
    Sin(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Cos(a) => a.eval(x, y).cos(),
            Expr::Sin(a) => a.eval(x, y).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = bytes[start..i].iter().collect();
                let v = s
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number '{s}' in expression")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Token::Ident(bytes[start..i].iter().collect()));
            }
            other => {
                return Err(Error::Config(format!("unexpected character '{other}' in expression")))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
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

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.next() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::Config(format!("expected {t:?}, got {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut node = if matches!(self.peek(), Some(Token::Minus)) {
            self.next();
            Expr::Neg(Box::new(self.term()?))
        } else {
            self.term()?
        };
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.next();
                    node = Expr::Add(Box::new(node), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.next();
                    node = Expr::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(node)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut node = self.factor()?;
        while matches!(self.peek(), Some(Token::Star)) {
            self.next();
            node = Expr::Mul(Box::new(node), Box::new(self.factor()?));
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(id)) => match id.as_str() {
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "cos" | "sin" => {
                    self.expect(Token::LParen)?;
                    let inner = self.expr()?;
                    self.expect(Token::RParen)?;
                    Ok(if id == "cos" {
                        Expr::Cos(Box::new(inner))
                    } else {
                        Expr::Sin(Box::new(inner))
                    })
                }
                other => Err(Error::Config(format!("unknown identifier '{other}' in expression"))),
            },
            got => Err(Error::Config(format!("unexpected token {got:?} in expression"))),
        }
    }
}

/// Parse an initial-condition expression.
pub fn parse_expression(src: &str) -> Result<Expr> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(Error::Config("empty expression".to_string()));
    }
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(Error::Config(format!(
            "trailing tokens in expression starting at {:?}",
            p.tokens[p.pos]
        )));
    }
    Ok(e)
}

/// Resolve a preset name or expression to its evaluator.
pub fn resolve(name: &str) -> Result<Expr> {
    match preset(name) {
        Some(src) => parse_expression(src),
        None => parse_expression(name).map_err(|e| {
            Error::Config(format!("'{name}' is neither a preset nor a valid expression: {e}"))
        }),
    }
}

/// Grid evaluation of a preset or expression, projected onto the retained
/// modes.
pub fn initial_condition(name: &str, basis: &Arc<SpectralBasis>) -> Result<Field> {
    let expr = resolve(name)?;
    let raw = Field::from_fn(Arc::clone(basis), |x, y| expr.eval(x, y));
    basis.project(&raw, basis.n_modes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn preset_point_values() {
        // fig4 at the origin: 0.5 * 1 * 1 + 0.3
        let e = resolve("fig4").unwrap();
        assert_relative_eq!(e.eval(0.0, 0.0), 0.8, max_relative = 1e-15);
        // fig1 at the origin: 0.4 * (1*0 + 0*1) + 0.2
        let e = resolve("fig1").unwrap();
        assert_relative_eq!(e.eval(0.0, 0.0), 0.2, max_relative = 1e-15);
        let z = resolve("zero").unwrap();
        assert_eq!(z.eval(0.3, -0.7), 0.0);
    }

    #[test]
    fn fig1_sup_norm_below_one() {
        let basis = SpectralBasis::neumann(32).unwrap();
        let u = initial_condition("fig1", &basis).unwrap();
        assert!(u.sup_norm() < 1.0, "sup {}", u.sup_norm());
        // grid values match the expression at the grid coordinates
        let expr = resolve("fig1").unwrap();
        let g = basis.grid().to_vec();
        for (idx, &v) in u.values().indexed_iter().take(40) {
            assert_abs_diff_eq!(v, expr.eval(g[idx.0], g[idx.1]), epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_preset_is_zero_field() {
        let basis = SpectralBasis::periodic(8).unwrap();
        let u = initial_condition("zero", &basis).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn expression_parsing() {
        let e = parse_expression("1.5e-2 * cos(2*pi*x) - 0.5").unwrap();
        assert_relative_eq!(e.eval(0.0, 0.0), 0.015 - 0.5, max_relative = 1e-15);
        let e = parse_expression("-0.3 + x*y").unwrap();
        assert_relative_eq!(e.eval(2.0, 0.25), 0.2, max_relative = 1e-12);
        let e = parse_expression("sin(pi*(x - y))").unwrap();
        assert_relative_eq!(e.eval(0.5, 0.0), 1.0, max_relative = 1e-12);
        assert!(parse_expression("cos(").is_err());
        assert!(parse_expression("0.4 +").is_err());
        assert!(parse_expression("tanh(x)").is_err());
        assert!(parse_expression("").is_err());
        assert!(resolve("not-a-preset!!").is_err());
    }
}
