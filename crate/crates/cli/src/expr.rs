//! Arithmetic expressions over named coordinates.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | 'sqrt' '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and associates to the right, so
//! `-x^2` is `-(x^2)` and `2^3^2` is `2^9`.

use std::sync::Arc;

use nambu_core::ScalarField;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, (usize, String)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
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
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| (start, format!("bad number `{text}`")))?;
                out.push(Token {
                    tok: Tok::Num(v),
                    start,
                    end: i,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident,
                    start,
                    end: i,
                });
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err((start, format!("unexpected character `{ch}`")));
            }
        };
        i += 1;
        out.push(Token { tok, start, end: i });
    }
    out.push(Token {
        tok: Tok::End,
        start: bytes.len(),
        end: bytes.len(),
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Sqrt(Box<Node>),
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Token {
        self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos];
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, at: Token, message: impl Into<String>) -> Result<T, (usize, String)> {
        Err((at.start, message.into()))
    }

    fn describe(&self, t: Token) -> String {
        match t.tok {
            Tok::End => "end of input".into(),
            _ => format!("`{}`", &self.src[t.start..t.end]),
        }
    }

    fn expr(&mut self) -> Result<Node, (usize, String)> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, (usize, String)> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, (usize, String)> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, (usize, String)> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, (usize, String)> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Ident => {
                let name = &self.src[t.start..t.end];
                if name == "sqrt" {
                    let open = self.bump();
                    if open.tok != Tok::LParen {
                        return self.fail(open, format!("expected `(` after sqrt, found {}", self.describe(open)));
                    }
                    let inner = self.expr()?;
                    self.close()?;
                    return Ok(Node::Sqrt(Box::new(inner)));
                }
                match self.names.iter().position(|n| n == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => self.fail(t, format!("unknown coordinate `{name}`")),
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.close()?;
                Ok(inner)
            }
            _ => self.fail(t, format!("expected a number, name or `(`, found {}", self.describe(t))),
        }
    }

    fn close(&mut self) -> Result<(), (usize, String)> {
        let t = self.bump();
        if t.tok != Tok::RParen {
            return self.fail(t, format!("expected `)`, found {}", self.describe(t)));
        }
        Ok(())
    }
}

fn locate(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// A parsed expression over `names.len()` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dim: usize,
}

impl Expr {
    pub fn parse(src: &str, names: &[String]) -> Result<Self, ParseError> {
        let run = || -> Result<Node, (usize, String)> {
            let toks = tokenize(src)?;
            let mut p = Parser {
                src,
                toks,
                pos: 0,
                names,
            };
            let root = p.expr()?;
            let t = p.peek();
            if t.tok != Tok::End {
                return p.fail(t, format!("unexpected {}", p.describe(t)));
            }
            Ok(root)
        };
        run().map(|root| Expr { root, dim: names.len() }).map_err(|(offset, message)| {
            let (line, column) = locate(src, offset);
            ParseError { line, column, message }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        value(&self.root, x)
    }

    /// Value and exact gradient.
    pub fn eval_dual(&self, x: &[f64]) -> Dual {
        dual(&self.root, x)
    }

    pub fn into_field(self) -> ScalarField {
        let dim = self.dim;
        let e = Arc::new(self);
        let g = Arc::clone(&e);
        ScalarField::with_gradient(dim, move |x| e.eval(x), move |x, out| out.copy_from_slice(&g.eval_dual(x).grad))
    }
}

fn value(n: &Node, x: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(i) => x[*i],
        Node::Neg(a) => -value(a, x),
        Node::Add(a, b) => value(a, x) + value(b, x),
        Node::Sub(a, b) => value(a, x) - value(b, x),
        Node::Mul(a, b) => value(a, x) * value(b, x),
        Node::Div(a, b) => value(a, x) / value(b, x),
        Node::Pow(a, b) => pow(value(a, x), value(b, x)),
        Node::Sqrt(a) => value(a, x).sqrt(),
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

/// Forward-mode dual number with one tangent per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Dual {
    fn constant(value: f64, dim: usize) -> Self {
        Dual {
            value,
            grad: vec![0.0; dim],
        }
    }

    fn map(mut self, value: f64, slope: f64) -> Self {
        self.value = value;
        self.grad.iter_mut().for_each(|g| *g *= slope);
        self
    }

    fn combine(mut self, other: &Dual, value: f64, da: f64, db: f64) -> Self {
        self.value = value;
        for (g, h) in self.grad.iter_mut().zip(&other.grad) {
            *g = da * *g + db * h;
        }
        self
    }

    fn is_constant(&self) -> bool {
        self.grad.iter().all(|g| *g == 0.0)
    }
}

fn dual(n: &Node, x: &[f64]) -> Dual {
    let dim = x.len();
    match n {
        Node::Num(v) => Dual::constant(*v, dim),
        Node::Var(i) => {
            let mut d = Dual::constant(x[*i], dim);
            d.grad[*i] = 1.0;
            d
        }
        Node::Neg(a) => {
            let a = dual(a, x);
            let v = -a.value;
            a.map(v, -1.0)
        }
        Node::Add(a, b) => {
            let (a, b) = (dual(a, x), dual(b, x));
            let v = a.value + b.value;
            a.combine(&b, v, 1.0, 1.0)
        }
        Node::Sub(a, b) => {
            let (a, b) = (dual(a, x), dual(b, x));
            let v = a.value - b.value;
            a.combine(&b, v, 1.0, -1.0)
        }
        Node::Mul(a, b) => {
            let (a, b) = (dual(a, x), dual(b, x));
            let (u, w) = (a.value, b.value);
            a.combine(&b, u * w, w, u)
        }
        Node::Div(a, b) => {
            let (a, b) = (dual(a, x), dual(b, x));
            let (u, w) = (a.value, b.value);
            a.combine(&b, u / w, 1.0 / w, -u / (w * w))
        }
        Node::Pow(a, b) => {
            let (a, b) = (dual(a, x), dual(b, x));
            let (u, w) = (a.value, b.value);
            let v = pow(u, w);
            let da = if w == 0.0 { 0.0 } else { w * pow(u, w - 1.0) };
            if b.is_constant() {
                a.map(v, da)
            } else {
                a.combine(&b, v, da, v * u.ln())
            }
        }
        Node::Sqrt(a) => {
            let a = dual(a, x);
            let v = a.value.sqrt();
            a.map(v, 0.5 / v)
        }
    }
}

pub fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xyz() -> Vec<String> {
        names(&["x", "y", "z"])
    }

    fn ev(src: &str, at: &[f64]) -> f64 {
        Expr::parse(src, &xyz()).unwrap().eval(at)
    }

    #[test]
    fn precedence() {
        let at = [2.0, 3.0, 5.0];
        assert_eq!(ev("x + y * z", &at), 17.0);
        assert_eq!(ev("(x + y) * z", &at), 25.0);
        assert_eq!(ev("-x^2", &at), -4.0);
        assert_eq!(ev("2^3^2", &at), 512.0);
        assert_eq!(ev("x - y - z", &at), -6.0);
        assert_eq!(ev("z / x / 5", &at), 0.5);
        assert_eq!(ev("x^-1", &at), 0.5);
        assert_eq!(ev("sqrt(x * 8)", &at), 4.0);
        assert_eq!(ev("1.5e1 - --x", &at), 13.0);
    }

    #[test]
    fn malformed_operator_position() {
        let e = Expr::parse("x +* y", &xyz()).unwrap_err();
        assert_eq!((e.line, e.column), (1, 4));
    }

    #[test]
    fn error_positions() {
        let e = Expr::parse("x + w", &xyz()).unwrap_err();
        assert_eq!((e.line, e.column), (1, 5));
        assert!(e.message.contains("unknown coordinate"));
        let e = Expr::parse("(x + y", &xyz()).unwrap_err();
        assert_eq!((e.line, e.column), (1, 7));
        let e = Expr::parse("x +\n  y $", &xyz()).unwrap_err();
        assert_eq!((e.line, e.column), (2, 5));
        let e = Expr::parse("x y", &xyz()).unwrap_err();
        assert_eq!((e.line, e.column), (1, 3));
        assert!(Expr::parse("", &xyz()).is_err());
        assert!(Expr::parse("sqrt x", &xyz()).is_err());
    }

    #[test]
    fn dual_gradients() {
        let e = Expr::parse("(x^2 - y^2 + z^2) / 2", &xyz()).unwrap();
        let d = e.eval_dual(&[1.0, 2.0, 3.0]);
        assert_eq!(d.value, 3.0);
        assert_eq!(d.grad, vec![1.0, -2.0, 3.0]);
        let e = Expr::parse("x^y", &xyz()).unwrap();
        let d = e.eval_dual(&[2.0, 3.0, 0.0]);
        assert_eq!(d.grad[0], 12.0);
        assert!((d.grad[1] - 8.0 * 2f64.ln()).abs() < 1e-14);
        let e = Expr::parse("sqrt(y^2 + z^2)", &xyz()).unwrap();
        let d = e.eval_dual(&[0.0, 3.0, 4.0]);
        for (g, want) in d.grad.iter().zip([0.0, 0.6, 0.8]) {
            assert!((g - want).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_base_integer_power() {
        let e = Expr::parse("x^3", &xyz()).unwrap();
        let d = e.eval_dual(&[-2.0, 0.0, 0.0]);
        assert_eq!(d.value, -8.0);
        assert_eq!(d.grad[0], 12.0);
    }
}
