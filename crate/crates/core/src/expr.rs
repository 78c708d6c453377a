//! Coefficient expressions `θ(µ)` for affine terms.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' integer)?
//! base   := number | 'j' | 'mu[' int ']' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | sqrt
//! ```
//!
//! Expressions are parsed once and compiled to a postfix tape. Expressions
//! without `j` are evaluated in real arithmetic.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    J,
    Mu(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    J,
    Mu(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Call(Func),
}

/// A parsed coefficient expression with its compiled tape.
#[derive(Debug, Clone)]
pub struct CoeffExpr {
    root: Node,
    source: String,
    tape: Vec<Instr>,
    depth: usize,
    complex: bool,
    max_mu: Option<usize>,
}

impl PartialEq for CoeffExpr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

/// Parses `text` for a parameter space of dimension `dim`.
pub fn parse_coeff(text: &str, dim: usize) -> Result<CoeffExpr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    let expr = CoeffExpr::from_node(root, text.to_string());
    if let Some(i) = expr.max_mu {
        if i >= dim {
            return Err(Error::MuIndexOutOfRange { index: i, dim });
        }
    }
    Ok(expr)
}

impl CoeffExpr {
    pub fn constant(c: f64) -> Self {
        Self::from_node(Node::Num(c), format!("{c:?}"))
    }

    fn from_node(root: Node, source: String) -> Self {
        let mut tape = Vec::new();
        let mut complex = false;
        let mut max_mu = None;
        compile(&root, &mut tape, &mut complex, &mut max_mu);
        let mut depth = 0usize;
        let mut cur = 0usize;
        for ins in &tape {
            match ins {
                Instr::Const(_) | Instr::J | Instr::Mu(_) => cur += 1,
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div => cur -= 1,
                _ => {}
            }
            depth = depth.max(cur);
        }
        CoeffExpr {
            root,
            source,
            tape,
            depth,
            complex,
            max_mu,
        }
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    /// The text this expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    /// Largest `mu` index referenced, if any.
    pub fn max_mu(&self) -> Option<usize> {
        self.max_mu
    }

    /// Evaluates in complex arithmetic.
    pub fn eval(&self, mu: &[f64]) -> Result<Complex64> {
        let v = if self.complex {
            self.run_complex(mu)?
        } else {
            Complex64::new(self.run_real(mu)?, 0.0)
        };
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient `{}`", self.source)));
        }
        Ok(v)
    }

    pub fn eval_field<T: crate::Field>(&self, mu: &[f64]) -> Result<T> {
        T::from_c64(self.eval(mu)?)
    }

    fn mu_at(&self, mu: &[f64], i: usize) -> Result<f64> {
        mu.get(i).copied().ok_or(Error::MuIndexOutOfRange {
            index: i,
            dim: mu.len(),
        })
    }

    fn run_real(&self, mu: &[f64]) -> Result<f64> {
        let mut st: Vec<f64> = Vec::with_capacity(self.depth);
        for ins in &self.tape {
            match *ins {
                Instr::Const(c) => st.push(c),
                Instr::Mu(i) => st.push(self.mu_at(mu, i)?),
                Instr::J => unreachable!("real tape with j"),
                Instr::Neg => {
                    let a = st.last_mut().unwrap();
                    *a = -*a;
                }
                Instr::Pow(e) => {
                    let a = st.last_mut().unwrap();
                    *a = a.powi(e);
                }
                Instr::Call(f) => {
                    let a = st.last_mut().unwrap();
                    *a = match f {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                        Func::Sqrt => a.sqrt(),
                    };
                }
                op => {
                    let b = st.pop().unwrap();
                    let a = st.last_mut().unwrap();
                    match op {
                        Instr::Add => *a += b,
                        Instr::Sub => *a -= b,
                        Instr::Mul => *a *= b,
                        Instr::Div => *a /= b,
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(st[0])
    }

    fn run_complex(&self, mu: &[f64]) -> Result<Complex64> {
        let mut st: Vec<Complex64> = Vec::with_capacity(self.depth);
        for ins in &self.tape {
            match *ins {
                Instr::Const(c) => st.push(Complex64::new(c, 0.0)),
                Instr::Mu(i) => st.push(Complex64::new(self.mu_at(mu, i)?, 0.0)),
                Instr::J => st.push(Complex64::new(0.0, 1.0)),
                Instr::Neg => {
                    let a = st.last_mut().unwrap();
                    *a = -*a;
                }
                Instr::Pow(e) => {
                    let a = st.last_mut().unwrap();
                    *a = a.powi(e);
                }
                Instr::Call(f) => {
                    let a = st.last_mut().unwrap();
                    *a = match f {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                        Func::Sqrt => a.sqrt(),
                    };
                }
                op => {
                    let b = st.pop().unwrap();
                    let a = st.last_mut().unwrap();
                    match op {
                        Instr::Add => *a += b,
                        Instr::Sub => *a -= b,
                        Instr::Mul => *a *= b,
                        Instr::Div => *a /= b,
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(st[0])
    }
}

fn compile(n: &Node, tape: &mut Vec<Instr>, complex: &mut bool, max_mu: &mut Option<usize>) {
    match n {
        Node::Num(c) => tape.push(Instr::Const(*c)),
        Node::J => {
            *complex = true;
            tape.push(Instr::J)
        }
        Node::Mu(i) => {
            *max_mu = Some(max_mu.map_or(*i, |m| m.max(*i)));
            tape.push(Instr::Mu(*i))
        }
        Node::Neg(a) => {
            compile(a, tape, complex, max_mu);
            tape.push(Instr::Neg)
        }
        Node::Bin(op, a, b) => {
            compile(a, tape, complex, max_mu);
            compile(b, tape, complex, max_mu);
            tape.push(match op {
                BinOp::Add => Instr::Add,
                BinOp::Sub => Instr::Sub,
                BinOp::Mul => Instr::Mul,
                BinOp::Div => Instr::Div,
            })
        }
        Node::Pow(a, e) => {
            compile(a, tape, complex, max_mu);
            tape.push(Instr::Pow(*e))
        }
        Node::Call(f, a) => {
            compile(a, tape, complex, max_mu);
            tape.push(Instr::Call(*f))
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(c) => write!(f, "{c:?}"),
            Node::J => write!(f, "j"),
            Node::Mu(i) => write!(f, "mu[{i}]"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Node::Pow(a, e) => match **a {
                Node::Num(_) | Node::J | Node::Mu(_) | Node::Call(..) => write!(f, "({a}^{e})"),
                _ => write!(f, "(({a})^{e})"),
            },
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl fmt::Display for CoeffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.integer(true)?;
            let e = i32::try_from(e).map_err(|_| self.err("exponent out of range"))?;
            return Ok(Node::Pow(Box::new(base), e));
        }
        Ok(base)
    }

    fn integer(&mut self, signed: bool) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        if signed && self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            self.pos = start;
            return Err(self.err("expected integer"));
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        s.parse().map_err(|_| Error::Syntax {
            offset: start,
            msg: "integer out of range".into(),
        })
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - b
        };
        let mut p = self.pos;
        let mut n = digits(&mut p);
        if p < s.len() && s[p] == b'.' {
            p += 1;
            n += digits(&mut p);
        }
        if n == 0 {
            return Err(self.err("malformed number"));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) > 0 {
                p = q;
            }
        }
        self.pos = p;
        let text = std::str::from_utf8(&s[start..p]).unwrap();
        let v: f64 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            msg: format!("malformed number `{text}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::Syntax {
                offset: start,
                msg: format!("number `{text}` overflows"),
            });
        }
        Ok(Node::Num(v))
    }

    fn base(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let func = match name {
                    "j" => return Ok(Node::J),
                    "mu" => {
                        self.expect(b'[')?;
                        let i = self.integer(false)?;
                        self.expect(b']')?;
                        return Ok(Node::Mu(i as usize));
                    }
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    _ => {
                        return Err(Error::UnknownIdentifier {
                            name: name.to_string(),
                            offset: start,
                        })
                    }
                };
                self.expect(b'(')?;
                let arg = self.expr()?;
                self.expect(b')')?;
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(c) => Err(self.err(&format!("unexpected character `{}`", c as char))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant() {
        let e = parse_coeff("1", 0).unwrap();
        assert_eq!(e.eval(&[]).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn cos_of_zero() {
        let e = parse_coeff("mu[0]*cos(mu[1])", 2).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0]).unwrap().re, 2.0);
    }

    #[test]
    fn precedence() {
        let e = parse_coeff("mu[0]^2 + 3/mu[1]", 2).unwrap();
        assert_eq!(e.eval(&[2.0, 3.0]).unwrap().re, 5.0);
        let e = parse_coeff("2 - 3 - 4", 0).unwrap();
        assert_eq!(e.eval(&[]).unwrap().re, -5.0);
        let e = parse_coeff("-2^2", 0).unwrap();
        assert_eq!(e.eval(&[]).unwrap().re, -4.0);
    }

    #[test]
    fn imaginary_unit() {
        let e = parse_coeff("1 + 2*j", 0).unwrap();
        assert!(e.is_complex());
        assert_eq!(e.eval(&[]).unwrap(), Complex64::new(1.0, 2.0));
        assert!(e.eval_field::<f64>(&[]).is_err());
        let e = parse_coeff("j*j", 0).unwrap();
        assert_eq!(e.eval_field::<f64>(&[]).unwrap(), -1.0);
    }

    #[test]
    fn errors() {
        match parse_coeff("1 + * 2", 0) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            r => panic!("{r:?}"),
        }
        assert!(matches!(
            parse_coeff("tan(1)", 0),
            Err(Error::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            parse_coeff("mu[3]", 2),
            Err(Error::MuIndexOutOfRange { index: 3, dim: 2 })
        ));
        assert!(parse_coeff("(1", 0).is_err());
        assert!(parse_coeff("", 0).is_err());
        assert!(parse_coeff("2 3", 0).is_err());
    }

    #[test]
    fn non_finite_value() {
        let e = parse_coeff("1/mu[0]", 1).unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn print_roundtrip() {
        for s in ["-mu[0]^-2*sqrt(exp(1e-3))", "(1+j)^3/(mu[1]-0.25)", "sin(cos(.5))"] {
            let a = parse_coeff(s, 2).unwrap();
            let b = parse_coeff(&a.to_string(), 2).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.to_string(), b.to_string());
        }
    }
}
