//! Closed-form scalar expressions used for profiles, conformal factors and
//! control functions.
//!
//! Grammar (usual precedence, `^` right associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | 'e' | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables: `r`, `theta`, `x`, `y`, `z`, `x1` .. `x8`.
//! Functions: `exp log sqrt sinh cosh tanh sin cos abs bump min max`, where
//! `bump(z) = exp(-1/(1-z^2))` for `|z| < 1` and `0` otherwise.
//!
//! Evaluation treats an exact zero factor as absorbing (`0 * x = 0` even if
//! `x` is not finite), so derivatives of `bump` vanish cleanly off its support.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    R,
    Theta,
    /// Cartesian coordinate `x_{i+1}`.
    X(u8),
}

impl Var {
    fn name(self) -> String {
        match self {
            Var::R => "r".into(),
            Var::Theta => "theta".into(),
            Var::X(i) => format!("x{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
    Sin,
    Cos,
    Abs,
    Bump,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Bump => "bump",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "bump" => Func::Bump,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Abs => x.abs(),
            Func::Bump => {
                if x.abs() < 1.0 {
                    (-1.0 / (1.0 - x * x)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `if a >= b { t } else { e }`; produced by differentiating `min`/`max`.
    IfGe(Box<Expr>, Box<Expr>, Box<Expr>, Box<Expr>),
}

/// Variable assignment for evaluation. Unset coordinates read as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Point {
    pub r: f64,
    pub theta: f64,
    pub x: [f64; 8],
}

impl Point {
    pub fn radial(r: f64) -> Self {
        Point { r, ..Default::default() }
    }

    pub fn cartesian(xs: &[f64]) -> Self {
        let mut p = Point::default();
        for (slot, v) in p.x.iter_mut().zip(xs) {
            *slot = *v;
        }
        p.r = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
        p
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::R => self.r,
            Var::Theta => self.theta,
            Var::X(i) => self.x[i as usize],
        }
    }
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!("unexpected trailing input in `{src}`")));
        }
        Ok(e)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => p.get(*v),
            Expr::Add(a, c) => a.eval(p) + c.eval(p),
            Expr::Sub(a, c) => a.eval(p) - c.eval(p),
            Expr::Mul(a, c) => {
                let x = a.eval(p);
                if x == 0.0 {
                    return 0.0;
                }
                let y = c.eval(p);
                if y == 0.0 {
                    0.0
                } else {
                    x * y
                }
            }
            Expr::Div(a, c) => {
                let x = a.eval(p);
                if x == 0.0 {
                    return 0.0;
                }
                x / c.eval(p)
            }
            Expr::Pow(a, c) => {
                let base = a.eval(p);
                let ex = c.eval(p);
                if ex == 0.0 {
                    1.0
                } else if ex.fract() == 0.0 && ex.abs() < 64.0 {
                    base.powi(ex as i32)
                } else {
                    base.powf(ex)
                }
            }
            Expr::Neg(a) => -a.eval(p),
            Expr::Call(f, a) => f.apply(a.eval(p)),
            Expr::Min(a, c) => a.eval(p).min(c.eval(p)),
            Expr::Max(a, c) => a.eval(p).max(c.eval(p)),
            Expr::IfGe(a, c, t, e) => {
                if a.eval(p) >= c.eval(p) {
                    t.eval(p)
                } else {
                    e.eval(p)
                }
            }
        }
    }

    /// Evaluate a function of `r` alone.
    pub fn at_r(&self, r: f64) -> f64 {
        self.eval(&Point::radial(r))
    }

    pub fn uses(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Call(_, a) => a.uses(v),
            Expr::Add(a, c)
            | Expr::Sub(a, c)
            | Expr::Mul(a, c)
            | Expr::Div(a, c)
            | Expr::Pow(a, c)
            | Expr::Min(a, c)
            | Expr::Max(a, c) => a.uses(v) || c.uses(v),
            Expr::IfGe(a, c, t, e) => a.uses(v) || c.uses(v) || t.uses(v) || e.uses(v),
        }
    }

    /// Variables referenced anywhere in the expression.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(w) => out.push(*w),
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, c)
            | Expr::Sub(a, c)
            | Expr::Mul(a, c)
            | Expr::Div(a, c)
            | Expr::Pow(a, c)
            | Expr::Min(a, c)
            | Expr::Max(a, c) => {
                a.collect_vars(out);
                c.collect_vars(out);
            }
            Expr::IfGe(a, c, t, e) => {
                for x in [a, c, t, e] {
                    x.collect_vars(out);
                }
            }
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn diff(&self, v: Var) -> Expr {
        self.d(v).simplify()
    }

    fn d(&self, v: Var) -> Expr {
        use Expr::*;
        if !self.uses(v) {
            return Const(0.0);
        }
        match self {
            Const(_) => Const(0.0),
            Var(w) => Const(if *w == v { 1.0 } else { 0.0 }),
            Add(a, c) => Add(b(a.d(v)), b(c.d(v))),
            Sub(a, c) => Sub(b(a.d(v)), b(c.d(v))),
            Neg(a) => Neg(b(a.d(v))),
            Mul(a, c) => Add(
                b(Mul(b(a.d(v)), c.clone())),
                b(Mul(a.clone(), b(c.d(v)))),
            ),
            Div(a, c) => Sub(
                b(Div(b(a.d(v)), c.clone())),
                b(Div(b(Mul(a.clone(), b(c.d(v)))), b(Pow(c.clone(), b(Const(2.0)))))),
            ),
            Pow(a, c) => {
                if let Some(k) = c.as_const() {
                    Mul(
                        b(Mul(b(Const(k)), b(Pow(a.clone(), b(Const(k - 1.0)))))),
                        b(a.d(v)),
                    )
                } else {
                    // a^c (c' ln a + c a'/a)
                    Mul(
                        b(self.clone()),
                        b(Add(
                            b(Mul(b(c.d(v)), b(Call(Func::Log, a.clone())))),
                            b(Div(b(Mul(c.clone(), b(a.d(v)))), a.clone())),
                        )),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.d(v);
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => Div(b(Const(1.0)), a.clone()),
                    Func::Sqrt => Div(b(Const(0.5)), b(self.clone())),
                    Func::Sinh => Call(Func::Cosh, a.clone()),
                    Func::Cosh => Call(Func::Sinh, a.clone()),
                    Func::Tanh => Sub(
                        b(Const(1.0)),
                        b(Pow(b(self.clone()), b(Const(2.0)))),
                    ),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(b(Call(Func::Sin, a.clone()))),
                    Func::Abs => Div(a.clone(), b(self.clone())),
                    // bump'(z) = bump(z) * (-2z / (1 - z^2)^2)
                    Func::Bump => Mul(
                        b(self.clone()),
                        b(Div(
                            b(Mul(b(Const(-2.0)), a.clone())),
                            b(Pow(
                                b(Sub(b(Const(1.0)), b(Pow(a.clone(), b(Const(2.0)))))),
                                b(Const(2.0)),
                            )),
                        )),
                    ),
                };
                Mul(b(outer), b(inner))
            }
            Min(a, c) => IfGe(a.clone(), c.clone(), b(c.d(v)), b(a.d(v))),
            Max(a, c) => IfGe(a.clone(), c.clone(), b(a.d(v)), b(c.d(v))),
            IfGe(a, c, t, e) => IfGe(a.clone(), c.clone(), b(t.d(v)), b(e.d(v))),
        }
    }

    /// Constant folding and identity elimination.
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        match self {
            Const(_) | Var(_) => self.clone(),
            Add(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) => Const(x + y),
                    (Some(x), _) if x == 0.0 => c,
                    (_, Some(y)) if y == 0.0 => a,
                    _ => Add(b(a), b(c)),
                }
            }
            Sub(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) => Const(x - y),
                    (Some(x), _) if x == 0.0 => Neg(b(c)).simplify(),
                    (_, Some(y)) if y == 0.0 => a,
                    _ => Sub(b(a), b(c)),
                }
            }
            Mul(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) => Const(x * y),
                    (Some(x), _) | (_, Some(x)) if x == 0.0 => Const(0.0),
                    (Some(x), _) if x == 1.0 => c,
                    (_, Some(y)) if y == 1.0 => a,
                    (Some(x), _) if x == -1.0 => Neg(b(c)),
                    (_, Some(y)) if y == -1.0 => Neg(b(a)),
                    _ => Mul(b(a), b(c)),
                }
            }
            Div(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) if y != 0.0 => Const(x / y),
                    (Some(x), _) if x == 0.0 => Const(0.0),
                    (_, Some(y)) if y == 1.0 => a,
                    _ => Div(b(a), b(c)),
                }
            }
            Pow(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) => Const(x.powf(y)),
                    (_, Some(y)) if y == 0.0 => Const(1.0),
                    (_, Some(y)) if y == 1.0 => a,
                    _ => Pow(b(a), b(c)),
                }
            }
            Neg(a) => match a.simplify() {
                Const(x) => Const(-x),
                Neg(inner) => *inner,
                s => Neg(b(s)),
            },
            Call(f, a) => {
                let a = a.simplify();
                match a.as_const() {
                    Some(x) => Const(f.apply(x)),
                    None => Call(*f, b(a)),
                }
            }
            Min(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) => Const(x.min(y)),
                    _ => Min(b(a), b(c)),
                }
            }
            Max(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) => Const(x.max(y)),
                    _ => Max(b(a), b(c)),
                }
            }
            IfGe(a, c, t, e) => {
                let (a, c, t, e) = (a.simplify(), c.simplify(), t.simplify(), e.simplify());
                if t == e {
                    return t;
                }
                match (a.as_const(), c.as_const()) {
                    (Some(x), Some(y)) => {
                        if x >= y {
                            t
                        } else {
                            e
                        }
                    }
                    _ => IfGe(b(a), b(c), b(t), b(e)),
                }
            }
        }
    }

    /// Substitute `v := with` everywhere.
    pub fn substitute(&self, v: Var, with: &Expr) -> Expr {
        use Expr::*;
        match self {
            Const(_) => self.clone(),
            Var(w) => {
                if *w == v {
                    with.clone()
                } else {
                    self.clone()
                }
            }
            Add(a, c) => Add(b(a.substitute(v, with)), b(c.substitute(v, with))),
            Sub(a, c) => Sub(b(a.substitute(v, with)), b(c.substitute(v, with))),
            Mul(a, c) => Mul(b(a.substitute(v, with)), b(c.substitute(v, with))),
            Div(a, c) => Div(b(a.substitute(v, with)), b(c.substitute(v, with))),
            Pow(a, c) => Pow(b(a.substitute(v, with)), b(c.substitute(v, with))),
            Min(a, c) => Min(b(a.substitute(v, with)), b(c.substitute(v, with))),
            Max(a, c) => Max(b(a.substitute(v, with)), b(c.substitute(v, with))),
            Neg(a) => Neg(b(a.substitute(v, with))),
            Call(f, a) => Call(*f, b(a.substitute(v, with))),
            IfGe(a, c, t, e) => IfGe(
                b(a.substitute(v, with)),
                b(c.substitute(v, with)),
                b(t.substitute(v, with)),
                b(e.substitute(v, with)),
            ),
        }
    }
}

// Arithmetic builders, handy when composing expressions in code.
impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        Expr::Add(b(self), b(o))
    }
}
impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        Expr::Sub(b(self), b(o))
    }
}
impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        Expr::Mul(b(self), b(o))
    }
}
impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        Expr::Div(b(self), b(o))
    }
}
impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(b(self))
    }
}

impl Expr {
    pub fn pow(self, o: Expr) -> Expr {
        Expr::Pow(b(self), b(o))
    }
    pub fn call(self, f: Func) -> Expr {
        Expr::Call(f, b(self))
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn fmt_num(c: f64) -> String {
    if c == std::f64::consts::PI {
        "pi".into()
    } else if c == std::f64::consts::E {
        "e".into()
    } else {
        // `{:?}` is the shortest representation that round-trips.
        format!("{c:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if prec(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => write!(f, "{}", fmt_num(*c)),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Add(a, c) => {
                wrap(f, a, 1)?;
                write!(f, " + ")?;
                wrap(f, c, 2)
            }
            Expr::Sub(a, c) => {
                wrap(f, a, 1)?;
                write!(f, " - ")?;
                wrap(f, c, 2)
            }
            Expr::Mul(a, c) => {
                wrap(f, a, 2)?;
                write!(f, " * ")?;
                wrap(f, c, 3)
            }
            Expr::Div(a, c) => {
                wrap(f, a, 2)?;
                write!(f, " / ")?;
                wrap(f, c, 3)
            }
            Expr::Pow(a, c) => {
                wrap(f, a, 5)?;
                write!(f, "^")?;
                wrap(f, c, 3)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Min(a, c) => write!(f, "min({a}, {c})"),
            Expr::Max(a, c) => write!(f, "max({a}, {c})"),
            Expr::IfGe(a, c, t, e) => write!(f, "ifge({a}, {c}, {t}, {e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{s}` at offset {start}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{c}` at offset {i}")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} (token {}) in `{}`", self.pos, self.src))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = lhs + self.term()?;
            } else if self.eat_op('-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = lhs * self.unary()?;
            } else if self.eat_op('/') {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                e => -e,
            });
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let ex = self.unary()?;
            return Ok(base.pow(ex));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        if !self.eat_op('(') {
            return Err(self.err("expected `(` after function name"));
        }
        let mut out = vec![self.expr()?];
        while self.eat_op(',') {
            out.push(self.expr()?);
        }
        if !self.eat_op(')') {
            return Err(self.err("expected `)`"));
        }
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat_op(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(f) = Func::from_name(&name) {
                    let mut a = self.args()?;
                    if a.len() != 1 {
                        return Err(self.err(&format!("`{name}` takes one argument")));
                    }
                    return Ok(Expr::Call(f, b(a.pop().unwrap())));
                }
                if name == "min" || name == "max" {
                    let a = self.args()?;
                    if a.len() < 2 {
                        return Err(self.err(&format!("`{name}` takes at least two arguments")));
                    }
                    let mut it = a.into_iter();
                    let first = it.next().unwrap();
                    return Ok(it.fold(first, |acc, x| {
                        if name == "min" {
                            Expr::Min(b(acc), b(x))
                        } else {
                            Expr::Max(b(acc), b(x))
                        }
                    }));
                }
                let var = match name.as_str() {
                    "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => return Ok(Expr::Const(std::f64::consts::E)),
                    "r" => Var::R,
                    "theta" => Var::Theta,
                    "x" => Var::X(0),
                    "y" => Var::X(1),
                    "z" => Var::X(2),
                    s if s.len() >= 2 && s.starts_with('x') => {
                        let idx: u8 = s[1..]
                            .parse()
                            .map_err(|_| self.err(&format!("unknown identifier `{s}`")))?;
                        if !(1..=8).contains(&idx) {
                            return Err(self.err(&format!("coordinate `{s}` out of range x1..x8")));
                        }
                        Var::X(idx - 1)
                    }
                    s => return Err(self.err(&format!("unknown identifier `{s}`"))),
                };
                Ok(Expr::Var(var))
            }
            _ => Err(self.err("expected a number, variable, function or `(`")),
        }
    }
}

/// Leading-order behaviour of an expression as `r -> +inf`:
/// `sign * C * exp(e2 r^2 + e1 r) * r^p * (ln r)^l` with `C > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub e2: f64,
    pub e1: f64,
    pub p: f64,
    pub l: f64,
    /// +1 or -1 when the eventual sign is known, 0 when it oscillates or is unknown.
    pub sign: i8,
}

impl std::fmt::Display for Growth {
    /// Leading-order form with trivial factors omitted, e.g. `exp(-2 r) r^-1`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        let exp = match (self.e2 != 0.0, self.e1 != 0.0) {
            (true, true) => Some(format!("{} r^2 + {} r", self.e2, self.e1)),
            (true, false) => Some(format!("{} r^2", self.e2)),
            (false, true) => Some(format!("{} r", self.e1)),
            _ => None,
        };
        if let Some(e) = exp {
            parts.push(format!("exp({e})"));
        }
        if self.p != 0.0 {
            parts.push(format!("r^{}", self.p));
        }
        if self.l != 0.0 {
            parts.push(format!("(log r)^{}", self.l));
        }
        if parts.is_empty() {
            parts.push("const".into());
        }
        write!(f, "{}", parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Asym {
    /// Identically zero for all sufficiently large `r`.
    EventuallyZero,
    Like(Growth),
}

impl Growth {
    fn order(&self) -> [f64; 4] {
        [self.e2, self.e1, self.p, self.l]
    }

    fn cmp_order(&self, o: &Growth) -> std::cmp::Ordering {
        let (a, c) = (self.order(), o.order());
        for i in 0..4 {
            if (a[i] - c[i]).abs() > 1e-12 {
                return a[i].partial_cmp(&c[i]).unwrap();
            }
        }
        std::cmp::Ordering::Equal
    }

    /// Tends to zero.
    pub fn decays(&self) -> bool {
        self.cmp_order(&UNIT) == std::cmp::Ordering::Less
    }

    /// Bounded on the tail (decays or tends to a finite limit).
    pub fn bounded(&self) -> bool {
        self.cmp_order(&UNIT) != std::cmp::Ordering::Greater
    }

    fn with_sign(mut self, s: i8) -> Self {
        self.sign = s;
        self
    }
}

const R_VAR: Var = Var::R;

const UNIT: Growth = Growth { e2: 0.0, e1: 0.0, p: 0.0, l: 0.0, sign: 1 };

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

impl Asym {
    pub fn is_bounded(&self) -> bool {
        match self {
            Asym::EventuallyZero => true,
            Asym::Like(g) => g.bounded(),
        }
    }

    pub fn decays(&self) -> bool {
        match self {
            Asym::EventuallyZero => true,
            Asym::Like(g) => g.decays(),
        }
    }
}

/// Asymptotic analysis in `r`; `None` when the structure is not recognised
/// (cancellations, oscillation in the exponent, dependence on other variables).
pub fn asymptotic(e: &Expr) -> Option<Asym> {
    use Expr::*;
    let like = |g: Growth| Some(Asym::Like(g));
    match e {
        Const(c) => {
            if *c == 0.0 {
                Some(Asym::EventuallyZero)
            } else {
                like(UNIT.with_sign(sgn(*c)))
            }
        }
        Var(R_VAR) => like(Growth { p: 1.0, ..UNIT }),
        Var(_) => None,
        Neg(a) => Some(match asymptotic(a)? {
            Asym::EventuallyZero => Asym::EventuallyZero,
            Asym::Like(g) => Asym::Like(g.with_sign(-g.sign)),
        }),
        Add(a, c) => add_asym(asymptotic(a)?, asymptotic(c)?),
        Sub(a, c) => add_asym(asymptotic(a)?, asymptotic(&Neg(c.clone()))?),
        Mul(a, c) => {
            let (x, y) = (asymptotic(a)?, asymptotic(c)?);
            match (x, y) {
                (Asym::EventuallyZero, _) | (_, Asym::EventuallyZero) => Some(Asym::EventuallyZero),
                (Asym::Like(g), Asym::Like(h)) => like(Growth {
                    e2: g.e2 + h.e2,
                    e1: g.e1 + h.e1,
                    p: g.p + h.p,
                    l: g.l + h.l,
                    sign: g.sign * h.sign,
                }),
            }
        }
        Div(a, c) => {
            let (x, y) = (asymptotic(a)?, asymptotic(c)?);
            match (x, y) {
                (_, Asym::EventuallyZero) => None,
                (Asym::EventuallyZero, _) => Some(Asym::EventuallyZero),
                (Asym::Like(g), Asym::Like(h)) => like(Growth {
                    e2: g.e2 - h.e2,
                    e1: g.e1 - h.e1,
                    p: g.p - h.p,
                    l: g.l - h.l,
                    sign: g.sign * h.sign,
                }),
            }
        }
        Pow(a, c) => {
            if let Some(k) = c.as_const() {
                match asymptotic(a)? {
                    Asym::EventuallyZero => {
                        if k > 0.0 {
                            Some(Asym::EventuallyZero)
                        } else {
                            None
                        }
                    }
                    Asym::Like(g) => {
                        let sign = if g.sign == 1 {
                            1
                        } else if k.fract() == 0.0 && g.sign == -1 {
                            if (k as i64) % 2 == 0 {
                                1
                            } else {
                                -1
                            }
                        } else {
                            return None;
                        };
                        like(Growth { e2: g.e2 * k, e1: g.e1 * k, p: g.p * k, l: g.l * k, sign })
                    }
                }
            } else {
                // a^c = exp(c ln a)
                asymptotic(&Call(Func::Exp, b(Mul(c.clone(), b(Call(Func::Log, a.clone()))))))
            }
        }
        Call(f, a) => call_asym(*f, a),
        Min(a, c) | Max(a, c) => {
            let is_max = matches!(e, Max(..));
            let (x, y) = (asymptotic(a)?, asymptotic(c)?);
            let gx = match x {
                Asym::EventuallyZero => Growth { sign: 0, ..UNIT },
                Asym::Like(g) => g,
            };
            let gy = match y {
                Asym::EventuallyZero => Growth { sign: 0, ..UNIT },
                Asym::Like(g) => g,
            };
            // Only handle two eventually-positive (or zero) arguments.
            let zx = matches!(x, Asym::EventuallyZero);
            let zy = matches!(y, Asym::EventuallyZero);
            if (gx.sign < 0 && !zx) || (gy.sign < 0 && !zy) || (gx.sign == 0 && !zx) || (gy.sign == 0 && !zy) {
                return None;
            }
            if zx && zy {
                return Some(Asym::EventuallyZero);
            }
            if is_max {
                if zx {
                    return Some(y);
                }
                if zy {
                    return Some(x);
                }
                match gx.cmp_order(&gy) {
                    std::cmp::Ordering::Less => Some(y),
                    _ => Some(x),
                }
            } else {
                if zx || zy {
                    return Some(Asym::EventuallyZero);
                }
                match gx.cmp_order(&gy) {
                    std::cmp::Ordering::Greater => Some(y),
                    _ => Some(x),
                }
            }
        }
        IfGe(..) => None,
    }
}

fn add_asym(x: Asym, y: Asym) -> Option<Asym> {
    match (x, y) {
        (Asym::EventuallyZero, o) | (o, Asym::EventuallyZero) => Some(o),
        (Asym::Like(g), Asym::Like(h)) => match g.cmp_order(&h) {
            std::cmp::Ordering::Greater => Some(Asym::Like(g)),
            std::cmp::Ordering::Less => Some(Asym::Like(h)),
            std::cmp::Ordering::Equal => {
                if g.sign == h.sign && g.sign != 0 {
                    Some(Asym::Like(g))
                } else if !g.bounded() {
                    None
                } else {
                    // Possible cancellation, but still bounded of this order.
                    Some(Asym::Like(g.with_sign(0)))
                }
            }
        },
    }
}

/// Decompose `e = a2 r^2 + a1 r + c ln r + O(1)`; used for `exp(e)`.
fn log_poly(e: &Expr) -> Option<(f64, f64, f64)> {
    use Expr::*;
    match e {
        Const(_) => Some((0.0, 0.0, 0.0)),
        Var(R_VAR) => Some((0.0, 1.0, 0.0)),
        Add(a, c) => {
            let (x, y) = (log_poly(a)?, log_poly(c)?);
            Some((x.0 + y.0, x.1 + y.1, x.2 + y.2))
        }
        Sub(a, c) => {
            let (x, y) = (log_poly(a)?, log_poly(c)?);
            Some((x.0 - y.0, x.1 - y.1, x.2 - y.2))
        }
        Neg(a) => {
            let x = log_poly(a)?;
            Some((-x.0, -x.1, -x.2))
        }
        Mul(a, c) if a.as_const().is_some() || c.as_const().is_some() => {
            let (k, other) = match a.as_const() {
                Some(k) => (k, c),
                None => (c.as_const().unwrap(), a),
            };
            let x = log_poly(other)?;
            Some((k * x.0, k * x.1, k * x.2))
        }
        Div(a, c) if c.as_const().is_some() => {
            let k = c.as_const().unwrap();
            let x = log_poly(a)?;
            Some((x.0 / k, x.1 / k, x.2 / k))
        }
        Pow(a, c) if matches!(**a, Var(R_VAR)) && c.as_const() == Some(2.0) => Some((1.0, 0.0, 0.0)),
        Mul(a, c) if matches!(**a, Var(R_VAR)) && matches!(**c, Var(R_VAR)) => Some((1.0, 0.0, 0.0)),
        Call(Func::Log, a) => match asymptotic(a)? {
            Asym::Like(g) if g.sign == 1 => {
                if g.l != 0.0 {
                    None
                } else {
                    Some((g.e2, g.e1, g.p))
                }
            }
            _ => None,
        },
        _ => match asymptotic(e)? {
            Asym::EventuallyZero => Some((0.0, 0.0, 0.0)),
            Asym::Like(g) if g.bounded() => Some((0.0, 0.0, 0.0)),
            _ => None,
        },
    }
}

fn call_asym(f: Func, a: &Expr) -> Option<Asym> {
    let like = |g: Growth| Some(Asym::Like(g));
    match f {
        Func::Exp => {
            let (a2, a1, c) = log_poly(a)?;
            like(Growth { e2: a2, e1: a1, p: c, l: 0.0, sign: 1 })
        }
        Func::Log => match asymptotic(a)? {
            Asym::Like(g) if g.sign == 1 => {
                if g.e2 != 0.0 {
                    like(Growth { p: 2.0, sign: sgn(g.e2), ..UNIT })
                } else if g.e1 != 0.0 {
                    like(Growth { p: 1.0, sign: sgn(g.e1), ..UNIT })
                } else if g.p != 0.0 {
                    like(Growth { l: 1.0, sign: sgn(g.p), ..UNIT })
                } else if g.l == 0.0 {
                    like(Growth { sign: 0, ..UNIT })
                } else {
                    None
                }
            }
            _ => None,
        },
        Func::Sqrt => asymptotic(&Expr::Pow(b(a.clone()), b(Expr::Const(0.5)))),
        Func::Sinh | Func::Tanh => match asymptotic(a)? {
            Asym::EventuallyZero => Some(Asym::EventuallyZero),
            Asym::Like(g) if g.decays() => Some(Asym::Like(g)),
            Asym::Like(g) if g.bounded() => like(UNIT.with_sign(g.sign)),
            Asym::Like(g) => {
                if f == Func::Tanh {
                    return like(UNIT.with_sign(g.sign));
                }
                if g.sign == 0 {
                    return None;
                }
                let (a2, a1, c) = log_poly(a)?;
                let s = g.sign as f64;
                like(Growth { e2: s * a2, e1: s * a1, p: s * c, l: 0.0, sign: g.sign })
            }
        },
        Func::Cosh => match asymptotic(a)? {
            Asym::EventuallyZero => like(UNIT),
            Asym::Like(g) if g.bounded() => like(UNIT),
            Asym::Like(g) => {
                if g.sign == 0 {
                    return None;
                }
                let (a2, a1, c) = log_poly(a)?;
                let s = g.sign as f64;
                like(Growth { e2: s * a2, e1: s * a1, p: s * c, l: 0.0, sign: 1 })
            }
        },
        Func::Sin | Func::Cos => match asymptotic(a)? {
            Asym::EventuallyZero if f == Func::Sin => Some(Asym::EventuallyZero),
            Asym::EventuallyZero => like(UNIT),
            Asym::Like(g) if g.decays() && f == Func::Sin => Some(Asym::Like(g)),
            Asym::Like(g) if g.decays() => like(UNIT),
            _ => like(Growth { sign: 0, ..UNIT }),
        },
        Func::Abs => Some(match asymptotic(a)? {
            Asym::EventuallyZero => Asym::EventuallyZero,
            Asym::Like(g) => Asym::Like(g.with_sign(1)),
        }),
        Func::Bump => match asymptotic(a)? {
            Asym::EventuallyZero => like(Growth { sign: 1, ..UNIT }),
            Asym::Like(g) if !g.bounded() => Some(Asym::EventuallyZero),
            _ => None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, r: f64) -> f64 {
        Expr::parse(s).unwrap().at_r(r)
    }

    #[test]
    fn parses_and_evaluates() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("-r^2", 3.0), -9.0);
        assert!((ev("exp(-r)", 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((ev("sinh(2*abs(0.5))", 0.0) - 1f64.sinh()).abs() < 1e-15);
        assert_eq!(ev("max(1, r, 3)", 2.0), 3.0);
        assert_eq!(ev("min(1, r)", 0.5), 0.5);
        assert!((ev("log(2/(1+x^2+y^2))", 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(ev("bump(r)", 1.0), 0.0);
        assert!((ev("bump(0)", 0.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((ev("1.5e-3", 0.0) - 1.5e-3).abs() < 1e-18);
        assert!((ev("pi", 0.0) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(r)").is_err());
        assert!(Expr::parse("r $ 2").is_err());
        assert!(Expr::parse("x9").is_err());
        assert!(Expr::parse("(r").is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "exp(-r)",
            "0.3 * bump((r - 5) / 3)",
            "log(2 / (1 + x^2 + y^2))",
            "r^(1 - 0.5) - 2^-1",
            "-(r - 1) * -2",
            "max(sinh(2 * abs(r)), 1e-300)",
            "2^3^2",
            "r / (r / 2)",
        ] {
            let e = Expr::parse(s).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{s} -> {e}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for s in [
            "exp(-r) * sin(3*r)",
            "r^2.5 / (1 + log(r))",
            "sqrt(1 + r^2) * tanh(r)",
            "bump((r - 3)/2)",
            "cosh(r)^-1",
            "r^r",
            "abs(r - 2.2)",
            "max(r, 4 - r)",
        ] {
            let e = Expr::parse(s).unwrap();
            let d = e.diff(Var::R);
            for &r in &[1.3, 2.4, 2.9, 3.7] {
                let h = 1e-5;
                let fd = (e.at_r(r + h) - e.at_r(r - h)) / (2.0 * h);
                let an = d.at_r(r);
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{s} at {r}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn bump_derivative_vanishes_off_support() {
        let d = Expr::parse("bump(r - 3)").unwrap().diff(Var::R);
        for r in [1.0, 2.0, 4.0, 5.0] {
            assert_eq!(d.at_r(r), 0.0);
        }
        let d2 = d.diff(Var::R);
        assert_eq!(d2.at_r(2.0), 0.0);
        assert!(d2.at_r(3.0).is_finite());
    }

    fn growth(s: &str) -> Asym {
        asymptotic(&Expr::parse(s).unwrap()).unwrap()
    }

    #[test]
    fn asymptotics() {
        assert_eq!(growth("bump(r - 5)"), Asym::EventuallyZero);
        assert!(growth("exp(-r)").decays());
        assert!(growth("r^-2").decays());
        assert!(!growth("r^2").is_bounded());
        assert!(growth("1/r^2 + 4").is_bounded());
        assert!(!growth("4*r^2").is_bounded());
        assert!(growth("sinh(2*exp(-r))").decays());
        match growth("exp(r^2)") {
            Asym::Like(g) => assert_eq!(g.e2, 1.0),
            _ => panic!(),
        }
        match growth("r * exp(-2*r) * log(r)") {
            Asym::Like(g) => {
                assert_eq!((g.e1, g.p, g.l, g.sign), (-2.0, 1.0, 1.0, 1));
            }
            _ => panic!(),
        }
        assert!(asymptotic(&Expr::parse("r - r").unwrap()).is_none());
        assert!(asymptotic(&Expr::parse("x + r").unwrap()).is_none());
    }

    #[test]
    fn growth_display_omits_trivial_factors() {
        assert_eq!(UNIT.to_string(), "const");
        let g = Growth { e2: 0.0, e1: -2.0, p: -1.0, l: 0.0, sign: 1 };
        assert_eq!(g.to_string(), "exp(-2 r) r^-1");
        let g = Growth { e2: 1.0, e1: 0.5, p: 0.0, l: 2.0, sign: 1 };
        assert_eq!(g.to_string(), "exp(1 r^2 + 0.5 r) (log r)^2");
    }
}
