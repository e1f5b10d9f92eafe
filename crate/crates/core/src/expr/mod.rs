//! Scalar expressions over named variables with forward-mode derivatives.
//!
//! Variables are `x1..xn` (chart coordinates), `v` (speed, the extra
//! coordinate of `M × ℝ⁺`), `w` (argument of one-variable functions such as
//! `h` or a gauge `ρ`) and `u1..uk` (hypersurface parameters). Functions:
//! `sin cos exp log sqrt tanh` (`ln` is accepted as an alias of `log`),
//! plus the constant `pi`.

mod dual;
mod parser;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use dual::{derivative, Dual, Scalar};
pub use parser::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// Chart coordinate, zero-based (`x1` is `X(0)`).
    X(usize),
    /// Hypersurface parameter, zero-based (`u1` is `U(0)`).
    U(usize),
    V,
    W,
}

impl Var {
    pub fn from_name(name: &str) -> Option<Var> {
        match name {
            "v" => Some(Var::V),
            "w" => Some(Var::W),
            _ => {
                let (head, digits) = name.split_at(1);
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
                    return None;
                }
                let k: usize = digits.parse().ok()?;
                match head {
                    "x" => Some(Var::X(k - 1)),
                    "u" => Some(Var::U(k - 1)),
                    _ => None,
                }
            }
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
            Var::V => f.write_str("v"),
            Var::W => f.write_str("w"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(x) if *x < 0.0 || x.is_sign_negative() => 0,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn const_value(&self) -> Option<f64> {
        match self {
            Expr::Num(x) => Some(*x),
            Expr::Var(_) => None,
            Expr::Neg(a) => a.const_value().map(|x| -x),
            Expr::Add(a, b) => Some(a.const_value()? + b.const_value()?),
            Expr::Sub(a, b) => Some(a.const_value()? - b.const_value()?),
            Expr::Mul(a, b) => Some(a.const_value()? * b.const_value()?),
            Expr::Div(a, b) => Some(a.const_value()? / b.const_value()?),
            Expr::Pow(a, b) => Some(a.const_value()?.powf(b.const_value()?)),
            Expr::Call(..) => None,
        }
    }

    fn map_vars(&self, with: &dyn Fn(Var) -> Option<Expr>) -> Expr {
        let sub = |e: &Expr| Box::new(e.map_vars(with));
        match self {
            Expr::Var(v) => with(*v).unwrap_or_else(|| self.clone()),
            Expr::Num(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(sub(a)),
            Expr::Call(f, a) => Expr::Call(*f, sub(a)),
            Expr::Add(a, b) => Expr::Add(sub(a), sub(b)),
            Expr::Sub(a, b) => Expr::Sub(sub(a), sub(b)),
            Expr::Mul(a, b) => Expr::Mul(sub(a), sub(b)),
            Expr::Div(a, b) => Expr::Div(sub(a), sub(b)),
            Expr::Pow(a, b) => Expr::Pow(sub(a), sub(b)),
        }
    }

    fn eval<S: Scalar>(&self, env: &Env<'_, S>) -> Result<S, EvalError> {
        let domain = |what: &'static str, node: &Expr, at: f64| EvalError::Domain {
            what,
            subexpr: node.to_string(),
            at,
        };
        Ok(match self {
            Expr::Num(x) => S::cst(*x),
            Expr::Var(v) => env.get(*v)?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let den = b.eval(env)?;
                if den.re() == 0.0 {
                    return Err(domain("division by zero", self, 0.0));
                }
                a.eval(env)? / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval(env)?;
                match b.const_value() {
                    Some(c) => {
                        let r = base.re();
                        if r < 0.0 && c.fract() != 0.0 {
                            return Err(domain("negative base with fractional exponent", self, r));
                        }
                        if r == 0.0 && c < 0.0 {
                            return Err(domain("division by zero", self, r));
                        }
                        base.powf(c)
                    }
                    None => {
                        let r = base.re();
                        if r <= 0.0 {
                            return Err(domain("non-positive base with variable exponent", self, r));
                        }
                        (b.eval(env)? * base.ln()).exp()
                    }
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(env)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Tanh => x.tanh(),
                    Func::Log => {
                        if x.re() <= 0.0 {
                            return Err(domain("log of non-positive value", self, x.re()));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x.re() < 0.0 {
                            return Err(domain("sqrt of negative value", self, x.re()));
                        }
                        x.sqrt()
                    }
                }
            }
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `min` is the precedence the child must reach to be printed bare.
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                child(f, a, 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                child(f, a, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                child(f, b, 2)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                child(f, a, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                child(f, b, 3)
            }
            Expr::Pow(a, b) => {
                child(f, a, 5)?;
                f.write_str("^")?;
                child(f, b, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{what} in `{subexpr}` (argument {at})")]
    Domain { what: &'static str, subexpr: String, at: f64 },
    #[error("variable `{0}` is not bound")]
    Unbound(Var),
    #[error("non-finite result from `{0}`")]
    NonFinite(String),
}

/// Variable bindings for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a, S> {
    pub x: &'a [S],
    pub u: &'a [S],
    pub v: Option<S>,
    pub w: Option<S>,
}

impl<'a, S: Scalar> Env<'a, S> {
    /// A point `(x, v)` of `M × ℝ⁺`.
    pub fn phase(x: &'a [S], v: S) -> Self {
        Env { x, u: &[], v: Some(v), w: None }
    }

    pub fn point(x: &'a [S]) -> Self {
        Env { x, u: &[], v: None, w: None }
    }

    pub fn unary(w: S) -> Self {
        Env { x: &[], u: &[], v: None, w: Some(w) }
    }

    pub fn params(u: &'a [S]) -> Self {
        Env { x: &[], u, v: None, w: None }
    }

    fn get(&self, var: Var) -> Result<S, EvalError> {
        match var {
            Var::X(i) => self.x.get(i).copied(),
            Var::U(i) => self.u.get(i).copied(),
            Var::V => self.v,
            Var::W => self.w,
        }
        .ok_or(EvalError::Unbound(var))
    }
}

/// A parsed expression together with its free-variable set.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    ast: Expr,
    free: BTreeSet<Var>,
}

impl Expression {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Ok(Self::from_ast(parser::parse_expr(text)?))
    }

    pub fn from_ast(ast: Expr) -> Self {
        let mut free = BTreeSet::new();
        ast.collect_vars(&mut free);
        Expression { ast, free }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_ast(Expr::Num(c))
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn free_vars(&self) -> &BTreeSet<Var> {
        &self.free
    }

    /// Replace every occurrence of `var` by `with` (function composition).
    pub fn substitute(&self, var: Var, with: &Expression) -> Expression {
        Self::from_ast(self.ast.map_vars(&|v| (v == var).then(|| with.ast.clone())))
    }

    /// Simultaneously replace `x1..xn` by `xs` (change of chart coordinates).
    pub fn compose_x(&self, xs: &[Expression]) -> Expression {
        Self::from_ast(self.ast.map_vars(&|v| match v {
            Var::X(i) => xs.get(i).map(|e| e.ast.clone()),
            _ => None,
        }))
    }

    /// Checks that every free variable is one of `allowed`.
    pub fn check_vars(&self, allowed: impl Fn(Var) -> bool) -> Result<(), Var> {
        match self.free.iter().find(|v| !allowed(**v)) {
            Some(v) => Err(*v),
            None => Ok(()),
        }
    }

    pub fn eval<S: Scalar>(&self, env: &Env<'_, S>) -> Result<S, EvalError> {
        let y = self.ast.eval(env)?;
        if !y.is_finite() {
            return Err(EvalError::NonFinite(self.ast.to_string()));
        }
        Ok(y)
    }

    /// Value at `(x, v)`.
    pub fn at_phase<S: Scalar>(&self, x: &[S], v: S) -> Result<S, EvalError> {
        self.eval(&Env::phase(x, v))
    }

    /// Value as a function of `w` alone.
    pub fn at_w<S: Scalar>(&self, w: S) -> Result<S, EvalError> {
        self.eval(&Env::unary(w))
    }

    /// Value and exact first partials with respect to the variables in `wrt`.
    pub fn eval_with_partials(
        &self,
        bindings: &HashMap<Var, f64>,
        wrt: &[Var],
    ) -> Result<(f64, Vec<f64>), EvalError> {
        if let Some(v) = self.free.iter().chain(wrt).find(|v| !bindings.contains_key(v)) {
            return Err(EvalError::Unbound(*v));
        }
        let slots = |pick: fn(Var) -> Option<usize>| {
            bindings.keys().filter_map(|v| pick(*v)).map(|i| i + 1).max().unwrap_or(0)
        };
        let dim_x = slots(|v| if let Var::X(i) = v { Some(i) } else { None });
        let dim_u = slots(|v| if let Var::U(i) = v { Some(i) } else { None });
        let lift = |seed: Option<Var>| {
            let make = |var: Var| {
                let re = bindings.get(&var).copied().unwrap_or(f64::NAN);
                Dual::new(re, if Some(var) == seed { 1.0 } else { 0.0 })
            };
            let x: Vec<Dual<f64>> = (0..dim_x).map(|i| make(Var::X(i))).collect();
            let u: Vec<Dual<f64>> = (0..dim_u).map(|i| make(Var::U(i))).collect();
            let v = bindings.contains_key(&Var::V).then(|| make(Var::V));
            let w = bindings.contains_key(&Var::W).then(|| make(Var::W));
            (x, u, v, w)
        };
        let (x, u, v, w) = lift(None);
        let xr: Vec<f64> = x.iter().map(|d| d.re).collect();
        let ur: Vec<f64> = u.iter().map(|d| d.re).collect();
        let value = self.eval(&Env { x: &xr, u: &ur, v: v.map(|d| d.re), w: w.map(|d| d.re) })?;
        let mut partials = Vec::with_capacity(wrt.len());
        for var in wrt {
            let (x, u, v, w) = lift(Some(*var));
            partials.push(self.eval(&Env { x: &x, u: &u, v, w })?.eps);
        }
        Ok((value, partials))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

impl std::str::FromStr for Expression {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        Expression::parse(s)
    }
}

#[cfg(test)]
mod tests;
