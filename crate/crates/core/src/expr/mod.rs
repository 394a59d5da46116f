//! A small language of smooth expressions in `x1..xn`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'x' index | func '(' sum ')' | '(' sum ')'
//! func    := sin | cos | exp | log | sqrt
//! ```
//!
//! Values are computed in plain IEEE doubles and gradients in forward mode
//! through [`DualNumber`].

mod dual;
mod parser;

use std::fmt;

pub use dual::DualNumber;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier '{name}' at position {position}")]
    UnknownIdentifier { position: usize, name: String },
    #[error("variable x{index} at position {position} is out of range (n = {n})")]
    VariableOutOfRange {
        position: usize,
        index: usize,
        n: usize,
    },
    #[error("domain error in '{subexpr}': {message}")]
    Domain { subexpr: String, message: String },
    #[error("point has {got} coordinates, expression expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree. Variables are stored 0-based and printed 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

/// Parses `text` as an expression over `x1..xn`.
pub fn parse(text: &str, n: usize) -> Result<Expr, ExprError> {
    parser::parse(text, n)
}

fn domain(e: &Expr, message: impl Into<String>) -> ExprError {
    ExprError::Domain {
        subexpr: e.to_string(),
        message: message.into(),
    }
}

/// How `a^b` is evaluated, decided from the exponent.
enum PowKind {
    Integer(i32),
    Real(f64),
    Variable,
}

fn pow_kind(exp: &Expr) -> PowKind {
    if exp.has_variables() {
        return PowKind::Variable;
    }
    // constant subtree; the empty point is enough to evaluate it
    let p = exp.eval_unchecked(&[]).unwrap_or(f64::NAN);
    if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
        PowKind::Integer(p as i32)
    } else {
        PowKind::Real(p)
    }
}

impl Expr {
    /// Largest 1-based variable index used, 0 when constant.
    pub fn max_variable(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            Expr::Const(_) => 0,
            Expr::Neg(a) | Expr::Func(_, a) => a.max_variable(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_variable().max(b.max_variable())
            }
        }
    }

    pub fn has_variables(&self) -> bool {
        self.max_variable() > 0
    }

    /// Evaluates at `x`; `x` must hold at least [`Expr::max_variable`] entries.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        if x.len() < self.max_variable() {
            return Err(ExprError::DimensionMismatch {
                expected: self.max_variable(),
                got: x.len(),
            });
        }
        self.eval_unchecked(x)
    }

    fn eval_unchecked(&self, x: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Var(i) => x[*i],
            Expr::Const(c) => *c,
            Expr::Neg(a) => -a.eval_unchecked(x)?,
            Expr::Add(a, b) => a.eval_unchecked(x)? + b.eval_unchecked(x)?,
            Expr::Sub(a, b) => a.eval_unchecked(x)? - b.eval_unchecked(x)?,
            Expr::Mul(a, b) => a.eval_unchecked(x)? * b.eval_unchecked(x)?,
            Expr::Div(a, b) => {
                let den = b.eval_unchecked(x)?;
                if den == 0.0 {
                    return Err(domain(self, "division by zero"));
                }
                a.eval_unchecked(x)? / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval_unchecked(x)?;
                match pow_kind(b) {
                    PowKind::Integer(p) => {
                        if base == 0.0 && p < 0 {
                            return Err(domain(self, "negative power of zero"));
                        }
                        base.powi(p)
                    }
                    PowKind::Real(p) => {
                        if base <= 0.0 {
                            return Err(domain(self, "non-integer power needs a positive base"));
                        }
                        base.powf(p)
                    }
                    PowKind::Variable => {
                        if base <= 0.0 {
                            return Err(domain(self, "variable exponent needs a positive base"));
                        }
                        base.powf(b.eval_unchecked(x)?)
                    }
                }
            }
            Expr::Func(f, a) => {
                let v = a.eval_unchecked(x)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(domain(self, "log of a non-positive number"));
                        }
                        v.ln()
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(domain(self, "sqrt of a negative number"));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    /// Value and exact gradient at `x` (length `x.len()`).
    pub fn eval_dual(&self, x: &[f64]) -> Result<DualNumber, ExprError> {
        if x.len() < self.max_variable() {
            return Err(ExprError::DimensionMismatch {
                expected: self.max_variable(),
                got: x.len(),
            });
        }
        self.dual(x)
    }

    /// Gradient at `x`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        Ok(self.eval_dual(x)?.partials)
    }

    fn dual(&self, x: &[f64]) -> Result<DualNumber, ExprError> {
        let n = x.len();
        Ok(match self {
            Expr::Var(i) => DualNumber::variable(x[*i], *i, n),
            Expr::Const(c) => DualNumber::constant(*c, n),
            Expr::Neg(a) => -&a.dual(x)?,
            Expr::Add(a, b) => &a.dual(x)? + &b.dual(x)?,
            Expr::Sub(a, b) => &a.dual(x)? - &b.dual(x)?,
            Expr::Mul(a, b) => &a.dual(x)? * &b.dual(x)?,
            Expr::Div(a, b) => {
                let den = b.dual(x)?;
                if den.value == 0.0 {
                    return Err(domain(self, "division by zero"));
                }
                &a.dual(x)? / &den
            }
            Expr::Pow(a, b) => {
                let base = a.dual(x)?;
                let v = base.value;
                match pow_kind(b) {
                    PowKind::Integer(p) => {
                        if v == 0.0 && p < 0 {
                            return Err(domain(self, "negative power of zero"));
                        }
                        let d = if p == 0 { 0.0 } else { p as f64 * v.powi(p - 1) };
                        base.chain(v.powi(p), d)
                    }
                    PowKind::Real(p) => {
                        if v <= 0.0 {
                            return Err(domain(self, "non-integer power needs a positive base"));
                        }
                        base.chain(v.powf(p), p * v.powf(p - 1.0))
                    }
                    PowKind::Variable => {
                        if v <= 0.0 {
                            return Err(domain(self, "variable exponent needs a positive base"));
                        }
                        let e = b.dual(x)?;
                        let value = v.powf(e.value);
                        let ln = v.ln();
                        DualNumber {
                            value,
                            partials: base
                                .partials
                                .iter()
                                .zip(&e.partials)
                                .map(|(db, de)| value * (de * ln + e.value * db / v))
                                .collect(),
                        }
                    }
                }
            }
            Expr::Func(f, a) => {
                let arg = a.dual(x)?;
                let v = arg.value;
                match f {
                    Func::Sin => arg.chain(v.sin(), v.cos()),
                    Func::Cos => arg.chain(v.cos(), -v.sin()),
                    Func::Exp => {
                        let e = v.exp();
                        arg.chain(e, e)
                    }
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(domain(self, "log of a non-positive number"));
                        }
                        arg.chain(v.ln(), 1.0 / v)
                    }
                    Func::Sqrt => {
                        if v <= 0.0 {
                            return Err(domain(self, "sqrt is not differentiable at non-positive arguments"));
                        }
                        let s = v.sqrt();
                        arg.chain(s, 0.5 / s)
                    }
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Expr::Var(_) | Expr::Const(_) | Expr::Func(..) => 5,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let own = self.precedence();
        match self {
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "-{:?}", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_operand(f, a, a.precedence() < 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    Expr::Mul(..) => "*",
                    _ => "/",
                };
                write_operand(f, a, a.precedence() < own)?;
                write!(f, "{op}")?;
                write_operand(f, b, b.precedence() <= own)
            }
            Expr::Pow(a, b) => {
                write_operand(f, a, a.precedence() <= own)?;
                write!(f, "^")?;
                write_operand(f, b, b.precedence() < 3)
            }
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
