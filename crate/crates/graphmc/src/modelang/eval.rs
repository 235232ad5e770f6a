//! Expression evaluation over name environments.
//!
//! Two modes exist: strict evaluation (functionals, scaling rules, schedules)
//! where domain violations are errors, and density evaluation where they mean
//! "outside the support" and collapse to −∞.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{builtin_logdensity, BuiltinDensity};
use crate::modelang::ast::{BinOp, Expr};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(v) => Ok(*v),
            Value::Vector(_) => Err(Error::Evaluation(
                "expected a scalar, got a vector".into(),
            )),
        }
    }

    pub fn flatten(self) -> Vec<f64> {
        match self {
            Value::Scalar(v) => vec![v],
            Value::Vector(v) => v,
        }
    }
}

pub trait Env {
    fn lookup(&self, name: &str) -> Option<Value>;
}

/// Environment with a single bound variable (schedules in `n`, etc).
pub struct SingleVarEnv<'a> {
    name: &'a str,
    value: f64,
}

impl<'a> SingleVarEnv<'a> {
    pub fn new(name: &'a str, value: f64) -> Self {
        Self { name, value }
    }
}

impl Env for SingleVarEnv<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        (name == self.name).then_some(Value::Scalar(self.value))
    }
}

#[derive(Default)]
pub struct MapEnv {
    map: HashMap<String, Value>,
}

impl MapEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, v: f64) -> &mut Self {
        self.map.insert(name.into(), Value::Scalar(v));
        self
    }

    pub fn set_vec(&mut self, name: &str, v: Vec<f64>) -> &mut Self {
        self.map.insert(name.into(), Value::Vector(v));
        self
    }
}

impl Env for MapEnv {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.map.get(name).cloned()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Strict,
    Density,
}

/// Strict evaluation; any NaN result is a domain error.
pub fn eval(expr: &Expr, env: &dyn Env) -> Result<Value> {
    eval_mode(expr, env, Mode::Strict)
}

pub fn eval_scalar(expr: &Expr, env: &dyn Env) -> Result<f64> {
    eval(expr, env)?.as_scalar()
}

/// Density-context evaluation: returns a scalar log-density where NaN and
/// invalid distribution parameters collapse to −∞.
pub fn eval_density(expr: &Expr, env: &dyn Env) -> Result<f64> {
    match eval_mode(expr, env, Mode::Density) {
        Ok(v) => {
            let s = v.as_scalar()?;
            Ok(if s.is_nan() { f64::NEG_INFINITY } else { s })
        }
        Err(Error::InvalidParameter { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

fn eval_mode(expr: &Expr, env: &dyn Env, mode: Mode) -> Result<Value> {
    match expr {
        Expr::Num(v) => Ok(Value::Scalar(*v)),
        Expr::Ident(name) => env
            .lookup(name)
            .ok_or_else(|| Error::UnboundIdentifier(name.clone())),
        Expr::Index(name, i) => {
            let v = env
                .lookup(name)
                .ok_or_else(|| Error::UnboundIdentifier(name.clone()))?;
            let items = v.flatten();
            if *i == 0 || *i > items.len() {
                return Err(Error::Evaluation(format!(
                    "index {i} out of range for `{name}` (length {})",
                    items.len()
                )));
            }
            Ok(Value::Scalar(items[i - 1]))
        }
        Expr::Neg(a) => {
            let v = eval_mode(a, env, mode)?.as_scalar()?;
            Ok(Value::Scalar(-v))
        }
        Expr::Binary(op, a, b) => {
            let a = eval_mode(a, env, mode)?.as_scalar()?;
            let b = eval_mode(b, env, mode)?.as_scalar()?;
            let r = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
                BinOp::Lt => (a < b) as u8 as f64,
                BinOp::Le => (a <= b) as u8 as f64,
                BinOp::Gt => (a > b) as u8 as f64,
                BinOp::Ge => (a >= b) as u8 as f64,
                BinOp::Eq => (a == b) as u8 as f64,
                BinOp::Ne => (a != b) as u8 as f64,
            };
            check_nan(r, mode, || format!("{a} {} {b}", op.symbol()))
        }
        Expr::If { cond, then, els } => {
            let c = eval_mode(cond, env, mode)?.as_scalar()?;
            // untaken branch stays unevaluated
            if c != 0.0 {
                eval_mode(then, env, mode)
            } else {
                eval_mode(els, env, mode)
            }
        }
        Expr::Vector(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.extend(eval_mode(item, env, mode)?.flatten());
            }
            Ok(Value::Vector(out))
        }
        Expr::Call(name, args) => eval_call(name, args, env, mode),
    }
}

fn eval_call(name: &str, args: &[Expr], env: &dyn Env, mode: Mode) -> Result<Value> {
    if let Some(which) = BuiltinDensity::from_name(name) {
        let vals: Vec<f64> = args
            .iter()
            .map(|a| eval_mode(a, env, mode)?.as_scalar())
            .collect::<Result<_>>()?;
        if vals.len() != which.arity() + 1 {
            return Err(Error::BadArity {
                name: name.into(),
                expected: which.arity() + 1,
                got: vals.len(),
            });
        }
        return builtin_logdensity(which, vals[0], &vals[1..]).map(Value::Scalar);
    }

    let expect = |n: usize| -> Result<Vec<f64>> {
        if args.len() != n {
            return Err(Error::BadArity {
                name: name.into(),
                expected: n,
                got: args.len(),
            });
        }
        args.iter()
            .map(|a| eval_mode(a, env, mode)?.as_scalar())
            .collect()
    };

    let r = match name {
        "exp" => expect(1)?[0].exp(),
        "log" => {
            let x = expect(1)?[0];
            if x < 0.0 && mode == Mode::Strict {
                return Err(Error::Evaluation(format!("log of negative number {x}")));
            }
            x.ln() // -inf at 0, NaN below (density mode folds it to -inf)
        }
        "sqrt" => {
            let x = expect(1)?[0];
            if x < 0.0 && mode == Mode::Strict {
                return Err(Error::Evaluation(format!("sqrt of negative number {x}")));
            }
            x.sqrt()
        }
        "abs" => expect(1)?[0].abs(),
        "pow" => {
            let v = expect(2)?;
            v[0].powf(v[1])
        }
        "min" | "max" => {
            if args.len() < 2 {
                return Err(Error::BadArity {
                    name: name.into(),
                    expected: 2,
                    got: args.len(),
                });
            }
            let vals: Vec<f64> = args
                .iter()
                .map(|a| eval_mode(a, env, mode)?.as_scalar())
                .collect::<Result<_>>()?;
            if name == "min" {
                vals.into_iter().fold(f64::INFINITY, f64::min)
            } else {
                vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
            }
        }
        _ => {
            return Err(Error::Evaluation(format!("unknown function `{name}`")));
        }
    };
    check_nan(r, mode, || format!("call to {name}"))
}

fn check_nan(r: f64, mode: Mode, what: impl Fn() -> String) -> Result<Value> {
    if r.is_nan() && mode == Mode::Strict {
        return Err(Error::Evaluation(format!("{} produced NaN", what())));
    }
    Ok(Value::Scalar(r))
}
