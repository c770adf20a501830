//! Budgeted tree-walking interpreter.

use super::ast::*;
use super::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SandboxLimits {
    /// AST node visits allowed per call.
    pub max_ops_per_call: u64,
    /// Any intermediate with a larger magnitude aborts evaluation.
    pub max_abs_value: f64,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits {
            max_ops_per_call: 10_000,
            max_abs_value: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Vec(Vec<f64>),
}

impl Value {
    fn describe(&self) -> String {
        match self {
            Value::Num(_) => "a scalar".into(),
            Value::Vec(v) => format!("a vector of length {}", v.len()),
        }
    }
}

struct Machine<'a> {
    obs: &'a [f64],
    frame: Vec<Option<Value>>,
    ops: u64,
    limits: &'a SandboxLimits,
}

enum Flow {
    Next,
    Return(Value),
}

/// Runs `ast` on `obs`, returning the clamped action.
pub fn evaluate(
    ast: &Ast,
    obs: &[f64],
    action_dim: usize,
    limits: &SandboxLimits,
) -> Result<Vec<f64>, EvalError> {
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::ObservationNonFinite);
    }
    let mut m = Machine {
        obs,
        frame: vec![None; ast.slots],
        ops: 0,
        limits,
    };
    let value = match m.block(&ast.body)? {
        Flow::Return(v) => v,
        Flow::Next => return Err(EvalError::NoReturn),
    };
    let raw = match (value, action_dim) {
        (Value::Num(x), 1) => vec![x],
        (Value::Vec(v), n) if v.len() == n => v,
        (other, n) => {
            return Err(EvalError::ActionArity {
                expected: n,
                got: other.describe(),
            })
        }
    };
    Ok(raw.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect())
}

impl Machine<'_> {
    fn tick(&mut self) -> Result<(), EvalError> {
        self.ops += 1;
        if self.ops > self.limits.max_ops_per_call {
            return Err(EvalError::BudgetExceeded(self.limits.max_ops_per_call));
        }
        Ok(())
    }

    fn check(&self, x: f64) -> Result<f64, EvalError> {
        if !x.is_finite() || x.abs() > self.limits.max_abs_value {
            return Err(EvalError::NonFinite(x));
        }
        Ok(x)
    }

    fn check_value(&self, v: Value) -> Result<Value, EvalError> {
        match &v {
            Value::Num(x) => {
                self.check(*x)?;
            }
            Value::Vec(xs) => {
                for x in xs {
                    self.check(*x)?;
                }
            }
        }
        Ok(v)
    }

    fn block(&mut self, block: &[Stmt]) -> Result<Flow, EvalError> {
        for stmt in block {
            if let Flow::Return(v) = self.stmt(stmt)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, stmt: &Stmt) -> Result<Flow, EvalError> {
        self.tick()?;
        match stmt {
            Stmt::Pass => Ok(Flow::Next),
            Stmt::Return(e) => Ok(Flow::Return(self.expr(e)?)),
            Stmt::Assign { target, value } => {
                let v = self.expr(value)?;
                match target {
                    Target::Var(l) => self.frame[l.slot] = Some(v),
                    Target::Elem(l, i) => {
                        let x = match v {
                            Value::Num(x) => x,
                            Value::Vec(_) => {
                                return Err(EvalError::Type(format!(
                                    "cannot store a vector into element {}[{i}]",
                                    l.name
                                )))
                            }
                        };
                        match self.frame[l.slot].as_mut() {
                            Some(Value::Vec(xs)) => {
                                let len = xs.len();
                                *xs.get_mut(*i)
                                    .ok_or(EvalError::IndexOutOfRange { index: *i, len })? = x;
                            }
                            Some(Value::Num(_)) => {
                                return Err(EvalError::Type(format!(
                                    "'{}' is a scalar and cannot be indexed",
                                    l.name
                                )))
                            }
                            None => return Err(EvalError::Unbound(l.name.clone())),
                        }
                    }
                }
                Ok(Flow::Next)
            }
            Stmt::If { branches, orelse } => {
                for (cond, body) in branches {
                    let c = self.expr(cond)?;
                    if truthy(&c)? {
                        return self.block(body);
                    }
                }
                match orelse {
                    Some(body) => self.block(body),
                    None => Ok(Flow::Next),
                }
            }
        }
    }

    fn scalar(&mut self, e: &Expr) -> Result<f64, EvalError> {
        match self.expr(e)? {
            Value::Num(x) => Ok(x),
            Value::Vec(v) => Err(EvalError::Type(format!(
                "expected a scalar, found a vector of length {}",
                v.len()
            ))),
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<Value, EvalError> {
        self.tick()?;
        let v = match e {
            Expr::Num(x) => Value::Num(self.check(*x)?),
            Expr::Obs(i) => Value::Num(self.check(self.obs[*i])?),
            Expr::Var(l) => self.frame[l.slot]
                .clone()
                .ok_or_else(|| EvalError::Unbound(l.name.clone()))?,
            Expr::Index(l, i) => match &self.frame[l.slot] {
                Some(Value::Vec(xs)) => Value::Num(
                    *xs.get(*i)
                        .ok_or(EvalError::IndexOutOfRange { index: *i, len: xs.len() })?,
                ),
                Some(Value::Num(_)) => {
                    return Err(EvalError::Type(format!(
                        "'{}' is a scalar and cannot be indexed",
                        l.name
                    )))
                }
                None => return Err(EvalError::Unbound(l.name.clone())),
            },
            Expr::Vector(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.scalar(item)?);
                }
                Value::Vec(out)
            }
            Expr::Unary(op, inner) => {
                let v = self.expr(inner)?;
                match op {
                    UnaryOp::Pos => v,
                    UnaryOp::Neg => map1(v, |x| -x),
                }
            }
            Expr::Binary(op, a, b) => {
                let a = self.expr(a)?;
                let b = self.expr(b)?;
                let f = match op {
                    BinOp::Add => |x: f64, y: f64| x + y,
                    BinOp::Sub => |x, y| x - y,
                    BinOp::Mul => |x, y| x * y,
                    BinOp::Div => |x, y| x / y,
                };
                self.check_value(map2(a, b, f)?)?
            }
            Expr::Compare(first, rest) => {
                let mut lhs = self.scalar(first)?;
                let mut result = true;
                for (op, rhs) in rest {
                    let r = self.scalar(rhs)?;
                    if !op.apply(lhs, r) {
                        result = false;
                        break;
                    }
                    lhs = r;
                }
                Value::Num(if result { 1.0 } else { 0.0 })
            }
            Expr::Bool(op, a, b) => {
                // Python semantics: the deciding operand is the result.
                let a = self.expr(a)?;
                let short = match op {
                    BoolOp::And => !truthy(&a)?,
                    BoolOp::Or => truthy(&a)?,
                };
                if short {
                    a
                } else {
                    self.expr(b)?
                }
            }
            Expr::Not(inner) => {
                let v = self.expr(inner)?;
                Value::Num(if truthy(&v)? { 0.0 } else { 1.0 })
            }
            Expr::Call(f, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.expr(a)?);
                }
                self.check_value(call(*f, vals)?)?
            }
        };
        Ok(v)
    }
}

fn truthy(v: &Value) -> Result<bool, EvalError> {
    match v {
        Value::Num(x) => Ok(*x != 0.0),
        Value::Vec(_) => Err(EvalError::Type(
            "the truth value of a vector is ambiguous".into(),
        )),
    }
}

fn map1(v: Value, f: impl Fn(f64) -> f64) -> Value {
    match v {
        Value::Num(x) => Value::Num(f(x)),
        Value::Vec(mut xs) => {
            xs.iter_mut().for_each(|x| *x = f(*x));
            Value::Vec(xs)
        }
    }
}

/// Elementwise binary operation with scalar broadcasting.
fn map2(a: Value, b: Value, f: impl Fn(f64, f64) -> f64) -> Result<Value, EvalError> {
    Ok(match (a, b) {
        (Value::Num(x), Value::Num(y)) => Value::Num(f(x, y)),
        (Value::Vec(mut xs), Value::Num(y)) => {
            xs.iter_mut().for_each(|x| *x = f(*x, y));
            Value::Vec(xs)
        }
        (Value::Num(x), Value::Vec(mut ys)) => {
            ys.iter_mut().for_each(|y| *y = f(x, *y));
            Value::Vec(ys)
        }
        (Value::Vec(mut xs), Value::Vec(ys)) => {
            if xs.len() != ys.len() {
                return Err(EvalError::Type(format!(
                    "vector length mismatch ({} vs {})",
                    xs.len(),
                    ys.len()
                )));
            }
            xs.iter_mut().zip(ys).for_each(|(x, y)| *x = f(*x, y));
            Value::Vec(xs)
        }
    })
}

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn call(f: Intrinsic, mut args: Vec<Value>) -> Result<Value, EvalError> {
    let unary = |args: &mut Vec<Value>, g: fn(f64) -> f64| map1(args.remove(0), g);
    Ok(match f {
        Intrinsic::Abs => unary(&mut args, f64::abs),
        Intrinsic::Sign => unary(&mut args, sign),
        Intrinsic::Sin => unary(&mut args, f64::sin),
        Intrinsic::Cos => unary(&mut args, f64::cos),
        Intrinsic::Tan => unary(&mut args, f64::tan),
        Intrinsic::Sqrt => unary(&mut args, f64::sqrt),
        Intrinsic::Exp => unary(&mut args, f64::exp),
        Intrinsic::Tanh => unary(&mut args, f64::tanh),
        Intrinsic::Floor => unary(&mut args, f64::floor),
        Intrinsic::Atan2 => {
            let x = args.pop().unwrap_or(Value::Num(0.0));
            let y = args.pop().unwrap_or(Value::Num(0.0));
            map2(y, x, f64::atan2)?
        }
        Intrinsic::Min | Intrinsic::Max => {
            let pick = if f == Intrinsic::Min {
                |a: f64, b: f64| if b < a { b } else { a }
            } else {
                |a: f64, b: f64| if b > a { b } else { a }
            };
            let mut it = args.into_iter();
            let mut acc = it.next().unwrap_or(Value::Num(0.0));
            for v in it {
                acc = map2(acc, v, pick)?;
            }
            acc
        }
        Intrinsic::Clip => {
            let hi = args.pop().unwrap_or(Value::Num(0.0));
            let lo = args.pop().unwrap_or(Value::Num(0.0));
            let x = args.pop().unwrap_or(Value::Num(0.0));
            let lowered = map2(x, lo, |x, lo| if x < lo { lo } else { x })?;
            map2(lowered, hi, |x, hi| if x > hi { hi } else { x })?
        }
    })
}
