//! Evaluation of expressions against an interpretation and a clock valuation.
//!
//! Table entries are rationals. They flow through `+`, `-` and `*` exactly;
//! an operand of `/` or `%` and any value demanded as an integer (a final
//! arithmetic result, an assignment to an integer variable, a table argument)
//! is rounded to the nearest integer first, with ties away from zero. So
//! `f(2) * 10` with `f(2) = 0.73` evaluates to `7`, not `10`.

use super::ast::*;
use super::decls::{ClockValuation, Declarations, Interpretation, Sym};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division or remainder by zero")]
    DivisionByZero,
    #[error("table `{table}` applied outside its domain: ({args:?})")]
    TableDomain { table: String, args: Vec<i64> },
    #[error("value {value} exceeds the exactly representable integer range")]
    IntOverflow { value: f64 },
    #[error("assignment drives `{var}` to {value}, outside its range [{lo}, {hi}]")]
    RangeViolation {
        var: String,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("unknown name `{name}`")]
    UnknownName { name: String },
    #[error("`{name}` is a {actual}, expected a {expected}")]
    Kind {
        name: String,
        actual: &'static str,
        expected: &'static str,
    },
}

pub type EResult<T> = Result<T, EvalError>;

/// Largest magnitude at which every integer is exactly representable in f64.
const EXACT_INT_BOUND: f64 = 9_007_199_254_740_992.0; // 2^53

/// Round to the nearest integer, ties away from zero.
fn round_to_int(x: f64) -> EResult<i64> {
    if !x.is_finite() || x.abs() > EXACT_INT_BOUND {
        return Err(EvalError::IntOverflow { value: x });
    }
    Ok(x.round() as i64)
}

fn int_var(iota: &Interpretation, decls: &Declarations, name: &str) -> EResult<i64> {
    match decls.sym(name) {
        Some(Sym::Int(i)) => Ok(iota.ints[i]),
        Some(other) => Err(EvalError::Kind {
            name: name.to_string(),
            actual: other.kind(),
            expected: "integer variable",
        }),
        None => Err(EvalError::UnknownName {
            name: name.to_string(),
        }),
    }
}

fn bool_var(iota: &Interpretation, decls: &Declarations, name: &str) -> EResult<bool> {
    match decls.sym(name) {
        Some(Sym::Bool(i)) => Ok(iota.bools[i]),
        Some(other) => Err(EvalError::Kind {
            name: name.to_string(),
            actual: other.kind(),
            expected: "boolean variable",
        }),
        None => Err(EvalError::UnknownName {
            name: name.to_string(),
        }),
    }
}

fn table_apply(decls: &Declarations, name: &str, args: &[i64]) -> EResult<f64> {
    match decls.sym(name) {
        Some(Sym::Table(ti)) => {
            decls.tables()[ti]
                .lookup(args)
                .ok_or_else(|| EvalError::TableDomain {
                    table: name.to_string(),
                    args: args.to_vec(),
                })
        }
        Some(other) => Err(EvalError::Kind {
            name: name.to_string(),
            actual: other.kind(),
            expected: "table",
        }),
        None => Err(EvalError::UnknownName {
            name: name.to_string(),
        }),
    }
}

/// Numeric value of an arithmetic expression: integers stay exact, table
/// values keep their rational part until an integer is demanded.
fn eval_num(expr: &AExpr, iota: &Interpretation, decls: &Declarations) -> EResult<f64> {
    match expr {
        AExpr::Int(z) => Ok(*z as f64),
        AExpr::Var(v) => Ok(int_var(iota, decls, v)? as f64),
        AExpr::Apply(name, args) => {
            let vals = args
                .iter()
                .map(|a| eval_int(a, iota, decls))
                .collect::<EResult<Vec<_>>>()?;
            table_apply(decls, name, &vals)
        }
        AExpr::Bin(op, l, r) => {
            let lv = eval_num(l, iota, decls)?;
            let rv = eval_num(r, iota, decls)?;
            match op {
                ABinOp::Add => Ok(lv + rv),
                ABinOp::Sub => Ok(lv - rv),
                ABinOp::Mul => Ok(lv * rv),
                ABinOp::Div => {
                    let (li, ri) = (round_to_int(lv)?, round_to_int(rv)?);
                    if ri == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Ok((li / ri) as f64)
                }
                ABinOp::Rem => {
                    let (li, ri) = (round_to_int(lv)?, round_to_int(rv)?);
                    if ri == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Ok((li % ri) as f64)
                }
            }
        }
    }
}

/// Integer value of an arithmetic expression.
pub fn eval_int(expr: &AExpr, iota: &Interpretation, decls: &Declarations) -> EResult<i64> {
    round_to_int(eval_num(expr, iota, decls)?)
}

/// Boolean value of a boolean expression.
pub fn eval_bool(expr: &BExpr, iota: &Interpretation, decls: &Declarations) -> EResult<bool> {
    match expr {
        BExpr::True => Ok(true),
        BExpr::False => Ok(false),
        BExpr::Var(v) => bool_var(iota, decls, v),
        BExpr::Not(e) => Ok(!eval_bool(e, iota, decls)?),
        BExpr::And(l, r) => Ok(eval_bool(l, iota, decls)? && eval_bool(r, iota, decls)?),
        BExpr::Cmp(op, l, r) => {
            let lv = eval_num(l, iota, decls)?;
            let rv = eval_num(r, iota, decls)?;
            Ok(match op {
                CmpOp::Eq => lv == rv,
                CmpOp::Le => lv <= rv,
                CmpOp::Lt => lv < rv,
            })
        }
    }
}

fn clock_value(nu: &ClockValuation, decls: &Declarations, name: &str) -> EResult<u64> {
    match decls.sym(name) {
        Some(Sym::Clock(i)) => Ok(nu.0[i]),
        Some(other) => Err(EvalError::Kind {
            name: name.to_string(),
            actual: other.kind(),
            expected: "clock",
        }),
        None => Err(EvalError::UnknownName {
            name: name.to_string(),
        }),
    }
}

/// `ν ⊨ ψ`: the clock valuation satisfies the constraint.
pub fn clock_satisfies(
    cc: &ClockConstraint,
    nu: &ClockValuation,
    decls: &Declarations,
) -> EResult<bool> {
    match cc {
        ClockConstraint::True => Ok(true),
        ClockConstraint::False => Ok(false),
        ClockConstraint::Atom { clock, rel, bound } => {
            let v = clock_value(nu, decls, clock)?;
            Ok(rel.holds(v as i128, *bound as i128))
        }
        ClockConstraint::Diff {
            left,
            right,
            rel,
            bound,
        } => {
            let l = clock_value(nu, decls, left)? as i128;
            let r = clock_value(nu, decls, right)? as i128;
            Ok(rel.holds(l - r, *bound as i128))
        }
        ClockConstraint::And(l, r) => {
            Ok(clock_satisfies(l, nu, decls)? && clock_satisfies(r, nu, decls)?)
        }
    }
}

/// `ι, ν ⊨ g`: every clock conjunct holds under `ν` and every boolean
/// conjunct evaluates to `tt` under `ι`.
pub fn satisfies(
    g: &Guard,
    iota: &Interpretation,
    nu: &ClockValuation,
    decls: &Declarations,
) -> EResult<bool> {
    match g {
        Guard::Clock(cc) => clock_satisfies(cc, nu, decls),
        Guard::Bool(b) => eval_bool(b, iota, decls),
        Guard::And(l, r) => Ok(satisfies(l, iota, nu, decls)? && satisfies(r, iota, nu, decls)?),
    }
}

/// `A(ι, η)`: a new interpretation in which every assigned variable carries
/// its new value. All right-hand sides are evaluated against the original
/// `ι` (simultaneous semantics), so `a <- b, b <- a` swaps.
pub fn apply_assignment(
    eta: &Assignment,
    iota: &Interpretation,
    decls: &Declarations,
) -> EResult<Interpretation> {
    enum Update {
        Bool(usize, bool),
        Int(usize, i64),
    }
    let mut updates = Vec::with_capacity(eta.0.len());
    for item in &eta.0 {
        match item {
            SingleAssign::Bool(var, e) => {
                let v = eval_bool(e, iota, decls)?;
                match decls.sym(var) {
                    Some(Sym::Bool(i)) => updates.push(Update::Bool(i, v)),
                    Some(other) => {
                        return Err(EvalError::Kind {
                            name: var.clone(),
                            actual: other.kind(),
                            expected: "boolean variable",
                        })
                    }
                    None => return Err(EvalError::UnknownName { name: var.clone() }),
                }
            }
            SingleAssign::Int(var, e) => {
                let v = eval_int(e, iota, decls)?;
                match decls.sym(var) {
                    Some(Sym::Int(i)) => {
                        let d = &decls.ints()[i];
                        if v < d.lo || v > d.hi {
                            return Err(EvalError::RangeViolation {
                                var: var.clone(),
                                value: v,
                                lo: d.lo,
                                hi: d.hi,
                            });
                        }
                        updates.push(Update::Int(i, v));
                    }
                    Some(other) => {
                        return Err(EvalError::Kind {
                            name: var.clone(),
                            actual: other.kind(),
                            expected: "integer variable",
                        })
                    }
                    None => return Err(EvalError::UnknownName { name: var.clone() }),
                }
            }
        }
    }
    let mut out = iota.clone();
    for u in updates {
        match u {
            Update::Bool(i, v) => out.bools[i] = v,
            Update::Int(i, v) => out.ints[i] = v,
        }
    }
    Ok(out)
}

/// Value of a probability expression: rational arithmetic throughout, with
/// table arguments rounded to integers.
pub fn eval_prob(
    p: &ProbExpr,
    iota: &Interpretation,
    nu: &ClockValuation,
    decls: &Declarations,
) -> EResult<f64> {
    match p {
        ProbExpr::Num(x) => Ok(*x),
        ProbExpr::Int(z) => Ok(*z as f64),
        ProbExpr::Var(v) => Ok(int_var(iota, decls, v)? as f64),
        ProbExpr::Clock(c) => Ok(clock_value(nu, decls, c)? as f64),
        ProbExpr::Apply(name, args) => {
            let vals = args
                .iter()
                .map(|a| eval_prob(a, iota, nu, decls).and_then(round_to_int))
                .collect::<EResult<Vec<_>>>()?;
            table_apply(decls, name, &vals)
        }
        ProbExpr::Bin(op, l, r) => {
            let lv = eval_prob(l, iota, nu, decls)?;
            let rv = eval_prob(r, iota, nu, decls)?;
            match op {
                PBinOp::Add => Ok(lv + rv),
                PBinOp::Sub => Ok(lv - rv),
                PBinOp::Mul => Ok(lv * rv),
                PBinOp::Div => {
                    if rv == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Ok(lv / rv)
                }
            }
        }
    }
}

impl ProbExpr {
    /// Folds to a constant when no variable or clock occurs and all table
    /// applications resolve; used for load-time distribution checks.
    pub fn constant_value(&self, decls: &Declarations) -> Option<f64> {
        match self {
            ProbExpr::Num(x) => Some(*x),
            ProbExpr::Int(z) => Some(*z as f64),
            ProbExpr::Var(_) | ProbExpr::Clock(_) => None,
            ProbExpr::Apply(name, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.constant_value(decls).and_then(|v| round_to_int(v).ok()))
                    .collect::<Option<Vec<_>>>()?;
                match decls.sym(name) {
                    Some(Sym::Table(ti)) => decls.tables()[ti].lookup(&vals),
                    _ => None,
                }
            }
            ProbExpr::Bin(op, l, r) => {
                let lv = l.constant_value(decls)?;
                let rv = r.constant_value(decls)?;
                match op {
                    PBinOp::Add => Some(lv + rv),
                    PBinOp::Sub => Some(lv - rv),
                    PBinOp::Mul => Some(lv * rv),
                    PBinOp::Div => (rv != 0.0).then(|| lv / rv),
                }
            }
        }
    }
}

