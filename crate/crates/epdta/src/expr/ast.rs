//! Syntax trees for the model expression language: boolean and arithmetic
//! expressions, clock constraints, guards, assignments and probability
//! expressions.
//!
//! Parentheses are not represented in the trees; `Display` re-inserts them
//! where precedence requires, so `parse(print(e)) == e` for every tree the
//! parser produces.

use std::fmt;

/// Comparison operators allowed between arithmetic expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Le,
    Lt,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
        })
    }
}

/// Relations allowed in clock constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClockRel {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
}

impl ClockRel {
    pub fn holds(self, left: i128, right: i128) -> bool {
        match self {
            ClockRel::Lt => left < right,
            ClockRel::Gt => left > right,
            ClockRel::Le => left <= right,
            ClockRel::Ge => left >= right,
            ClockRel::Eq => left == right,
        }
    }
}

impl fmt::Display for ClockRel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockRel::Lt => "<",
            ClockRel::Gt => ">",
            ClockRel::Le => "<=",
            ClockRel::Ge => ">=",
            ClockRel::Eq => "=",
        })
    }
}

/// Binary operators of arithmetic expressions. Division truncates toward
/// zero; the remainder takes the dividend's sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ABinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl ABinOp {
    fn prec(self) -> u8 {
        match self {
            ABinOp::Add | ABinOp::Sub => 1,
            ABinOp::Mul | ABinOp::Div | ABinOp::Rem => 2,
        }
    }
}

impl fmt::Display for ABinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ABinOp::Add => "+",
            ABinOp::Sub => "-",
            ABinOp::Mul => "*",
            ABinOp::Div => "/",
            ABinOp::Rem => "%",
        })
    }
}

/// Arithmetic expression over integer literals, integer variables and table
/// applications.
#[derive(Debug, Clone, PartialEq)]
pub enum AExpr {
    Int(i64),
    Var(String),
    Apply(String, Vec<AExpr>),
    Bin(ABinOp, Box<AExpr>, Box<AExpr>),
}

impl AExpr {
    fn prec(&self) -> u8 {
        match self {
            AExpr::Bin(op, _, _) => op.prec(),
            _ => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.prec() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            AExpr::Int(z) => write!(f, "{z}")?,
            AExpr::Var(v) => f.write_str(v)?,
            AExpr::Apply(name, args) => {
                f.write_str(name)?;
                f.write_str("(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                f.write_str(")")?;
            }
            AExpr::Bin(op, l, r) => {
                l.fmt_prec(f, op.prec())?;
                write!(f, " {op} ")?;
                r.fmt_prec(f, op.prec() + 1)?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for AExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Boolean expression over `tt`/`ff`, boolean variables, negation,
/// conjunction and arithmetic comparisons.
#[derive(Debug, Clone, PartialEq)]
pub enum BExpr {
    True,
    False,
    Var(String),
    Not(Box<BExpr>),
    And(Box<BExpr>, Box<BExpr>),
    Cmp(CmpOp, AExpr, AExpr),
}

impl BExpr {
    fn prec(&self) -> u8 {
        match self {
            BExpr::And(_, _) => 1,
            BExpr::Cmp(_, _, _) => 2,
            BExpr::Not(_) => 3,
            _ => 4,
        }
    }

    pub(crate) fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.prec() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            BExpr::True => f.write_str("tt")?,
            BExpr::False => f.write_str("ff")?,
            BExpr::Var(v) => f.write_str(v)?,
            BExpr::Not(e) => {
                f.write_str("~")?;
                e.fmt_prec(f, 3)?;
            }
            BExpr::And(l, r) => {
                l.fmt_prec(f, 1)?;
                f.write_str(" & ")?;
                r.fmt_prec(f, 2)?;
            }
            BExpr::Cmp(op, l, r) => {
                write!(f, "{l} {op} {r}")?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for BExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Constraint over clock values: `true`, `false`, `x # c`, `x - y # c` and
/// conjunctions, with `c` a natural number.
#[derive(Debug, Clone, PartialEq)]
pub enum ClockConstraint {
    True,
    False,
    Atom {
        clock: String,
        rel: ClockRel,
        bound: u64,
    },
    Diff {
        left: String,
        right: String,
        rel: ClockRel,
        bound: u64,
    },
    And(Box<ClockConstraint>, Box<ClockConstraint>),
}

impl fmt::Display for ClockConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockConstraint::True => f.write_str("true"),
            ClockConstraint::False => f.write_str("false"),
            ClockConstraint::Atom { clock, rel, bound } => write!(f, "{clock} {rel} {bound}"),
            ClockConstraint::Diff {
                left,
                right,
                rel,
                bound,
            } => write!(f, "{left} - {right} {rel} {bound}"),
            ClockConstraint::And(l, r) => write!(f, "{l} & {r}"),
        }
    }
}

/// Guard of an edge: a conjunction of clock constraints and boolean
/// expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Clock(ClockConstraint),
    Bool(BExpr),
    And(Box<Guard>, Box<Guard>),
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Clock(c) => write!(f, "{c}"),
            // A conjunction inside a single boolean component keeps its
            // parentheses so reparsing yields the same split into conjuncts.
            Guard::Bool(b) => b.fmt_prec(f, 2),
            Guard::And(l, r) => write!(f, "{l} & {r}"),
        }
    }
}

/// One variable update; the right-hand side is read in the pre-state.
#[derive(Debug, Clone, PartialEq)]
pub enum SingleAssign {
    Bool(String, BExpr),
    Int(String, AExpr),
}

impl SingleAssign {
    pub fn target(&self) -> &str {
        match self {
            SingleAssign::Bool(v, _) => v,
            SingleAssign::Int(v, _) => v,
        }
    }
}

impl fmt::Display for SingleAssign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SingleAssign::Bool(v, e) => write!(f, "{v} <- {e}"),
            SingleAssign::Int(v, e) => write!(f, "{v} <- {e}"),
        }
    }
}

/// An ordered list of single assignments, applied simultaneously: every
/// right-hand side is evaluated against the original interpretation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment(pub Vec<SingleAssign>);

impl Assignment {
    pub fn empty() -> Self {
        Assignment(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Binary operators of probability expressions; all four evaluate on
/// rationals (`/` is exact division, not integer division).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PBinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl PBinOp {
    fn prec(self) -> u8 {
        match self {
            PBinOp::Add | PBinOp::Sub => 1,
            PBinOp::Mul | PBinOp::Div => 2,
        }
    }
}

impl fmt::Display for PBinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PBinOp::Add => "+",
            PBinOp::Sub => "-",
            PBinOp::Mul => "*",
            PBinOp::Div => "/",
        })
    }
}

/// Probability expression attached to an edge outcome.
///
/// Unlike [`AExpr`], arithmetic here is on rationals: `7/10` is `0.7`.
/// Integer variables, clocks and table applications may appear, so a
/// probability can depend on the current state (e.g. a per-month table
/// lookup). Table arguments are rounded to the nearest integer.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbExpr {
    /// Decimal literal; printed with a decimal point to stay distinct from
    /// integer literals when reparsed.
    Num(f64),
    Int(i64),
    Var(String),
    Clock(String),
    Apply(String, Vec<ProbExpr>),
    Bin(PBinOp, Box<ProbExpr>, Box<ProbExpr>),
}

impl ProbExpr {
    fn prec(&self) -> u8 {
        match self {
            ProbExpr::Bin(op, _, _) => op.prec(),
            _ => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.prec() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            ProbExpr::Num(x) => {
                if x.fract() == 0.0 && x.is_finite() {
                    write!(f, "{x:.1}")?;
                } else {
                    write!(f, "{x}")?;
                }
            }
            ProbExpr::Int(z) => write!(f, "{z}")?,
            ProbExpr::Var(v) | ProbExpr::Clock(v) => f.write_str(v)?,
            ProbExpr::Apply(name, args) => {
                f.write_str(name)?;
                f.write_str("(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                f.write_str(")")?;
            }
            ProbExpr::Bin(op, l, r) => {
                l.fmt_prec(f, op.prec())?;
                write!(f, " {op} ")?;
                r.fmt_prec(f, op.prec() + 1)?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for ProbExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
