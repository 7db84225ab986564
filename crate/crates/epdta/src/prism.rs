//! Export to PRISM MDP syntax, plus a mini-reader that re-imports the
//! emitted subset so the translation can be verified by graph comparison
//! against [`crate::semantics::enumerate`] without running PRISM.
//!
//! The encoding realizes the four semantic rules command by command:
//!
//! - one Stop command guarded `t = MAX_TIME`;
//! - per location, one Time command guarded by the invariant shifted to
//!   `ν + 1` and the negation of the location's urgent guards;
//! - one command per edge; non-urgent commands also conjoin the negated
//!   urgent guards.
//!
//! Locations become one bounded integer `loc` (the mapping is written in a
//! header comment); tables expand to nested conditional expressions, rounded
//! to integers where the expression language demands an integer. Outcome
//! action names cannot ride on PRISM's per-command labels (one command may
//! mix actions), so they are emitted as comments; every location also gets
//! a PRISM `label` for use in properties.

use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::automaton::{save, Epdta};
use crate::expr::{
    ABinOp, AExpr, Assignment, BExpr, ClockConstraint, ClockRel, CmpOp, Guard, PBinOp, ProbExpr,
    SingleAssign, Sym,
};

/// Words PRISM reserves; colliding identifiers get a documented prefix.
const PRISM_RESERVED: &[&str] = &[
    "A", "bool", "clock", "const", "ctmc", "C", "double", "dtmc", "E", "endinit", "endinvariant",
    "endmodule", "endrewards", "endsystem", "false", "filter", "formula", "func", "F", "global",
    "G", "init", "invariant", "I", "int", "label", "max", "mdp", "min", "module", "X",
    "nondeterministic", "P", "Pmax", "Pmin", "prob", "probabilistic", "pta", "rate", "rewards",
    "R", "Rmax", "Rmin", "S", "stochastic", "system", "true", "U", "W", "loc", "MAX_TIME",
];

fn prism_name(name: &str) -> String {
    if PRISM_RESERVED.contains(&name) {
        format!("v_{name}")
    } else {
        name.to_string()
    }
}

fn fmt_real(v: f64) -> String {
    if v.fract() == 0.0 && v.is_finite() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

// ---------------------------------------------------------------------------
// Expression translation
// ---------------------------------------------------------------------------

/// Translated arithmetic expression: PRISM text plus enough typing to decide
/// where rounding is needed and whether `floor`/`mod` shortcuts are sound.
struct Tx {
    text: String,
    /// Integer-typed in PRISM (no unrounded table value inside).
    exact_int: bool,
    /// Conservative value bounds when known.
    bounds: Option<(f64, f64)>,
}

/// `round(x)` with ties away from zero, as a PRISM expression.
fn round_text(x: &str) -> String {
    format!("({x}>=0 ? floor({x}+0.5) : ceil({x}-0.5))")
}

/// Demand an integer-typed operand: already exact, or rounded.
fn as_int(t: Tx) -> Tx {
    if t.exact_int {
        t
    } else {
        Tx {
            text: round_text(&t.text),
            exact_int: true,
            bounds: t.bounds.map(|(lo, hi)| (lo.round(), hi.round())),
        }
    }
}

fn table_chain(a: &Epdta, name: &str, args: &[Tx], round_values: bool) -> Tx {
    let ti = match a.decls.sym(name) {
        Some(Sym::Table(ti)) => ti,
        _ => unreachable!("validated automaton"),
    };
    let table = &a.decls.tables()[ti];
    let args: Vec<Tx> = args
        .iter()
        .map(|t| Tx {
            text: t.text.clone(),
            exact_int: t.exact_int,
            bounds: t.bounds,
        })
        .map(as_int)
        .collect();

    // constant folding when every argument is a literal
    let lits: Option<Vec<i64>> = args
        .iter()
        .map(|t| t.text.parse::<i64>().ok())
        .collect();
    if let Some(lits) = lits {
        if let Some(v) = table.lookup(&lits) {
            let v = if round_values { v.round() } else { v };
            return Tx {
                text: if round_values {
                    format!("{}", v as i64)
                } else {
                    fmt_real(v)
                },
                exact_int: round_values,
                bounds: Some((v, v)),
            };
        }
    }

    fn chain(
        table: &crate::expr::FunctionTable,
        args: &[Tx],
        axis: usize,
        prefix: &mut Vec<i64>,
        round_values: bool,
    ) -> String {
        let (lo, hi) = table.dims[axis];
        let mut parts = Vec::new();
        for v in lo..=hi {
            prefix.push(v);
            let inner = if axis + 1 == table.dims.len() {
                let raw = table.lookup(prefix).expect("in-domain");
                if round_values {
                    format!("{}", raw.round() as i64)
                } else {
                    fmt_real(raw)
                }
            } else {
                chain(table, args, axis + 1, prefix, round_values)
            };
            prefix.pop();
            if v == hi {
                // last branch needs no condition: the application is
                // in-domain in every reachable state of a valid model
                parts.push(inner);
            } else {
                parts.push(format!("{}={} ? {}", args[axis].text, v, inner));
            }
        }
        let mut out = parts.pop().unwrap();
        while let Some(p) = parts.pop() {
            out = format!("({p} : {out})");
        }
        out
    }

    let mut prefix = Vec::new();
    let text = chain(table, &args, 0, &mut prefix, round_values);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &table.values {
        let v = if round_values { v.round() } else { v };
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Tx {
        text,
        exact_int: round_values,
        bounds: Some((lo, hi)),
    }
}

fn tx_aexpr(a: &Epdta, e: &AExpr) -> Tx {
    match e {
        AExpr::Int(z) => Tx {
            text: format!("{z}"),
            exact_int: true,
            bounds: Some((*z as f64, *z as f64)),
        },
        AExpr::Var(v) => {
            let bounds = match a.decls.sym(v) {
                Some(Sym::Int(i)) => {
                    let d = &a.decls.ints()[i];
                    Some((d.lo as f64, d.hi as f64))
                }
                _ => None,
            };
            Tx {
                text: prism_name(v),
                exact_int: true,
                bounds,
            }
        }
        AExpr::Apply(name, args) => {
            let args: Vec<Tx> = args.iter().map(|arg| tx_aexpr(a, arg)).collect();
            // table values stay rational here; the consumer rounds
            table_chain(a, name, &args, false)
        }
        AExpr::Bin(op, l, r) => {
            let lt = tx_aexpr(a, l);
            let rt = tx_aexpr(a, r);
            match op {
                ABinOp::Add | ABinOp::Sub | ABinOp::Mul => {
                    let sym = match op {
                        ABinOp::Add => "+",
                        ABinOp::Sub => "-",
                        _ => "*",
                    };
                    let bounds = match (lt.bounds, rt.bounds) {
                        (Some((a1, a2)), Some((b1, b2))) => Some(match op {
                            ABinOp::Add => (a1 + b1, a2 + b2),
                            ABinOp::Sub => (a1 - b2, a2 - b1),
                            _ => {
                                let c = [a1 * b1, a1 * b2, a2 * b1, a2 * b2];
                                (
                                    c.iter().cloned().fold(f64::INFINITY, f64::min),
                                    c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                                )
                            }
                        }),
                        _ => None,
                    };
                    Tx {
                        text: format!("({} {} {})", lt.text, sym, rt.text),
                        exact_int: lt.exact_int && rt.exact_int,
                        bounds,
                    }
                }
                ABinOp::Div | ABinOp::Rem => {
                    // operands are rounded to integers first
                    let lt = as_int(lt);
                    let rt = as_int(rt);
                    let nonneg = |t: &Tx| t.bounds.is_some_and(|(lo, _)| lo >= 0.0);
                    let pos = |t: &Tx| t.bounds.is_some_and(|(lo, _)| lo >= 1.0);
                    let text = if *op == ABinOp::Div {
                        if nonneg(&lt) && pos(&rt) {
                            format!("floor({} / {})", lt.text, rt.text)
                        } else {
                            let q = format!("({} / {})", lt.text, rt.text);
                            format!("({q}>=0 ? floor({q}) : ceil({q}))")
                        }
                    } else if nonneg(&lt) && pos(&rt) {
                        format!("mod({}, {})", lt.text, rt.text)
                    } else {
                        let q = format!("({} / {})", lt.text, rt.text);
                        let trunc = format!("({q}>=0 ? floor({q}) : ceil({q}))");
                        format!("({} - ({} * {trunc}))", lt.text, rt.text)
                    };
                    Tx {
                        text,
                        exact_int: true,
                        bounds: None,
                    }
                }
            }
        }
    }
}

fn tx_bexpr(a: &Epdta, e: &BExpr) -> String {
    match e {
        BExpr::True => "true".to_string(),
        BExpr::False => "false".to_string(),
        BExpr::Var(v) => prism_name(v),
        BExpr::Not(inner) => format!("!({})", tx_bexpr(a, inner)),
        BExpr::And(l, r) => format!("({} & {})", tx_bexpr(a, l), tx_bexpr(a, r)),
        BExpr::Cmp(op, l, r) => {
            // comparisons act on unrounded rationals, like the evaluator
            let lt = tx_aexpr(a, l);
            let rt = tx_aexpr(a, r);
            let sym = match op {
                CmpOp::Eq => "=",
                CmpOp::Le => "<=",
                CmpOp::Lt => "<",
            };
            format!("({} {} {})", lt.text, sym, rt.text)
        }
    }
}

fn rel_sym(rel: ClockRel) -> &'static str {
    match rel {
        ClockRel::Lt => "<",
        ClockRel::Gt => ">",
        ClockRel::Le => "<=",
        ClockRel::Ge => ">=",
        ClockRel::Eq => "=",
    }
}

/// Clock constraint, optionally with every clock shifted by +1 (the Time
/// rule checks the invariant at `ν + 1`).
fn tx_clock_constraint(cc: &ClockConstraint, shift: bool) -> String {
    let clock = |name: &str| {
        let n = prism_name(name);
        if shift {
            format!("({n}+1)")
        } else {
            n
        }
    };
    match cc {
        ClockConstraint::True => "true".to_string(),
        ClockConstraint::False => "false".to_string(),
        ClockConstraint::Atom {
            clock: c,
            rel,
            bound,
        } => format!("({} {} {bound})", clock(c), rel_sym(*rel)),
        ClockConstraint::Diff {
            left,
            right,
            rel,
            bound,
            // the +1 shift cancels in differences, but spelling it out
            // keeps the translation uniform
        } => format!("({} - {} {} {bound})", clock(left), clock(right), rel_sym(*rel)),
        ClockConstraint::And(l, r) => format!(
            "({} & {})",
            tx_clock_constraint(l, shift),
            tx_clock_constraint(r, shift)
        ),
    }
}

fn tx_guard(a: &Epdta, g: &Guard) -> String {
    match g {
        Guard::Clock(cc) => tx_clock_constraint(cc, false),
        Guard::Bool(b) => tx_bexpr(a, b),
        Guard::And(l, r) => format!("({} & {})", tx_guard(a, l), tx_guard(a, r)),
    }
}

fn tx_prob(a: &Epdta, p: &ProbExpr) -> Tx {
    match p {
        ProbExpr::Num(x) => Tx {
            text: fmt_real(*x),
            exact_int: false,
            bounds: Some((*x, *x)),
        },
        ProbExpr::Int(z) => Tx {
            text: format!("{z}"),
            exact_int: true,
            bounds: Some((*z as f64, *z as f64)),
        },
        ProbExpr::Var(v) | ProbExpr::Clock(v) => Tx {
            text: prism_name(v),
            exact_int: true,
            bounds: None,
        },
        ProbExpr::Apply(name, args) => {
            let args: Vec<Tx> = args.iter().map(|arg| tx_prob(a, arg)).collect();
            table_chain(a, name, &args, false)
        }
        ProbExpr::Bin(op, l, r) => {
            let lt = tx_prob(a, l);
            let rt = tx_prob(a, r);
            let sym = match op {
                PBinOp::Add => "+",
                PBinOp::Sub => "-",
                PBinOp::Mul => "*",
                PBinOp::Div => "/",
            };
            Tx {
                text: format!("({} {} {})", lt.text, sym, rt.text),
                exact_int: false,
                bounds: None,
            }
        }
    }
}

fn tx_assignment(a: &Epdta, eta: &Assignment, resets: &[usize], target: usize) -> String {
    let mut parts = vec![format!("(loc'={target})")];
    for &clk in resets {
        parts.push(format!("({}'=0)", prism_name(a.decls.clock_name(clk))));
    }
    for item in &eta.0 {
        match item {
            SingleAssign::Bool(v, e) => {
                parts.push(format!("({}'={})", prism_name(v), tx_bexpr(a, e)));
            }
            SingleAssign::Int(v, e) => {
                let tx = tx_aexpr(a, e);
                let tx = as_int(tx);
                parts.push(format!("({}'={})", prism_name(v), tx.text));
            }
        }
    }
    parts.join(" & ")
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Hex SHA-256 of the canonical model text, embedded in the export header.
pub fn model_hash(a: &Epdta) -> String {
    let mut hasher = Sha256::new();
    hasher.update(save(a).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Emits a self-contained PRISM MDP model. Deterministic: the same
/// automaton always produces byte-identical text.
pub fn export(a: &Epdta) -> String {
    let mut out = String::new();
    let stop = a.locations.len();

    let _ = writeln!(out, "// generated by epdta v{}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "// model sha256: {}", model_hash(a));
    let _ = writeln!(out, "// location encoding:");
    for (k, loc) in a.locations.iter().enumerate() {
        let _ = writeln!(out, "//   {k} = {}", loc.name);
    }
    let _ = writeln!(out, "//   {stop} = stop");
    let _ = writeln!(out);
    let _ = writeln!(out, "mdp");
    let _ = writeln!(out);
    let _ = writeln!(out, "const int MAX_TIME = {};", a.max_time);
    let _ = writeln!(out);
    let _ = writeln!(out, "module main");
    let _ = writeln!(out, "  loc : [0..{stop}] init {};", a.init_location);
    for clock in a.decls.clocks() {
        let _ = writeln!(
            out,
            "  {} : [0..MAX_TIME] init 0;",
            prism_name(clock)
        );
    }
    for (name, &init) in a.decls.bools().iter().zip(&a.init_interp.bools) {
        let _ = writeln!(out, "  {} : bool init {init};", prism_name(name));
    }
    for (d, &init) in a.decls.ints().iter().zip(&a.init_interp.ints) {
        let _ = writeln!(
            out,
            "  {} : [{}..{}] init {init};",
            prism_name(&d.name),
            d.lo,
            d.hi
        );
    }
    let _ = writeln!(out);

    // Stop: once t reaches the horizon nothing else may fire.
    let t = prism_name(crate::expr::GLOBAL_CLOCK);
    let _ = writeln!(
        out,
        "  // rule Stop\n  [] loc!={stop} & {t}=MAX_TIME -> 1 : (loc'={stop});"
    );

    for (k, loc) in a.locations.iter().enumerate() {
        let _ = writeln!(out, "\n  // location {}", loc.name);

        let urgent_guards: Vec<String> = a.outgoing[k]
            .iter()
            .filter(|&&ix| a.edges[ix].urgent)
            .map(|&ix| tx_guard(a, &a.edges[ix].guard))
            .collect();
        let no_urgent = if urgent_guards.is_empty() {
            String::new()
        } else {
            format!(" & !({})", urgent_guards.join(" | "))
        };

        // rule Time: invariant shifted to nu+1, horizon kept, urgency
        // respected; every clock advances together
        let shifted = tx_clock_constraint(&loc.invariant, true);
        let advance: Vec<String> = a
            .decls
            .clocks()
            .iter()
            .map(|c| format!("({0}'={0}+1)", prism_name(c)))
            .collect();
        let _ = writeln!(
            out,
            "  [] loc={k} & {t}<MAX_TIME & {shifted}{no_urgent} -> 1 : {};",
            advance.join(" & ")
        );

        for &ix in &a.outgoing[k] {
            let e = &a.edges[ix];
            let guard = tx_guard(a, &e.guard);
            let suppress = if e.urgent { "" } else { no_urgent.as_str() };
            let updates: Vec<String> = e
                .outcomes
                .iter()
                .map(|o| {
                    let p = tx_prob(a, &o.prob);
                    format!(
                        "{} : {}",
                        p.text,
                        tx_assignment(a, &o.assign, &o.resets, o.target)
                    )
                })
                .collect();
            let actions: Vec<&str> = e
                .outcomes
                .iter()
                .map(|o| {
                    if o.action.is_empty() {
                        "eps"
                    } else {
                        o.action.as_str()
                    }
                })
                .collect();
            let _ = writeln!(
                out,
                "  // {} edge, actions: {}",
                if e.urgent { "urgent" } else { "non-urgent" },
                actions.join(", ")
            );
            let _ = writeln!(
                out,
                "  [] loc={k} & {t}<MAX_TIME & {guard}{suppress} -> {};",
                updates.join(" + ")
            );
        }
    }

    let _ = writeln!(out, "\nendmodule");
    let _ = writeln!(out);
    for (k, loc) in a.locations.iter().enumerate() {
        let _ = writeln!(out, "label \"{}\" = loc={k};", loc.name);
    }
    let _ = writeln!(out, "label \"stop\" = loc={stop};");
    out
}

// ---------------------------------------------------------------------------
// Mini-reader: parse and enumerate the emitted subset
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("state cap of {0} states exceeded")]
    StateCap(usize),
    #[error("command probabilities sum to {0}, not 1")]
    BadSum(f64),
}

/// Value of one variable of an imported model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MiniVal {
    Int(i64),
    Real(f64),
    Bool(bool),
}

impl MiniVal {
    fn as_real(self) -> Result<f64, ImportError> {
        match self {
            MiniVal::Int(v) => Ok(v as f64),
            MiniVal::Real(v) => Ok(v),
            MiniVal::Bool(_) => Err(ImportError::Eval("boolean used as number".into())),
        }
    }

    fn as_bool(self) -> Result<bool, ImportError> {
        match self {
            MiniVal::Bool(b) => Ok(b),
            _ => Err(ImportError::Eval("number used as boolean".into())),
        }
    }

    fn as_int(self) -> Result<i64, ImportError> {
        match self {
            MiniVal::Int(v) => Ok(v),
            MiniVal::Real(v) if v.fract() == 0.0 => Ok(v as i64),
            _ => Err(ImportError::Eval("expected an integer value".into())),
        }
    }
}

#[derive(Debug, Clone)]
enum MiniExpr {
    Int(i64),
    Real(f64),
    Bool(bool),
    Var(usize),
    Const(i64),
    Not(Box<MiniExpr>),
    Neg(Box<MiniExpr>),
    Bin(MiniOp, Box<MiniExpr>, Box<MiniExpr>),
    Ite(Box<MiniExpr>, Box<MiniExpr>, Box<MiniExpr>),
    Floor(Box<MiniExpr>),
    Ceil(Box<MiniExpr>),
    Mod(Box<MiniExpr>, Box<MiniExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MiniOp {
    Or,
    And,
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
struct MiniVar {
    name: String,
    is_bool: bool,
    init: MiniVal,
}

#[derive(Debug, Clone)]
struct MiniCommand {
    guard: MiniExpr,
    updates: Vec<(MiniExpr, Vec<(usize, MiniExpr)>)>,
}

/// A parsed model in the emitted subset.
#[derive(Debug, Clone)]
pub struct MiniModel {
    vars: Vec<MiniVar>,
    commands: Vec<MiniCommand>,
}

struct MiniParser<'a> {
    text: &'a [u8],
    pos: usize,
    line: usize,
    vars: Vec<MiniVar>,
    var_index: HashMap<String, usize>,
    consts: HashMap<String, i64>,
}

impl<'a> MiniParser<'a> {
    fn err(&self, msg: impl Into<String>) -> ImportError {
        ImportError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        loop {
            while self.pos < self.text.len()
                && (self.text[self.pos] as char).is_ascii_whitespace()
            {
                if self.text[self.pos] == b'\n' {
                    self.line += 1;
                }
                self.pos += 1;
            }
            if self.pos + 1 < self.text.len()
                && self.text[self.pos] == b'/'
                && self.text[self.pos + 1] == b'/'
            {
                while self.pos < self.text.len() && self.text[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn peek(&mut self) -> u8 {
        self.skip_ws();
        if self.pos < self.text.len() {
            self.text[self.pos]
        } else {
            0
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ImportError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() {
            let c = self.text[self.pos] as char;
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos > start {
            Some(String::from_utf8_lossy(&self.text[start..self.pos]).into_owned())
        } else {
            None
        }
    }

    fn number(&mut self) -> Result<MiniExpr, ImportError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() {
            let c = self.text[self.pos] as char;
            if c.is_ascii_digit() {
                self.pos += 1;
            } else if c == '.' && self.text.get(self.pos + 1) != Some(&b'.') {
                // a single dot continues a decimal; `..` is a range
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = String::from_utf8_lossy(&self.text[start..self.pos]);
        if s.contains('.') {
            s.parse::<f64>()
                .map(MiniExpr::Real)
                .map_err(|_| self.err("bad number"))
        } else {
            s.parse::<i64>()
                .map(MiniExpr::Int)
                .map_err(|_| self.err("bad number"))
        }
    }

    // precedence climbing: ?: | & comparisons +- */ unary atoms
    fn expr(&mut self) -> Result<MiniExpr, ImportError> {
        let cond = self.or_expr()?;
        if self.eat("?") {
            let then = self.expr()?;
            self.expect(":")?;
            let other = self.expr()?;
            Ok(MiniExpr::Ite(Box::new(cond), Box::new(then), Box::new(other)))
        } else {
            Ok(cond)
        }
    }

    fn or_expr(&mut self) -> Result<MiniExpr, ImportError> {
        let mut left = self.and_expr()?;
        while self.peek() == b'|' {
            self.expect("|")?;
            let right = self.and_expr()?;
            left = MiniExpr::Bin(MiniOp::Or, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<MiniExpr, ImportError> {
        let mut left = self.cmp_expr()?;
        while self.peek() == b'&' {
            self.expect("&")?;
            let right = self.cmp_expr()?;
            left = MiniExpr::Bin(MiniOp::And, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn cmp_expr(&mut self) -> Result<MiniExpr, ImportError> {
        let left = self.add_expr()?;
        let op = if self.eat("!=") {
            Some(MiniOp::Ne)
        } else if self.eat("<=") {
            Some(MiniOp::Le)
        } else if self.eat(">=") {
            Some(MiniOp::Ge)
        } else if self.eat("=") {
            Some(MiniOp::Eq)
        } else if self.eat("<") {
            Some(MiniOp::Lt)
        } else if self.eat(">") {
            Some(MiniOp::Gt)
        } else {
            None
        };
        match op {
            None => Ok(left),
            Some(op) => {
                let right = self.add_expr()?;
                Ok(MiniExpr::Bin(op, Box::new(left), Box::new(right)))
            }
        }
    }

    fn add_expr(&mut self) -> Result<MiniExpr, ImportError> {
        let mut left = self.mul_expr()?;
        loop {
            if self.eat("+") {
                let right = self.mul_expr()?;
                left = MiniExpr::Bin(MiniOp::Add, Box::new(left), Box::new(right));
            } else if self.peek() == b'-' && !self.text[self.pos..].starts_with(b"->") {
                self.expect("-")?;
                let right = self.mul_expr()?;
                left = MiniExpr::Bin(MiniOp::Sub, Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn mul_expr(&mut self) -> Result<MiniExpr, ImportError> {
        let mut left = self.unary()?;
        loop {
            if self.eat("*") {
                let right = self.unary()?;
                left = MiniExpr::Bin(MiniOp::Mul, Box::new(left), Box::new(right));
            } else if self.eat("/") {
                let right = self.unary()?;
                left = MiniExpr::Bin(MiniOp::Div, Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn unary(&mut self) -> Result<MiniExpr, ImportError> {
        if self.eat("!") {
            return Ok(MiniExpr::Not(Box::new(self.unary()?)));
        }
        if self.peek() == b'-' && !self.text[self.pos..].starts_with(b"->") {
            self.expect("-")?;
            return Ok(MiniExpr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<MiniExpr, ImportError> {
        let c = self.peek();
        if c == b'(' {
            self.expect("(")?;
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(e);
        }
        if c.is_ascii_digit() {
            return self.number();
        }
        let name = self.ident().ok_or_else(|| self.err("expected expression"))?;
        match name.as_str() {
            "true" => Ok(MiniExpr::Bool(true)),
            "false" => Ok(MiniExpr::Bool(false)),
            "floor" => {
                self.expect("(")?;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(MiniExpr::Floor(Box::new(e)))
            }
            "ceil" => {
                self.expect("(")?;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(MiniExpr::Ceil(Box::new(e)))
            }
            "mod" => {
                self.expect("(")?;
                let l = self.expr()?;
                self.expect(",")?;
                let r = self.expr()?;
                self.expect(")")?;
                Ok(MiniExpr::Mod(Box::new(l), Box::new(r)))
            }
            _ => {
                if let Some(&ix) = self.var_index.get(&name) {
                    Ok(MiniExpr::Var(ix))
                } else if let Some(&v) = self.consts.get(&name) {
                    Ok(MiniExpr::Const(v))
                } else {
                    Err(self.err(format!("unknown identifier `{name}`")))
                }
            }
        }
    }

    fn const_or_lit(&mut self) -> Result<i64, ImportError> {
        self.skip_ws();
        if self.peek().is_ascii_digit() || self.peek() == b'-' {
            let neg = self.eat("-");
            match self.number()? {
                MiniExpr::Int(v) => Ok(if neg { -v } else { v }),
                _ => Err(self.err("expected integer")),
            }
        } else {
            let name = self.ident().ok_or_else(|| self.err("expected constant"))?;
            self.consts
                .get(&name)
                .copied()
                .ok_or_else(|| self.err(format!("unknown constant `{name}`")))
        }
    }
}

/// Parses text produced by [`export`]. The reader supports exactly the
/// emitted subset of PRISM.
pub fn import_mini(text: &str) -> Result<MiniModel, ImportError> {
    let mut p = MiniParser {
        text: text.as_bytes(),
        pos: 0,
        line: 1,
        vars: Vec::new(),
        var_index: HashMap::new(),
        consts: HashMap::new(),
    };
    p.expect("mdp")?;
    let mut commands = Vec::new();
    loop {
        p.skip_ws();
        if p.pos >= p.text.len() {
            break;
        }
        if p.eat("const") {
            p.expect("int")?;
            let name = p.ident().ok_or_else(|| p.err("constant name"))?;
            p.expect("=")?;
            let v = p.const_or_lit()?;
            p.expect(";")?;
            p.consts.insert(name, v);
        } else if p.eat("module") {
            let _ = p.ident();
        } else if p.eat("endmodule") {
            // nothing
        } else if p.eat("label") {
            // labels don't affect the graph
            while p.pos < p.text.len() && p.text[p.pos] != b';' {
                if p.text[p.pos] == b'\n' {
                    p.line += 1;
                }
                p.pos += 1;
            }
            p.expect(";")?;
        } else if p.eat("[]") {
            let guard = p.expr()?;
            p.expect("->")?;
            let mut updates = Vec::new();
            loop {
                let prob = p.expr()?;
                p.expect(":")?;
                let mut assigns = Vec::new();
                if p.eat("true") {
                    // no-change update
                } else {
                    loop {
                        p.expect("(")?;
                        let name = p.ident().ok_or_else(|| p.err("variable name"))?;
                        p.expect("'")?;
                        p.expect("=")?;
                        let e = p.expr()?;
                        p.expect(")")?;
                        let ix = *p
                            .var_index
                            .get(&name)
                            .ok_or_else(|| p.err(format!("unknown variable `{name}`")))?;
                        assigns.push((ix, e));
                        if !p.eat("&") {
                            break;
                        }
                    }
                }
                updates.push((prob, assigns));
                if !p.eat("+") {
                    break;
                }
            }
            p.expect(";")?;
            commands.push(MiniCommand { guard, updates });
        } else {
            // variable declaration: name : [lo..hi] init v; | name : bool init b;
            let name = match p.ident() {
                Some(n) => n,
                None => break,
            };
            p.expect(":")?;
            if p.eat("bool") {
                p.expect("init")?;
                let init = if p.eat("true") {
                    true
                } else if p.eat("false") {
                    false
                } else {
                    return Err(p.err("expected `true` or `false`"));
                };
                p.expect(";")?;
                let ix = p.vars.len();
                p.var_index.insert(name.clone(), ix);
                p.vars.push(MiniVar {
                    name,
                    is_bool: true,
                    init: MiniVal::Bool(init),
                });
            } else {
                p.expect("[")?;
                let _lo = p.const_or_lit()?;
                p.expect("..")?;
                let _hi = p.const_or_lit()?;
                p.expect("]")?;
                p.expect("init")?;
                let init = p.const_or_lit()?;
                p.expect(";")?;
                let ix = p.vars.len();
                p.var_index.insert(name.clone(), ix);
                p.vars.push(MiniVar {
                    name,
                    is_bool: false,
                    init: MiniVal::Int(init),
                });
            }
        }
    }
    Ok(MiniModel { vars: p.vars, commands })
}

fn mini_eval(e: &MiniExpr, state: &[MiniVal]) -> Result<MiniVal, ImportError> {
    Ok(match e {
        MiniExpr::Int(v) => MiniVal::Int(*v),
        MiniExpr::Real(v) => MiniVal::Real(*v),
        MiniExpr::Bool(b) => MiniVal::Bool(*b),
        MiniExpr::Var(ix) => state[*ix],
        MiniExpr::Const(v) => MiniVal::Int(*v),
        MiniExpr::Not(inner) => MiniVal::Bool(!mini_eval(inner, state)?.as_bool()?),
        MiniExpr::Neg(inner) => match mini_eval(inner, state)? {
            MiniVal::Int(v) => MiniVal::Int(-v),
            MiniVal::Real(v) => MiniVal::Real(-v),
            MiniVal::Bool(_) => return Err(ImportError::Eval("negated boolean".into())),
        },
        MiniExpr::Floor(inner) => MiniVal::Int(mini_eval(inner, state)?.as_real()?.floor() as i64),
        MiniExpr::Ceil(inner) => MiniVal::Int(mini_eval(inner, state)?.as_real()?.ceil() as i64),
        MiniExpr::Mod(l, r) => {
            let l = mini_eval(l, state)?.as_int()?;
            let r = mini_eval(r, state)?.as_int()?;
            if r == 0 {
                return Err(ImportError::Eval("mod by zero".into()));
            }
            MiniVal::Int(l.rem_euclid(r))
        }
        MiniExpr::Ite(c, t, f) => {
            if mini_eval(c, state)?.as_bool()? {
                mini_eval(t, state)?
            } else {
                mini_eval(f, state)?
            }
        }
        MiniExpr::Bin(op, l, r) => {
            let lv = mini_eval(l, state)?;
            let rv = mini_eval(r, state)?;
            match op {
                MiniOp::Or => MiniVal::Bool(lv.as_bool()? || rv.as_bool()?),
                MiniOp::And => MiniVal::Bool(lv.as_bool()? && rv.as_bool()?),
                MiniOp::Eq | MiniOp::Ne | MiniOp::Le | MiniOp::Lt | MiniOp::Ge | MiniOp::Gt => {
                    let cmp = match (lv, rv) {
                        (MiniVal::Bool(a), MiniVal::Bool(b)) => {
                            (a == b, false, a != b)
                        }
                        _ => {
                            let a = lv.as_real()?;
                            let b = rv.as_real()?;
                            (a == b, a < b, a != b)
                        }
                    };
                    let (eq, lt, ne) = cmp;
                    MiniVal::Bool(match op {
                        MiniOp::Eq => eq,
                        MiniOp::Ne => ne,
                        MiniOp::Le => eq || lt,
                        MiniOp::Lt => lt,
                        MiniOp::Ge => !lt,
                        MiniOp::Gt => !(eq || lt),
                        _ => unreachable!(),
                    })
                }
                MiniOp::Add | MiniOp::Sub | MiniOp::Mul => {
                    match (lv, rv) {
                        (MiniVal::Int(a), MiniVal::Int(b)) => MiniVal::Int(match op {
                            MiniOp::Add => a + b,
                            MiniOp::Sub => a - b,
                            _ => a * b,
                        }),
                        _ => {
                            let a = lv.as_real()?;
                            let b = rv.as_real()?;
                            MiniVal::Real(match op {
                                MiniOp::Add => a + b,
                                MiniOp::Sub => a - b,
                                _ => a * b,
                            })
                        }
                    }
                }
                MiniOp::Div => {
                    let a = lv.as_real()?;
                    let b = rv.as_real()?;
                    if b == 0.0 {
                        return Err(ImportError::Eval("division by zero".into()));
                    }
                    MiniVal::Real(a / b)
                }
            }
        }
    })
}

/// Explicit graph of an imported model: states are variable vectors, one
/// distribution per enabled command in file order. Zero-probability
/// entries are pruned, mirroring the semantics enumeration.
#[derive(Debug, Clone)]
pub struct MiniGraph {
    pub var_names: Vec<String>,
    pub states: Vec<Vec<MiniVal>>,
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

const MINI_SUM_TOLERANCE: f64 = 1e-9;

/// Enumerates every reachable state of an imported model.
pub fn enumerate_mini(m: &MiniModel, state_cap: usize) -> Result<MiniGraph, ImportError> {
    let init: Vec<MiniVal> = m.vars.iter().map(|v| v.init).collect();
    let mut states = vec![init.clone()];
    let mut index: HashMap<Vec<MiniKey>, usize> = HashMap::new();
    index.insert(key_of(&init), 0);
    let mut transitions = Vec::new();

    let mut frontier = 0;
    while frontier < states.len() {
        let s = states[frontier].clone();
        let mut dists = Vec::new();
        for cmd in &m.commands {
            if !mini_eval(&cmd.guard, &s)?.as_bool()? {
                continue;
            }
            let mut entries = Vec::new();
            let mut sum = 0.0;
            for (prob, assigns) in &cmd.updates {
                let p = mini_eval(prob, &s)?.as_real()?;
                sum += p;
                if p <= 0.0 {
                    continue;
                }
                let mut next = s.clone();
                for (ix, e) in assigns {
                    let v = mini_eval(e, &s)?;
                    next[*ix] = match (m.vars[*ix].is_bool, v) {
                        (true, MiniVal::Bool(b)) => MiniVal::Bool(b),
                        (false, v) => MiniVal::Int(v.as_int()?),
                        (true, _) => {
                            return Err(ImportError::Eval(format!(
                                "non-boolean assigned to `{}`",
                                m.vars[*ix].name
                            )))
                        }
                    };
                }
                let k = key_of(&next);
                let id = match index.get(&k) {
                    Some(&id) => id,
                    None => {
                        let id = states.len();
                        if id >= state_cap {
                            return Err(ImportError::StateCap(state_cap));
                        }
                        index.insert(k, id);
                        states.push(next.clone());
                        id
                    }
                };
                entries.push((id, p));
            }
            if (sum - 1.0).abs() > MINI_SUM_TOLERANCE {
                return Err(ImportError::BadSum(sum));
            }
            dists.push(entries);
        }
        transitions.push(dists);
        frontier += 1;
    }
    Ok(MiniGraph {
        var_names: m.vars.iter().map(|v| v.name.clone()).collect(),
        states,
        transitions,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum MiniKey {
    I(i64),
    B(bool),
}

fn key_of(state: &[MiniVal]) -> Vec<MiniKey> {
    state
        .iter()
        .map(|v| match v {
            MiniVal::Int(i) => MiniKey::I(*i),
            MiniVal::Real(r) => MiniKey::I(*r as i64),
            MiniVal::Bool(b) => MiniKey::B(*b),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Round-trip comparison
// ---------------------------------------------------------------------------

/// Checks that `import_mini(export(a))` and `semantics::enumerate(a)` are
/// isomorphic as labeled probabilistic graphs: a state bijection matching
/// every distribution with probability error below `tol`.
pub fn round_trip_isomorphic(
    a: &Epdta,
    state_cap: usize,
    tol: f64,
) -> Result<(), String> {
    use crate::semantics::{enumerate, Site};

    let reference = enumerate(a, a.max_time, state_cap).map_err(|e| e.to_string())?;
    let text = export(a);
    let mini = import_mini(&text).map_err(|e| e.to_string())?;
    let imported = enumerate_mini(&mini, state_cap).map_err(|e| e.to_string())?;

    if reference.len() != imported.states.len() {
        return Err(format!(
            "state counts differ: semantics {} vs import {}",
            reference.len(),
            imported.states.len()
        ));
    }

    // canonical key: loc code then clocks, bools, ints in declaration order
    // (the same order the exporter declares)
    let stop_code = a.locations.len() as i64;
    let sem_key = |s: &crate::semantics::MdpState| -> Vec<MiniKey> {
        let mut k = Vec::new();
        k.push(MiniKey::I(match s.site {
            Site::Stop => stop_code,
            Site::Loc(ix) => ix as i64,
        }));
        for &c in &s.clocks.0 {
            k.push(MiniKey::I(c as i64));
        }
        for &b in &s.interp.bools {
            k.push(MiniKey::B(b));
        }
        for &v in &s.interp.ints {
            k.push(MiniKey::I(v));
        }
        k
    };

    let mut sem_index: HashMap<Vec<MiniKey>, usize> = HashMap::new();
    for (i, s) in reference.states.iter().enumerate() {
        sem_index.insert(sem_key(s), i);
    }
    // imported state id -> semantics state id
    let mut mapping = vec![usize::MAX; imported.states.len()];
    for (i, s) in imported.states.iter().enumerate() {
        let k = key_of(s);
        match sem_index.get(&k) {
            Some(&j) => mapping[i] = j,
            None => {
                return Err(format!(
                    "imported state {i} ({:?}) has no counterpart",
                    imported.states[i]
                ))
            }
        }
    }

    for (i, dists) in imported.transitions.iter().enumerate() {
        let j = mapping[i];
        let expected = &reference.transitions[j];
        if dists.len() != expected.len() {
            return Err(format!(
                "state {i}: {} distributions vs {} expected",
                dists.len(),
                expected.len()
            ));
        }
        for (d, e) in dists.iter().zip(expected) {
            if d.len() != e.entries.len() {
                return Err(format!(
                    "state {i}: support sizes {} vs {}",
                    d.len(),
                    e.entries.len()
                ));
            }
            let mut got: Vec<(usize, f64)> =
                d.iter().map(|&(succ, p)| (mapping[succ], p)).collect();
            let mut want: Vec<(usize, f64)> =
                e.entries.iter().map(|&(succ, p, _)| (succ, p)).collect();
            got.sort_by_key(|&(s, _)| s);
            want.sort_by_key(|&(s, _)| s);
            for (&(gs, gp), &(ws, wp)) in got.iter().zip(&want) {
                if gs != ws {
                    return Err(format!("state {i}: successors differ ({gs} vs {ws})"));
                }
                if (gp - wp).abs() > tol {
                    return Err(format!(
                        "state {i}: probability {gp} vs {wp} differs beyond {tol}"
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::load;
    use crate::semantics::DEFAULT_STATE_CAP;

    fn fig1() -> Epdta {
        load(include_str!("../models/fig1.epdta")).unwrap()
    }

    #[test]
    fn export_is_deterministic() {
        let a = fig1();
        assert_eq!(export(&a), export(&a));
    }

    #[test]
    fn export_mentions_the_split_and_header() {
        let a = fig1();
        let text = export(&a);
        assert!(text.contains("mdp"));
        assert!(text.contains("0.7 :"));
        assert!(text.contains("0.3 :"));
        assert!(text.contains("const int MAX_TIME = 3;"));
        assert!(text.contains("// model sha256:"));
        assert!(text.contains("label \"l2\""));
    }

    #[test]
    fn trivial_model_round_trip() {
        let a = load(include_str!("../models/single.epdta")).unwrap();
        round_trip_isomorphic(&a, DEFAULT_STATE_CAP, 1e-9).unwrap();
        // and its behavior is exactly t: 0 -> 1 -> 2 -> 3 -> stop
        let mini = import_mini(&export(&a)).unwrap();
        let g = enumerate_mini(&mini, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(g.states.len(), 5);
    }

    #[test]
    fn fig1_round_trip() {
        round_trip_isomorphic(&fig1(), DEFAULT_STATE_CAP, 1e-9).unwrap();
    }

    #[test]
    fn all_small_models_round_trip() {
        for text in [
            include_str!("../models/chain03.epdta"),
            include_str!("../models/urgent2.epdta"),
            include_str!("../models/table1.epdta"),
        ] {
            let a = load(text).unwrap();
            round_trip_isomorphic(&a, DEFAULT_STATE_CAP, 1e-9).unwrap();
        }
    }

    #[test]
    fn reduced_sole_round_trip() {
        let species =
            crate::solemodel::parse_species_config(include_str!("../models/sole2.cfg")).unwrap();
        let a = crate::solemodel::build_sole_epdta(
            &species,
            &species.fishing_for(None),
            6,
            &crate::solemodel::InitialIndividual {
                age_months: 13,
                last_breed_months: 12,
            },
        )
        .unwrap();
        round_trip_isomorphic(&a, DEFAULT_STATE_CAP, 1e-9).unwrap();
    }

    #[test]
    fn reserved_words_are_prefixed() {
        assert_eq!(prism_name("max"), "v_max");
        assert_eq!(prism_name("month"), "month");
    }
}
