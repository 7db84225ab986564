//! The automaton tuple: locations, edges with guarded probability
//! distributions, urgency flags, variable declarations, invariants and the
//! time horizon, plus validation and the model file format.

mod format;

pub use format::{load, load_file, save, LoadError};

use std::fmt;

use thiserror::Error;

use crate::expr::{
    AExpr, Assignment, BExpr, ClockConstraint, ClockRel, DeclError, Declarations, FunctionTable,
    Guard, Interpretation, ProbExpr, SingleAssign, Sym,
};

/// Tolerance on the sum of a probability distribution.
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-9;

/// Reserved location name used by the semantics to terminate runs.
pub const STOP_LOCATION: &str = "stop";

/// Words with a fixed meaning in the model file format; they cannot name
/// clocks, variables, tables or locations.
pub const RESERVED_WORDS: &[&str] = &[
    "clocks", "bools", "ints", "table", "location", "init", "max_time", "edge", "urgent",
    "guard", "invariant", "reset", "eps", "tt", "ff", "true", "false", "in", "stop",
];

fn is_reserved(name: &str) -> bool {
    RESERVED_WORDS.contains(&name)
}

/// A location with its invariant (a past-closed clock constraint).
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    pub invariant: ClockConstraint,
}

/// One entry of an edge distribution: probability, emitted action (empty
/// string for ε), simultaneous assignment, clock resets and target location.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub prob: ProbExpr,
    pub action: String,
    pub assign: Assignment,
    /// Indices into the declaration clock list; never contains the global
    /// clock.
    pub resets: Vec<usize>,
    pub target: usize,
}

/// A guarded probabilistic edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub urgent: bool,
    pub guard: Guard,
    pub outcomes: Vec<Outcome>,
}

/// An extended probabilistic discrete timed automaton, validated and
/// immutable; share it freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Epdta {
    pub decls: Declarations,
    pub locations: Vec<Location>,
    /// All edges in declaration order; `urgent` distinguishes the two sets.
    pub edges: Vec<Edge>,
    /// Edge indices grouped by source location, preserving declaration order.
    pub outgoing: Vec<Vec<usize>>,
    pub init_location: usize,
    pub init_interp: Interpretation,
    pub max_time: u64,
}

impl Epdta {
    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    pub fn location_name(&self, idx: usize) -> &str {
        &self.locations[idx].name
    }

    /// Action alphabet: every non-ε action, sorted, deduplicated.
    pub fn actions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .flat_map(|e| e.outcomes.iter())
            .filter(|o| !o.action.is_empty())
            .map(|o| o.action.as_str())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Re-runs every structural check; empty report means valid.
    pub fn validate(&self) -> Vec<ValidationError> {
        validate(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("declaration error: {0}")]
    Decl(#[from] DeclError),
    #[error("`{name}` is a reserved word and cannot be declared")]
    ReservedWord { name: String },
    #[error("location `{0}` declared twice")]
    DuplicateLocation(String),
    #[error("unknown location `{name}` referenced by {context}")]
    UnknownLocation { name: String, context: String },
    #[error("{context}: unknown name `{name}`")]
    UnknownName { name: String, context: String },
    #[error("{context}: `{name}` is a {actual}, expected a {expected}")]
    WrongKind {
        name: String,
        actual: &'static str,
        expected: &'static str,
        context: String,
    },
    #[error("{context}: table `{table}` takes {expected} arguments, got {got}")]
    TableArity {
        table: String,
        expected: usize,
        got: usize,
        context: String,
    },
    #[error("{edge}: outcome probabilities sum to {sum}, not 1")]
    DistributionSum { edge: String, sum: f64 },
    #[error("{edge}: constant outcome probability {value} is outside (0, 1]")]
    ProbOutOfRange { edge: String, value: f64 },
    #[error("{edge}: empty distribution")]
    EmptyDistribution { edge: String },
    #[error("{edge}: the global clock `t` cannot be reset")]
    ResetGlobalClock { edge: String },
    #[error(
        "invariant of `{location}` is not past-closed: `{atom}` (only conjunctions of `true` \
         and upper bounds `x <= c` / `x < c` are allowed)"
    )]
    InvariantNotPastClosed { location: String, atom: String },
    #[error("{context}: variable `{var}` assigned more than once in one assignment")]
    DuplicateAssignment { var: String, context: String },
    #[error("initial value {value} of `{var}` is outside its range [{lo}, {hi}]")]
    InitOutOfRange {
        var: String,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("no initial location declared")]
    NoInit,
    #[error("no max_time declared")]
    NoMaxTime,
    #[error("max_time must be at least 1")]
    MaxTimeZero,
}

/// Outcome of an edge under construction, with names not yet resolved.
#[derive(Debug, Clone)]
pub struct OutcomeSpec {
    pub prob: ProbExpr,
    pub action: String,
    pub assign: Assignment,
    pub resets: Vec<String>,
    pub target: String,
}

/// Edge under construction.
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub source: String,
    pub urgent: bool,
    pub guard: Guard,
    pub outcomes: Vec<OutcomeSpec>,
}

/// Incremental construction of an [`Epdta`]; `build` resolves names and
/// validates everything.
#[derive(Debug, Clone)]
pub struct EpdtaBuilder {
    pub decls: Declarations,
    bool_inits: Vec<bool>,
    int_inits: Vec<i64>,
    locations: Vec<Location>,
    edges: Vec<EdgeSpec>,
    init_location: Option<String>,
    max_time: Option<u64>,
}

impl Default for EpdtaBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl EpdtaBuilder {
    pub fn new() -> Self {
        EpdtaBuilder {
            decls: Declarations::new(),
            bool_inits: Vec::new(),
            int_inits: Vec::new(),
            locations: Vec::new(),
            edges: Vec::new(),
            init_location: None,
            max_time: None,
        }
    }

    fn check_name(name: &str) -> Result<(), ValidationError> {
        if is_reserved(name) {
            Err(ValidationError::ReservedWord {
                name: name.to_string(),
            })
        } else {
            Ok(())
        }
    }

    pub fn add_clock(&mut self, name: &str) -> Result<(), ValidationError> {
        Self::check_name(name)?;
        self.decls.add_clock(name)?;
        Ok(())
    }

    pub fn add_bool(&mut self, name: &str, init: bool) -> Result<(), ValidationError> {
        Self::check_name(name)?;
        self.decls.add_bool(name)?;
        self.bool_inits.push(init);
        Ok(())
    }

    pub fn add_int(&mut self, name: &str, lo: i64, hi: i64, init: i64) -> Result<(), ValidationError> {
        Self::check_name(name)?;
        self.decls.add_int(name, lo, hi)?;
        self.int_inits.push(init);
        Ok(())
    }

    pub fn add_table(&mut self, table: FunctionTable) -> Result<(), ValidationError> {
        Self::check_name(&table.name)?;
        self.decls.add_table(table)?;
        Ok(())
    }

    pub fn add_location(&mut self, name: &str, invariant: ClockConstraint) -> Result<(), ValidationError> {
        Self::check_name(name)?;
        if name == STOP_LOCATION {
            return Err(ValidationError::ReservedWord {
                name: name.to_string(),
            });
        }
        if self.locations.iter().any(|l| l.name == name) {
            return Err(ValidationError::DuplicateLocation(name.to_string()));
        }
        self.locations.push(Location {
            name: name.to_string(),
            invariant,
        });
        Ok(())
    }

    pub fn set_init_location(&mut self, name: &str) {
        self.init_location = Some(name.to_string());
    }

    pub fn set_max_time(&mut self, t: u64) {
        self.max_time = Some(t);
    }

    pub fn add_edge(&mut self, edge: EdgeSpec) {
        self.edges.push(edge);
    }

    pub fn build(self) -> Result<Epdta, Vec<ValidationError>> {
        let mut errors = Vec::new();

        let init_location = match &self.init_location {
            None => {
                errors.push(ValidationError::NoInit);
                0
            }
            Some(name) => match self.locations.iter().position(|l| l.name == *name) {
                Some(ix) => ix,
                None => {
                    errors.push(ValidationError::UnknownLocation {
                        name: name.clone(),
                        context: "init".to_string(),
                    });
                    0
                }
            },
        };
        let max_time = match self.max_time {
            None => {
                errors.push(ValidationError::NoMaxTime);
                1
            }
            Some(t) => t,
        };

        // resolve edges
        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, spec) in self.edges.iter().enumerate() {
            let edge_desc = format!("edge #{} from `{}`", k + 1, spec.source);
            let source = match self.locations.iter().position(|l| l.name == spec.source) {
                Some(ix) => ix,
                None => {
                    errors.push(ValidationError::UnknownLocation {
                        name: spec.source.clone(),
                        context: edge_desc.clone(),
                    });
                    continue;
                }
            };
            let mut outcomes = Vec::with_capacity(spec.outcomes.len());
            for o in &spec.outcomes {
                let target = match self.locations.iter().position(|l| l.name == o.target) {
                    Some(ix) => ix,
                    None => {
                        errors.push(ValidationError::UnknownLocation {
                            name: o.target.clone(),
                            context: edge_desc.clone(),
                        });
                        continue;
                    }
                };
                let mut resets = Vec::with_capacity(o.resets.len());
                for r in &o.resets {
                    match self.decls.sym(r) {
                        Some(Sym::Clock(0)) => {
                            errors.push(ValidationError::ResetGlobalClock {
                                edge: edge_desc.clone(),
                            });
                        }
                        Some(Sym::Clock(ix)) => resets.push(ix),
                        Some(other) => errors.push(ValidationError::WrongKind {
                            name: r.clone(),
                            actual: other.kind(),
                            expected: "clock",
                            context: edge_desc.clone(),
                        }),
                        None => errors.push(ValidationError::UnknownName {
                            name: r.clone(),
                            context: edge_desc.clone(),
                        }),
                    }
                }
                resets.sort_unstable();
                resets.dedup();
                outcomes.push(Outcome {
                    prob: o.prob.clone(),
                    action: o.action.clone(),
                    assign: o.assign.clone(),
                    resets,
                    target,
                });
            }
            edges.push(Edge {
                source,
                urgent: spec.urgent,
                guard: spec.guard.clone(),
                outcomes,
            });
        }

        let mut outgoing = vec![Vec::new(); self.locations.len()];
        for (k, e) in edges.iter().enumerate() {
            outgoing[e.source].push(k);
        }

        let init_interp = Interpretation {
            bools: self.bool_inits.clone(),
            ints: self.int_inits.clone(),
        };

        let automaton = Epdta {
            decls: self.decls,
            locations: self.locations,
            edges,
            outgoing,
            init_location,
            init_interp,
            max_time,
        };
        errors.extend(validate(&automaton));
        if errors.is_empty() {
            Ok(automaton)
        } else {
            Err(errors)
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Structural validation of a (possibly hand-assembled) automaton.
pub fn validate(a: &Epdta) -> Vec<ValidationError> {
    let mut errors = Vec::new();

    if a.max_time < 1 {
        errors.push(ValidationError::MaxTimeZero);
    }

    // (iv) integer ranges are non-empty and the initial interpretation is
    // total and in range
    for (d, &v) in a.decls.ints().iter().zip(&a.init_interp.ints) {
        if d.lo > d.hi {
            errors.push(ValidationError::Decl(DeclError::EmptyRange {
                name: d.name.clone(),
                lo: d.lo,
                hi: d.hi,
            }));
        }
        if v < d.lo || v > d.hi {
            errors.push(ValidationError::InitOutOfRange {
                var: d.name.clone(),
                value: v,
                lo: d.lo,
                hi: d.hi,
            });
        }
    }

    // (ii) invariants past-closed, enforced structurally
    for loc in &a.locations {
        check_past_closed(&loc.invariant, &loc.name, &mut errors);
        check_clock_names(&loc.invariant, a, &format!("invariant of `{}`", loc.name), &mut errors);
    }

    for (k, e) in a.edges.iter().enumerate() {
        let edge_desc = format!(
            "edge #{} from `{}`",
            k + 1,
            a.locations
                .get(e.source)
                .map(|l| l.name.as_str())
                .unwrap_or("?")
        );

        // (iii) name resolution inside guards, assignments, probabilities
        check_guard(&e.guard, a, &edge_desc, &mut errors);

        if e.outcomes.is_empty() {
            errors.push(ValidationError::EmptyDistribution {
                edge: edge_desc.clone(),
            });
            continue;
        }

        // (i) constant distributions sum to 1 within tolerance
        let mut sum = 0.0;
        let mut all_const = true;
        for o in &e.outcomes {
            check_prob_names(&o.prob, a, &edge_desc, &mut errors);
            check_assignment(&o.assign, a, &edge_desc, &mut errors);
            match o.prob.constant_value(&a.decls) {
                Some(p) => {
                    if p <= 0.0 || p > 1.0 {
                        errors.push(ValidationError::ProbOutOfRange {
                            edge: edge_desc.clone(),
                            value: p,
                        });
                    }
                    sum += p;
                }
                None => all_const = false,
            }
        }
        if all_const && (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            errors.push(ValidationError::DistributionSum {
                edge: edge_desc.clone(),
                sum,
            });
        }
    }

    errors
}

/// Invariants may only conjoin `true` with upper bounds `x <= c` / `x < c`:
/// such constraints satisfy `ν + n ⊨ ψ ⇒ ν ⊨ ψ`.
fn check_past_closed(cc: &ClockConstraint, location: &str, errors: &mut Vec<ValidationError>) {
    match cc {
        ClockConstraint::True => {}
        ClockConstraint::Atom {
            rel: ClockRel::Le | ClockRel::Lt,
            ..
        } => {}
        ClockConstraint::And(l, r) => {
            check_past_closed(l, location, errors);
            check_past_closed(r, location, errors);
        }
        other => errors.push(ValidationError::InvariantNotPastClosed {
            location: location.to_string(),
            atom: other.to_string(),
        }),
    }
}

fn resolve_name(
    a: &Epdta,
    name: &str,
    expected: &'static str,
    want: fn(&Sym) -> bool,
    context: &str,
    errors: &mut Vec<ValidationError>,
) {
    match a.decls.sym(name) {
        Some(sym) if want(&sym) => {}
        Some(sym) => errors.push(ValidationError::WrongKind {
            name: name.to_string(),
            actual: sym.kind(),
            expected,
            context: context.to_string(),
        }),
        None => errors.push(ValidationError::UnknownName {
            name: name.to_string(),
            context: context.to_string(),
        }),
    }
}

fn check_clock_names(cc: &ClockConstraint, a: &Epdta, context: &str, errors: &mut Vec<ValidationError>) {
    match cc {
        ClockConstraint::True | ClockConstraint::False => {}
        ClockConstraint::Atom { clock, .. } => {
            resolve_name(a, clock, "clock", |s| matches!(s, Sym::Clock(_)), context, errors)
        }
        ClockConstraint::Diff { left, right, .. } => {
            resolve_name(a, left, "clock", |s| matches!(s, Sym::Clock(_)), context, errors);
            resolve_name(a, right, "clock", |s| matches!(s, Sym::Clock(_)), context, errors);
        }
        ClockConstraint::And(l, r) => {
            check_clock_names(l, a, context, errors);
            check_clock_names(r, a, context, errors);
        }
    }
}

fn check_aexpr(e: &AExpr, a: &Epdta, context: &str, errors: &mut Vec<ValidationError>) {
    match e {
        AExpr::Int(_) => {}
        AExpr::Var(v) => resolve_name(
            a,
            v,
            "integer variable",
            |s| matches!(s, Sym::Int(_)),
            context,
            errors,
        ),
        AExpr::Apply(name, args) => {
            check_table_apply(a, name, args.len(), context, errors);
            for arg in args {
                check_aexpr(arg, a, context, errors);
            }
        }
        AExpr::Bin(_, l, r) => {
            check_aexpr(l, a, context, errors);
            check_aexpr(r, a, context, errors);
        }
    }
}

fn check_table_apply(a: &Epdta, name: &str, got: usize, context: &str, errors: &mut Vec<ValidationError>) {
    match a.decls.sym(name) {
        Some(Sym::Table(ti)) => {
            let expected = a.decls.tables()[ti].arity();
            if expected != got {
                errors.push(ValidationError::TableArity {
                    table: name.to_string(),
                    expected,
                    got,
                    context: context.to_string(),
                });
            }
        }
        Some(sym) => errors.push(ValidationError::WrongKind {
            name: name.to_string(),
            actual: sym.kind(),
            expected: "table",
            context: context.to_string(),
        }),
        None => errors.push(ValidationError::UnknownName {
            name: name.to_string(),
            context: context.to_string(),
        }),
    }
}

fn check_bexpr(e: &BExpr, a: &Epdta, context: &str, errors: &mut Vec<ValidationError>) {
    match e {
        BExpr::True | BExpr::False => {}
        BExpr::Var(v) => resolve_name(
            a,
            v,
            "boolean variable",
            |s| matches!(s, Sym::Bool(_)),
            context,
            errors,
        ),
        BExpr::Not(inner) => check_bexpr(inner, a, context, errors),
        BExpr::And(l, r) => {
            check_bexpr(l, a, context, errors);
            check_bexpr(r, a, context, errors);
        }
        BExpr::Cmp(_, l, r) => {
            check_aexpr(l, a, context, errors);
            check_aexpr(r, a, context, errors);
        }
    }
}

fn check_guard(g: &Guard, a: &Epdta, context: &str, errors: &mut Vec<ValidationError>) {
    match g {
        Guard::Clock(cc) => check_clock_names(cc, a, context, errors),
        Guard::Bool(b) => check_bexpr(b, a, context, errors),
        Guard::And(l, r) => {
            check_guard(l, a, context, errors);
            check_guard(r, a, context, errors);
        }
    }
}

fn check_assignment(eta: &Assignment, a: &Epdta, context: &str, errors: &mut Vec<ValidationError>) {
    // (v) each variable assigned at most once
    let mut seen: Vec<&str> = Vec::new();
    for item in &eta.0 {
        let target = item.target();
        if seen.contains(&target) {
            errors.push(ValidationError::DuplicateAssignment {
                var: target.to_string(),
                context: context.to_string(),
            });
        }
        seen.push(target);
        match item {
            SingleAssign::Bool(v, e) => {
                resolve_name(
                    a,
                    v,
                    "boolean variable",
                    |s| matches!(s, Sym::Bool(_)),
                    context,
                    errors,
                );
                check_bexpr(e, a, context, errors);
            }
            SingleAssign::Int(v, e) => {
                resolve_name(
                    a,
                    v,
                    "integer variable",
                    |s| matches!(s, Sym::Int(_)),
                    context,
                    errors,
                );
                check_aexpr(e, a, context, errors);
            }
        }
    }
}

fn check_prob_names(p: &ProbExpr, a: &Epdta, context: &str, errors: &mut Vec<ValidationError>) {
    match p {
        ProbExpr::Num(_) | ProbExpr::Int(_) => {}
        ProbExpr::Var(v) => resolve_name(
            a,
            v,
            "integer variable",
            |s| matches!(s, Sym::Int(_)),
            context,
            errors,
        ),
        ProbExpr::Clock(c) => resolve_name(
            a,
            c,
            "clock",
            |s| matches!(s, Sym::Clock(_)),
            context,
            errors,
        ),
        ProbExpr::Apply(name, args) => {
            check_table_apply(a, name, args.len(), context, errors);
            for arg in args {
                check_prob_names(arg, a, context, errors);
            }
        }
        ProbExpr::Bin(_, l, r) => {
            check_prob_names(l, a, context, errors);
            check_prob_names(r, a, context, errors);
        }
    }
}

impl fmt::Display for Epdta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&save(self))
    }
}
