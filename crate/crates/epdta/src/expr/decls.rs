//! Declared names (clocks, variables, tables) and the runtime state they
//! index: interpretations and clock valuations.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// The global clock, present in every declaration set and never reset.
pub const GLOBAL_CLOCK: &str = "t";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeclError {
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
    #[error("`{}` is the implicit global clock and cannot be declared", GLOBAL_CLOCK)]
    ReservedClock,
    #[error("integer range of `{name}` is empty: [{lo}, {hi}]")]
    EmptyRange { name: String, lo: i64, hi: i64 },
    #[error("table `{name}` declares {expected} entries but provides {got}")]
    TableSize {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("table `{name}` has an empty axis {axis}: [{lo}, {hi}]")]
    EmptyAxis {
        name: String,
        axis: usize,
        lo: i64,
        hi: i64,
    },
}

/// A totally specified rational-valued function on a rectangular integer
/// domain, used as a lookup table for constants and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTable {
    pub name: String,
    /// Inclusive `[lo, hi]` bounds per argument.
    pub dims: Vec<(i64, i64)>,
    /// Entries in row-major order (last axis varies fastest).
    pub values: Vec<f64>,
}

impl FunctionTable {
    pub fn new(name: &str, dims: Vec<(i64, i64)>, values: Vec<f64>) -> Result<Self, DeclError> {
        let mut expected = 1usize;
        for (axis, &(lo, hi)) in dims.iter().enumerate() {
            if lo > hi {
                return Err(DeclError::EmptyAxis {
                    name: name.to_string(),
                    axis,
                    lo,
                    hi,
                });
            }
            expected *= (hi - lo) as usize + 1;
        }
        if values.len() != expected {
            return Err(DeclError::TableSize {
                name: name.to_string(),
                expected,
                got: values.len(),
            });
        }
        Ok(FunctionTable {
            name: name.to_string(),
            dims,
            values,
        })
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    /// Value at `args`, or `None` when any argument is outside its axis.
    pub fn lookup(&self, args: &[i64]) -> Option<f64> {
        if args.len() != self.dims.len() {
            return None;
        }
        let mut idx = 0usize;
        for (&a, &(lo, hi)) in args.iter().zip(&self.dims) {
            if a < lo || a > hi {
                return None;
            }
            idx = idx * ((hi - lo) as usize + 1) + (a - lo) as usize;
        }
        Some(self.values[idx])
    }
}

/// What a declared name refers to; payload is the index into the matching
/// declaration list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sym {
    Clock(usize),
    Bool(usize),
    Int(usize),
    Table(usize),
}

impl Sym {
    pub fn kind(&self) -> &'static str {
        match self {
            Sym::Clock(_) => "clock",
            Sym::Bool(_) => "boolean variable",
            Sym::Int(_) => "integer variable",
            Sym::Table(_) => "table",
        }
    }
}

/// Bounded integer variable declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

/// All names an expression may reference. Clock index 0 is always the
/// implicit global clock `t`.
#[derive(Debug, Clone, Default)]
pub struct Declarations {
    clocks: Vec<String>,
    bools: Vec<String>,
    ints: Vec<IntDecl>,
    tables: Vec<FunctionTable>,
    index: HashMap<String, Sym>,
}

impl PartialEq for Declarations {
    fn eq(&self, other: &Self) -> bool {
        self.clocks == other.clocks
            && self.bools == other.bools
            && self.ints == other.ints
            && self.tables == other.tables
    }
}

impl Declarations {
    pub fn new() -> Self {
        let mut d = Declarations {
            clocks: Vec::new(),
            bools: Vec::new(),
            ints: Vec::new(),
            tables: Vec::new(),
            index: HashMap::new(),
        };
        d.clocks.push(GLOBAL_CLOCK.to_string());
        d.index.insert(GLOBAL_CLOCK.to_string(), Sym::Clock(0));
        d
    }

    fn claim(&mut self, name: &str, sym: Sym) -> Result<(), DeclError> {
        if name == GLOBAL_CLOCK {
            return Err(DeclError::ReservedClock);
        }
        if self.index.contains_key(name) {
            return Err(DeclError::Duplicate(name.to_string()));
        }
        self.index.insert(name.to_string(), sym);
        Ok(())
    }

    pub fn add_clock(&mut self, name: &str) -> Result<usize, DeclError> {
        let idx = self.clocks.len();
        self.claim(name, Sym::Clock(idx))?;
        self.clocks.push(name.to_string());
        Ok(idx)
    }

    pub fn add_bool(&mut self, name: &str) -> Result<usize, DeclError> {
        let idx = self.bools.len();
        self.claim(name, Sym::Bool(idx))?;
        self.bools.push(name.to_string());
        Ok(idx)
    }

    pub fn add_int(&mut self, name: &str, lo: i64, hi: i64) -> Result<usize, DeclError> {
        if lo > hi {
            return Err(DeclError::EmptyRange {
                name: name.to_string(),
                lo,
                hi,
            });
        }
        let idx = self.ints.len();
        self.claim(name, Sym::Int(idx))?;
        self.ints.push(IntDecl {
            name: name.to_string(),
            lo,
            hi,
        });
        Ok(idx)
    }

    pub fn add_table(&mut self, table: FunctionTable) -> Result<usize, DeclError> {
        let idx = self.tables.len();
        self.claim(&table.name, Sym::Table(idx))?;
        self.tables.push(table);
        Ok(idx)
    }

    pub fn sym(&self, name: &str) -> Option<Sym> {
        self.index.get(name).copied()
    }

    /// All clock names, the global clock first.
    pub fn clocks(&self) -> &[String] {
        &self.clocks
    }

    /// User-declared clock names (global clock excluded).
    pub fn user_clocks(&self) -> &[String] {
        &self.clocks[1..]
    }

    pub fn bools(&self) -> &[String] {
        &self.bools
    }

    pub fn ints(&self) -> &[IntDecl] {
        &self.ints
    }

    pub fn tables(&self) -> &[FunctionTable] {
        &self.tables
    }

    pub fn clock_name(&self, idx: usize) -> &str {
        &self.clocks[idx]
    }
}

/// Total map from declared variables to values, stored in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Interpretation {
    pub bools: Vec<bool>,
    pub ints: Vec<i64>,
}

impl Interpretation {
    /// All booleans `ff`, all integers at the low end of their range.
    pub fn lowest(decls: &Declarations) -> Self {
        Interpretation {
            bools: vec![false; decls.bools().len()],
            ints: decls.ints().iter().map(|d| d.lo).collect(),
        }
    }

    pub fn get_bool(&self, decls: &Declarations, name: &str) -> Option<bool> {
        match decls.sym(name)? {
            Sym::Bool(i) => self.bools.get(i).copied(),
            _ => None,
        }
    }

    pub fn get_int(&self, decls: &Declarations, name: &str) -> Option<i64> {
        match decls.sym(name)? {
            Sym::Int(i) => self.ints.get(i).copied(),
            _ => None,
        }
    }

    pub fn set_bool(&mut self, decls: &Declarations, name: &str, v: bool) {
        if let Some(Sym::Bool(i)) = decls.sym(name) {
            self.bools[i] = v;
        }
    }

    pub fn set_int(&mut self, decls: &Declarations, name: &str, v: i64) {
        if let Some(Sym::Int(i)) = decls.sym(name) {
            self.ints[i] = v;
        }
    }

    /// Checks that every integer lies inside its declared range.
    pub fn in_range(&self, decls: &Declarations) -> bool {
        self.ints
            .iter()
            .zip(decls.ints())
            .all(|(v, d)| *v >= d.lo && *v <= d.hi)
    }
}

/// Total map from clocks (global clock included, at index 0) to naturals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClockValuation(pub Vec<u64>);

impl ClockValuation {
    pub fn zero(decls: &Declarations) -> Self {
        ClockValuation(vec![0; decls.clocks().len()])
    }

    /// Value of the global clock `t`.
    pub fn global(&self) -> u64 {
        self.0[0]
    }

    pub fn get(&self, decls: &Declarations, name: &str) -> Option<u64> {
        match decls.sym(name)? {
            Sym::Clock(i) => self.0.get(i).copied(),
            _ => None,
        }
    }

    pub fn set(&mut self, decls: &Declarations, name: &str, v: u64) {
        if let Some(Sym::Clock(i)) = decls.sym(name) {
            self.0[i] = v;
        }
    }
}

/// `ν + n`: every clock advanced by `n`.
pub fn advance(nu: &ClockValuation, n: u64) -> ClockValuation {
    ClockValuation(nu.0.iter().map(|v| v + n).collect())
}

/// `ν \ γ`: clocks at the given indices set to 0, all others unchanged.
pub fn reset(nu: &ClockValuation, clocks: &[usize]) -> ClockValuation {
    let mut out = nu.clone();
    for &ix in clocks {
        out.0[ix] = 0;
    }
    out
}

impl fmt::Display for IntDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in [{}, {}]", self.name, self.lo, self.hi)
    }
}
