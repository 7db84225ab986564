//! The model file format.
//!
//! Line-oriented, `#` comments, UTF-8. Declarations come before the
//! locations and edges that use them. The full grammar ships in
//! `docs/model-format.md`; `save` emits the canonical form and
//! `load(save(a)) == a` for every valid automaton.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{Epdta, EpdtaBuilder, EdgeSpec, OutcomeSpec, ValidationError};
use crate::expr::{
    lex, Cursor, Declarations, FunctionTable, LexError, NewlineMode, ParseError, ProbExpr, Tok,
};
use crate::expr::{ClockConstraint, Guard};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Lex(#[from] LexError),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("model is invalid:\n{}", format_validation(.0))]
    Invalid(Vec<ValidationError>),
}

fn format_validation(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(|e| format!("  - {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

const KEYWORDS: &[&str] = &[
    "clocks", "bools", "ints", "table", "location", "init", "max_time", "edge", "urgent",
];

fn at_keyword(cur: &Cursor) -> bool {
    KEYWORDS.iter().any(|k| cur.at_word(k))
}

/// Parses a model file from text.
pub fn load(text: &str) -> Result<Epdta, LoadError> {
    let tokens = lex(text, NewlineMode::Keep)?;
    let mut cur = Cursor::new(&tokens);
    let mut b = EpdtaBuilder::new();
    let mut decl_errors: Vec<ValidationError> = Vec::new();

    macro_rules! declare {
        ($e:expr) => {
            if let Err(err) = $e {
                decl_errors.push(err);
            }
        };
    }

    while !cur.at(&Tok::Eof) {
        if cur.eat(&Tok::Newline) {
            continue;
        }
        if cur.eat_word("clocks") {
            loop {
                let (name, _) = cur.expect_ident("clock name")?;
                declare!(b.add_clock(&name));
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            end_of_line(&mut cur)?;
        } else if cur.eat_word("bools") {
            loop {
                let (name, _) = cur.expect_ident("boolean variable name")?;
                cur.expect(Tok::Eq)?;
                let init = parse_bool_literal(&mut cur)?;
                declare!(b.add_bool(&name, init));
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            end_of_line(&mut cur)?;
        } else if cur.eat_word("ints") {
            loop {
                let (name, _) = cur.expect_ident("integer variable name")?;
                cur.expect_word("in")?;
                cur.expect(Tok::LBracket)?;
                let lo = parse_signed_int(&mut cur)?;
                cur.expect(Tok::Comma)?;
                let hi = parse_signed_int(&mut cur)?;
                cur.expect(Tok::RBracket)?;
                cur.expect(Tok::Eq)?;
                let init = parse_signed_int(&mut cur)?;
                declare!(b.add_int(&name, lo, hi, init));
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            end_of_line(&mut cur)?;
        } else if cur.eat_word("table") {
            let (name, _) = cur.expect_ident("table name")?;
            let mut dims = Vec::new();
            while cur.eat(&Tok::LBracket) {
                let lo = parse_signed_int(&mut cur)?;
                cur.expect(Tok::DotDot)?;
                let hi = parse_signed_int(&mut cur)?;
                cur.expect(Tok::RBracket)?;
                dims.push((lo, hi));
            }
            if dims.is_empty() {
                return Err(cur.unexpected("`[lo..hi]` table domain").into());
            }
            cur.expect(Tok::Eq)?;
            let count: usize = dims
                .iter()
                .map(|&(lo, hi)| if hi >= lo { (hi - lo) as usize + 1 } else { 0 })
                .product();
            let mut values = Vec::with_capacity(count);
            while values.len() < count {
                if cur.eat(&Tok::Newline) {
                    continue;
                }
                values.push(parse_rational(&mut cur)?);
            }
            match FunctionTable::new(&name, dims, values) {
                Ok(t) => declare!(b.add_table(t)),
                Err(e) => decl_errors.push(e.into()),
            }
            end_of_line(&mut cur)?;
        } else if cur.eat_word("location") {
            let (name, _) = cur.expect_ident("location name")?;
            let invariant = if cur.eat_word("invariant") {
                crate::expr::parse_clock_constraint_at(&mut cur, &b.decls)?
            } else {
                ClockConstraint::True
            };
            declare!(b.add_location(&name, invariant));
            end_of_line(&mut cur)?;
        } else if cur.eat_word("init") {
            let (name, _) = cur.expect_ident("location name")?;
            b.set_init_location(&name);
            end_of_line(&mut cur)?;
        } else if cur.eat_word("max_time") {
            let t = match cur.peek().tok {
                Tok::Int(v) => {
                    cur.bump();
                    v
                }
                _ => return Err(cur.unexpected("natural number").into()),
            };
            b.set_max_time(t);
            end_of_line(&mut cur)?;
        } else if cur.at_word("edge") || cur.at_word("urgent") {
            let urgent = cur.eat_word("urgent");
            cur.expect_word("edge")?;
            let (source, _) = cur.expect_ident("source location")?;
            cur.expect_word("guard")?;
            let guard = parse_guard_line(&mut cur, &b.decls)?;
            end_of_line(&mut cur)?;
            let mut outcomes = Vec::new();
            loop {
                if cur.eat(&Tok::Newline) {
                    continue;
                }
                if cur.at(&Tok::Eof) || at_keyword(&cur) {
                    break;
                }
                outcomes.push(parse_outcome(&mut cur, &b.decls)?);
            }
            b.add_edge(EdgeSpec {
                source,
                urgent,
                guard,
                outcomes,
            });
        } else {
            return Err(cur
                .unexpected("`clocks`, `bools`, `ints`, `table`, `location`, `init`, `max_time` or `edge`")
                .into());
        }
    }

    match b.build() {
        Ok(a) if decl_errors.is_empty() => Ok(a),
        Ok(_) => Err(LoadError::Invalid(decl_errors)),
        Err(mut errors) => {
            let mut all = decl_errors;
            all.append(&mut errors);
            Err(LoadError::Invalid(all))
        }
    }
}

/// Parses a model file from disk.
pub fn load_file(path: impl AsRef<Path>) -> Result<Epdta, LoadError> {
    let text = std::fs::read_to_string(path)?;
    load(&text)
}

fn end_of_line(cur: &mut Cursor) -> Result<(), ParseError> {
    if cur.at(&Tok::Eof) || cur.eat(&Tok::Newline) {
        Ok(())
    } else {
        Err(cur.unexpected("end of line"))
    }
}

fn parse_bool_literal(cur: &mut Cursor) -> Result<bool, ParseError> {
    if cur.eat_word("tt") {
        Ok(true)
    } else if cur.eat_word("ff") {
        Ok(false)
    } else {
        Err(cur.unexpected("`tt` or `ff`"))
    }
}

fn parse_signed_int(cur: &mut Cursor) -> Result<i64, ParseError> {
    let negative = cur.eat(&Tok::Minus);
    let pos = cur.peek().pos;
    match cur.peek().tok {
        Tok::Int(v) => {
            cur.bump();
            if negative {
                if v > i64::MAX as u64 + 1 {
                    return Err(ParseError::IntRange { pos });
                }
                Ok((v as i128).wrapping_neg() as i64)
            } else {
                i64::try_from(v).map_err(|_| ParseError::IntRange { pos })
            }
        }
        _ => Err(cur.unexpected("integer")),
    }
}

/// One table entry: decimal, integer or `p/q` fraction, optionally negative.
fn parse_rational(cur: &mut Cursor) -> Result<f64, ParseError> {
    let negative = cur.eat(&Tok::Minus);
    let sign = if negative { -1.0 } else { 1.0 };
    match cur.peek().tok {
        Tok::Decimal(v) => {
            cur.bump();
            Ok(sign * v)
        }
        Tok::Int(v) => {
            cur.bump();
            if cur.eat(&Tok::Slash) {
                let den = match cur.peek().tok {
                    Tok::Int(d) if d != 0 => {
                        cur.bump();
                        d
                    }
                    _ => return Err(cur.unexpected("nonzero denominator")),
                };
                Ok(sign * v as f64 / den as f64)
            } else {
                Ok(sign * v as f64)
            }
        }
        _ => Err(cur.unexpected("number")),
    }
}

/// Guard text extends to the end of the line.
fn parse_guard_line(cur: &mut Cursor, decls: &Declarations) -> Result<Guard, ParseError> {
    crate::expr::parse_guard_at(cur, decls)
}

/// `PROB: ACTION, {ASSIGNMENTS}, reset {CLOCKS}, -> TARGET`
///
/// The action may be empty or spelled `eps`; both mean ε.
fn parse_outcome(cur: &mut Cursor, decls: &Declarations) -> Result<OutcomeSpec, ParseError> {
    let prob: ProbExpr = crate::expr::parse_prob_expr_at(cur, decls)?;
    cur.expect(Tok::Colon)?;
    let action = if cur.at(&Tok::Comma) {
        String::new()
    } else {
        let (name, _) = cur.expect_ident("action name (or nothing for ε)")?;
        if name == "eps" {
            String::new()
        } else {
            name
        }
    };
    cur.expect(Tok::Comma)?;
    cur.expect(Tok::LBrace)?;
    let assign = crate::expr::parse_assignment_at(cur, decls)?;
    cur.expect(Tok::RBrace)?;
    cur.expect(Tok::Comma)?;
    cur.expect_word("reset")?;
    cur.expect(Tok::LBrace)?;
    let mut resets = Vec::new();
    if !cur.at(&Tok::RBrace) {
        loop {
            let (name, _) = cur.expect_ident("clock name")?;
            resets.push(name);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
    }
    cur.expect(Tok::RBrace)?;
    cur.eat(&Tok::Comma);
    cur.expect(Tok::Arrow)?;
    let (target, _) = cur.expect_ident("target location")?;
    end_of_line(cur)?;
    Ok(OutcomeSpec {
        prob,
        action,
        assign,
        resets,
        target,
    })
}

// ---------------------------------------------------------------------------
// Canonical emission
// ---------------------------------------------------------------------------

/// Emits the canonical model text; `load(save(a)) == a`.
pub fn save(a: &Epdta) -> String {
    let mut out = String::new();

    if !a.decls.user_clocks().is_empty() {
        let _ = writeln!(out, "clocks {}", a.decls.user_clocks().join(", "));
    }
    if !a.decls.bools().is_empty() {
        let entries: Vec<String> = a
            .decls
            .bools()
            .iter()
            .zip(&a.init_interp.bools)
            .map(|(name, &v)| format!("{name} = {}", if v { "tt" } else { "ff" }))
            .collect();
        let _ = writeln!(out, "bools {}", entries.join(", "));
    }
    for (d, &init) in a.decls.ints().iter().zip(&a.init_interp.ints) {
        let _ = writeln!(out, "ints {} in [{}, {}] = {}", d.name, d.lo, d.hi, init);
    }
    for t in a.decls.tables() {
        let dims: String = t
            .dims
            .iter()
            .map(|&(lo, hi)| format!("[{lo}..{hi}]"))
            .collect();
        let _ = writeln!(out, "table {}{} =", t.name, dims);
        // one line per last-axis row
        let row = t.dims.last().map(|&(lo, hi)| (hi - lo) as usize + 1).unwrap_or(1);
        for chunk in t.values.chunks(row) {
            let vals: Vec<String> = chunk.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "  {}", vals.join(" "));
        }
    }
    for loc in &a.locations {
        if loc.invariant == ClockConstraint::True {
            let _ = writeln!(out, "location {}", loc.name);
        } else {
            let _ = writeln!(out, "location {} invariant {}", loc.name, loc.invariant);
        }
    }
    let _ = writeln!(out, "init {}", a.locations[a.init_location].name);
    let _ = writeln!(out, "max_time {}", a.max_time);
    for e in &a.edges {
        let urgent = if e.urgent { "urgent " } else { "" };
        let _ = writeln!(
            out,
            "{urgent}edge {} guard {}",
            a.locations[e.source].name, e.guard
        );
        for o in &e.outcomes {
            let resets: Vec<&str> = o
                .resets
                .iter()
                .map(|&ix| a.decls.clock_name(ix))
                .collect();
            let _ = writeln!(
                out,
                "  {}: {}, {{{}}}, reset {{{}}}, -> {}",
                o.prob,
                o.action,
                o.assign,
                resets.join(", "),
                a.locations[o.target].name
            );
        }
    }
    out
}
