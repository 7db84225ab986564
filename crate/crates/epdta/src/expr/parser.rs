//! Recursive-descent parsers for the expression language.
//!
//! Precedence, tightest first: unary `~`, then `* / %`, then `+ -`, then
//! comparisons, then `&`. Parentheses override. Identifier classification
//! (clock vs boolean vs integer variable vs table) comes from the declaration
//! set, which is why every entry point takes one.

use super::ast::*;
use super::decls::{Declarations, Sym};
use super::lexer::{lex, LexError, NewlineMode, Pos, Tok, Token};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{pos}: expected {expected}, found {found}")]
    Syntax {
        pos: Pos,
        expected: String,
        found: String,
    },
    #[error("{pos}: undeclared identifier `{name}`")]
    Undeclared { pos: Pos, name: String },
    #[error("{pos}: `{name}` is a {actual}, expected a {expected}")]
    Kind {
        pos: Pos,
        name: String,
        actual: &'static str,
        expected: &'static str,
    },
    #[error("{pos}: table `{table}` takes {expected} arguments, got {got}")]
    Arity {
        pos: Pos,
        table: String,
        expected: usize,
        got: usize,
    },
    #[error("{pos}: integer literal out of range")]
    IntRange { pos: Pos },
    #[error("{0}")]
    Lex(#[from] LexError),
}

pub type PResult<T> = Result<T, ParseError>;

/// Token cursor shared by the expression parsers and the model file reader.
pub struct Cursor<'a> {
    tokens: &'a [Token],
    pub idx: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(tokens: &'a [Token]) -> Self {
        Cursor { tokens, idx: 0 }
    }

    pub fn peek(&self) -> &Token {
        &self.tokens[self.idx.min(self.tokens.len() - 1)]
    }

    pub fn peek2(&self) -> &Token {
        &self.tokens[(self.idx + 1).min(self.tokens.len() - 1)]
    }

    pub fn bump(&mut self) -> Token {
        let t = self.peek().clone();
        if self.idx < self.tokens.len() - 1 {
            self.idx += 1;
        }
        t
    }

    pub fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if self.at(&tok) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&format!("{tok}")))
        }
    }

    pub fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            pos: self.peek().pos,
            expected: expected.to_string(),
            found: format!("{}", self.peek().tok),
        }
    }

    /// Word-keyword check: `Ident` with exactly this spelling.
    pub fn at_word(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == word)
    }

    pub fn eat_word(&mut self, word: &str) -> bool {
        if self.at_word(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_word(&mut self, word: &str) -> PResult<()> {
        if self.eat_word(word) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{word}`")))
        }
    }

    pub fn expect_ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.peek().pos;
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, pos))
            }
            _ => Err(self.unexpected(what)),
        }
    }
}

fn int_literal(value: u64, negative: bool, pos: Pos) -> PResult<i64> {
    if negative {
        if value > i64::MAX as u64 + 1 {
            return Err(ParseError::IntRange { pos });
        }
        Ok((value as i128).wrapping_neg() as i64)
    } else {
        i64::try_from(value).map_err(|_| ParseError::IntRange { pos })
    }
}

// ---------------------------------------------------------------------------
// Arithmetic expressions
// ---------------------------------------------------------------------------

pub fn aexpr(cur: &mut Cursor, decls: &Declarations) -> PResult<AExpr> {
    let mut left = amul(cur, decls)?;
    loop {
        let op = match cur.peek().tok {
            Tok::Plus => ABinOp::Add,
            Tok::Minus => ABinOp::Sub,
            _ => break,
        };
        cur.bump();
        let right = amul(cur, decls)?;
        left = AExpr::Bin(op, Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn amul(cur: &mut Cursor, decls: &Declarations) -> PResult<AExpr> {
    let mut left = aprimary(cur, decls)?;
    loop {
        let op = match cur.peek().tok {
            Tok::Star => ABinOp::Mul,
            Tok::Slash => ABinOp::Div,
            Tok::Percent => ABinOp::Rem,
            _ => break,
        };
        cur.bump();
        let right = aprimary(cur, decls)?;
        left = AExpr::Bin(op, Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn aprimary(cur: &mut Cursor, decls: &Declarations) -> PResult<AExpr> {
    let pos = cur.peek().pos;
    match cur.peek().tok.clone() {
        Tok::Int(v) => {
            cur.bump();
            Ok(AExpr::Int(int_literal(v, false, pos)?))
        }
        Tok::Minus => {
            cur.bump();
            let pos2 = cur.peek().pos;
            match cur.peek().tok.clone() {
                Tok::Int(v) => {
                    cur.bump();
                    Ok(AExpr::Int(int_literal(v, true, pos2)?))
                }
                _ => Err(cur.unexpected("integer literal after unary `-`")),
            }
        }
        Tok::LParen => {
            cur.bump();
            let e = aexpr(cur, decls)?;
            cur.expect(Tok::RParen)?;
            Ok(e)
        }
        Tok::Ident(name) => {
            cur.bump();
            match decls.sym(&name) {
                Some(Sym::Int(_)) => Ok(AExpr::Var(name)),
                Some(Sym::Table(ti)) => {
                    let args = apply_args(cur, decls, aexpr)?;
                    let table = &decls.tables()[ti];
                    if args.len() != table.arity() {
                        return Err(ParseError::Arity {
                            pos,
                            table: name,
                            expected: table.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(AExpr::Apply(name, args))
                }
                Some(other) => Err(ParseError::Kind {
                    pos,
                    name,
                    actual: other.kind(),
                    expected: "integer variable or table",
                }),
                None => Err(ParseError::Undeclared { pos, name }),
            }
        }
        _ => Err(cur.unexpected("arithmetic expression")),
    }
}

fn apply_args<T>(
    cur: &mut Cursor,
    decls: &Declarations,
    item: fn(&mut Cursor, &Declarations) -> PResult<T>,
) -> PResult<Vec<T>> {
    cur.expect(Tok::LParen)?;
    let mut args = Vec::new();
    if !cur.at(&Tok::RParen) {
        loop {
            args.push(item(cur, decls)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
    }
    cur.expect(Tok::RParen)?;
    Ok(args)
}

// ---------------------------------------------------------------------------
// Boolean expressions
// ---------------------------------------------------------------------------

pub fn bexpr(cur: &mut Cursor, decls: &Declarations) -> PResult<BExpr> {
    let mut left = bunary(cur, decls)?;
    while cur.eat(&Tok::Amp) {
        let right = bunary(cur, decls)?;
        left = BExpr::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

/// One `&`-free boolean conjunct; also the component parser for guards.
pub fn bunary(cur: &mut Cursor, decls: &Declarations) -> PResult<BExpr> {
    if cur.eat(&Tok::Tilde) {
        let inner = bunary(cur, decls)?;
        return Ok(BExpr::Not(Box::new(inner)));
    }
    bprimary(cur, decls)
}

fn cmp_op(tok: &Tok) -> Option<CmpOp> {
    match tok {
        Tok::Eq => Some(CmpOp::Eq),
        Tok::Le => Some(CmpOp::Le),
        Tok::Lt => Some(CmpOp::Lt),
        _ => None,
    }
}

fn bprimary(cur: &mut Cursor, decls: &Declarations) -> PResult<BExpr> {
    let pos = cur.peek().pos;
    match cur.peek().tok.clone() {
        Tok::Ident(name) if name == "tt" => {
            cur.bump();
            Ok(BExpr::True)
        }
        Tok::Ident(name) if name == "ff" => {
            cur.bump();
            Ok(BExpr::False)
        }
        Tok::Ident(name) if matches!(decls.sym(&name), Some(Sym::Bool(_))) => {
            cur.bump();
            if cmp_op(&cur.peek().tok).is_some() {
                return Err(ParseError::Kind {
                    pos,
                    name,
                    actual: "boolean variable",
                    expected: "integer variable or table in a comparison",
                });
            }
            Ok(BExpr::Var(name))
        }
        // An arithmetic comparison, or a parenthesized boolean expression.
        // `(` is ambiguous up front, so try the comparison route and fall
        // back when it does not pan out.
        Tok::LParen => {
            let snapshot = cur.idx;
            match comparison(cur, decls) {
                Ok(cmp) => Ok(cmp),
                Err(_) => {
                    cur.idx = snapshot;
                    cur.bump();
                    let e = bexpr(cur, decls)?;
                    cur.expect(Tok::RParen)?;
                    Ok(e)
                }
            }
        }
        Tok::Int(_) | Tok::Minus | Tok::Decimal(_) => comparison(cur, decls),
        Tok::Ident(_) => comparison(cur, decls),
        _ => Err(cur.unexpected("boolean expression")),
    }
}

fn comparison(cur: &mut Cursor, decls: &Declarations) -> PResult<BExpr> {
    let left = aexpr(cur, decls)?;
    let op = match cmp_op(&cur.peek().tok) {
        Some(op) => op,
        None => match cur.peek().tok {
            Tok::Ge | Tok::Gt => {
                return Err(cur.unexpected(
                    "`=`, `<=` or `<` (`>=` and `>` apply to clock constraints only)",
                ))
            }
            _ => return Err(cur.unexpected("comparison operator")),
        },
    };
    cur.bump();
    let right = aexpr(cur, decls)?;
    Ok(BExpr::Cmp(op, left, right))
}

// ---------------------------------------------------------------------------
// Clock constraints
// ---------------------------------------------------------------------------

fn clock_rel(tok: &Tok) -> Option<ClockRel> {
    match tok {
        Tok::Lt => Some(ClockRel::Lt),
        Tok::Gt => Some(ClockRel::Gt),
        Tok::Le => Some(ClockRel::Le),
        Tok::Ge => Some(ClockRel::Ge),
        Tok::Eq => Some(ClockRel::Eq),
        _ => None,
    }
}

pub fn clock_constraint(cur: &mut Cursor, decls: &Declarations) -> PResult<ClockConstraint> {
    let mut left = clock_atom(cur, decls)?;
    while cur.eat(&Tok::Amp) {
        let right = clock_atom(cur, decls)?;
        left = ClockConstraint::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

/// One constraint atom: `true`, `false`, `x # c` or `x - y # c`.
pub fn clock_atom(cur: &mut Cursor, decls: &Declarations) -> PResult<ClockConstraint> {
    if cur.eat_word("true") {
        return Ok(ClockConstraint::True);
    }
    if cur.eat_word("false") {
        return Ok(ClockConstraint::False);
    }
    let (clock, pos) = cur.expect_ident("clock constraint")?;
    check_clock(decls, &clock, pos)?;
    if cur.eat(&Tok::Minus) {
        let (other, pos2) = cur.expect_ident("clock name")?;
        check_clock(decls, &other, pos2)?;
        let rel = expect_rel(cur)?;
        let bound = expect_nat(cur)?;
        Ok(ClockConstraint::Diff {
            left: clock,
            right: other,
            rel,
            bound,
        })
    } else {
        let rel = expect_rel(cur)?;
        let bound = expect_nat(cur)?;
        Ok(ClockConstraint::Atom { clock, rel, bound })
    }
}

fn check_clock(decls: &Declarations, name: &str, pos: Pos) -> PResult<()> {
    match decls.sym(name) {
        Some(Sym::Clock(_)) => Ok(()),
        Some(other) => Err(ParseError::Kind {
            pos,
            name: name.to_string(),
            actual: other.kind(),
            expected: "clock",
        }),
        None => Err(ParseError::Undeclared {
            pos,
            name: name.to_string(),
        }),
    }
}

fn expect_rel(cur: &mut Cursor) -> PResult<ClockRel> {
    match clock_rel(&cur.peek().tok) {
        Some(rel) => {
            cur.bump();
            Ok(rel)
        }
        None => Err(cur.unexpected("clock relation (`<`, `>`, `<=`, `>=`, `=`)")),
    }
}

fn expect_nat(cur: &mut Cursor) -> PResult<u64> {
    match cur.peek().tok {
        Tok::Int(v) => {
            cur.bump();
            Ok(v)
        }
        _ => Err(cur.unexpected("natural number")),
    }
}

// ---------------------------------------------------------------------------
// Guards
// ---------------------------------------------------------------------------

pub fn guard(cur: &mut Cursor, decls: &Declarations) -> PResult<Guard> {
    let mut left = guard_component(cur, decls)?;
    while cur.eat(&Tok::Amp) {
        let right = guard_component(cur, decls)?;
        left = Guard::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn guard_component(cur: &mut Cursor, decls: &Declarations) -> PResult<Guard> {
    // A component beginning with `true`, `false` or a clock name is a clock
    // constraint atom; anything else is a boolean conjunct.
    if cur.at_word("true") || cur.at_word("false") {
        return Ok(Guard::Clock(clock_atom(cur, decls)?));
    }
    if let Tok::Ident(name) = &cur.peek().tok {
        if matches!(decls.sym(name), Some(Sym::Clock(_))) {
            return Ok(Guard::Clock(clock_atom(cur, decls)?));
        }
    }
    Ok(Guard::Bool(bunary(cur, decls)?))
}

// ---------------------------------------------------------------------------
// Assignments
// ---------------------------------------------------------------------------

/// Comma-separated assignment list; empty input yields the empty assignment.
/// Stops at the first token that cannot start another assignment.
pub fn assignment(cur: &mut Cursor, decls: &Declarations) -> PResult<Assignment> {
    let mut items = Vec::new();
    if matches!(cur.peek().tok, Tok::Ident(_)) {
        loop {
            items.push(single_assign(cur, decls)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
    }
    Ok(Assignment(items))
}

fn single_assign(cur: &mut Cursor, decls: &Declarations) -> PResult<SingleAssign> {
    let (name, pos) = cur.expect_ident("assignment target")?;
    cur.expect(Tok::Assign)?;
    match decls.sym(&name) {
        Some(Sym::Bool(_)) => Ok(SingleAssign::Bool(name, bexpr(cur, decls)?)),
        Some(Sym::Int(_)) => Ok(SingleAssign::Int(name, aexpr(cur, decls)?)),
        Some(Sym::Clock(_)) => Err(ParseError::Kind {
            pos,
            name,
            actual: "clock",
            expected: "variable (clocks are reset, not assigned)",
        }),
        Some(other) => Err(ParseError::Kind {
            pos,
            name,
            actual: other.kind(),
            expected: "variable",
        }),
        None => Err(ParseError::Undeclared { pos, name }),
    }
}

// ---------------------------------------------------------------------------
// Probability expressions
// ---------------------------------------------------------------------------

pub fn prob_expr(cur: &mut Cursor, decls: &Declarations) -> PResult<ProbExpr> {
    let mut left = pmul(cur, decls)?;
    loop {
        let op = match cur.peek().tok {
            Tok::Plus => PBinOp::Add,
            Tok::Minus => PBinOp::Sub,
            _ => break,
        };
        cur.bump();
        let right = pmul(cur, decls)?;
        left = ProbExpr::Bin(op, Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn pmul(cur: &mut Cursor, decls: &Declarations) -> PResult<ProbExpr> {
    let mut left = pprimary(cur, decls)?;
    loop {
        let op = match cur.peek().tok {
            Tok::Star => PBinOp::Mul,
            Tok::Slash => PBinOp::Div,
            _ => break,
        };
        cur.bump();
        let right = pprimary(cur, decls)?;
        left = ProbExpr::Bin(op, Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn pprimary(cur: &mut Cursor, decls: &Declarations) -> PResult<ProbExpr> {
    let pos = cur.peek().pos;
    match cur.peek().tok.clone() {
        Tok::Decimal(v) => {
            cur.bump();
            Ok(ProbExpr::Num(v))
        }
        Tok::Int(v) => {
            cur.bump();
            Ok(ProbExpr::Int(int_literal(v, false, pos)?))
        }
        Tok::Minus => {
            cur.bump();
            let pos2 = cur.peek().pos;
            match cur.peek().tok.clone() {
                Tok::Decimal(v) => {
                    cur.bump();
                    Ok(ProbExpr::Num(-v))
                }
                Tok::Int(v) => {
                    cur.bump();
                    Ok(ProbExpr::Int(int_literal(v, true, pos2)?))
                }
                _ => Err(cur.unexpected("number after unary `-`")),
            }
        }
        Tok::LParen => {
            cur.bump();
            let e = prob_expr(cur, decls)?;
            cur.expect(Tok::RParen)?;
            Ok(e)
        }
        Tok::Ident(name) => {
            cur.bump();
            match decls.sym(&name) {
                Some(Sym::Int(_)) => Ok(ProbExpr::Var(name)),
                Some(Sym::Clock(_)) => Ok(ProbExpr::Clock(name)),
                Some(Sym::Table(ti)) => {
                    let args = apply_args(cur, decls, prob_expr)?;
                    let table = &decls.tables()[ti];
                    if args.len() != table.arity() {
                        return Err(ParseError::Arity {
                            pos,
                            table: name,
                            expected: table.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(ProbExpr::Apply(name, args))
                }
                Some(other) => Err(ParseError::Kind {
                    pos,
                    name,
                    actual: other.kind(),
                    expected: "integer variable, clock or table",
                }),
                None => Err(ParseError::Undeclared { pos, name }),
            }
        }
        _ => Err(cur.unexpected("probability expression")),
    }
}

// ---------------------------------------------------------------------------
// Standalone entry points
// ---------------------------------------------------------------------------

fn standalone<T>(
    text: &str,
    decls: &Declarations,
    f: fn(&mut Cursor, &Declarations) -> PResult<T>,
) -> PResult<T> {
    let tokens = lex(text, NewlineMode::Skip)?;
    let mut cur = Cursor::new(&tokens);
    let out = f(&mut cur, decls)?;
    if !cur.at(&Tok::Eof) {
        return Err(cur.unexpected("end of input"));
    }
    Ok(out)
}

pub fn parse_aexpr(text: &str, decls: &Declarations) -> PResult<AExpr> {
    standalone(text, decls, aexpr)
}

pub fn parse_bexpr(text: &str, decls: &Declarations) -> PResult<BExpr> {
    standalone(text, decls, bexpr)
}

pub fn parse_clock_constraint(text: &str, decls: &Declarations) -> PResult<ClockConstraint> {
    standalone(text, decls, clock_constraint)
}

pub fn parse_guard(text: &str, decls: &Declarations) -> PResult<Guard> {
    standalone(text, decls, guard)
}

pub fn parse_assignment(text: &str, decls: &Declarations) -> PResult<Assignment> {
    standalone(text, decls, assignment)
}

pub fn parse_prob_expr(text: &str, decls: &Declarations) -> PResult<ProbExpr> {
    standalone(text, decls, prob_expr)
}
