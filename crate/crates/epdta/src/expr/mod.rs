//! The model expression language: boolean and arithmetic expressions,
//! assignments, clock constraints, guards and probability expressions,
//! with parsing, printing and evaluation.

mod ast;
mod decls;
mod eval;
mod lexer;
mod parser;

pub use ast::{
    ABinOp, AExpr, Assignment, BExpr, ClockConstraint, ClockRel, CmpOp, Guard, PBinOp, ProbExpr,
    SingleAssign,
};
pub use decls::{
    advance, reset, ClockValuation, DeclError, Declarations, FunctionTable, IntDecl,
    Interpretation, Sym, GLOBAL_CLOCK,
};
pub use eval::{
    apply_assignment, clock_satisfies, eval_bool, eval_int, eval_prob, satisfies, EResult,
    EvalError,
};
pub use lexer::{lex, LexError, NewlineMode, Pos, Tok, Token};
pub use parser::{
    parse_aexpr, parse_assignment, parse_bexpr, parse_clock_constraint, parse_guard,
    parse_prob_expr, Cursor, PResult, ParseError,
};

// Cursor-level parsers for embedding in other file formats.
pub(crate) use parser::{assignment as parse_assignment_at, guard as parse_guard_at};
pub(crate) use parser::{clock_constraint as parse_clock_constraint_at, prob_expr as parse_prob_expr_at};
