//! Extended probabilistic discrete timed automata (EPDTA).
//!
//! An EPDTA is a probabilistic timed automaton over discrete time with
//! bounded integer and boolean state variables, urgent edges and a global
//! horizon `MAX_TIME`. This crate provides:
//!
//! - [`expr`]: the guard/assignment expression language (parse, print, eval);
//! - [`automaton`]: the automaton tuple, a text model format and validation;
//! - [`semantics`]: the Markov-decision-process semantics — stochastic
//!   stepping, exhaustive enumeration and exact reachability probabilities;
//! - [`solemodel`]: a common-sole (*Solea solea*) individual model: growth,
//!   length classes, monthly mortality/fishing/breeding tables and a builder
//!   emitting the per-individual automaton;
//! - [`sim`]: an agent-based population simulator with monthly barrier
//!   synchronization, newborn injection and per-month statistics;
//! - [`prism`]: an exporter to PRISM MDP syntax with a round-trip verifier.
//!
//! Heavy loops (Monte Carlo estimation, per-agent monthly updates) run on
//! rayon when the default `parallel` feature is enabled; sequential
//! fallbacks are always available and produce bit-identical results.

pub mod automaton;
pub mod cli;
pub mod expr;
pub mod prism;
pub mod rng;
pub mod semantics;
pub mod sim;
pub mod solemodel;
