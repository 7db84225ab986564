//! Markov-decision-process semantics of an automaton.
//!
//! A state is `(location, clock valuation including the global clock t,
//! interpretation)`. Four rules produce the distribution set of a state:
//!
//! - **Stop**: once `t` reaches `max_time`, the only move is to the fresh
//!   `stop` location; no other rule fires.
//! - **Time**: one time unit elapses if the source invariant still holds at
//!   `ν + 1`, the horizon is not exceeded, and no urgent edge is enabled.
//! - **Urgent**: every enabled urgent edge contributes its distribution.
//! - **Non-Urgent**: every enabled non-urgent edge contributes its
//!   distribution, but only when no urgent edge is enabled.
//!
//! Several enabled choices are genuine MDP nondeterminism. Stochastic
//! stepping resolves it uniformly over the choice set in the canonical order
//! (Stop, Time, then edges in declaration order); exact reachability uses
//! the same policy, so Monte Carlo estimates and [`reach_probability`]
//! answers are comparable.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::automaton::{Epdta, DISTRIBUTION_SUM_TOLERANCE, STOP_LOCATION};
use crate::expr::{
    advance, apply_assignment, eval_prob, reset, satisfies, ClockValuation, EvalError,
};
use crate::rng::{Stream, UniformSource};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Control position of a semantic state: a declared location or `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    Loc(usize),
    Stop,
}

/// A state of the underlying MDP.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MdpState {
    pub site: Site,
    /// Valuation over the declared clocks plus the global clock `t`
    /// (index 0).
    pub clocks: ClockValuation,
    pub interp: crate::expr::Interpretation,
}

impl MdpState {
    /// Value of the global clock.
    pub fn time(&self) -> u64 {
        self.clocks.global()
    }
}

/// Which rule produced a distribution; edge payloads index [`Epdta::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleTag {
    Stop,
    Time,
    Urgent(usize),
    NonUrgent(usize),
}

impl std::fmt::Display for RuleTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RuleTag::Stop => f.write_str("stop"),
            RuleTag::Time => f.write_str("time"),
            RuleTag::Urgent(k) => write!(f, "urgent#{k}"),
            RuleTag::NonUrgent(k) => write!(f, "edge#{k}"),
        }
    }
}

/// One support point of a step distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEntry {
    pub state: MdpState,
    pub prob: f64,
    /// Emitted action; ε (empty) for Stop and Time.
    pub action: String,
}

/// A probability distribution over successor states.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub tag: RuleTag,
    pub entries: Vec<StepEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticsError {
    #[error("{edge}: {source}")]
    EdgeEval { edge: String, source: EvalError },
    #[error("invariant of `{location}`: {source}")]
    InvariantEval { location: String, source: EvalError },
    #[error("{edge}: outcome probability evaluates to {value}, outside [0, 1]")]
    BadProbability { edge: String, value: f64 },
    #[error("{edge}: outcome probabilities evaluate to sum {sum}, not 1")]
    DistributionSum { edge: String, sum: f64 },
    #[error("deadlock: no rule applies in location `{location}` at t={time} before max_time")]
    Deadlock { location: String, time: u64 },
    #[error("the stop state has no outgoing steps")]
    AtStop,
    #[error("state cap of {cap} reachable states exceeded")]
    StateCapExceeded { cap: usize },
    #[error("horizon {horizon} exceeds max_time {max_time}")]
    HorizonTooLarge { horizon: u64, max_time: u64 },
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error(
        "step graph has a cycle at fixed time (state {state}); exact reachability requires an \
         acyclic step graph"
    )]
    CyclicStepGraph { state: usize },
    #[error("sampled run exceeded {0} steps; the model loops without advancing time")]
    RunawayRun(usize),
}

/// Default cap on explicit-state enumeration, overridable per call and via
/// the `EPDTA_STATE_CAP` environment variable in the CLI.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// The initial state: initial location, all clocks zero, `ι0`.
pub fn initial_state(a: &Epdta) -> MdpState {
    MdpState {
        site: Site::Loc(a.init_location),
        clocks: ClockValuation::zero(&a.decls),
        interp: a.init_interp.clone(),
    }
}

fn edge_desc(a: &Epdta, edge_idx: usize) -> String {
    let e = &a.edges[edge_idx];
    format!("edge #{} from `{}`", edge_idx + 1, a.locations[e.source].name)
}

/// Evaluates one edge distribution at a state. Entries with probability
/// exactly zero (possible with table-driven probabilities) are pruned after
/// the sum check.
fn eval_distribution(
    a: &Epdta,
    edge_idx: usize,
    s: &MdpState,
) -> Result<Vec<StepEntry>, SemanticsError> {
    let e = &a.edges[edge_idx];
    let wrap = |source: EvalError| SemanticsError::EdgeEval {
        edge: edge_desc(a, edge_idx),
        source,
    };
    let mut entries = Vec::with_capacity(e.outcomes.len());
    let mut sum = 0.0;
    for o in &e.outcomes {
        let p = eval_prob(&o.prob, &s.interp, &s.clocks, &a.decls).map_err(wrap)?;
        if !(-DISTRIBUTION_SUM_TOLERANCE..=1.0 + DISTRIBUTION_SUM_TOLERANCE).contains(&p) {
            return Err(SemanticsError::BadProbability {
                edge: edge_desc(a, edge_idx),
                value: p,
            });
        }
        sum += p;
        if p <= 0.0 {
            continue;
        }
        let interp = apply_assignment(&o.assign, &s.interp, &a.decls).map_err(wrap)?;
        entries.push(StepEntry {
            state: MdpState {
                site: Site::Loc(o.target),
                clocks: reset(&s.clocks, &o.resets),
                interp,
            },
            prob: p,
            action: o.action.clone(),
        });
    }
    if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
        return Err(SemanticsError::DistributionSum {
            edge: edge_desc(a, edge_idx),
            sum,
        });
    }
    Ok(entries)
}

fn guard_enabled(a: &Epdta, edge_idx: usize, s: &MdpState) -> Result<bool, SemanticsError> {
    satisfies(&a.edges[edge_idx].guard, &s.interp, &s.clocks, &a.decls).map_err(|source| {
        SemanticsError::EdgeEval {
            edge: edge_desc(a, edge_idx),
            source,
        }
    })
}

/// True when some urgent edge out of the state's location is enabled.
/// Always false once `t` reached `max_time` (the Stop rule pre-empts).
pub fn urgent_enabled(a: &Epdta, s: &MdpState) -> Result<bool, SemanticsError> {
    let loc = match s.site {
        Site::Stop => return Ok(false),
        Site::Loc(loc) => loc,
    };
    if s.time() == a.max_time {
        return Ok(false);
    }
    for &ix in &a.outgoing[loc] {
        if a.edges[ix].urgent && guard_enabled(a, ix, s)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// `Steps(s)` with the Time rule additionally bounded by `horizon` on the
/// global clock. With `horizon = max_time` this is exactly the rule set.
pub fn steps_bounded(
    a: &Epdta,
    s: &MdpState,
    horizon: u64,
) -> Result<Vec<StepDistribution>, SemanticsError> {
    let loc = match s.site {
        Site::Stop => return Ok(Vec::new()),
        Site::Loc(loc) => loc,
    };
    let t = s.time();

    // Stop pre-empts everything at the horizon of the automaton.
    if t == a.max_time {
        return Ok(vec![StepDistribution {
            tag: RuleTag::Stop,
            entries: vec![StepEntry {
                state: MdpState {
                    site: Site::Stop,
                    clocks: s.clocks.clone(),
                    interp: s.interp.clone(),
                },
                prob: 1.0,
                action: String::new(),
            }],
        }]);
    }

    let mut out = Vec::new();

    let mut any_urgent = false;
    for &ix in &a.outgoing[loc] {
        if a.edges[ix].urgent && guard_enabled(a, ix, s)? {
            any_urgent = true;
            out.push(StepDistribution {
                tag: RuleTag::Urgent(ix),
                entries: eval_distribution(a, ix, s)?,
            });
        }
    }
    if any_urgent {
        return Ok(out);
    }

    // Time, then non-urgent edges in declaration order.
    if t + 1 <= a.max_time && t + 1 <= horizon {
        let advanced = advance(&s.clocks, 1);
        let inv = &a.locations[loc].invariant;
        let holds = crate::expr::clock_satisfies(inv, &advanced, &a.decls).map_err(|source| {
            SemanticsError::InvariantEval {
                location: a.locations[loc].name.clone(),
                source,
            }
        })?;
        if holds {
            out.push(StepDistribution {
                tag: RuleTag::Time,
                entries: vec![StepEntry {
                    state: MdpState {
                        site: Site::Loc(loc),
                        clocks: advanced,
                        interp: s.interp.clone(),
                    },
                    prob: 1.0,
                    action: String::new(),
                }],
            });
        }
    }
    for &ix in &a.outgoing[loc] {
        if !a.edges[ix].urgent && guard_enabled(a, ix, s)? {
            out.push(StepDistribution {
                tag: RuleTag::NonUrgent(ix),
                entries: eval_distribution(a, ix, s)?,
            });
        }
    }
    Ok(out)
}

/// `Steps(s)`: the full rule set.
pub fn steps(a: &Epdta, s: &MdpState) -> Result<Vec<StepDistribution>, SemanticsError> {
    steps_bounded(a, s, a.max_time)
}

/// Emitted action of a sampled step; ε (empty) for Stop and Time.
pub type StepEvent = String;

fn sample_from(
    dists: &[StepDistribution],
    rng: &mut impl UniformSource,
) -> (MdpState, StepEvent, RuleTag) {
    let pick = if dists.len() == 1 {
        0
    } else {
        let u = rng.next_unit();
        ((u * dists.len() as f64) as usize).min(dists.len() - 1)
    };
    let dist = &dists[pick];
    let entry = if dist.entries.len() == 1 {
        &dist.entries[0]
    } else {
        let u = rng.next_unit();
        let mut acc = 0.0;
        let mut chosen = dist.entries.len() - 1;
        for (i, e) in dist.entries.iter().enumerate() {
            acc += e.prob;
            if u < acc {
                chosen = i;
                break;
            }
        }
        &dist.entries[chosen]
    };
    (entry.state.clone(), entry.action.clone(), dist.tag)
}

/// One stochastic step: the nondeterministic choice is resolved uniformly
/// over the canonical choice set, then an outcome is drawn from the chosen
/// distribution with one uniform draw against cumulative probabilities.
/// Singleton choices and singleton supports consume no draw.
pub fn sample_step(
    a: &Epdta,
    s: &MdpState,
    rng: &mut impl UniformSource,
) -> Result<(MdpState, StepEvent), SemanticsError> {
    let dists = steps(a, s)?;
    if dists.is_empty() {
        return Err(match s.site {
            Site::Stop => SemanticsError::AtStop,
            Site::Loc(loc) => SemanticsError::Deadlock {
                location: a.locations[loc].name.clone(),
                time: s.time(),
            },
        });
    }
    let (state, event, _) = sample_from(&dists, rng);
    Ok((state, event))
}

// ---------------------------------------------------------------------------
// Explicit enumeration
// ---------------------------------------------------------------------------

/// One distribution of the explicit graph; entries are
/// `(state index, probability, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDistribution {
    pub tag: RuleTag,
    pub entries: Vec<(usize, f64, String)>,
}

/// Explicit MDP graph over every state reachable within the horizon.
/// State 0 is the initial state.
#[derive(Debug, Clone)]
pub struct MdpGraph {
    pub states: Vec<MdpState>,
    pub transitions: Vec<Vec<GraphDistribution>>,
}

impl MdpGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Documented text dump: states, then transitions with probabilities.
    pub fn dump(&self, a: &Epdta) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "states {}", self.states.len());
        for (i, s) in self.states.iter().enumerate() {
            let _ = writeln!(out, "{i}: {}", describe_state(a, s));
        }
        let _ = writeln!(out, "transitions");
        for (i, dists) in self.transitions.iter().enumerate() {
            for d in dists {
                let entries: Vec<String> = d
                    .entries
                    .iter()
                    .map(|(succ, p, action)| {
                        if action.is_empty() {
                            format!("{succ}:{p}")
                        } else {
                            format!("{succ}:{p}({action})")
                        }
                    })
                    .collect();
                let _ = writeln!(out, "{i} {} -> {}", d.tag, entries.join(" "));
            }
        }
        out
    }
}

/// Human-readable state rendering used by dumps and diagnostics.
pub fn describe_state(a: &Epdta, s: &MdpState) -> String {
    let mut parts = Vec::new();
    let name = match s.site {
        Site::Stop => STOP_LOCATION,
        Site::Loc(ix) => &a.locations[ix].name,
    };
    parts.push(name.to_string());
    for (i, c) in a.decls.clocks().iter().enumerate() {
        parts.push(format!("{c}={}", s.clocks.0[i]));
    }
    for (name, v) in a.decls.bools().iter().zip(&s.interp.bools) {
        parts.push(format!("{name}={}", if *v { "tt" } else { "ff" }));
    }
    for (d, v) in a.decls.ints().iter().zip(&s.interp.ints) {
        parts.push(format!("{}={}", d.name, v));
    }
    format!("({})", parts.join(", "))
}

/// Explores every state reachable from the initial state within `horizon`
/// time units, up to `state_cap` states.
pub fn enumerate(a: &Epdta, horizon: u64, state_cap: usize) -> Result<MdpGraph, SemanticsError> {
    if horizon > a.max_time {
        return Err(SemanticsError::HorizonTooLarge {
            horizon,
            max_time: a.max_time,
        });
    }
    let mut states: Vec<MdpState> = Vec::new();
    let mut index: HashMap<MdpState, usize> = HashMap::new();
    let mut transitions: Vec<Vec<GraphDistribution>> = Vec::new();

    let init = initial_state(a);
    states.push(init.clone());
    index.insert(init, 0);

    let mut frontier = 0usize;
    while frontier < states.len() {
        let s = states[frontier].clone();
        debug_assert!(s.interp.in_range(&a.decls));
        let dists = steps_bounded(a, &s, horizon)?;
        let mut resolved = Vec::with_capacity(dists.len());
        for d in dists {
            let mut entries = Vec::with_capacity(d.entries.len());
            for e in d.entries {
                let id = match index.get(&e.state) {
                    Some(&id) => id,
                    None => {
                        let id = states.len();
                        if id >= state_cap {
                            return Err(SemanticsError::StateCapExceeded { cap: state_cap });
                        }
                        index.insert(e.state.clone(), id);
                        states.push(e.state);
                        id
                    }
                };
                entries.push((id, e.prob, e.action));
            }
            resolved.push(GraphDistribution {
                tag: d.tag,
                entries,
            });
        }
        transitions.push(resolved);
        frontier += 1;
    }
    Ok(MdpGraph {
        states,
        transitions,
    })
}

// ---------------------------------------------------------------------------
// Exact reachability under the uniform resolution policy
// ---------------------------------------------------------------------------

/// Probability that a run from the initial state visits a location in the
/// target set within `horizon` time units, with nondeterminism resolved
/// uniformly over the canonical choice set (the policy of [`sample_step`]);
/// the MDP becomes a finite Markov chain and the answer comes from one
/// forward propagation pass over its acyclic unfolding.
pub fn reach_probability_pred(
    a: &Epdta,
    target: impl Fn(usize) -> bool,
    horizon: u64,
    state_cap: usize,
) -> Result<f64, SemanticsError> {
    let graph = enumerate(a, horizon, state_cap)?;
    let n = graph.len();
    let is_target: Vec<bool> = graph
        .states
        .iter()
        .map(|s| matches!(s.site, Site::Loc(ix) if target(ix)))
        .collect();

    // Kahn topological order over the propagation graph; target states
    // absorb, so their outgoing transitions are dropped.
    let mut indegree = vec![0usize; n];
    for (i, dists) in graph.transitions.iter().enumerate() {
        if is_target[i] {
            continue;
        }
        for d in dists {
            for &(succ, _, _) in &d.entries {
                indegree[succ] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = queue.pop() {
        order.push(i);
        if is_target[i] {
            continue;
        }
        for d in &graph.transitions[i] {
            for &(succ, _, _) in &d.entries {
                indegree[succ] -= 1;
                if indegree[succ] == 0 {
                    queue.push(succ);
                }
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(SemanticsError::CyclicStepGraph { state: stuck });
    }

    let mut mass = vec![0.0f64; n];
    mass[0] = 1.0;
    let mut hit = 0.0f64;
    for &i in &order {
        let m = mass[i];
        if m == 0.0 {
            continue;
        }
        if is_target[i] {
            hit += m;
            continue;
        }
        let dists = &graph.transitions[i];
        if dists.is_empty() {
            continue;
        }
        let share = m / dists.len() as f64;
        for d in dists {
            for &(succ, p, _) in &d.entries {
                mass[succ] += share * p;
            }
        }
    }
    Ok(hit)
}

/// [`reach_probability_pred`] with the target given as a location name.
pub fn reach_probability(
    a: &Epdta,
    target: &str,
    horizon: u64,
    state_cap: usize,
) -> Result<f64, SemanticsError> {
    let ix = a
        .location_index(target)
        .ok_or_else(|| SemanticsError::UnknownLocation(target.to_string()))?;
    reach_probability_pred(a, |loc| loc == ix, horizon, state_cap)
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation
// ---------------------------------------------------------------------------

/// Monte Carlo estimate of a reachability probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McEstimate {
    pub hits: u64,
    pub runs: u64,
}

impl McEstimate {
    pub fn p(&self) -> f64 {
        self.hits as f64 / self.runs as f64
    }

    /// Binomial standard deviation of the estimator at probability `p`.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.runs as f64).sqrt()
    }

    /// |p̂ - p| ≤ 3σ(p): the tolerance used by the acceptance suite.
    pub fn within_3_sigma(&self, p: f64) -> bool {
        (self.p() - p).abs() <= 3.0 * self.sigma(p) + f64::EPSILON
    }
}

fn mc_single_run(
    a: &Epdta,
    target_ix: usize,
    horizon: u64,
    seed: u64,
    run: u64,
) -> Result<bool, SemanticsError> {
    let mut rng = Stream::keyed(seed, &[run]);
    let mut s = initial_state(a);
    let max_steps = ((horizon as usize) + 2) * 1024;
    for _ in 0..max_steps {
        if matches!(s.site, Site::Loc(ix) if ix == target_ix) {
            return Ok(true);
        }
        let dists = steps_bounded(a, &s, horizon)?;
        if dists.is_empty() {
            return Ok(false);
        }
        let (next, _, _) = sample_from(&dists, &mut rng);
        s = next;
    }
    Err(SemanticsError::RunawayRun(max_steps))
}

/// Estimates the probability of visiting `target` within `horizon` time
/// units from `runs` sampled runs. Each run draws from an independent
/// counter-keyed substream of `seed`, so the estimate is identical under
/// any scheduling; with the `parallel` feature the runs execute on rayon.
pub fn mc_reach_probability(
    a: &Epdta,
    target: &str,
    horizon: u64,
    runs: u64,
    seed: u64,
) -> Result<McEstimate, SemanticsError> {
    let target_ix = a
        .location_index(target)
        .ok_or_else(|| SemanticsError::UnknownLocation(target.to_string()))?;

    #[cfg(feature = "parallel")]
    let hits = (0..runs)
        .into_par_iter()
        .map(|r| mc_single_run(a, target_ix, horizon, seed, r).map(u64::from))
        .try_reduce(|| 0, |x, y| Ok(x + y))?;

    #[cfg(not(feature = "parallel"))]
    let hits = {
        let mut acc = 0u64;
        for r in 0..runs {
            acc += u64::from(mc_single_run(a, target_ix, horizon, seed, r)?);
        }
        acc
    };

    Ok(McEstimate { hits, runs })
}

/// Sequential twin of [`mc_reach_probability`]; always available, used by
/// the benchmark suite and determinism tests.
pub fn mc_reach_probability_sequential(
    a: &Epdta,
    target: &str,
    horizon: u64,
    runs: u64,
    seed: u64,
) -> Result<McEstimate, SemanticsError> {
    let target_ix = a
        .location_index(target)
        .ok_or_else(|| SemanticsError::UnknownLocation(target.to_string()))?;
    let mut hits = 0u64;
    for r in 0..runs {
        hits += u64::from(mc_single_run(a, target_ix, horizon, seed, r)?);
    }
    Ok(McEstimate { hits, runs })
}

/// Formats a probability with the given number of significant digits.
pub fn format_significant(p: f64, digits: usize) -> String {
    if p == 0.0 {
        return "0".to_string();
    }
    let exponent = p.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    format!("{p:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::load;
    use crate::rng::ScriptedSource;

    fn fig1() -> Epdta {
        load(include_str!("../models/fig1.epdta")).unwrap()
    }

    fn chain03() -> Epdta {
        load(include_str!("../models/chain03.epdta")).unwrap()
    }

    fn single() -> Epdta {
        load(include_str!("../models/single.epdta")).unwrap()
    }

    fn urgent2() -> Epdta {
        load(include_str!("../models/urgent2.epdta")).unwrap()
    }

    fn table1() -> Epdta {
        load(include_str!("../models/table1.epdta")).unwrap()
    }

    fn state_at(a: &Epdta, loc: &str, clocks: &[(&str, u64)], bools: &[(&str, bool)]) -> MdpState {
        let mut s = initial_state(a);
        s.site = Site::Loc(a.location_index(loc).unwrap());
        for &(c, v) in clocks {
            s.clocks.set(&a.decls, c, v);
        }
        for &(b, v) in bools {
            s.interp.set_bool(&a.decls, b, v);
        }
        s
    }

    #[test]
    fn fig1_two_choices_at_enabled_guard() {
        let a = fig1();
        let s = state_at(&a, "l0", &[("x", 1), ("t", 1)], &[]);
        let dists = steps(&a, &s).unwrap();
        assert_eq!(dists.len(), 2, "Time and the edge are both enabled");
        assert_eq!(dists[0].tag, RuleTag::Time);
        assert!(matches!(dists[1].tag, RuleTag::NonUrgent(_)));
        let probs: Vec<f64> = dists[1].entries.iter().map(|e| e.prob).collect();
        assert_eq!(probs, vec![0.7, 0.3]);
    }

    #[test]
    fn stop_is_exclusive_at_max_time() {
        for a in [fig1(), chain03(), single(), urgent2(), table1()] {
            let mut s = initial_state(&a);
            s.clocks.set(&a.decls, "t", a.max_time);
            let dists = steps(&a, &s).unwrap();
            assert_eq!(dists.len(), 1);
            assert_eq!(dists[0].tag, RuleTag::Stop);
            assert_eq!(dists[0].entries.len(), 1);
            assert_eq!(dists[0].entries[0].state.site, Site::Stop);
            assert_eq!(dists[0].entries[0].prob, 1.0);
        }
    }

    #[test]
    fn fig1_deadlock_state_has_no_steps() {
        let a = fig1();
        // guard fails (~b is false) and Time is blocked (x+1 = 3 violates
        // the invariant x <= 2); t is still below max_time
        let s = state_at(&a, "l0", &[("x", 2), ("t", 2)], &[("b", true)]);
        assert_eq!(steps(&a, &s).unwrap(), vec![]);
        let mut rng = Stream::new(1);
        let err = sample_step(&a, &s, &mut rng).unwrap_err();
        assert!(matches!(err, SemanticsError::Deadlock { .. }));
    }

    #[test]
    fn sample_step_follows_forced_draws() {
        let a = fig1();
        let s = state_at(&a, "l0", &[("x", 1), ("t", 1)], &[]);
        // choice draw 0.6 of 2 -> index 1 (the edge); outcome draw 0.69
        // falls in the 0.7 branch -> l1 with x reset
        let mut rng = ScriptedSource::new(vec![0.6, 0.69]);
        let (next, event) = sample_step(&a, &s, &mut rng).unwrap();
        assert_eq!(next.site, Site::Loc(a.location_index("l1").unwrap()));
        assert_eq!(next.clocks.get(&a.decls, "x"), Some(0));
        assert_eq!(next.clocks.get(&a.decls, "t"), Some(1));
        assert_eq!(event, "a");
    }

    #[test]
    fn singleton_stop_is_deterministic() {
        let a = single();
        let mut s = initial_state(&a);
        s.clocks.set(&a.decls, "t", a.max_time);
        // no draws needed: a scripted source with no values must not be hit
        let mut rng = ScriptedSource::new(vec![]);
        let (next, event) = sample_step(&a, &s, &mut rng).unwrap();
        assert_eq!(next.site, Site::Stop);
        assert_eq!(event, "");
    }

    #[test]
    fn branch_frequencies_match_three_sigma() {
        let a = fig1();
        // at x=2 Time is blocked, so the probabilistic edge is the only
        // choice: a clean binomial experiment on the 0.7/0.3 split
        let s = state_at(&a, "l0", &[("x", 2), ("t", 1)], &[]);
        let dists = steps(&a, &s).unwrap();
        assert_eq!(dists.len(), 1);
        let n = 10_000u64;
        let mut to_l1 = 0u64;
        let mut rng = Stream::new(99);
        for _ in 0..n {
            let (next, _) = sample_step(&a, &s, &mut rng).unwrap();
            if next.site == Site::Loc(a.location_index("l1").unwrap()) {
                to_l1 += 1;
            }
        }
        let est = McEstimate { hits: to_l1, runs: n };
        assert!(est.within_3_sigma(0.7), "freq {}", est.p());
    }

    #[test]
    fn enumerate_single_location_counts_states() {
        let a = single();
        let g = enumerate(&a, 3, DEFAULT_STATE_CAP).unwrap();
        // t = 0..3 plus stop
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn enumerate_fig1_horizon_two_has_deadlock_leaf() {
        let a = fig1();
        let g = enumerate(&a, 2, DEFAULT_STATE_CAP).unwrap();
        assert!(g
            .states
            .iter()
            .zip(&g.transitions)
            .any(|(s, d)| s.site != Site::Stop && d.is_empty()));
    }

    #[test]
    fn enumerate_invariants_hold_on_all_small_models() {
        for a in [fig1(), chain03(), urgent2(), table1()] {
            let g = enumerate(&a, a.max_time, DEFAULT_STATE_CAP).unwrap();
            for (s, dists) in g.states.iter().zip(&g.transitions) {
                // every non-stop state at max_time has exactly the Stop move
                if s.site != Site::Stop && s.time() == a.max_time {
                    assert_eq!(dists.len(), 1);
                    assert_eq!(dists[0].tag, RuleTag::Stop);
                }
                // rule exclusivity: urgent present => nothing else
                let any_urgent = dists.iter().any(|d| matches!(d.tag, RuleTag::Urgent(_)));
                if any_urgent {
                    assert!(dists.iter().all(|d| matches!(d.tag, RuleTag::Urgent(_))));
                }
                for d in dists {
                    let sum: f64 = d.entries.iter().map(|(_, p, _)| p).sum();
                    assert!((sum - 1.0).abs() <= DISTRIBUTION_SUM_TOLERANCE);
                    // t is non-decreasing and strictly increases only via Time
                    for &(succ, _, _) in &d.entries {
                        match d.tag {
                            RuleTag::Time => {
                                assert_eq!(g.states[succ].time(), s.time() + 1)
                            }
                            _ => assert_eq!(g.states[succ].time(), s.time()),
                        }
                    }
                }
                // reachable interpretations stay in range
                assert!(s.interp.in_range(&a.decls));
            }
        }
    }

    #[test]
    fn state_cap_enforced() {
        let a = fig1();
        let err = enumerate(&a, 3, 2).unwrap_err();
        assert!(matches!(err, SemanticsError::StateCapExceeded { cap: 2 }));
    }

    #[test]
    fn chain_reach_is_closed_form() {
        let a = chain03();
        let p = reach_probability(&a, "dead", 2, DEFAULT_STATE_CAP).unwrap();
        assert!((p - 0.51).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn reach_of_initial_location_is_one() {
        let a = chain03();
        let p = reach_probability(&a, "alive", 0, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn mc_matches_exact_on_small_models() {
        let cases: Vec<(Epdta, &str, u64)> = vec![
            (fig1(), "l2", 3),
            (chain03(), "dead", 3),
            (urgent2(), "s2", 4),
            (table1(), "hit", 5),
        ];
        for (a, target, horizon) in cases {
            let exact = reach_probability(&a, target, horizon, DEFAULT_STATE_CAP).unwrap();
            let est = mc_reach_probability(&a, target, horizon, 20_000, 7).unwrap();
            assert!(
                est.within_3_sigma(exact),
                "target {target}: exact {exact}, mc {}",
                est.p()
            );
        }
    }

    #[test]
    fn mc_parallel_equals_sequential() {
        let a = table1();
        let par = mc_reach_probability(&a, "hit", 5, 5_000, 13).unwrap();
        let seq = mc_reach_probability_sequential(&a, "hit", 5, 5_000, 13).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn urgent_preempts_time_and_nonurgent() {
        let a = urgent2();
        let mut s = initial_state(&a);
        s.clocks.set(&a.decls, "x", 1);
        s.clocks.set(&a.decls, "y", 1);
        s.clocks.set(&a.decls, "t", 1);
        s.interp.set_int(&a.decls, "c", 2);
        assert!(urgent_enabled(&a, &s).unwrap());
        let dists = steps(&a, &s).unwrap();
        assert_eq!(dists.len(), 1);
        assert!(matches!(dists[0].tag, RuleTag::Urgent(_)));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.51, 12), "0.510000000000");
        assert_eq!(format_significant(1.0, 12), "1.00000000000");
        assert_eq!(format_significant(0.0, 12), "0");
        assert_eq!(format_significant(0.00123456, 3), "0.00123");
    }
}
