//! Explicit-state discrete-time Markov chains and exact reachability.
//!
//! A protocol run of `n` rounds compiles into a chain over the counters
//! `(round, detected, correctCount)`. Rounds are i.i.d., so the per-round joint
//! distribution of (detected, eve-correct) is the only thing each transition
//! row needs. The resulting chain is a DAG apart from the self-loops on
//! absorbing states, which lets [`Dtmc::reach_probability`] solve it exactly in
//! one backward pass.
//!
//! Chains assembled by hand through [`DtmcBuilder`] may contain cycles; those are
//! solved by Gauss-Seidel iteration and the result is returned as the exact
//! dyadic value of the converged `f64`.

use std::collections::{HashMap, VecDeque};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pctl::StatePredicate;
use crate::prob::Prob;
use crate::protocol::{
    enumerate_round, AttackStrategy, DetectionRule, EveCorrectRule, Protocol, RoundConfig, RoundJoint, SemanticsError,
};

pub const VAR_ROUND: &str = "round";
pub const VAR_DETECTED: &str = "detected";
pub const VAR_CORRECT: &str = "correctCount";

/// Absolute tolerance of the iterative solver.
pub const ITERATIVE_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DtmcError {
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("a protocol run needs at least one round")]
    NoRounds,
    #[error("unknown state variable `{name}` (chain declares: {declared})")]
    UnknownVariable { name: String, declared: String },
    #[error("valuation has {got} entries but the chain declares {expected} variables")]
    Arity { expected: usize, got: usize },
    #[error("transition references state {0}, which does not exist")]
    DanglingTarget(usize),
    #[error("outgoing probabilities of state {state} sum to {sum}, not 1")]
    NotStochastic { state: usize, sum: String },
    #[error("iterative solve did not converge after {sweeps} sweeps (last change {delta:e})")]
    NotConverged { sweeps: usize, delta: f64 },
}

/// An immutable chain: valuations, an initial state and sparse transition rows.
#[derive(Debug, Clone)]
pub struct Dtmc {
    vars: Vec<String>,
    states: Vec<Vec<i64>>,
    initial: usize,
    rows: Vec<Vec<(usize, Prob)>>,
}

impl Dtmc {
    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn valuation(&self, state: usize) -> &[i64] {
        &self.states[state]
    }

    pub fn row(&self, state: usize) -> &[(usize, Prob)] {
        &self.rows[state]
    }

    pub fn var_index(&self, name: &str) -> Result<usize, DtmcError> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| DtmcError::UnknownVariable { name: name.to_string(), declared: self.vars.join(", ") })
    }

    /// Value of variable `name` in `state`.
    pub fn value(&self, state: usize, name: &str) -> Result<i64, DtmcError> {
        Ok(self.states[state][self.var_index(name)?])
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        matches!(self.rows[state].as_slice(), [(t, p)] if *t == state && p.is_one())
    }

    pub fn absorbing_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(|&s| self.is_absorbing(s))
    }

    /// States satisfying `pred`.
    pub fn satisfying(&self, pred: &StatePredicate) -> Result<Vec<bool>, DtmcError> {
        let compiled = pred
            .conjuncts()
            .iter()
            .map(|c| Ok((self.var_index(&c.variable)?, c.comparator, c.constant)))
            .collect::<Result<Vec<_>, DtmcError>>()?;
        Ok(self.states.iter().map(|val| compiled.iter().all(|&(i, cmp, k)| cmp.holds(val[i], k))).collect())
    }

    /// Topological order of the states, ignoring self-loops on absorbing
    /// states. `None` if any other cycle exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.states.len();
        let mut indegree = vec![0usize; n];
        for (s, row) in self.rows.iter().enumerate() {
            if self.is_absorbing(s) {
                continue;
            }
            for &(t, _) in row {
                if t == s {
                    return None;
                }
                indegree[t] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| indegree[s] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            if self.is_absorbing(s) {
                continue;
            }
            for &(t, _) in &self.rows[s] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Probability of eventually reaching a state that satisfies `target`,
    /// starting from the initial state.
    pub fn reach_probability(&self, target: &StatePredicate) -> Result<Prob, DtmcError> {
        let hit = self.satisfying(target)?;
        match self.topological_order() {
            Some(order) => Ok(self.reach_exact(&hit, &order)),
            None => self.reach_iterative(&hit),
        }
    }

    fn reach_exact(&self, hit: &[bool], order: &[usize]) -> Prob {
        let mut x = vec![Prob::zero(); self.states.len()];
        for &s in order.iter().rev() {
            x[s] = if hit[s] {
                Prob::one()
            } else if self.is_absorbing(s) {
                Prob::zero()
            } else {
                self.rows[s].iter().map(|(t, p)| p * &x[*t]).sum()
            };
        }
        x[self.initial].clone()
    }

    fn reach_iterative(&self, hit: &[bool]) -> Result<Prob, DtmcError> {
        let n = self.states.len();
        // states that can reach the target at all
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, _) in row {
                preds[t].push(s);
            }
        }
        let mut can_reach = hit.to_vec();
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| hit[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &s in &preds[t] {
                if !can_reach[s] {
                    can_reach[s] = true;
                    queue.push_back(s);
                }
            }
        }
        let rows: Vec<Vec<(usize, f64)>> =
            self.rows.iter().map(|row| row.iter().map(|(t, p)| (*t, p.to_f64())).collect()).collect();
        let mut x: Vec<f64> = hit.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
        let mut delta = f64::INFINITY;
        for _ in 0..MAX_SWEEPS {
            delta = 0.0;
            for s in 0..n {
                if hit[s] || !can_reach[s] {
                    continue;
                }
                let v: f64 = rows[s].iter().map(|&(t, p)| p * x[t]).sum();
                delta = delta.max((v - x[s]).abs());
                x[s] = v;
            }
            if delta < ITERATIVE_TOLERANCE {
                let v = x[self.initial].clamp(0.0, 1.0);
                return Ok(Prob::from_f64(v).expect("clamped to [0, 1]"));
            }
        }
        Err(DtmcError::NotConverged { sweeps: MAX_SWEEPS, delta })
    }

    /// Every row sums to exactly one.
    pub fn check_stochastic(&self) -> Result<(), DtmcError> {
        for (s, row) in self.rows.iter().enumerate() {
            let sum: Prob = row.iter().map(|(_, p)| p).sum();
            if !sum.is_one() {
                return Err(DtmcError::NotStochastic { state: s, sum: sum.to_string() });
            }
        }
        Ok(())
    }
}

/// Assembles an arbitrary chain. States without outgoing transitions become
/// absorbing.
#[derive(Debug, Clone)]
pub struct DtmcBuilder {
    vars: Vec<String>,
    states: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
    rows: Vec<Vec<(usize, Prob)>>,
    initial: usize,
}

impl DtmcBuilder {
    pub fn new<S: Into<String>>(vars: impl IntoIterator<Item = S>) -> Self {
        DtmcBuilder {
            vars: vars.into_iter().map(Into::into).collect(),
            states: Vec::new(),
            index: HashMap::new(),
            rows: Vec::new(),
            initial: 0,
        }
    }

    /// Index of the state with this valuation, creating it if needed.
    pub fn state(&mut self, valuation: Vec<i64>) -> Result<usize, DtmcError> {
        if valuation.len() != self.vars.len() {
            return Err(DtmcError::Arity { expected: self.vars.len(), got: valuation.len() });
        }
        if let Some(&i) = self.index.get(&valuation) {
            return Ok(i);
        }
        let i = self.states.len();
        self.index.insert(valuation.clone(), i);
        self.states.push(valuation);
        self.rows.push(Vec::new());
        Ok(i)
    }

    pub fn valuation(&self, state: usize) -> &[i64] {
        &self.states[state]
    }

    pub fn lookup(&self, valuation: &[i64]) -> Option<usize> {
        self.index.get(valuation).copied()
    }

    pub fn set_initial(&mut self, state: usize) -> &mut Self {
        self.initial = state;
        self
    }

    /// Adds `p` to the transition `from -> to`, merging with an existing entry.
    pub fn transition(&mut self, from: usize, to: usize, p: Prob) -> Result<&mut Self, DtmcError> {
        for s in [from, to] {
            if s >= self.states.len() {
                return Err(DtmcError::DanglingTarget(s));
            }
        }
        let row = &mut self.rows[from];
        match row.iter_mut().find(|(t, _)| *t == to) {
            Some((_, q)) => *q = &*q + &p,
            None => row.push((to, p)),
        }
        Ok(self)
    }

    pub fn build(mut self) -> Result<Dtmc, DtmcError> {
        if self.initial >= self.states.len() {
            return Err(DtmcError::DanglingTarget(self.initial));
        }
        for (s, row) in self.rows.iter_mut().enumerate() {
            if row.is_empty() {
                row.push((s, Prob::one()));
            }
        }
        let chain = Dtmc { vars: self.vars, states: self.states, initial: self.initial, rows: self.rows };
        chain.check_stochastic()?;
        Ok(chain)
    }
}

/// An `n`-round protocol run to be compiled into a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainSpec {
    pub protocol: Protocol,
    pub attack: AttackStrategy,
    pub detection: DetectionRule,
    pub eve_rule: EveCorrectRule,
    pub rounds: u32,
    /// Alice and Bob stop exchanging qubits once Eve is detected.
    pub stop_on_detect: bool,
}

impl ChainSpec {
    /// Default detection rule, bit-match counting, stop on detection.
    pub fn new(protocol: Protocol, attack: AttackStrategy, rounds: u32) -> Self {
        ChainSpec {
            protocol,
            attack,
            detection: protocol.default_detection(),
            eve_rule: EveCorrectRule::BitMatch,
            rounds,
            stop_on_detect: true,
        }
    }

    pub fn with_detection(mut self, detection: DetectionRule) -> Self {
        self.detection = detection;
        self
    }

    pub fn with_eve_rule(mut self, eve_rule: EveCorrectRule) -> Self {
        self.eve_rule = eve_rule;
        self
    }

    pub fn with_stop_on_detect(mut self, stop: bool) -> Self {
        self.stop_on_detect = stop;
        self
    }

    pub fn with_rounds(mut self, rounds: u32) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn round_config(&self) -> RoundConfig {
        RoundConfig { protocol: self.protocol, attack: self.attack, detection: self.detection, eve_rule: self.eve_rule }
    }

    pub fn validate(&self) -> Result<(), DtmcError> {
        if self.rounds == 0 {
            return Err(DtmcError::NoRounds);
        }
        self.round_config().validate()?;
        Ok(())
    }

    /// Per-round joint (detected, eve-correct) distribution.
    pub fn round_joint(&self) -> Result<RoundJoint, DtmcError> {
        Ok(RoundJoint::from_outcomes(&enumerate_round(&self.round_config())?))
    }
}

/// Compile a protocol run into a chain over `(round, detected, correctCount)`.
///
/// A state is absorbing once `round = n`, or as soon as `detected` holds when
/// `spec.stop_on_detect` is set.
pub fn build_chain(spec: &ChainSpec) -> Result<Dtmc, DtmcError> {
    spec.validate()?;
    let joint = spec.round_joint()?;
    let n = i64::from(spec.rounds);
    let mut b = DtmcBuilder::new([VAR_ROUND, VAR_DETECTED, VAR_CORRECT]);
    let init = b.state(vec![0, 0, 0])?;
    b.set_initial(init);

    let mut queue = VecDeque::from([init]);
    let mut expanded = vec![false];
    while let Some(s) = queue.pop_front() {
        if std::mem::replace(&mut expanded[s], true) {
            continue;
        }
        let [round, detected, correct] = <[i64; 3]>::try_from(b.states[s].as_slice()).expect("three variables");
        if round == n || (detected == 1 && spec.stop_on_detect) {
            continue;
        }
        for det in [false, true] {
            for hit in [false, true] {
                let p = joint.get(det, hit);
                if p.is_zero() {
                    continue;
                }
                let next = vec![round + 1, detected.max(i64::from(det)), correct + i64::from(hit)];
                let fresh = b.lookup(&next).is_none();
                let t = b.state(next)?;
                if fresh {
                    expanded.push(false);
                    queue.push_back(t);
                }
                b.transition(s, t, p.clone())?;
            }
        }
    }
    b.build()
}

/// `1 - (1 - p)^n`: detection over `n` independent rounds.
pub fn detection_probability_closed_form(p_detect: &Prob, n: u32) -> Prob {
    p_detect.complement().pow(n).complement()
}

/// `P(X > threshold)` for `X ~ Binomial(n, p)`, exactly.
pub fn cm_probability(p: &Prob, n: u32, threshold: u32) -> Prob {
    let q = p.complement();
    let mut binom = BigUint::from(1u32);
    let mut total = Prob::zero();
    for k in 0..=n {
        if k > threshold {
            let term = &p.pow(k) * &q.pow(n - k);
            let scaled = Prob::try_new(term.numer() * &binom, term.log2_denom()).expect("binomial term is at most 1");
            total = &total + &scaled;
        }
        binom = binom * BigUint::from(n - k) / BigUint::from(k + 1);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pctl::{Comparator, StatePredicate};

    fn detected() -> StatePredicate {
        StatePredicate::single(VAR_DETECTED, Comparator::Eq, 1)
    }

    #[test]
    fn one_round_intercept_resend() {
        let chain = build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::InterceptResend, 1)).unwrap();
        let init = chain.initial();
        let to_detected: Prob =
            chain.row(init).iter().filter(|(t, _)| chain.value(*t, VAR_DETECTED).unwrap() == 1).map(|(_, p)| p).sum();
        assert_eq!(to_detected, Prob::dyadic(1, 3));
        for (t, _) in chain.row(init) {
            assert!(chain.is_absorbing(*t));
        }
    }

    #[test]
    fn no_eve_never_reaches_detection() {
        let chain = build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::NoEve, 5)).unwrap();
        assert!((0..chain.num_states()).all(|s| chain.value(s, VAR_DETECTED).unwrap() == 0));
        assert!(chain.reach_probability(&detected()).unwrap().is_zero());
    }

    #[test]
    fn random_substitution_six_rounds() {
        let chain = build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::RandomSubstitution, 6)).unwrap();
        let p = chain.reach_probability(&detected()).unwrap();
        assert_eq!(p, Prob::dyadic(3367, 12));
    }

    #[test]
    fn reach_examples() {
        let ir = build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::InterceptResend, 11)).unwrap();
        let p = ir.reach_probability(&detected()).unwrap();
        assert_eq!(p, Prob::dyadic(7, 3).pow(11).complement());
        assert!((p.to_f64() - 0.7698).abs() < 5e-5);

        let rs = build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::RandomSubstitution, 21)).unwrap();
        let p = rs.reach_probability(&detected()).unwrap();
        assert_eq!(p, Prob::dyadic(3, 2).pow(21).complement());
        assert!((p.to_f64() - 0.9976).abs() < 5e-5);

        let start = StatePredicate::single(VAR_ROUND, Comparator::Eq, 0);
        assert!(ir.reach_probability(&start).unwrap().is_one());
    }

    #[test]
    fn unknown_variable_is_reported() {
        let chain = build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::NoEve, 2)).unwrap();
        let err = chain.reach_probability(&StatePredicate::single("aliceState", Comparator::Eq, 15)).unwrap_err();
        assert!(matches!(err, DtmcError::UnknownVariable { ref name, .. } if name == "aliceState"));
    }

    #[test]
    fn rejects_zero_rounds_and_bad_rules() {
        assert_eq!(
            build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::NoEve, 0)).unwrap_err(),
            DtmcError::NoRounds
        );
        let bad = ChainSpec::new(Protocol::BB84, AttackStrategy::NoEve, 3).with_detection(DetectionRule::Both);
        assert!(matches!(build_chain(&bad), Err(DtmcError::Semantics(_))));
    }

    #[test]
    fn state_count_bound() {
        for n in 1..=12u32 {
            for stop in [true, false] {
                let spec =
                    ChainSpec::new(Protocol::B92, AttackStrategy::RandomSubstitution, n).with_stop_on_detect(stop);
                let chain = build_chain(&spec).unwrap();
                let bound = (n as usize + 1) * (n as usize + 2) + 1;
                assert!(chain.num_states() <= bound);
                assert!(chain.is_acyclic());
                chain.check_stochastic().unwrap();
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let p = detection_probability_closed_form(&Prob::dyadic(1, 3), 6);
        assert_eq!(p, Prob::dyadic(144_495, 18));
        assert!(detection_probability_closed_form(&Prob::zero(), 9).is_zero());
        let p = detection_probability_closed_form(&Prob::dyadic(1, 2), 16);
        assert_eq!(p, Prob::dyadic(3, 2).pow(16).complement());
        assert!((p.to_f64() - 0.98997).abs() < 1e-5);
    }

    #[test]
    fn cm_examples() {
        assert_eq!(cm_probability(&Prob::half(), 5, 2), Prob::half());
        // P(X >= 3), X ~ Bin(6, 1/4) = (540 + 135 + 18 + 1) / 4096 = 694/4096
        assert_eq!(cm_probability(&Prob::dyadic(1, 2), 6, 2), Prob::dyadic(694, 12));
        assert!((cm_probability(&Prob::dyadic(1, 2), 6, 2).to_f64() - 0.1694).abs() < 5e-5);
        assert!(cm_probability(&Prob::dyadic(7, 3), 9, 9).is_zero());
        assert!(cm_probability(&Prob::one(), 4, 0).is_one());
    }

    #[test]
    fn cyclic_chain_is_solved_iteratively() {
        // gambler's ruin on {0..4} with a fair coin: P(reach 4 | start 1) = 1/4
        let mut b = DtmcBuilder::new(["x"]);
        let ids: Vec<usize> = (0..=4).map(|x| b.state(vec![x]).unwrap()).collect();
        for x in 1..4 {
            b.transition(ids[x], ids[x - 1], Prob::half()).unwrap();
            b.transition(ids[x], ids[x + 1], Prob::half()).unwrap();
        }
        b.set_initial(ids[1]);
        let chain = b.build().unwrap();
        assert!(!chain.is_acyclic());
        let p = chain.reach_probability(&StatePredicate::single("x", Comparator::Eq, 4)).unwrap();
        assert!((p.to_f64() - 0.25).abs() < 1e-11);
    }

    #[test]
    fn self_loop_on_transient_state_counts_as_cycle() {
        // x=0 stays with 1/2, moves to x=1 with 1/2: reaches x=1 surely
        let mut b = DtmcBuilder::new(["x"]);
        let a = b.state(vec![0]).unwrap();
        let c = b.state(vec![1]).unwrap();
        b.transition(a, a, Prob::half()).unwrap();
        b.transition(a, c, Prob::half()).unwrap();
        let chain = b.build().unwrap();
        assert!(!chain.is_acyclic());
        let p = chain.reach_probability(&StatePredicate::single("x", Comparator::Eq, 1)).unwrap();
        assert!((p.to_f64() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn builder_rejects_substochastic_rows() {
        let mut b = DtmcBuilder::new(["x"]);
        let a = b.state(vec![0]).unwrap();
        let c = b.state(vec![1]).unwrap();
        b.transition(a, c, Prob::half()).unwrap();
        assert!(matches!(b.build(), Err(DtmcError::NotStochastic { state: 0, .. })));
        let mut b = DtmcBuilder::new(["x", "y"]);
        assert_eq!(b.state(vec![1]).unwrap_err(), DtmcError::Arity { expected: 2, got: 1 });
    }
}
