//! Exhaustive enumeration of one protocol round.
//!
//! A round is: Alice picks a bit (and, for BB84, a basis) and sends the encoded
//! qubit; an optional eavesdropper acts on it; Bob measures in a random basis;
//! Alice reveals her basis and, if Bob's basis matches, checks Bob's bit.
//! Every coin flip is fair, so the outcome tree has exact dyadic weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::Prob;
use crate::quantum::{basis_of_b92, encode_b92, encode_bb84, measure, Basis, Bit, PureState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    BB84,
    B92,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackStrategy {
    NoEve,
    /// Measure in a random basis and forward the collapsed state.
    InterceptResend,
    /// Measure in a random basis, then forward one of the four states chosen
    /// uniformly and independently of the result.
    RandomSubstitution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionRule {
    /// Bases agree but Bob's bit differs from the bit of the state Alice sent.
    SameBasisMismatch,
    /// B92 only: Bob's result is conclusive and names the wrong bit.
    ConclusiveContradiction,
    Both,
}

/// How a round counts towards Eve's correct-measurement tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EveCorrectRule {
    BitMatch,
    BasisAndBitMatch,
    BasisAndBitMatchSifted,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::BB84, Protocol::B92];

    pub fn default_detection(self) -> DetectionRule {
        DetectionRule::SameBasisMismatch
    }

    pub fn detection_rules(self) -> &'static [DetectionRule] {
        match self {
            Protocol::BB84 => &[DetectionRule::SameBasisMismatch],
            Protocol::B92 => {
                &[DetectionRule::SameBasisMismatch, DetectionRule::ConclusiveContradiction, DetectionRule::Both]
            }
        }
    }
}

impl AttackStrategy {
    pub const ALL: [AttackStrategy; 3] =
        [AttackStrategy::NoEve, AttackStrategy::InterceptResend, AttackStrategy::RandomSubstitution];

    pub fn has_eve(self) -> bool {
        self != AttackStrategy::NoEve
    }
}

impl EveCorrectRule {
    pub const ALL: [EveCorrectRule; 3] =
        [EveCorrectRule::BitMatch, EveCorrectRule::BasisAndBitMatch, EveCorrectRule::BasisAndBitMatchSifted];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("detection rule {detection} is only defined for B92, not {protocol}")]
    InvalidCombination { protocol: Protocol, detection: DetectionRule },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognised {kind} `{value}`")]
pub struct ParseNameError {
    kind: &'static str,
    value: String,
}

macro_rules! names {
    ($ty:ident, $kind:literal, { $($variant:ident => $name:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = ParseNameError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.to_ascii_lowercase().as_str() {
                    $($name $(| $alias)* => Ok($ty::$variant),)+
                    _ => Err(ParseNameError { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

names!(Protocol, "protocol", { BB84 => "bb84", B92 => "b92" });
names!(AttackStrategy, "attack", {
    NoEve => "none" | "noeve" | "no-eve",
    InterceptResend => "ir" | "intercept-resend",
    RandomSubstitution => "rs" | "random-substitution",
});
names!(DetectionRule, "detection rule", {
    SameBasisMismatch => "same-basis-mismatch" | "mismatch",
    ConclusiveContradiction => "conclusive-contradiction" | "conclusive",
    Both => "both",
});
names!(EveCorrectRule, "eve-correct rule", {
    BitMatch => "bit-match" | "bit",
    BasisAndBitMatch => "basis-and-bit-match" | "basis-bit",
    BasisAndBitMatchSifted => "basis-and-bit-match-sifted" | "sifted",
});

/// One fully resolved round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub alice_bit: Bit,
    pub alice_basis: Basis,
    /// The qubit Alice put on the channel.
    pub alice_state: PureState,
    pub eve_basis: Option<Basis>,
    pub eve_bit: Option<Bit>,
    pub forwarded_state: PureState,
    pub bob_basis: Basis,
    pub bob_bit: Bit,
    pub sifted: bool,
    pub detected: bool,
    pub eve_correct: bool,
    pub probability: Prob,
}

/// Parameters of a single round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundConfig {
    pub protocol: Protocol,
    pub attack: AttackStrategy,
    pub detection: DetectionRule,
    pub eve_rule: EveCorrectRule,
}

impl RoundConfig {
    pub fn new(protocol: Protocol, attack: AttackStrategy) -> Self {
        RoundConfig { protocol, attack, detection: protocol.default_detection(), eve_rule: EveCorrectRule::BitMatch }
    }

    pub fn validate(&self) -> Result<(), SemanticsError> {
        if self.protocol == Protocol::BB84 && self.detection != DetectionRule::SameBasisMismatch {
            return Err(SemanticsError::InvalidCombination { protocol: self.protocol, detection: self.detection });
        }
        Ok(())
    }

    /// Whether Bob's result flags an eavesdropper.
    pub fn is_detected(&self, alice_state: PureState, bob_basis: Basis, bob_bit: Bit) -> bool {
        let mismatch = bob_basis == alice_state.eigenbasis() && bob_bit != alice_state.bit();
        let contradiction = conclusive_inference(bob_basis, bob_bit).is_some_and(|inferred| {
            // B92 sends |0> for 0 and |+> for 1
            let sent_bit = if alice_state == encode_b92(0) { 0 } else { 1 };
            inferred != sent_bit
        });
        match self.detection {
            DetectionRule::SameBasisMismatch => mismatch,
            DetectionRule::ConclusiveContradiction => contradiction,
            DetectionRule::Both => mismatch || contradiction,
        }
    }

    pub fn is_eve_correct(&self, alice_state: PureState, eve: Option<(Basis, Bit)>, sifted: bool) -> bool {
        let Some((eve_basis, eve_bit)) = eve else {
            return false;
        };
        let bit_ok = eve_bit == alice_state.bit();
        let basis_ok = eve_basis == alice_state.eigenbasis();
        match self.eve_rule {
            EveCorrectRule::BitMatch => bit_ok,
            EveCorrectRule::BasisAndBitMatch => bit_ok && basis_ok,
            EveCorrectRule::BasisAndBitMatchSifted => bit_ok && basis_ok && sifted,
        }
    }
}

/// The B92 bit implied by a conclusive measurement, if any.
///
/// A rectilinear 1 rules out `|0>`; a diagonal 1 rules out `|+>`.
pub fn conclusive_inference(basis: Basis, bit: Bit) -> Option<Bit> {
    match (basis, bit) {
        (Basis::Rectilinear, 1) => Some(1),
        (Basis::Diagonal, 1) => Some(0),
        _ => None,
    }
}

type EveBranch = (Option<(Basis, Bit)>, PureState, Prob);

/// What Eve does with the qubit: each branch carries her (basis, result), the
/// state she forwards, and its weight.
fn eve_branches(attack: AttackStrategy, state: PureState) -> Vec<EveBranch> {
    match attack {
        AttackStrategy::NoEve => vec![(None, state, Prob::one())],
        AttackStrategy::InterceptResend => Basis::ALL
            .into_iter()
            .flat_map(|basis| {
                measure(state, basis).into_iter().map(move |m| (Some((basis, m.bit)), m.post, &Prob::half() * &m.prob))
            })
            .collect(),
        AttackStrategy::RandomSubstitution => Basis::ALL
            .into_iter()
            .flat_map(|basis| measure(state, basis).into_iter().map(move |m| (basis, m)))
            .flat_map(|(basis, m)| {
                PureState::ALL
                    .into_iter()
                    .map(move |fwd| (Some((basis, m.bit)), fwd, &(&Prob::half() * &m.prob) * &Prob::dyadic(1, 2)))
            })
            .collect(),
    }
}

/// Every outcome of one round with non-zero probability.
pub fn enumerate_round(config: &RoundConfig) -> Result<Vec<RoundOutcome>, SemanticsError> {
    config.validate()?;
    let mut out = Vec::new();
    for alice_bit in [0, 1] {
        let alice_choices: Vec<(Basis, PureState, Prob)> = match config.protocol {
            Protocol::BB84 => Basis::ALL.into_iter().map(|b| (b, encode_bb84(alice_bit, b), Prob::half())).collect(),
            Protocol::B92 => vec![(basis_of_b92(alice_bit), encode_b92(alice_bit), Prob::one())],
        };
        for (alice_basis, alice_state, p_alice) in alice_choices {
            let p_alice = &Prob::half() * &p_alice;
            for (eve, forwarded, p_eve) in eve_branches(config.attack, alice_state) {
                let p_eve = &p_alice * &p_eve;
                for bob_basis in Basis::ALL {
                    for m in measure(forwarded, bob_basis) {
                        let sifted = bob_basis == alice_basis;
                        out.push(RoundOutcome {
                            alice_bit,
                            alice_basis,
                            alice_state,
                            eve_basis: eve.map(|e| e.0),
                            eve_bit: eve.map(|e| e.1),
                            forwarded_state: forwarded,
                            bob_basis,
                            bob_bit: m.bit,
                            sifted,
                            detected: config.is_detected(alice_state, bob_basis, m.bit),
                            eve_correct: config.is_eve_correct(alice_state, eve, sifted),
                            probability: &(&p_eve * &Prob::half()) * &m.prob,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Marginal event probabilities of a round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundStats {
    pub p_detect: Prob,
    pub p_sift: Prob,
    pub p_eve_correct: Prob,
}

pub fn round_stats(outcomes: &[RoundOutcome]) -> RoundStats {
    let sum = |pred: fn(&RoundOutcome) -> bool| outcomes.iter().filter(|o| pred(o)).map(|o| &o.probability).sum();
    RoundStats { p_detect: sum(|o| o.detected), p_sift: sum(|o| o.sifted), p_eve_correct: sum(|o| o.eve_correct) }
}

/// Joint distribution of (detected, eve_correct) for one round, indexed
/// `[detected][eve_correct]`.
///
/// The two events are correlated within a round, so the chain needs all four
/// cells, not just the marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundJoint(pub [[Prob; 2]; 2]);

impl RoundJoint {
    pub fn from_outcomes(outcomes: &[RoundOutcome]) -> Self {
        let mut cells: [[Prob; 2]; 2] = Default::default();
        for o in outcomes {
            let cell = &mut cells[usize::from(o.detected)][usize::from(o.eve_correct)];
            *cell = &*cell + &o.probability;
        }
        RoundJoint(cells)
    }

    pub fn get(&self, detected: bool, eve_correct: bool) -> &Prob {
        &self.0[usize::from(detected)][usize::from(eve_correct)]
    }

    pub fn p_detect(&self) -> Prob {
        self.get(true, false) + self.get(true, true)
    }

    pub fn p_eve_correct(&self) -> Prob {
        self.get(false, true) + self.get(true, true)
    }
}

/// Convenience: enumerate and aggregate.
pub fn stats_for(config: &RoundConfig) -> Result<RoundStats, SemanticsError> {
    Ok(round_stats(&enumerate_round(config)?))
}
