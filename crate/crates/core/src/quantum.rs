//! The four BB84/B92 qubit states, the two measurement bases, and projective
//! measurement as an exact distribution.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::prob::Prob;

/// A classical bit, `0` or `1`.
pub type Bit = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// `{|0>, |1>}`
    Rectilinear,
    /// `{|+>, |->}`
    Diagonal,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Rectilinear, Basis::Diagonal];

    /// Basis selected by a random bit: 0 is rectilinear, 1 is diagonal.
    pub fn from_bit(bit: Bit) -> Basis {
        if bit == 0 {
            Basis::Rectilinear
        } else {
            Basis::Diagonal
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Basis::Rectilinear => 0,
            Basis::Diagonal => 1,
        }
    }
}

/// One of the four protocol states.
///
/// The discriminants are the qubit-channel alphabet used by exported models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PureState {
    Zero = 0,
    One = 1,
    Plus = 2,
    Minus = 3,
}

impl PureState {
    pub const ALL: [PureState; 4] = [PureState::Zero, PureState::One, PureState::Plus, PureState::Minus];

    pub fn eigenbasis(self) -> Basis {
        match self {
            PureState::Zero | PureState::One => Basis::Rectilinear,
            PureState::Plus | PureState::Minus => Basis::Diagonal,
        }
    }

    /// The bit this state stands for in its own basis.
    pub fn bit(self) -> Bit {
        match self {
            PureState::Zero | PureState::Plus => 0,
            PureState::One | PureState::Minus => 1,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<PureState> {
        PureState::ALL.get(usize::from(code)).copied()
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PureState::Zero => "|0>",
            PureState::One => "|1>",
            PureState::Plus => "|+>",
            PureState::Minus => "|->",
        };
        f.write_str(s)
    }
}

/// One branch of a measurement: the classical result, the collapsed state and
/// its probability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasureBranch {
    pub bit: Bit,
    pub post: PureState,
    pub prob: Prob,
}

/// Measure `state` in `basis`.
///
/// An eigenstate of `basis` yields its own bit with certainty and is left
/// unchanged; a state from the other basis yields each result with
/// probability one half.
pub fn measure(state: PureState, basis: Basis) -> Vec<MeasureBranch> {
    if state.eigenbasis() == basis {
        vec![MeasureBranch { bit: state.bit(), post: state, prob: Prob::one() }]
    } else {
        [0, 1].into_iter().map(|bit| MeasureBranch { bit, post: encode_bb84(bit, basis), prob: Prob::half() }).collect()
    }
}

pub fn encode_bb84(bit: Bit, basis: Basis) -> PureState {
    match (bit, basis) {
        (0, Basis::Rectilinear) => PureState::Zero,
        (_, Basis::Rectilinear) => PureState::One,
        (0, Basis::Diagonal) => PureState::Plus,
        (_, Basis::Diagonal) => PureState::Minus,
    }
}

/// The basis B92 uses for a given bit.
pub fn basis_of_b92(bit: Bit) -> Basis {
    Basis::from_bit(bit)
}

/// B92 sends `|0>` for 0 and `|+>` for 1.
pub fn encode_b92(bit: Bit) -> PureState {
    encode_bb84(0, basis_of_b92(bit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(state: PureState, basis: Basis) -> Vec<(Bit, PureState, Prob)> {
        measure(state, basis).into_iter().map(|b| (b.bit, b.post, b.prob)).collect()
    }

    #[test]
    fn measure_examples() {
        assert_eq!(dist(PureState::Zero, Basis::Rectilinear), vec![(0, PureState::Zero, Prob::one())]);
        assert_eq!(
            dist(PureState::Plus, Basis::Rectilinear),
            vec![(0, PureState::Zero, Prob::half()), (1, PureState::One, Prob::half())]
        );
        assert_eq!(dist(PureState::Minus, Basis::Diagonal), vec![(1, PureState::Minus, Prob::one())]);
    }

    #[test]
    fn measurement_is_normalised_and_collapses_into_basis() {
        for state in PureState::ALL {
            for basis in Basis::ALL {
                let branches = measure(state, basis);
                assert!((1..=2).contains(&branches.len()));
                let total: Prob = branches.iter().map(|b| &b.prob).sum();
                assert!(total.is_one());
                for b in &branches {
                    assert_eq!(b.post.eigenbasis(), basis);
                    // re-measuring the post-state is deterministic
                    assert_eq!(dist(b.post, basis), vec![(b.bit, b.post, Prob::one())]);
                }
                if state.eigenbasis() != basis {
                    assert!(branches.iter().all(|b| b.prob == Prob::half()));
                }
            }
        }
    }

    #[test]
    fn encodings() {
        assert_eq!(encode_bb84(0, Basis::Rectilinear), PureState::Zero);
        assert_eq!(encode_bb84(1, Basis::Diagonal), PureState::Minus);
        assert_eq!(encode_bb84(1, Basis::Rectilinear), PureState::One);
        assert_eq!(encode_bb84(0, Basis::Diagonal), PureState::Plus);
        assert_eq!(encode_b92(0), PureState::Zero);
        assert_eq!(encode_b92(1), PureState::Plus);
        for bit in [0, 1] {
            // B92 always sends the "0" state of the bit's basis
            assert_eq!(encode_b92(bit), encode_bb84(0, basis_of_b92(bit)));
            for basis in Basis::ALL {
                let s = encode_bb84(bit, basis);
                assert_eq!(s.eigenbasis(), basis);
                assert_eq!(s.bit(), bit);
            }
        }
    }

    #[test]
    fn channel_codes() {
        for s in PureState::ALL {
            assert_eq!(PureState::from_code(s.code()), Some(s));
        }
        assert_eq!(PureState::from_code(4), None);
    }
}
