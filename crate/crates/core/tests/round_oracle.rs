//! Brute-force check of the round enumeration against squared amplitudes.
//!
//! The oracle walks the full tree bit x aliceBasis x eveBasis x eveResult x
//! bobBasis x bobResult (64 leaves for BB84 intercept-resend), zero-probability
//! leaves included, computing each branch weight as |<e|psi>|^2 from explicit
//! state vectors. It shares nothing with `quantum::measure`.

use qkd_core::prob::Prob;
use qkd_core::protocol::{
    enumerate_round, round_stats, AttackStrategy, DetectionRule, EveCorrectRule, Protocol, RoundConfig, RoundJoint,
};

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

type Vec2 = [f64; 2];

// index: 0=|0>, 1=|1>, 2=|+>, 3=|->
const STATES: [Vec2; 4] = [[1.0, 0.0], [0.0, 1.0], [H, H], [H, -H]];

/// The two eigenvectors (result 0, result 1) of basis 0 (rectilinear) or 1.
fn basis_vectors(basis: usize) -> [usize; 2] {
    if basis == 0 {
        [0, 1]
    } else {
        [2, 3]
    }
}

fn born(outcome: usize, state: usize) -> f64 {
    let (a, b) = (STATES[outcome], STATES[state]);
    (a[0] * b[0] + a[1] * b[1]).powi(2)
}

fn state_basis(state: usize) -> usize {
    state / 2
}

fn state_value(state: usize) -> usize {
    state % 2
}

/// (eve basis and result, forwarded state, weight)
type EveLeaf = (Option<(usize, usize)>, usize, f64);

#[derive(Default, Debug)]
struct OracleStats {
    leaves: usize,
    p_total: f64,
    p_detect: f64,
    p_sift: f64,
    p_correct: f64,
    joint: [[f64; 2]; 2],
}

fn oracle(protocol: Protocol, attack: AttackStrategy, detection: DetectionRule, rule: EveCorrectRule) -> OracleStats {
    let mut st = OracleStats::default();
    for bit in 0..2 {
        for alice_basis in 0..2 {
            let (p_basis, sent) = match protocol {
                Protocol::BB84 => (0.5, basis_vectors(alice_basis)[bit]),
                // B92: bit 0 -> |0>, bit 1 -> |+>
                Protocol::B92 => (if alice_basis == bit { 1.0 } else { 0.0 }, [0, 2][bit]),
            };
            let mut eve: Vec<EveLeaf> = Vec::new();
            match attack {
                AttackStrategy::NoEve => eve.push((None, sent, 1.0)),
                AttackStrategy::InterceptResend | AttackStrategy::RandomSubstitution => {
                    for eb in 0..2 {
                        for er in 0..2 {
                            let post = basis_vectors(eb)[er];
                            let w = 0.5 * born(post, sent);
                            if attack == AttackStrategy::InterceptResend {
                                eve.push((Some((eb, er)), post, w));
                            } else {
                                for fwd in 0..4 {
                                    eve.push((Some((eb, er)), fwd, w * 0.25));
                                }
                            }
                        }
                    }
                }
            }
            for (e, fwd, w_eve) in eve {
                for bob_basis in 0..2 {
                    for br in 0..2 {
                        let w = 0.5 * p_basis * w_eve * 0.5 * born(basis_vectors(bob_basis)[br], fwd);
                        st.leaves += 1;
                        st.p_total += w;
                        let sifted = bob_basis == alice_basis;
                        let mismatch = bob_basis == state_basis(sent) && br != state_value(sent);
                        // B92 conclusive results: rectilinear 1 => bit 1, diagonal 1 => bit 0
                        let contradiction = br == 1 && (if bob_basis == 0 { 1 } else { 0 }) != bit;
                        let detected = match detection {
                            DetectionRule::SameBasisMismatch => mismatch,
                            DetectionRule::ConclusiveContradiction => contradiction,
                            DetectionRule::Both => mismatch || contradiction,
                        };
                        let correct = e.is_some_and(|(eb, er)| {
                            let bit_ok = er == state_value(sent);
                            let basis_ok = eb == state_basis(sent);
                            match rule {
                                EveCorrectRule::BitMatch => bit_ok,
                                EveCorrectRule::BasisAndBitMatch => bit_ok && basis_ok,
                                EveCorrectRule::BasisAndBitMatchSifted => bit_ok && basis_ok && sifted,
                            }
                        });
                        if detected {
                            st.p_detect += w;
                        }
                        if sifted {
                            st.p_sift += w;
                        }
                        if correct {
                            st.p_correct += w;
                        }
                        st.joint[usize::from(detected)][usize::from(correct)] += w;
                    }
                }
            }
        }
    }
    st
}

fn configs() -> Vec<RoundConfig> {
    let mut v = Vec::new();
    for protocol in Protocol::ALL {
        for attack in AttackStrategy::ALL {
            for &detection in protocol.detection_rules() {
                for eve_rule in EveCorrectRule::ALL {
                    v.push(RoundConfig { protocol, attack, detection, eve_rule });
                }
            }
        }
    }
    v
}

#[test]
fn enumeration_matches_born_rule_oracle() {
    for c in configs() {
        let o = oracle(c.protocol, c.attack, c.detection, c.eve_rule);
        let outcomes = enumerate_round(&c).unwrap();
        let s = round_stats(&outcomes);
        let joint = RoundJoint::from_outcomes(&outcomes);
        assert!((o.p_total - 1.0).abs() < 1e-12, "{c:?}");
        assert!((s.p_detect.to_f64() - o.p_detect).abs() < 1e-12, "{c:?}: {} vs {}", s.p_detect, o.p_detect);
        assert!((s.p_sift.to_f64() - o.p_sift).abs() < 1e-12, "{c:?}");
        assert!((s.p_eve_correct.to_f64() - o.p_correct).abs() < 1e-12, "{c:?}");
        for d in [false, true] {
            for e in [false, true] {
                let exact = joint.get(d, e).to_f64();
                assert!((exact - o.joint[usize::from(d)][usize::from(e)]).abs() < 1e-12, "{c:?} [{d}][{e}]");
            }
        }
    }
}

#[test]
fn bb84_intercept_resend_tree_has_64_leaves() {
    let o = oracle(
        Protocol::BB84,
        AttackStrategy::InterceptResend,
        DetectionRule::SameBasisMismatch,
        EveCorrectRule::BasisAndBitMatch,
    );
    assert_eq!(o.leaves, 64);
    assert!((o.p_detect - 0.125).abs() < 1e-12);
}

// Frozen from the oracle above.
#[test]
fn frozen_detection_probabilities() {
    let cases = [
        (Protocol::BB84, AttackStrategy::NoEve, Prob::zero()),
        (Protocol::BB84, AttackStrategy::InterceptResend, Prob::dyadic(1, 3)),
        (Protocol::BB84, AttackStrategy::RandomSubstitution, Prob::dyadic(1, 2)),
        (Protocol::B92, AttackStrategy::NoEve, Prob::zero()),
        (Protocol::B92, AttackStrategy::InterceptResend, Prob::dyadic(1, 3)),
        (Protocol::B92, AttackStrategy::RandomSubstitution, Prob::dyadic(1, 2)),
    ];
    for (protocol, attack, want) in cases {
        let stats = round_stats(&enumerate_round(&RoundConfig::new(protocol, attack)).unwrap());
        assert_eq!(stats.p_detect, want, "{protocol} {attack}");
        assert_eq!(stats.p_sift, Prob::half());
    }
}

#[test]
fn no_eve_sifts_half_without_detection() {
    let c = RoundConfig::new(Protocol::BB84, AttackStrategy::NoEve);
    let outcomes = enumerate_round(&c).unwrap();
    assert!(outcomes.iter().all(|o| !o.detected));
    assert_eq!(round_stats(&outcomes).p_sift, Prob::half());
}

#[test]
fn bb84_detection_does_not_depend_on_alice_bit() {
    for attack in AttackStrategy::ALL {
        let outcomes = enumerate_round(&RoundConfig::new(Protocol::BB84, attack)).unwrap();
        let given = |bit: u8| -> Prob {
            outcomes.iter().filter(|o| o.alice_bit == bit && o.detected).map(|o| &o.probability).sum()
        };
        assert_eq!(given(0), given(1), "{attack}");
    }
}
