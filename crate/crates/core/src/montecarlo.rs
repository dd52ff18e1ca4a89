//! Monte Carlo estimates of the same events the chain computes exactly.
//!
//! Trials sample rounds directly (coin flips and collapses), without going
//! through the outcome enumeration, and serve as an independent check on it.
//! Trial `i` draws from the Philox stream `(seed, i)`, so the estimate is
//! bitwise identical for any number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtmc::{ChainSpec, DtmcError};
use crate::protocol::{AttackStrategy, Protocol, RoundConfig};
use crate::quantum::{basis_of_b92, encode_b92, encode_bb84, Basis, Bit, PureState};
use crate::rng::TrialStream;

/// The event whose probability is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimEvent {
    /// Eve is detected in some round.
    Detected,
    /// Eve's correct-measurement count ends strictly above the threshold.
    CorrectAbove(u32),
}

impl SimEvent {
    /// `correctCount > rounds / 2`.
    pub fn cm_exceeds_half(rounds: u32) -> SimEvent {
        SimEvent::CorrectAbove(rounds / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub trials: u64,
    pub successes: u64,
    pub point_estimate: f64,
    pub standard_error: f64,
    pub seed: u64,
}

impl SimEstimate {
    fn new(trials: u64, successes: u64, seed: u64) -> Self {
        let p = successes as f64 / trials as f64;
        SimEstimate {
            trials,
            successes,
            point_estimate: p,
            standard_error: (p * (1.0 - p) / trials as f64).sqrt(),
            seed,
        }
    }

    /// Whether `exact` lies within `k` standard errors of the estimate.
    pub fn within(&self, exact: f64, k: f64) -> bool {
        (self.point_estimate - exact).abs() <= k * self.standard_error
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Chain(#[from] DtmcError),
}

fn sample_measure(state: PureState, basis: Basis, rng: &mut TrialStream) -> (Bit, PureState) {
    if state.eigenbasis() == basis {
        (state.bit(), state)
    } else {
        let bit = rng.bit();
        (bit, encode_bb84(bit, basis))
    }
}

/// Result of one simulated run: whether Eve was caught, and her tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialResult {
    pub detected: bool,
    pub correct: u32,
}

/// Replay trial `index` of a run.
pub fn run_trial(spec: &ChainSpec, seed: u64, index: u64) -> TrialResult {
    let config: RoundConfig = spec.round_config();
    let mut rng = TrialStream::new(seed, index);
    let mut correct = 0;
    let mut detected = false;
    for _ in 0..spec.rounds {
        let alice_bit = rng.bit();
        let (alice_basis, alice_state) = match spec.protocol {
            Protocol::BB84 => {
                let basis = Basis::from_bit(rng.bit());
                (basis, encode_bb84(alice_bit, basis))
            }
            Protocol::B92 => (basis_of_b92(alice_bit), encode_b92(alice_bit)),
        };
        let (eve, forwarded) = match spec.attack {
            AttackStrategy::NoEve => (None, alice_state),
            AttackStrategy::InterceptResend => {
                let basis = Basis::from_bit(rng.bit());
                let (bit, post) = sample_measure(alice_state, basis, &mut rng);
                (Some((basis, bit)), post)
            }
            AttackStrategy::RandomSubstitution => {
                let basis = Basis::from_bit(rng.bit());
                let (bit, _) = sample_measure(alice_state, basis, &mut rng);
                let fresh = PureState::from_code(rng.two_bits()).expect("two bits index four states");
                (Some((basis, bit)), fresh)
            }
        };
        let bob_basis = Basis::from_bit(rng.bit());
        let (bob_bit, _) = sample_measure(forwarded, bob_basis, &mut rng);
        let sifted = bob_basis == alice_basis;
        if config.is_eve_correct(alice_state, eve, sifted) {
            correct += 1;
        }
        if config.is_detected(alice_state, bob_basis, bob_bit) {
            detected = true;
            if spec.stop_on_detect {
                break;
            }
        }
    }
    TrialResult { detected, correct }
}

/// Estimate the probability of `event` from `trials` independent runs.
pub fn simulate(spec: &ChainSpec, event: SimEvent, trials: u64, seed: u64) -> Result<SimEstimate, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    spec.validate()?;
    let successes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let r = run_trial(spec, seed, i);
            let hit = match event {
                SimEvent::Detected => r.detected,
                SimEvent::CorrectAbove(t) => r.correct > t,
            };
            u64::from(hit)
        })
        .sum();
    Ok(SimEstimate::new(trials, successes, seed))
}
