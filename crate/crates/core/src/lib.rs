//! Exact eavesdropper-detection analysis for the BB84 and B92 quantum key
//! distribution protocols.
//!
//! A protocol round is enumerated exhaustively with exact dyadic probabilities
//! ([`protocol`]), an `n`-round run is compiled into a discrete-time Markov
//! chain ([`dtmc`]) and queried with reachability properties ([`pctl`]).
//! Monte Carlo simulation ([`montecarlo`]) provides an independent estimate,
//! [`fit`] recovers exponential trend curves from sweeps, and [`prism`] emits
//! equivalent models for the PRISM model checker.

pub mod dtmc;
pub mod fit;
pub mod montecarlo;
pub mod pctl;
pub mod prism;
pub mod prob;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod sweep;

pub use dtmc::{build_chain, cm_probability, detection_probability_closed_form, ChainSpec, Dtmc, DtmcError};
pub use fit::{fit, FitForm, FitModel};
pub use montecarlo::{simulate, SimEstimate, SimEvent};
pub use pctl::{evaluate, parse_query, PctlQuery, StatePredicate};
pub use prism::{export_prism, PrismModel};
pub use prob::Prob;
pub use protocol::{
    enumerate_round, round_stats, AttackStrategy, DetectionRule, EveCorrectRule, Protocol, RoundConfig, RoundOutcome,
};
pub use quantum::{Basis, PureState};
