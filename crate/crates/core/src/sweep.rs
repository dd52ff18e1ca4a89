//! Sweeps over the number of exchanged qubits, and their CSV form.
//!
//! With `paper_compat` a row labelled `N` is evaluated at `N + 1` rounds: the
//! published detection tables match `1 - (1 - p)^(N+1)`, i.e. models whose loop
//! runs over `0..=N`. The correct-measurement threshold stays at `N / 2`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtmc::{build_chain, ChainSpec, DtmcError, VAR_CORRECT, VAR_DETECTED};
use crate::montecarlo::{simulate, SimError, SimEvent};
use crate::pctl::{Comparator, StatePredicate};

pub const CSV_HEADER: [&str; 5] = ["N", "rounds", "p_exact", "p_mc", "mc_stderr"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepProperty {
    /// Eve is eventually detected.
    Detect,
    /// Eve's correct-measurement tally exceeds `N / 2`.
    Cm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: u32,
    pub rounds: u32,
    pub p_exact: f64,
    pub p_mc: Option<f64>,
    pub mc_stderr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepConfig {
    /// Protocol, attack and rules; its `rounds` field is overridden per row.
    pub spec: ChainSpec,
    pub property: SweepProperty,
    pub n_min: u32,
    pub n_max: u32,
    pub paper_compat: bool,
    pub monte_carlo: Option<MonteCarlo>,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid range {n_min}..={n_max}: need 1 <= n_min <= n_max")]
    Range { n_min: u32, n_max: u32 },
    #[error(transparent)]
    Chain(#[from] DtmcError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl SweepConfig {
    pub fn rounds_for(&self, n: u32) -> u32 {
        if self.paper_compat {
            n + 1
        } else {
            n
        }
    }

    fn row(&self, n: u32) -> Result<SweepRow, SweepError> {
        let rounds = self.rounds_for(n);
        let spec = self.spec.with_rounds(rounds);
        let chain = build_chain(&spec)?;
        let threshold = n / 2;
        let (target, event) = match self.property {
            SweepProperty::Detect => (StatePredicate::single(VAR_DETECTED, Comparator::Eq, 1), SimEvent::Detected),
            SweepProperty::Cm => (
                StatePredicate::single(VAR_CORRECT, Comparator::Gt, i64::from(threshold)),
                SimEvent::CorrectAbove(threshold),
            ),
        };
        let p_exact = chain.reach_probability(&target)?.to_f64();
        let mc = self.monte_carlo.map(|mc| simulate(&spec, event, mc.trials, mc.seed)).transpose()?;
        Ok(SweepRow {
            n,
            rounds,
            p_exact,
            p_mc: mc.as_ref().map(|e| e.point_estimate),
            mc_stderr: mc.as_ref().map(|e| e.standard_error),
        })
    }
}

/// One row per `N` in `n_min..=n_max`, in order.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>, SweepError> {
    if config.n_min == 0 || config.n_min > config.n_max {
        return Err(SweepError::Range { n_min: config.n_min, n_max: config.n_max });
    }
    (config.n_min..=config.n_max).into_par_iter().map(|n| config.row(n)).collect()
}

/// Write rows as CSV. `comment` lines are emitted first, each prefixed `# `.
pub fn write_csv<W: Write>(rows: &[SweepRow], comment: &[String], mut out: W) -> Result<(), SweepError> {
    for line in comment {
        writeln!(out, "# {line}").map_err(csv::Error::from)?;
    }
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read rows written by [`write_csv`]; `#` lines are skipped.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, SweepError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<SweepRow>, _>>()?)
}
