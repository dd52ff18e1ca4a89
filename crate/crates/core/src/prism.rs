//! PRISM-language export.
//!
//! The exported model has one module per agent. Alice prepares and sends a
//! qubit over the global channel (`qubit`, encoded 0..3 as `|0>,|1>,|+>,|->`),
//! Eve (if present) intercepts it, Bob measures it, then Alice compares bases
//! and bits. All agents advance to the next round on the synchronised action
//! `[loop]` and finish on `[stop]`.
//!
//! Agent states:
//!
//! | aliceState | meaning                          |
//! |-----------:|----------------------------------|
//! | 0          | prepare and send                 |
//! | 1          | wait for Bob's measurement       |
//! | 2          | round checked, no disturbance    |
//! | 3          | round checked, Eve detected      |
//! | 4          | finished                         |
//! | 5          | finished after detecting Eve     |
//!
//! | bobState | meaning             | eveState | meaning               |
//! |---------:|---------------------|---------:|-----------------------|
//! | 0        | wait for qubit      | 0        | wait for qubit        |
//! | 1        | measured            | 1        | intercepted           |
//! | 2        | finished            | 2        | tally updated         |
//! |          |                     | 3        | finished              |
//!
//! The model is kept as a small typed IR so it can be rendered to text and
//! also unfolded into a [`Dtmc`] here, using PRISM's synchronisation rules.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::dtmc::{ChainSpec, Dtmc, DtmcBuilder, DtmcError};
use crate::prob::Prob;
use crate::protocol::{stats_for, AttackStrategy, DetectionRule, EveCorrectRule, Protocol};
use crate::quantum::{basis_of_b92, encode_b92, encode_bb84, measure, Basis, PureState};

pub const ALICE_DONE: i64 = 4;
pub const ALICE_DONE_DETECTED: i64 = 5;
pub const BOB_DONE: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Integer/boolean expressions; booleans evaluate to 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
}

fn var(name: &str) -> Expr {
    Expr::Var(name.to_string())
}

fn int(v: i64) -> Expr {
    Expr::Int(v)
}

fn cmp(op: CmpOp, l: Expr, r: Expr) -> Expr {
    Expr::Cmp(op, Box::new(l), Box::new(r))
}

fn is(name: &str, v: i64) -> Expr {
    cmp(CmpOp::Eq, var(name), int(v))
}

fn and(items: impl IntoIterator<Item = Expr>) -> Expr {
    let items: Vec<Expr> = items.into_iter().filter(|e| *e != Expr::Bool(true)).collect();
    match items.len() {
        0 => Expr::Bool(true),
        1 => items.into_iter().next().unwrap(),
        _ => Expr::And(items),
    }
}

fn or(items: impl IntoIterator<Item = Expr>) -> Expr {
    let items: Vec<Expr> = items.into_iter().collect();
    if items.len() == 1 {
        items.into_iter().next().unwrap()
    } else {
        Expr::Or(items)
    }
}

fn not(e: Expr) -> Expr {
    Expr::Not(Box::new(e))
}

impl Expr {
    fn is_atom(&self) -> bool {
        matches!(self, Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) | Expr::Min(..) | Expr::Not(_))
    }

    fn eval(&self, env: &dyn Fn(&str) -> Option<i64>) -> Result<i64, PrismError> {
        let b = |x: bool| i64::from(x);
        Ok(match self {
            Expr::Int(v) => *v,
            Expr::Bool(v) => b(*v),
            Expr::Var(n) => env(n).ok_or_else(|| PrismError::UnknownName(n.clone()))?,
            Expr::Not(e) => b(e.eval(env)? == 0),
            Expr::And(es) => {
                for e in es {
                    if e.eval(env)? == 0 {
                        return Ok(0);
                    }
                }
                1
            }
            Expr::Or(es) => {
                for e in es {
                    if e.eval(env)? != 0 {
                        return Ok(1);
                    }
                }
                0
            }
            Expr::Cmp(op, l, r) => {
                let (l, r) = (l.eval(env)?, r.eval(env)?);
                b(match op {
                    CmpOp::Eq => l == r,
                    CmpOp::Ne => l != r,
                    CmpOp::Lt => l < r,
                    CmpOp::Le => l <= r,
                    CmpOp::Gt => l > r,
                    CmpOp::Ge => l >= r,
                })
            }
            Expr::Add(l, r) => l.eval(env)? + r.eval(env)?,
            Expr::Sub(l, r) => l.eval(env)? - r.eval(env)?,
            Expr::Min(l, r) => l.eval(env)?.min(r.eval(env)?),
            Expr::Ite(c, t, e) => {
                if c.eval(env)? != 0 {
                    t.eval(env)?
                } else {
                    e.eval(env)?
                }
            }
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrapped = |e: &Expr, f: &mut fmt::Formatter<'_>| {
            if e.is_atom() {
                write!(f, "{e}")
            } else {
                write!(f, "({e})")
            }
        };
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Bool(v) => write!(f, "{v}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Not(e) => {
                f.write_str("!")?;
                wrapped(e, f)
            }
            Expr::And(es) | Expr::Or(es) => {
                let sep = if matches!(self, Expr::And(_)) { " & " } else { " | " };
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    if matches!(e, Expr::And(_) | Expr::Or(_) | Expr::Ite(..)) {
                        write!(f, "({e})")?;
                    } else {
                        write!(f, "{e}")?;
                    }
                }
                Ok(())
            }
            Expr::Cmp(op, l, r) => {
                wrapped(l, f)?;
                f.write_str(op.symbol())?;
                wrapped(r, f)
            }
            Expr::Add(l, r) | Expr::Sub(l, r) => {
                wrapped(l, f)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                wrapped(r, f)
            }
            Expr::Min(l, r) => write!(f, "min({l}, {r})"),
            Expr::Ite(c, t, e) => write!(f, "{c} ? {t} : {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub low: i64,
    /// Upper bound, rendered as `N` when it equals the round count.
    pub high: Bound,
    pub init: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lit(i64),
    Rounds,
}

/// Probabilistic branches of a command, each a weight and its assignments.
pub type Updates = Vec<(Prob, Vec<(String, Expr)>)>;

/// `[action] guard -> p1 : (x'=e) & ... + p2 : ...;`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub action: Option<&'static str>,
    pub guard: Expr,
    pub updates: Updates,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Module {
    pub name: String,
    pub vars: Vec<VarDecl>,
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub rounds: u32,
    pub header: Vec<String>,
    pub globals: Vec<VarDecl>,
    pub modules: Vec<Module>,
    pub labels: Vec<(String, Expr)>,
}

/// An exported model plus its properties file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrismModel {
    pub text: String,
    pub properties: String,
    pub protocol: Protocol,
    pub attack: AttackStrategy,
    pub rounds: u32,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrismError {
    #[error(transparent)]
    Chain(#[from] DtmcError),
    #[error("unknown name `{0}` in expression")]
    UnknownName(String),
    #[error("{0} transitions enabled in one state; the model must be deterministic")]
    Nondeterministic(usize),
    #[error("no transition enabled in state {0:?}")]
    Deadlock(Vec<i64>),
    #[error("update sets `{name}` to {value}, outside its range")]
    OutOfRange { name: String, value: i64 },
}

/// Decimal literal with 12 significant digits, trailing zeros trimmed.
pub fn prob_literal(p: &Prob) -> String {
    let x = p.to_f64();
    if x == 0.0 || x == 1.0 {
        return format!("{x:.1}");
    }
    let decimals = (11 - x.log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Bob's (or Eve's) measurement of a known qubit value, with every basis
/// choice: branches of (basis, bit, post-state, probability).
fn measure_random_basis(q: PureState) -> Vec<(Basis, u8, PureState, Prob)> {
    Basis::ALL
        .into_iter()
        .flat_map(|basis| measure(q, basis).into_iter().map(move |m| (basis, m.bit, m.post, &Prob::half() * &m.prob)))
        .collect()
}

fn assign(name: &str, e: Expr) -> (String, Expr) {
    (name.to_string(), e)
}

/// Bit value of the state Alice sent, as an expression over her variables.
fn sent_bit(protocol: Protocol) -> Expr {
    match protocol {
        Protocol::BB84 => var("aliceBit"),
        // |0> and |+> both read 0 in their own basis
        Protocol::B92 => int(i64::from(encode_b92(0).bit())),
    }
}

fn detection_guard(spec: &ChainSpec) -> Expr {
    let mismatch = and([
        cmp(CmpOp::Eq, var("bobBasis"), var("aliceBasis")),
        cmp(CmpOp::Ne, var("bobBit"), sent_bit(spec.protocol)),
    ]);
    // a rectilinear 1 implies bit 1, a diagonal 1 implies bit 0
    let contradiction = or([
        and([is("bobBasis", 0), is("bobBit", 1), cmp(CmpOp::Ne, var("aliceBit"), int(1))]),
        and([is("bobBasis", 1), is("bobBit", 1), cmp(CmpOp::Ne, var("aliceBit"), int(0))]),
    ]);
    match spec.detection {
        DetectionRule::SameBasisMismatch => mismatch,
        DetectionRule::ConclusiveContradiction => contradiction,
        DetectionRule::Both => or([mismatch, contradiction]),
    }
}

fn eve_correct_expr(spec: &ChainSpec) -> Expr {
    let bit = cmp(CmpOp::Eq, var("eveBit"), sent_bit(spec.protocol));
    let basis = cmp(CmpOp::Eq, var("eveBasis"), var("aliceBasis"));
    let sifted = cmp(CmpOp::Eq, var("bobBasis"), var("aliceBasis"));
    match spec.eve_rule {
        EveCorrectRule::BitMatch => bit,
        EveCorrectRule::BasisAndBitMatch => and([bit, basis]),
        EveCorrectRule::BasisAndBitMatchSifted => and([bit, basis, sifted]),
    }
}

fn alice(spec: &ChainSpec) -> Module {
    let mut sends: Vec<(Prob, Vec<(String, Expr)>)> = Vec::new();
    for bit in [0u8, 1] {
        let choices: Vec<(Basis, PureState, Prob)> = match spec.protocol {
            Protocol::BB84 => Basis::ALL.into_iter().map(|b| (b, encode_bb84(bit, b), Prob::dyadic(1, 2))).collect(),
            Protocol::B92 => vec![(basis_of_b92(bit), encode_b92(bit), Prob::half())],
        };
        for (basis, state, p) in choices {
            sends.push((
                p,
                vec![
                    assign("aliceBit", int(i64::from(bit))),
                    assign("aliceBasis", int(i64::from(basis.index()))),
                    assign("qubit", int(i64::from(state.code()))),
                    assign("channel", int(1)),
                    assign("aliceState", int(1)),
                ],
            ));
        }
    }
    let checked = and([is("aliceState", 1), is("bobState", 1)]);
    let last_round = cmp(CmpOp::Eq, var("exchanged"), Expr::Sub(Box::new(var("N")), Box::new(int(1))));
    let more_rounds = cmp(CmpOp::Lt, var("exchanged"), Expr::Sub(Box::new(var("N")), Box::new(int(1))));
    let next_round = Expr::Add(Box::new(var("exchanged")), Box::new(int(1)));
    let one = |updates: Vec<(String, Expr)>| vec![(Prob::one(), updates)];

    let mut commands = vec![
        Command { action: None, guard: is("aliceState", 0), updates: sends },
        Command {
            action: None,
            guard: and([checked.clone(), detection_guard(spec)]),
            updates: one(vec![assign("detected", int(1)), assign("aliceState", int(3))]),
        },
        Command {
            action: None,
            guard: and([checked, not(detection_guard(spec))]),
            updates: one(vec![assign("aliceState", int(2))]),
        },
    ];
    let clean_continue = and([is("aliceState", 2), more_rounds.clone()]);
    let loop_guard = if spec.stop_on_detect {
        clean_continue
    } else {
        or([clean_continue, and([is("aliceState", 3), more_rounds])])
    };
    commands.push(Command {
        action: Some("loop"),
        guard: loop_guard,
        updates: one(vec![assign("exchanged", next_round.clone()), assign("aliceState", int(0))]),
    });
    commands.push(Command {
        action: Some("stop"),
        guard: and([is("aliceState", 2), last_round.clone()]),
        updates: one(vec![assign("exchanged", next_round.clone()), assign("aliceState", int(ALICE_DONE))]),
    });
    let detected_stop = if spec.stop_on_detect { is("aliceState", 3) } else { and([is("aliceState", 3), last_round]) };
    commands.push(Command {
        action: Some("stop"),
        guard: detected_stop,
        updates: one(vec![assign("exchanged", next_round), assign("aliceState", int(ALICE_DONE_DETECTED))]),
    });
    // finished: absorbing
    commands.push(Command {
        action: None,
        guard: cmp(CmpOp::Ge, var("aliceState"), int(ALICE_DONE)),
        updates: one(Vec::new()),
    });

    Module {
        name: "Alice".into(),
        vars: vec![
            VarDecl { name: "aliceState".into(), low: 0, high: Bound::Lit(ALICE_DONE_DETECTED), init: 0 },
            VarDecl { name: "aliceBit".into(), low: 0, high: Bound::Lit(1), init: 0 },
            VarDecl { name: "aliceBasis".into(), low: 0, high: Bound::Lit(1), init: 0 },
            VarDecl { name: "exchanged".into(), low: 0, high: Bound::Rounds, init: 0 },
            VarDecl { name: "detected".into(), low: 0, high: Bound::Lit(1), init: 0 },
        ],
        commands,
    }
}

fn bob(spec: &ChainSpec) -> Module {
    let inbound = if spec.attack.has_eve() { 2 } else { 1 };
    let mut commands: Vec<Command> = PureState::ALL
        .into_iter()
        .map(|q| Command {
            action: None,
            guard: and([is("bobState", 0), is("channel", inbound), is("qubit", i64::from(q.code()))]),
            updates: measure_random_basis(q)
                .into_iter()
                .map(|(basis, bit, _, p)| {
                    (
                        p,
                        vec![
                            assign("bobBasis", int(i64::from(basis.index()))),
                            assign("bobBit", int(i64::from(bit))),
                            assign("channel", int(0)),
                            assign("bobState", int(1)),
                        ],
                    )
                })
                .collect(),
        })
        .collect();
    commands.push(Command {
        action: Some("loop"),
        guard: is("bobState", 1),
        updates: vec![(Prob::one(), vec![assign("bobState", int(0))])],
    });
    commands.push(Command {
        action: Some("stop"),
        guard: is("bobState", 1),
        updates: vec![(Prob::one(), vec![assign("bobState", int(BOB_DONE))])],
    });
    Module {
        name: "Bob".into(),
        vars: vec![
            VarDecl { name: "bobState".into(), low: 0, high: Bound::Lit(BOB_DONE), init: 0 },
            VarDecl { name: "bobBasis".into(), low: 0, high: Bound::Lit(1), init: 0 },
            VarDecl { name: "bobBit".into(), low: 0, high: Bound::Lit(1), init: 0 },
        ],
        commands,
    }
}

fn eve(spec: &ChainSpec) -> Module {
    let mut commands: Vec<Command> = PureState::ALL
        .into_iter()
        .map(|q| {
            let mut updates = Vec::new();
            for (basis, bit, post, p) in measure_random_basis(q) {
                let forwards: Vec<(PureState, Prob)> = match spec.attack {
                    AttackStrategy::RandomSubstitution => {
                        PureState::ALL.into_iter().map(|s| (s, Prob::dyadic(1, 2))).collect()
                    }
                    _ => vec![(post, Prob::one())],
                };
                for (fwd, pf) in forwards {
                    updates.push((
                        &p * &pf,
                        vec![
                            assign("eveBasis", int(i64::from(basis.index()))),
                            assign("eveBit", int(i64::from(bit))),
                            assign("qubit", int(i64::from(fwd.code()))),
                            assign("channel", int(2)),
                            assign("eveState", int(1)),
                        ],
                    ));
                }
            }
            Command {
                action: None,
                guard: and([is("eveState", 0), is("channel", 1), is("qubit", i64::from(q.code()))]),
                updates,
            }
        })
        .collect();
    let tally = Expr::Min(
        Box::new(var("N")),
        Box::new(Expr::Add(
            Box::new(var("correctMeasurement")),
            Box::new(Expr::Ite(Box::new(eve_correct_expr(spec)), Box::new(int(1)), Box::new(int(0)))),
        )),
    );
    commands.push(Command {
        action: None,
        guard: and([is("eveState", 1), or([is("aliceState", 2), is("aliceState", 3)])]),
        updates: vec![(Prob::one(), vec![assign("correctMeasurement", tally), assign("eveState", int(2))])],
    });
    commands.push(Command {
        action: Some("loop"),
        guard: is("eveState", 2),
        updates: vec![(Prob::one(), vec![assign("eveState", int(0))])],
    });
    commands.push(Command {
        action: Some("stop"),
        guard: is("eveState", 2),
        updates: vec![(Prob::one(), vec![assign("eveState", int(3))])],
    });
    Module {
        name: "Eve".into(),
        vars: vec![
            VarDecl { name: "eveState".into(), low: 0, high: Bound::Lit(3), init: 0 },
            VarDecl { name: "eveBasis".into(), low: 0, high: Bound::Lit(1), init: 0 },
            VarDecl { name: "eveBit".into(), low: 0, high: Bound::Lit(1), init: 0 },
            VarDecl { name: "correctMeasurement".into(), low: 0, high: Bound::Rounds, init: 0 },
        ],
        commands,
    }
}

fn build_model(spec: &ChainSpec) -> Result<Model, DtmcError> {
    spec.validate()?;
    let stats = stats_for(&spec.round_config())?;
    let mut modules = vec![alice(spec), bob(spec)];
    if spec.attack.has_eve() {
        modules.push(eve(spec));
    }
    let mut labels = vec![
        ("detected".to_string(), is("detected", 1)),
        ("done".to_string(), cmp(CmpOp::Ge, var("aliceState"), int(ALICE_DONE))),
    ];
    if spec.attack.has_eve() {
        labels.push((
            "eveMajority".to_string(),
            cmp(CmpOp::Gt, var("correctMeasurement"), int(i64::from(spec.rounds / 2))),
        ));
    }
    Ok(Model {
        rounds: spec.rounds,
        header: vec![
            format!("{} with attack {}, {} round(s)", spec.protocol, spec.attack, spec.rounds),
            format!(
                "detection rule {}, eve tally rule {}, stop on detection {}",
                spec.detection, spec.eve_rule, spec.stop_on_detect
            ),
            format!(
                "per-round probabilities: detect {}, sift {}, eve correct {}",
                prob_literal(&stats.p_detect),
                prob_literal(&stats.p_sift),
                prob_literal(&stats.p_eve_correct)
            ),
            "qubit channel alphabet: 0=|0> 1=|1> 2=|+> 3=|->".to_string(),
        ],
        globals: vec![
            VarDecl { name: "qubit".into(), low: 0, high: Bound::Lit(3), init: 0 },
            // 0 empty, 1 sent by Alice, 2 forwarded by Eve
            VarDecl { name: "channel".into(), low: 0, high: Bound::Lit(2), init: 0 },
        ],
        modules,
        labels,
    })
}

fn render_decl(d: &VarDecl, out: &mut String) {
    let high = match d.high {
        Bound::Lit(v) => v.to_string(),
        Bound::Rounds => "N".to_string(),
    };
    let _ = writeln!(out, "{} : [{}..{}] init {};", d.name, d.low, high, d.init);
}

impl Model {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.header {
            let _ = writeln!(out, "// {line}");
        }
        out.push_str("\ndtmc\n\n");
        let _ = writeln!(out, "const int N = {};\n", self.rounds);
        for g in &self.globals {
            out.push_str("global ");
            render_decl(g, &mut out);
        }
        for m in &self.modules {
            let _ = writeln!(out, "\nmodule {}\n", m.name);
            for v in &m.vars {
                out.push_str("    ");
                render_decl(v, &mut out);
            }
            out.push('\n');
            for c in &m.commands {
                let _ = write!(out, "    [{}] {} -> ", c.action.unwrap_or(""), c.guard);
                let branches: Vec<String> = c
                    .updates
                    .iter()
                    .map(|(p, assigns)| {
                        let body = if assigns.is_empty() {
                            "true".to_string()
                        } else {
                            assigns.iter().map(|(n, e)| format!("({n}'={e})")).collect::<Vec<_>>().join(" & ")
                        };
                        if c.updates.len() == 1 && p.is_one() {
                            body
                        } else {
                            format!("{} : {}", prob_literal(p), body)
                        }
                    })
                    .collect();
                let _ = writeln!(out, "{};", branches.join(" + "));
            }
            out.push_str("\nendmodule\n");
        }
        out.push('\n');
        for (name, e) in &self.labels {
            let _ = writeln!(out, "label \"{name}\" = {e};");
        }
        out
    }

    fn all_vars(&self) -> Vec<&VarDecl> {
        self.globals.iter().chain(self.modules.iter().flat_map(|m| m.vars.iter())).collect()
    }

    /// Unfold the reachable state space into a chain whose variables are all
    /// model variables (globals first, then each module's in order).
    ///
    /// Labelled commands synchronise across every module that declares the
    /// label. The exported models are deterministic, so any state with more
    /// than one enabled transition is reported as an error rather than
    /// resolved uniformly.
    pub fn explore(&self) -> Result<Dtmc, PrismError> {
        let decls = self.all_vars();
        let names: Vec<String> = decls.iter().map(|d| d.name.clone()).collect();
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let n_const = i64::from(self.rounds);
        let high = |d: &VarDecl| match d.high {
            Bound::Lit(v) => v,
            Bound::Rounds => n_const,
        };
        let actions: Vec<&str> = {
            let mut a: Vec<&str> =
                self.modules.iter().flat_map(|m| m.commands.iter().filter_map(|c| c.action)).collect();
            a.sort_unstable();
            a.dedup();
            a
        };

        let mut builder = DtmcBuilder::new(names.clone());
        let init: Vec<i64> = decls.iter().map(|d| d.init).collect();
        let start = builder.state(init)?;
        builder.set_initial(start);
        let mut queue = VecDeque::from([start]);

        while let Some(s) = queue.pop_front() {
            let val = builder.valuation(s).to_vec();
            let env = |name: &str| {
                if name == "N" {
                    Some(n_const)
                } else {
                    index.get(name).map(|&i| val[i])
                }
            };
            // each alternative: list of (prob, assignments) to be combined
            let mut alternatives: Vec<Vec<&Updates>> = Vec::new();
            for m in &self.modules {
                for c in m.commands.iter().filter(|c| c.action.is_none()) {
                    if c.guard.eval(&env)? != 0 {
                        alternatives.push(vec![&c.updates]);
                    }
                }
            }
            for action in &actions {
                let mut parts = Vec::new();
                let mut blocked = false;
                for m in self.modules.iter().filter(|m| m.commands.iter().any(|c| c.action == Some(action))) {
                    let mut enabled: Vec<&Command> = Vec::new();
                    for c in m.commands.iter().filter(|c| c.action == Some(action)) {
                        if c.guard.eval(&env)? != 0 {
                            enabled.push(c);
                        }
                    }
                    match enabled.len() {
                        0 => blocked = true,
                        1 => parts.push(&enabled[0].updates),
                        k => return Err(PrismError::Nondeterministic(k)),
                    }
                }
                if !blocked {
                    alternatives.push(parts);
                }
            }
            match alternatives.len() {
                1 => {}
                0 => return Err(PrismError::Deadlock(val)),
                k => return Err(PrismError::Nondeterministic(k)),
            }
            let parts = alternatives.pop().expect("exactly one");
            // product of the participating distributions
            let mut combos: Vec<(Prob, Vec<&(String, Expr)>)> = vec![(Prob::one(), Vec::new())];
            for dist in parts {
                let mut next = Vec::new();
                for (p, assigns) in &combos {
                    for (q, more) in dist {
                        let mut a = assigns.clone();
                        a.extend(more.iter());
                        next.push((p * q, a));
                    }
                }
                combos = next;
            }
            let mut targets: BTreeMap<Vec<i64>, Prob> = BTreeMap::new();
            for (p, assigns) in combos {
                let mut next = val.clone();
                for (name, e) in assigns {
                    let v = e.eval(&env)?;
                    let i = *index.get(name.as_str()).ok_or_else(|| PrismError::UnknownName(name.clone()))?;
                    if v < decls[i].low || v > high(decls[i]) {
                        return Err(PrismError::OutOfRange { name: name.clone(), value: v });
                    }
                    next[i] = v;
                }
                let slot = targets.entry(next).or_insert_with(Prob::zero);
                *slot = &*slot + &p;
            }
            for (next, p) in targets {
                let fresh = builder.lookup(&next).is_none();
                let t = builder.state(next)?;
                if fresh {
                    queue.push_back(t);
                }
                builder.transition(s, t, p)?;
            }
        }
        Ok(builder.build()?)
    }
}

fn properties(spec: &ChainSpec) -> String {
    let mut out = String::new();
    out.push_str("// Eve is detected at some point\n");
    out.push_str("P=?[F(detected=1)]\n");
    if spec.stop_on_detect {
        let _ = writeln!(out, "// same event through the agents' end states");
        let _ = writeln!(out, "P=?[F(aliceState={ALICE_DONE_DETECTED})&(bobState={BOB_DONE})]");
    }
    if spec.attack.has_eve() {
        let _ = writeln!(out, "// Eve measures more than N/2 qubits correctly");
        let _ = writeln!(out, "P=?[F(correctMeasurement>{})]", spec.rounds / 2);
    }
    out
}

/// Render `spec` as a PRISM model plus a properties file.
pub fn export_prism(spec: &ChainSpec) -> Result<PrismModel, DtmcError> {
    let model = build_model(spec)?;
    Ok(PrismModel {
        text: model.render(),
        properties: properties(spec),
        protocol: spec.protocol,
        attack: spec.attack,
        rounds: spec.rounds,
        model,
    })
}
