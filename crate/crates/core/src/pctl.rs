//! The reachability fragment of PCTL: `P=?[F (x op k) & (y op k) ...]`.
//!
//! Anything richer (until, globally, next, probability bounds, rewards,
//! steady-state, disjunction, negation) is rejected with an explicit
//! unsupported-operator error rather than approximated.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dtmc::{Dtmc, DtmcError, VAR_CORRECT, VAR_DETECTED};
use crate::prob::Prob;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl Comparator {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
        }
    }
}

/// `variable comparator constant`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conjunct {
    pub variable: String,
    pub comparator: Comparator,
    pub constant: i64,
}

impl fmt::Display for Conjunct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}{}{})", self.variable, self.comparator.symbol(), self.constant)
    }
}

/// A non-empty conjunction of comparisons over chain variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StatePredicate {
    conjuncts: Vec<Conjunct>,
}

impl StatePredicate {
    /// `None` for an empty list or an empty variable name.
    pub fn new(conjuncts: Vec<Conjunct>) -> Option<Self> {
        if conjuncts.is_empty() || conjuncts.iter().any(|c| c.variable.is_empty()) {
            return None;
        }
        Some(StatePredicate { conjuncts })
    }

    pub fn single(variable: &str, comparator: Comparator, constant: i64) -> Self {
        StatePredicate { conjuncts: vec![Conjunct { variable: variable.to_string(), comparator, constant }] }
    }

    pub fn conjuncts(&self) -> &[Conjunct] {
        &self.conjuncts
    }

    /// Rewrite names from the agent-level PRISM models onto this crate's
    /// counter variables, for any name `chain` does not declare itself.
    ///
    /// | query conjunct          | chain conjunct         |
    /// |-------------------------|------------------------|
    /// | `aliceState=15` (BB84)  | `detected=1`           |
    /// | `aliceState=11` (B92)   | `detected=1`           |
    /// | `bobState=10`           | `detected=1`           |
    /// | `correctMeasurement`    | `correctCount`         |
    pub fn resolve_aliases(&self, chain: &Dtmc) -> Result<StatePredicate, PctlError> {
        let declared = |name: &str| chain.variables().iter().any(|v| v == name);
        let mut out: Vec<Conjunct> = Vec::new();
        for c in &self.conjuncts {
            let mapped = if declared(&c.variable) {
                c.clone()
            } else {
                match alias(c) {
                    Some(Ok(m)) => m,
                    Some(Err(())) => {
                        return Err(PctlError::UnmappedAlias { variable: c.variable.clone(), constant: c.constant })
                    }
                    None => c.clone(),
                }
            };
            if !out.contains(&mapped) {
                out.push(mapped);
            }
        }
        Ok(StatePredicate { conjuncts: out })
    }
}

fn alias(c: &Conjunct) -> Option<Result<Conjunct, ()>> {
    let detected = Conjunct { variable: VAR_DETECTED.to_string(), comparator: Comparator::Eq, constant: 1 };
    match (c.variable.as_str(), c.comparator, c.constant) {
        ("aliceState", Comparator::Eq, 15 | 11) | ("bobState", Comparator::Eq, 10) => Some(Ok(detected)),
        ("aliceState" | "bobState", _, _) => Some(Err(())),
        ("correctMeasurement", cmp, k) => {
            Some(Ok(Conjunct { variable: VAR_CORRECT.to_string(), comparator: cmp, constant: k }))
        }
        _ => None,
    }
}

impl fmt::Display for StatePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str("&")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// `P=? [ F target ]`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PctlQuery {
    pub target: StatePredicate,
}

impl fmt::Display for PctlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P=?[F{}]", self.target)
    }
}

impl FromStr for PctlQuery {
    type Err = PctlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_query(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PctlError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported operator at offset {offset}: {operator} (only P=?[F ...] is supported)")]
    Unsupported { offset: usize, operator: String },
    #[error("`{variable}={constant}` has no counterpart in the counter chain")]
    UnmappedAlias { variable: String, constant: i64 },
    #[error(transparent)]
    Chain(#[from] DtmcError),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn peek2(&mut self) -> Option<char> {
        self.skip_ws();
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.find(|c| !c.is_whitespace())
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, PctlError> {
        Err(PctlError::Syntax { offset: self.pos, message: message.into() })
    }

    fn unsupported<T>(&self, operator: &str) -> Result<T, PctlError> {
        Err(PctlError::Unsupported { offset: self.pos, operator: operator.to_string() })
    }

    fn expect(&mut self, want: char) -> Result<(), PctlError> {
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => self.syntax(format!("expected `{want}`, found `{c}`")),
            None => self.syntax(format!("expected `{want}`, found end of input")),
        }
    }

    fn ident(&mut self) -> Result<String, PctlError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit())))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return self.syntax("expected a variable name");
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn int(&mut self) -> Result<i64, PctlError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let sign = usize::from(rest.starts_with('-'));
        let digits = rest[sign..].chars().take_while(char::is_ascii_digit).count();
        if digits == 0 {
            return self.syntax("expected an integer constant");
        }
        let text = &rest[..sign + digits];
        match text.parse() {
            Ok(v) => {
                self.pos += text.len();
                Ok(v)
            }
            Err(_) => self.syntax(format!("integer `{text}` out of range")),
        }
    }

    fn comparator(&mut self) -> Result<Comparator, PctlError> {
        let cmp = match (self.peek(), self.peek2()) {
            (Some('<'), Some('=')) => Comparator::Le,
            (Some('>'), Some('=')) => Comparator::Ge,
            (Some('!'), Some('=')) => return self.unsupported("!="),
            (Some('<'), _) => Comparator::Lt,
            (Some('>'), _) => Comparator::Gt,
            (Some('='), _) => Comparator::Eq,
            _ => return self.syntax("expected one of =, <, >, <=, >="),
        };
        self.bump();
        if matches!(cmp, Comparator::Le | Comparator::Ge) {
            self.bump();
        }
        Ok(cmp)
    }

    fn conjunct(&mut self) -> Result<Conjunct, PctlError> {
        match self.peek() {
            Some('(') => {}
            Some('!') => return self.unsupported("! (negation)"),
            Some('"') => return self.unsupported("label reference"),
            _ => return self.syntax("expected `(` to open a comparison"),
        }
        self.bump();
        let variable = self.ident()?;
        if variable == "true" || variable == "false" {
            return self.unsupported("boolean literal");
        }
        let comparator = self.comparator()?;
        let constant = self.int()?;
        if matches!(self.peek(), Some('/' | '+' | '-' | '*')) {
            return self.unsupported("arithmetic in constant");
        }
        self.expect(')')?;
        Ok(Conjunct { variable, comparator, constant })
    }

    fn query(&mut self) -> Result<PctlQuery, PctlError> {
        match self.peek() {
            Some('P') => {}
            Some('R') => return self.unsupported("R (reward)"),
            Some('S') => return self.unsupported("S (steady-state)"),
            Some(_) => return self.syntax("expected `P`"),
            None => return self.syntax("empty query"),
        }
        self.bump();
        match (self.peek(), self.peek2()) {
            (Some('='), Some('?')) => {
                self.bump();
                self.bump();
            }
            (Some('<' | '>' | '='), _) => return self.unsupported("probability bound"),
            (Some('m'), _) => return self.unsupported("Pmin/Pmax"),
            _ => return self.syntax("expected `=?` after `P`"),
        }
        self.expect('[')?;
        match self.peek() {
            Some('F') => {
                self.bump();
            }
            Some('G') => return self.unsupported("G (globally)"),
            Some('X') => return self.unsupported("X (next)"),
            Some('U') => return self.unsupported("U (until)"),
            Some('t') | Some('(') => {
                // `true U ...` or `(a) U (b)`: scan ahead for an until
                if self.src[self.pos..].contains('U') {
                    return self.unsupported("U (until)");
                }
                return self.syntax("expected path operator `F`");
            }
            _ => return self.syntax("expected path operator `F`"),
        }
        if matches!(self.peek(), Some('<' | '>' | '=')) {
            return self.unsupported("time-bounded F");
        }
        let mut conjuncts = vec![self.conjunct()?];
        loop {
            match self.peek() {
                Some('&') => {
                    self.bump();
                    conjuncts.push(self.conjunct()?);
                }
                Some('|') => return self.unsupported("| (disjunction)"),
                Some('=') if self.peek2() == Some('>') => return self.unsupported("=> (implication)"),
                Some('U') => return self.unsupported("U (until)"),
                _ => break,
            }
        }
        self.expect(']')?;
        if let Some(c) = self.peek() {
            return self.syntax(format!("unexpected `{c}` after query"));
        }
        Ok(PctlQuery { target: StatePredicate::new(conjuncts).expect("at least one named conjunct") })
    }
}

/// Parse `P=?[F(name cmp int)&...]`. Whitespace between tokens is ignored.
pub fn parse_query(text: &str) -> Result<PctlQuery, PctlError> {
    Parser { src: text, pos: 0 }.query()
}

/// Probability that `chain` eventually satisfies the query's target.
pub fn evaluate(chain: &Dtmc, query: &PctlQuery) -> Result<Prob, PctlError> {
    let target = query.target.resolve_aliases(chain)?;
    Ok(chain.reach_probability(&target)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtmc::{build_chain, ChainSpec};
    use crate::protocol::{AttackStrategy, Protocol};

    #[test]
    fn parses_two_conjuncts() {
        let q = parse_query("P=?[F(detected=1)&(round=6)]").unwrap();
        assert_eq!(q.target.conjuncts().len(), 2);
        assert_eq!(q.target.conjuncts()[1].variable, "round");
        assert_eq!(q.to_string(), "P=?[F(detected=1)&(round=6)]");
    }

    #[test]
    fn parses_greater_than() {
        let q = parse_query("P=?[F(correctMeasurement>10)]").unwrap();
        let c = &q.target.conjuncts()[0];
        assert_eq!((c.variable.as_str(), c.comparator, c.constant), ("correctMeasurement", Comparator::Gt, 10));
    }

    #[test]
    fn rejects_globally() {
        assert!(matches!(parse_query("P=?[G(detected=0)]"), Err(PctlError::Unsupported { .. })));
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_query("  P =? [ F ( round >= 2 ) & ( detected = 0 ) ]  ").unwrap();
        let b = parse_query("P=?[F(round>=2)&(detected=0)]").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_query("P=?[F(round=)]") {
            Err(PctlError::Syntax { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn evaluates_with_aliases() {
        let chain = build_chain(&ChainSpec::new(Protocol::BB84, AttackStrategy::InterceptResend, 6)).unwrap();
        let direct = evaluate(&chain, &parse_query("P=?[F(detected=1)]").unwrap()).unwrap();
        assert_eq!(direct, Prob::dyadic(144_495, 18));
        let aliased = evaluate(&chain, &parse_query("P=?[F(aliceState=15)&(bobState=10)]").unwrap()).unwrap();
        assert_eq!(aliased, direct);
        assert!(evaluate(&chain, &parse_query("P=?[F(round=0)]").unwrap()).unwrap().is_one());
        let err = evaluate(&chain, &parse_query("P=?[F(aliceState=3)]").unwrap()).unwrap_err();
        assert!(matches!(err, PctlError::UnmappedAlias { .. }));
        let err = evaluate(&chain, &parse_query("P=?[F(eveState=1)]").unwrap()).unwrap_err();
        assert!(matches!(err, PctlError::Chain(DtmcError::UnknownVariable { ref name, .. }) if name == "eveState"));
    }
}
