//! The exported PRISM model, unfolded with PRISM's semantics, must agree with
//! the engine's own chain on every property in the sidecar file.

use qkd_core::dtmc::{build_chain, ChainSpec};
use qkd_core::pctl::{evaluate, parse_query};
use qkd_core::prism::{export_prism, prob_literal};
use qkd_core::prob::Prob;
use qkd_core::protocol::{AttackStrategy, EveCorrectRule, Protocol};

fn specs() -> Vec<ChainSpec> {
    let mut v = Vec::new();
    for protocol in Protocol::ALL {
        for attack in AttackStrategy::ALL {
            for &detection in protocol.detection_rules() {
                for eve_rule in EveCorrectRule::ALL {
                    for rounds in [1, 2, 5] {
                        for stop in [true, false] {
                            v.push(
                                ChainSpec::new(protocol, attack, rounds)
                                    .with_detection(detection)
                                    .with_eve_rule(eve_rule)
                                    .with_stop_on_detect(stop),
                            );
                        }
                    }
                }
            }
        }
    }
    v
}

fn queries(properties: &str) -> Vec<&str> {
    properties.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("//")).collect()
}

/// The same query phrased over the engine's variables.
fn engine_form(query: &str) -> String {
    if query.contains("aliceState=5") {
        "P=?[F(detected=1)]".to_string()
    } else {
        query.replace("correctMeasurement", "correctCount")
    }
}

#[test]
fn explored_export_agrees_with_engine() {
    for spec in specs() {
        let export = export_prism(&spec).unwrap();
        let explored = export.model.explore().unwrap_or_else(|e| panic!("{spec:?}: {e}"));
        explored.check_stochastic().unwrap();
        let engine = build_chain(&spec).unwrap();
        let qs = queries(&export.properties);
        assert!(!qs.is_empty());
        for q in qs {
            let from_export = evaluate(&explored, &parse_query(q).unwrap()).unwrap();
            let from_engine = evaluate(&engine, &parse_query(&engine_form(q)).unwrap()).unwrap();
            assert_eq!(from_export, from_engine, "{spec:?}: {q}");
        }
    }
}

#[test]
fn sidecar_lists_expected_properties() {
    let with_eve = export_prism(&ChainSpec::new(Protocol::BB84, AttackStrategy::InterceptResend, 7)).unwrap();
    assert_eq!(
        queries(&with_eve.properties),
        ["P=?[F(detected=1)]", "P=?[F(aliceState=5)&(bobState=2)]", "P=?[F(correctMeasurement>3)]"]
    );
    let quiet =
        export_prism(&ChainSpec::new(Protocol::B92, AttackStrategy::NoEve, 7).with_stop_on_detect(false)).unwrap();
    assert_eq!(queries(&quiet.properties), ["P=?[F(detected=1)]"]);
}

/// Sum the `p : update` branches of every probabilistic command in the text.
fn branch_sums(text: &str) -> Vec<f64> {
    text.lines()
        .filter_map(|l| l.split_once("->").map(|(_, rhs)| rhs.trim().trim_end_matches(';')))
        .map(|rhs| {
            // a branch starts with "<number> :"; other " + " belong to update expressions
            let weights: Vec<f64> = rhs
                .split(" + ")
                .filter_map(|seg| seg.split_once(" : ").and_then(|(p, _)| p.trim().parse::<f64>().ok()))
                .collect();
            if weights.is_empty() {
                1.0
            } else {
                weights.iter().sum()
            }
        })
        .collect()
}

#[test]
fn every_command_distributes_unit_mass() {
    for spec in specs() {
        let text = export_prism(&spec).unwrap().text;
        for s in branch_sums(&text) {
            assert!((s - 1.0).abs() < 1e-12, "{spec:?}: {s}");
        }
    }
}

#[test]
fn literals_keep_twelve_significant_digits() {
    for k in 1..40 {
        let p = Prob::dyadic(3, 2).pow(k);
        let lit = prob_literal(&p);
        let back: f64 = lit.parse().unwrap();
        assert!(((back - p.to_f64()) / p.to_f64()).abs() < 1e-11, "{lit}");
        assert!(!lit.ends_with('0') || lit.ends_with(".0"));
    }
}
