//! Case-study behaviour on the default four-tank plant.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use ddarr::arrgen::{forward_select_with_delays, generate_residual_bank, is_arr, ResidualSpec, SearchConfig, SearchMode};
use ddarr::detect::{detection_report, learn_bank_thresholds, DEFAULT_PERSISTENCE};
use ddarr::evaluate::isolability_matrix;
use ddarr::tanksim::{simulate_with_integrals, Component, FaultScenario, TankParams};
use ddarr::timeseries::{chrono_split, Dataset, FeatureRef, SplitSpec};

const SEED: u64 = 1;

fn normal() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| simulate_with_integrals(&TankParams::default(), &FaultScenario::none(), SEED).unwrap())
}

fn bank() -> &'static Vec<ResidualSpec> {
    static BANK: OnceLock<Vec<ResidualSpec>> = OnceLock::new();
    BANK.get_or_init(|| generate_residual_bank(normal(), &SearchConfig::default(), SearchMode::Forward).unwrap())
}

fn faulty(scenario: &FaultScenario, seed: u64) -> Dataset {
    simulate_with_integrals(&TankParams::default(), scenario, seed).unwrap()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn static_relation_for_y1() {
    let (tr, va) = chrono_split(normal(), &SplitSpec::default(), 0).unwrap();
    let cfg = SearchConfig::default();
    let (ok, model) = is_arr(&tr, &va, "y1", &[FeatureRef::new("y2", 0), FeatureRef::new("y3", 0)], &cfg).unwrap();
    assert!(ok, "{:?}", model.valid_score);
    let others: Vec<FeatureRef> = normal()
        .names()
        .iter()
        .filter(|n| *n != "u1" && *n != "int_u1")
        .map(|n| FeatureRef::new(n.clone(), 0))
        .collect();
    let (ok, model) = is_arr(&tr, &va, "u1", &others, &cfg).unwrap();
    assert!(!ok, "{:?}", model.valid_score);
}

#[test]
fn forward_supports_follow_the_plant_structure() {
    let cfg = SearchConfig::default();
    let y4 = forward_select_with_delays(normal(), "y4", &cfg).unwrap().unwrap();
    assert!(y4.support().is_subset(&set(&["y3", "y5", "y6"])), "{:?}", y4.support());
    assert!(y4.valid_score >= 0.99);
    let iu1 = forward_select_with_delays(normal(), "int_u1", &cfg).unwrap().unwrap();
    assert!(iu1.support().is_subset(&set(&["y1", "int_y2"])), "{:?}", iu1.support());
}

#[test]
fn bank_mirrors_the_residual_table() {
    let targets: BTreeSet<&str> = bank().iter().map(|s| s.target.as_str()).collect();
    for t in ["y1", "y3", "y4", "int_u1"] {
        assert!(targets.contains(t), "missing {t}");
    }
    for t in ["u1", "u2", "y5", "y6"] {
        assert!(!targets.contains(t), "unexpected residual for {t}");
    }
    let support = |t: &str| bank().iter().find(|s| s.target == t).unwrap().support();
    assert!(support("y1").is_subset(&set(&["y2", "y3"])));
    assert!(support("y3").is_subset(&set(&["y1", "y2"])));
}

#[test]
fn leaks_in_separate_tanks_are_isolable() {
    let tank3 = FaultScenario { name: "tank3".into(), component: Component::Tank3, ..FaultScenario::abrupt_tank1() };
    let tank1 = FaultScenario { name: "tank1".into(), ..FaultScenario::abrupt_tank1() };
    let faults: Vec<(String, Dataset)> =
        [&tank1, &tank3].iter().map(|s| (s.name.clone(), faulty(s, SEED).since(s.onset).unwrap())).collect();
    let m = isolability_matrix(bank(), &faults, normal(), 0.01).unwrap();
    assert_eq!(m.pairs.len(), 1);
    assert!(m.pairs[0].isolable, "{}", m.to_csv());
    assert!(m.pairs[0].distinguishing.contains(&"r_int_u1".to_string()));
    let none = vec![("none".to_string(), normal().since(2500.0).unwrap())];
    let null = isolability_matrix(bank(), &none, normal(), 0.01).unwrap();
    assert!(null.signature(0).iter().all(|s| !s));
    assert_eq!(m.cells.len(), bank().len());
    // A repeated fault cannot be told apart from itself.
    let twice = vec![faults[0].clone(), ("again".to_string(), faults[0].1.clone())];
    assert!(!isolability_matrix(bank(), &twice, normal(), 0.01).unwrap().pairs[0].isolable);
}

#[test]
fn detection_reports_follow_the_fault() {
    let th = learn_bank_thresholds(bank(), normal(), DEFAULT_PERSISTENCE).unwrap();
    let inc = FaultScenario::incipient_tank1();
    let abr = FaultScenario::abrupt_tank1();
    let ri = detection_report(bank(), &faulty(&inc, 2), &inc, &th).unwrap();
    let ra = detection_report(bank(), &faulty(&abr, 3), &abr, &th).unwrap();
    let d_inc = ri.get("r_int_u1").unwrap().delay.expect("incipient leak detected");
    let d_abr = ra.get("r_int_u1").unwrap().delay.expect("abrupt leak detected");
    assert!(d_abr < d_inc, "abrupt {d_abr} incipient {d_inc}");
    assert!(ri.get("r_y1").unwrap().delay.is_none());
    let clean = detection_report(bank(), &faulty(&FaultScenario::none(), 4), &FaultScenario::none(), &th).unwrap();
    assert!(!clean.detected);
}
