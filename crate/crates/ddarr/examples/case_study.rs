//! Four-tank case study: residual bank, leak sensitivity, alarms and ROC.

use ddarr::arrgen::{generate_residual_bank, SearchConfig, SearchMode};
use ddarr::detect::{detection_report, learn_bank_thresholds, roc_experiment, Labelled, DEFAULT_PERSISTENCE};
use ddarr::evaluate::detectability;
use ddarr::regress::LogisticConfig;
use ddarr::tanksim::{simulate_with_integrals, FaultScenario, TankParams, MEASURED};

fn main() -> ddarr::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let params = TankParams::default();
    let normal = simulate_with_integrals(&params, &FaultScenario::none(), seed)?;
    let bank = generate_residual_bank(&normal, &SearchConfig::default(), SearchMode::Forward)?;
    let thresholds = learn_bank_thresholds(&bank, &normal, DEFAULT_PERSISTENCE)?;
    let mut faulty = Vec::new();
    for scenario in [FaultScenario::incipient_tank1(), FaultScenario::abrupt_tank1()] {
        let ds = simulate_with_integrals(&params, &scenario, seed)?;
        let post = ds.since(scenario.onset)?;
        let det = detectability(&bank, &normal, &post, 0.01)?;
        let report = detection_report(&bank, &ds, &scenario, &thresholds)?;
        println!("== {}", scenario.name);
        for (t, r) in det.tests.iter().zip(&report.residuals) {
            println!(
                "{:<10} z={:>9.2} sig={:<5} delay={:?} false={}",
                t.residual, t.test.statistic, t.test.significant, r.delay, r.false_alarms
            );
        }
        faulty.push((scenario, ds));
    }
    let sensors: Vec<String> = MEASURED.iter().map(|s| s.to_string()).collect();
    let r = bank.iter().find(|s| s.target == "int_u1");
    let (inc, abr) = (&faulty[0], &faulty[1]);
    let cmp = roc_experiment(
        Labelled { data: &abr.1, onset: abr.0.onset },
        Labelled { data: &inc.1, onset: inc.0.onset },
        &sensors,
        r,
        &LogisticConfig::default(),
    )?;
    println!(
        "AUC without {:.4}  with {:?}",
        cmp.without_residual.auc,
        cmp.with_residual.map(|c| c.auc)
    );
    Ok(())
}
