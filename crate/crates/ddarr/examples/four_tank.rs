//! Learns the residual bank of the default four-tank plant and prints it.

use ddarr::arrgen::{generate_residual_bank, SearchConfig, SearchMode};
use ddarr::tanksim::{simulate, FaultScenario, TankParams, MEASURED};
use ddarr::timeseries::add_integral_columns;

fn main() -> ddarr::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let params = TankParams::default();
    let ds = simulate(&params, &FaultScenario::none(), seed)?;
    let ds = add_integral_columns(&ds, &MEASURED)?;
    let bank = generate_residual_bank(&ds, &SearchConfig::default(), SearchMode::Forward)?;
    for spec in &bank {
        let loads: Vec<String> = spec.loads.iter().map(ToString::to_string).collect();
        println!("{:<10} {:.5}  {}", spec.name(), spec.valid_score, loads.join(", "));
    }
    Ok(())
}
