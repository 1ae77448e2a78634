//! Pin population to a hypothetical path and forecast the other indicators.
//!
//! ```bash
//! cargo run -p kaya-node --release --example pinned_scenario
//! ```

use kaya_node::data::{generate_synthetic_panel, DynamicsKind, VariableId};
use kaya_node::model::{fit_node, node_forecast_result, prepare};
use kaya_node::scenario::{pinned_forecast_result, ScenarioSpec};
use kaya_node::train::TrainConfig;

fn main() -> kaya_node::Result<()> {
    let panel = generate_synthetic_panel(2021, 1, DynamicsKind::LogisticCoupled)?.remove(0);
    let prepared = prepare(&panel, panel.last_year())?;
    let cfg = TrainConfig {
        epochs: 1000,
        ..Default::default()
    };
    let (model, _) = fit_node(&prepared, &cfg)?;

    let last = panel.values()[panel.len() - 1][VariableId::Population.index()];
    let end = panel.last_year();
    let spec = ScenarioSpec::pinned(
        VariableId::Population,
        vec![(end, last), (end + 10, last * 1.3), (end + 20, last * 1.3)],
    )?;
    println!("{}", serde_json::to_string(&spec)?);

    let baseline = node_forecast_result(&model, 20)?;
    let pinned = pinned_forecast_result(&model, &spec)?;
    println!(
        "{:>6} {:>14} {:>14} {:>14} {:>14}",
        "year", "P base", "P pinned", "F base", "F pinned"
    );
    let offset = baseline.years.len() - 21;
    for k in (0..=20).step_by(4) {
        let i = offset + k;
        println!(
            "{:>6} {:>14.4e} {:>14.4e} {:>14.4e} {:>14.4e}",
            baseline.years[i],
            baseline.variables[&VariableId::Population][i],
            pinned.variables[&VariableId::Population][i],
            baseline.emissions[i],
            pinned.emissions[i]
        );
    }
    Ok(())
}
