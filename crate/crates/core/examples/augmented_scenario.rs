//! Add the first three held-out years as hypothetical observations,
//! fine-tune and re-score on the validation window.
//!
//! ```bash
//! cargo run -p kaya-node --release --example augmented_scenario
//! ```

use kaya_node::data::{generate_synthetic_panel, DynamicsKind, VariableId};
use kaya_node::model::{fit_node, prepare};
use kaya_node::scenario::{run_augmented_scenario, ScenarioSpec};
use kaya_node::train::TrainConfig;

fn main() -> kaya_node::Result<()> {
    let panel = generate_synthetic_panel(2021, 1, DynamicsKind::LogisticCoupled)?.remove(0);
    let train_end = panel.last_year() - 12;
    let prepared = prepare(&panel, train_end)?;
    let cfg = TrainConfig::default();
    let (model, _) = fit_node(&prepared, &cfg)?;

    let mut observations = Vec::new();
    for year in train_end + 1..=train_end + 3 {
        let row = panel.values()[panel.row_of(year).unwrap()];
        observations.extend(VariableId::ALL.iter().map(|v| (year, *v, row[v.index()])));
    }
    let spec = ScenarioSpec::augmented(observations)?;
    let outcome = run_augmented_scenario(&model, &panel, &spec, &cfg)?;
    println!("validation mse before {:.4e}", outcome.before.unwrap());
    println!("validation mse after  {:.4e}", outcome.after.unwrap());
    println!(
        "fine-tune loss {:.4e} after {} epochs",
        outcome.report.final_loss().unwrap(),
        outcome.report.losses.len()
    );
    Ok(())
}
