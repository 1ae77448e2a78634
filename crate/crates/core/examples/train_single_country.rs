//! Train a neural ODE on one synthetic country, hold out 12 years and
//! forecast them.
//!
//! ```bash
//! cargo run -p kaya-node --release --example train_single_country -- [epochs]
//! ```

use kaya_node::data::{generate_synthetic_panel, split_panel, DynamicsKind, VariableId};
use kaya_node::eval::mse;
use kaya_node::model::{fit_node, node_forecast_result, prepare};
use kaya_node::train::TrainConfig;

fn main() -> kaya_node::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let panel = generate_synthetic_panel(2021, 1, DynamicsKind::LogisticCoupled)?.remove(0);
    let (train, _) = split_panel(&panel, 12)?;
    let prepared = prepare(&panel, train.last_year())?;

    let cfg = TrainConfig {
        epochs,
        ..Default::default()
    };
    let (model, report) = fit_node(&prepared, &cfg)?;
    for (i, loss) in report.losses.iter().enumerate().step_by((epochs / 10).max(1)) {
        println!("epoch {:>5} loss {loss:.4e}", i + 1);
    }
    println!(
        "final loss {:.4e} in {:.1}s",
        report.final_loss().unwrap(),
        report.seconds
    );

    let validation = prepared.validation.as_ref().unwrap();
    let score = mse(&model.forecast(12)?, validation.values(), validation.mask())?;
    println!("validation mse {:.4e}", score.total);

    let result = node_forecast_result(&model, 12)?;
    let last = result.years.len() - 1;
    println!(
        "{} {}: population {:.4e}, renewable share {:.3}, emissions {:.4e}",
        result.country,
        result.years[last],
        result.variables[&VariableId::Population][last],
        result.variables[&VariableId::ShareRenewable][last],
        result.emissions[last]
    );
    Ok(())
}
