//! One network for two countries: with and without a one-hot country input.
//!
//! ```bash
//! cargo run -p kaya-node --release --example one_hot_multi_country
//! ```

use kaya_node::data::{generate_synthetic_panel, DynamicsKind};
use kaya_node::model::{fit_node_multi, prepare};
use kaya_node::train::TrainConfig;

fn main() -> kaya_node::Result<()> {
    let panels = generate_synthetic_panel(2021, 2, DynamicsKind::Linear)?;
    let prepared = panels
        .iter()
        .map(|p| prepare(p, p.last_year()))
        .collect::<kaya_node::Result<Vec<_>>>()?;
    let cfg = TrainConfig::default();

    let (models, with) = fit_node_multi(&prepared, &cfg, true)?;
    let (_, without) = fit_node_multi(&prepared, &cfg, false)?;
    let (a, b) = (with.final_loss().unwrap(), without.final_loss().unwrap());
    println!("joint loss with one-hot    {a:.4e}");
    println!("joint loss without one-hot {b:.4e}");
    println!("ratio {:.4}", a / b);
    for m in &models {
        println!("{} encoding {:?}", m.country, m.encoding.as_deref().unwrap_or_default());
    }
    Ok(())
}
