//! Node vs VAR validation MSE across synthetic countries and horizons.
//!
//! ```bash
//! cargo run -p kaya-node --release --example compare_models -- [linear|logistic] [countries] [seed]
//! ```

use kaya_node::data::{generate_synthetic_panel, DynamicsKind};
use kaya_node::eval::{run_experiment, ExperimentSpec};
use kaya_node::model::ModelKind;

fn main() -> kaya_node::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind: DynamicsKind = args.get(1).map(String::as_str).unwrap_or("logistic").parse()?;
    let count: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2021);

    let panels = generate_synthetic_panel(seed, count, kind)?;
    let spec = ExperimentSpec {
        countries: panels.iter().map(|p| p.country().to_string()).collect(),
        seed,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let table = run_experiment(&spec, &panels)?;
    println!("{} cells in {:.1}s", table.rows.len(), start.elapsed().as_secs_f64());
    println!(
        "{:>8} {:>6} {:>12} {:>12} {:>12}",
        "horizon", "model", "median", "iqr", "max"
    );
    for (h, by_model) in table.boxplots()? {
        for (m, b) in by_model {
            println!("{h:>8} {m:>6} {:>12.4e} {:>12.4e} {:>12.4e}", b.median, b.iqr(), b.max);
        }
    }
    for h in &spec.horizons {
        let node = table.scores(*h, ModelKind::Node);
        let var = table.scores(*h, ModelKind::Var);
        let wins = node.iter().zip(&var).filter(|(n, v)| n < v).count();
        println!("horizon {h}: NODE beats VAR on {wins}/{}", node.len());
    }
    Ok(())
}
