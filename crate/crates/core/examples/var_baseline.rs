//! Fit VAR(1) to a noiseless series from a known generator and recover it.
//!
//! ```bash
//! cargo run -p kaya-node --example var_baseline
//! ```

use kaya_node::var::fixtures::{rotation_fixture, simulate};
use kaya_node::var::{var_fit, var_forecast};

fn main() -> kaya_node::Result<()> {
    let truth = rotation_fixture(1);
    let series = simulate(&truth, &[[0.5, -0.3, 0.8, 0.1, -0.6, 0.4, 0.2]], 49);
    let fitted = var_fit(&series, 1)?;

    let mut worst = 0.0f64;
    for r in 0..7 {
        for c in 0..7 {
            worst = worst.max((fitted.coefficient(1, r, c) - truth.coefficient(1, r, c)).abs());
        }
    }
    println!("max coefficient error {worst:.3e}");

    let last = &series[series.len() - 1..];
    let predicted = var_forecast(&fitted, last, 10)?;
    let actual = var_forecast(&truth, last, 10)?;
    let err = predicted
        .iter()
        .zip(&actual)
        .flat_map(|(p, a)| p.iter().zip(a).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    println!("max 10-step forecast error {err:.3e}");
    Ok(())
}
