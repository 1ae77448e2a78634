//! Fourth-order convergence of the fixed-step RK4 integrator on dx/dt = x.
//!
//! ```bash
//! cargo run -p kaya-node --example rk4_convergence
//! ```

use kaya_node::ode::rk4_step;

fn solve(steps: usize) -> kaya_node::Result<f64> {
    let h = 1.0 / steps as f64;
    let mut x = [1.0];
    for k in 0..steps {
        x = rk4_step(&mut |x: &[f64; 1], _t| [x[0]], &x, k as f64 * h, h)?;
    }
    Ok(x[0])
}

fn main() -> kaya_node::Result<()> {
    let exact = std::f64::consts::E;
    let mut previous: Option<f64> = None;
    println!("{:>6} {:>14} {:>8}", "steps", "error", "ratio");
    for steps in [1, 2, 4, 8, 16, 32] {
        let err = (solve(steps)? - exact).abs();
        let ratio = previous.map(|p| format!("{:.2}", p / err)).unwrap_or_default();
        println!("{steps:>6} {err:>14.6e} {ratio:>8}");
        previous = Some(err);
    }
    Ok(())
}
