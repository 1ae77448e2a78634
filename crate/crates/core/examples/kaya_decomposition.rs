//! Parse a canonical panel CSV, decompose each row into Kaya indicators and
//! recompose emissions.
//!
//! ```bash
//! cargo run -p kaya-node --example kaya_decomposition
//! ```

use kaya_node::data::{kaya_decompose, kaya_recompose, parse_panel_csv, Panel, VariableId};

const CSV: &str = "\
country,year,P,G,E,F,gen_fossil,gen_nuclear,gen_renewable
FRA,1971,5.1e7,3.6e11,1.6e8,4.3e8,0.6e5,0.1e5,0.3e5
FRA,1972,5.15e7,3.8e11,1.65e8,4.4e8,0.62e5,0.12e5,0.3e5
FRA,1973,5.2e7,4.0e11,1.7e8,,0.6e5,0.15e5,0.31e5
";

fn main() -> kaya_node::Result<()> {
    let records = parse_panel_csv(CSV)?;
    for r in &records {
        match kaya_decompose(r) {
            Ok(x) => {
                let named: Vec<String> = VariableId::ALL
                    .iter()
                    .map(|v| format!("{v}={:.4e}", x[v.index()]))
                    .collect();
                println!("{} {}: {}", r.country, r.year, named.join(" "));
                println!(
                    "  F = {:.6e} recomposed {:.6e}",
                    r.emissions.unwrap(),
                    kaya_recompose(&x)
                );
            }
            Err(e) => println!("{} {}: {e}", r.country, r.year),
        }
    }

    // missing emissions leave carbon intensity unobserved for 1973
    let panel = Panel::from_records(&records)?;
    println!("{} observed cells of {}", panel.observed_cells(), panel.len() * 7);
    print!("{}", panel.to_indicator_csv());
    Ok(())
}
