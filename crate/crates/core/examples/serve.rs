//! Train two synthetic countries, write a data directory and serve the
//! HTTP API over it.
//!
//! ```bash
//! cargo run -p kaya-node --release --example serve -- [data-dir] [addr]
//! curl localhost:8080/api/countries
//! curl -XPOST localhost:8080/api/forecast -d '{"country":"XAA","model":"node","horizon":10}'
//! ```

use std::path::PathBuf;

use kaya_node::data::panels_from_records;
use kaya_node::data::{synthetic::synthetic_records, write_panel_csv, DynamicsKind, SynthSpec};
use kaya_node::model::{fit_node, fit_var, prepare, ModelBundle};
use kaya_node::service::{serve, ServiceConfig};
use kaya_node::train::TrainConfig;

fn main() -> kaya_node::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "target/kaya-data".into()));
    let addr = args.next().unwrap_or_else(|| "127.0.0.1:8080".into());

    let records = synthetic_records(&SynthSpec::new(2021, 2, DynamicsKind::LogisticCoupled));
    std::fs::create_dir_all(dir.join("panels"))?;
    std::fs::create_dir_all(dir.join("models"))?;
    std::fs::write(dir.join("panels/suite.csv"), write_panel_csv(&records))?;
    let cfg = TrainConfig {
        epochs: 500,
        ..Default::default()
    };
    for panel in panels_from_records(&records)? {
        let prepared = prepare(&panel, panel.last_year() - 12)?;
        let bundle = ModelBundle::new(fit_node(&prepared, &cfg)?.0, Some(fit_var(&prepared, 1)?));
        let path = dir.join(format!("models/{}.json", panel.country()));
        std::fs::write(path, serde_json::to_string(&bundle)?)?;
    }

    let mut service = ServiceConfig::new(dir);
    service.addr = addr
        .parse()
        .map_err(|e| kaya_node::Error::Config(format!("bad address: {e}")))?;
    tokio::runtime::Runtime::new()?.block_on(serve(service))
}
