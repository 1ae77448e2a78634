//! Command-line entry points: `kaya <subcommand> [flags]`.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    panels_from_records, parse_panel_csv, synthetic::synthetic_records, write_panel_csv, DynamicsKind, Panel,
    RawRecord, SynthSpec,
};
use crate::error::{Error, Result};
use crate::eval::{run_experiment, ExperimentSpec};
use crate::model::{fit_node, fit_var, prepare, ModelBundle, ModelKind};
use crate::scenario::{pinned_forecast_result, run_augmented_scenario, ScenarioMode, ScenarioSpec};
use crate::service::{serve, ServiceConfig, DATA_DIR_ENV, DEFAULT_QUEUE_CAPACITY};
use crate::train::TrainConfig;

#[derive(Debug, Parser)]
#[command(
    name = "kaya",
    version,
    about = "Kaya-identity emissions forecasting with neural ODEs"
)]
struct Cli {
    /// Seed for every random choice (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the summary printed on success.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate canonical panel CSVs and write one clean file per country.
    Ingest(IngestArgs),
    /// Fit a NODE model (and the VAR baseline) on one country's panel.
    Train(TrainArgs),
    /// Forecast from a trained model file.
    Forecast(ForecastArgs),
    /// Run the multi-country, multi-horizon NODE vs VAR comparison.
    Evaluate(EvaluateArgs),
    /// Run a pinned or augmented what-if scenario.
    Scenario(ScenarioArgs),
    /// Fine-tune a model on hypothetical observations and save it.
    Finetune(FinetuneArgs),
    /// Write a synthetic panel suite, one CSV per country.
    Synth(SynthArgs),
    /// Serve the HTTP JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Canonical CSV files (any number of countries each).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    panel: PathBuf,
    /// Country to train on when the file holds several.
    #[arg(long)]
    country: Option<String>,
    /// TOML or JSON training config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Last training year (defaults to the panel's last year).
    #[arg(long, conflicts_with = "horizon")]
    train_end: Option<i32>,
    /// Hold out this many final years instead of giving --train-end.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 1)]
    var_order: usize,
    #[arg(long)]
    out: PathBuf,
    /// Loss CSV path (defaults to `<out stem>.loss.csv`).
    #[arg(long)]
    loss: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    horizon: usize,
    /// `node` or `var`.
    #[arg(long, default_value = "node")]
    kind: ModelKind,
    /// Output JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Directory of canonical CSVs.
    #[arg(long)]
    panels: PathBuf,
    /// Output directory for results.csv, boxplots.json and plot_data.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long)]
    model: PathBuf,
    /// Scenario spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Panel CSV, needed for augmented scenarios.
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    panel: PathBuf,
    /// Augmented scenario spec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fine-tuned model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    countries: usize,
    /// `linear` or `logistic`.
    #[arg(long, default_value = "logistic")]
    kind: DynamicsKind,
    #[arg(long, default_value_t = 1971)]
    first_year: i32,
    #[arg(long, default_value_t = 2019)]
    last_year: i32,
    /// Shared relaxation rate for the linear kind (random per country when omitted).
    #[arg(long)]
    decay_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Data directory with panels/ and models/ (defaults to $KAYA_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = DEFAULT_QUEUE_CAPACITY)]
    queue_capacity: usize,
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

macro_rules! say {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            println!($($arg)*);
        }
    };
}

fn run(cli: Cli) -> Result<()> {
    let (seed, q) = (cli.seed, cli.quiet);
    match cli.command {
        Command::Ingest(a) => ingest(a, q),
        Command::Train(a) => train_cmd(a, seed, q),
        Command::Forecast(a) => forecast_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a, seed, q),
        Command::Scenario(a) => scenario_cmd(a, seed),
        Command::Finetune(a) => finetune_cmd(a, seed, q),
        Command::Synth(a) => synth_cmd(a, seed, q),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    parse_panel_csv(&read(path)?).map_err(|e| e.in_context(path.display().to_string()))
}

fn load_panel(path: &Path, country: Option<&str>) -> Result<Panel> {
    let mut panels = panels_from_records(&read_records(path)?)?;
    match country {
        Some(c) => panels
            .into_iter()
            .find(|p| p.country() == c)
            .ok_or_else(|| Error::argument(format!("{} has no rows for {c}", path.display()))),
        None if panels.len() == 1 => Ok(panels.remove(0)),
        None => Err(Error::argument(format!(
            "{} holds {} countries; pick one with --country",
            path.display(),
            panels.len()
        ))),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::from_path(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<ModelBundle> {
    ModelBundle::from_json(&read(path)?).map_err(|e| e.in_context(path.display().to_string()))
}

fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = serde_json::from_str(&read(path)?)?;
    spec.validate()?;
    Ok(spec)
}

fn ingest(a: IngestArgs, q: bool) -> Result<()> {
    let mut records = Vec::new();
    for path in &a.inputs {
        records.extend(read_records(path)?);
    }
    let panels = panels_from_records(&records)?;
    for panel in &panels {
        let rows: Vec<RawRecord> = records
            .iter()
            .filter(|r| r.country == panel.country())
            .cloned()
            .collect();
        write(&a.out.join(format!("{}.csv", panel.country())), write_panel_csv(&rows))?;
        write(
            &a.out.join(format!("{}.indicators.csv", panel.country())),
            panel.to_indicator_csv(),
        )?;
        let total = panel.len() * crate::data::NUM_VARS;
        say!(
            q,
            "{} {}-{} years={} observed={}/{}",
            panel.country(),
            panel.first_year(),
            panel.last_year(),
            panel.len(),
            panel.observed_cells(),
            total
        );
    }
    Ok(())
}

fn train_cmd(a: TrainArgs, seed: Option<u64>, q: bool) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), seed)?;
    let panel = load_panel(&a.panel, a.country.as_deref())?;
    let train_end = match (a.train_end, a.horizon) {
        (Some(y), _) => y,
        (None, Some(h)) => panel.last_year() - h as i32,
        (None, None) => panel.last_year(),
    };
    let prepared = prepare(&panel, train_end)?;
    let (node, report) = fit_node(&prepared, &cfg)?;
    let var = match fit_var(&prepared, a.var_order) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("VAR({}) baseline not fitted: {e}", a.var_order);
            None
        }
    };
    let loss_path = a.loss.unwrap_or_else(|| a.out.with_extension("loss.csv"));
    write(&a.out, to_json(&ModelBundle::new(node.clone(), var))?)?;
    write(&loss_path, report.to_csv())?;
    write(&a.out.with_extension("params.json"), to_json(&node.params)?)?;
    say!(
        q,
        "trained {} on {}-{}: final loss {:.6e} ({} epochs)",
        node.country,
        node.train_start,
        node.train_end,
        report.final_loss().unwrap_or(f64::NAN),
        report.losses.len()
    );
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn forecast_cmd(a: ForecastArgs) -> Result<()> {
    if a.horizon == 0 {
        return Err(Error::argument("--horizon must be at least 1"));
    }
    let bundle = load_model(&a.model)?;
    emit(a.out.as_deref(), &to_json(&bundle.forecast(a.kind, a.horizon)?)?)
}

fn evaluate_cmd(a: EvaluateArgs, seed: Option<u64>, q: bool) -> Result<()> {
    let mut spec: ExperimentSpec = serde_json::from_str(&read(&a.spec)?)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let mut panels = Vec::new();
    let mut files: Vec<PathBuf> = fs::read_dir(&a.panels)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && !p.to_string_lossy().ends_with(".indicators.csv"))
        .collect();
    files.sort();
    for path in &files {
        panels.extend(panels_from_records(&read_records(path)?)?);
    }
    let table = run_experiment(&spec, &panels)?;
    write(&a.out.join("results.csv"), table.to_csv())?;
    write(&a.out.join("boxplots.json"), to_json(&table.boxplots()?)?)?;
    write(&a.out.join("plot_data.json"), to_json(&table.plot_data(&panels)?)?)?;
    for (h, by_model) in table.boxplots()? {
        for (model, stats) in by_model {
            say!(
                q,
                "horizon {h:>2} {model:<4} median {:.4e} iqr {:.4e}",
                stats.median,
                stats.iqr()
            );
        }
    }
    Ok(())
}

fn scenario_cmd(a: ScenarioArgs, seed: Option<u64>) -> Result<()> {
    let bundle = load_model(&a.model)?;
    let spec = load_scenario(&a.spec)?;
    let result = match spec.mode {
        ScenarioMode::Pinned => pinned_forecast_result(&bundle.node, &spec)?,
        ScenarioMode::Augmented => {
            let path = a
                .panel
                .as_deref()
                .ok_or_else(|| Error::argument("augmented scenarios need --panel"))?;
            let panel = load_panel(path, Some(&bundle.node.country))?;
            let cfg = load_config(a.config.as_deref(), seed)?;
            let outcome = run_augmented_scenario(&bundle.node, &panel, &spec, &cfg)?;
            let last = spec
                .observations
                .iter()
                .map(|o| o.0)
                .max()
                .unwrap_or(0)
                .max(panel.last_year());
            crate::model::node_forecast_result(&outcome.model, (last - outcome.model.train_end).max(0) as usize)?
        }
    };
    emit(a.out.as_deref(), &to_json(&result)?)
}

fn finetune_cmd(a: FinetuneArgs, seed: Option<u64>, q: bool) -> Result<()> {
    let bundle = load_model(&a.model)?;
    let panel = load_panel(&a.panel, Some(&bundle.node.country))?;
    let spec = load_scenario(&a.spec)?;
    let cfg = load_config(a.config.as_deref(), seed)?;
    let outcome = run_augmented_scenario(&bundle.node, &panel, &spec, &cfg)?;
    write(&a.out, to_json(&ModelBundle::new(outcome.model, bundle.var))?)?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6e}"));
    say!(
        q,
        "validation mse before {} after {}",
        show(outcome.before),
        show(outcome.after)
    );
    Ok(())
}

fn synth_cmd(a: SynthArgs, seed: Option<u64>, q: bool) -> Result<()> {
    let spec = SynthSpec {
        seed: seed.unwrap_or(0),
        country_count: a.countries,
        kind: a.kind,
        first_year: a.first_year,
        last_year: a.last_year,
        decay_rate: a.decay_rate,
    };
    let records = synthetic_records(&spec);
    // surfaces invariant violations before anything is written
    panels_from_records(&records)?;
    let mut start = 0;
    while start < records.len() {
        let country = &records[start].country;
        let end = start + records[start..].iter().take_while(|r| &r.country == country).count();
        write(
            &a.out.join(format!("{country}.csv")),
            write_panel_csv(&records[start..end]),
        )?;
        start = end;
    }
    say!(q, "wrote {} countries to {}", a.countries, a.out.display());
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let mut cfg = match a.data_dir {
        Some(dir) => ServiceConfig::new(dir),
        None => ServiceConfig::from_env(),
    };
    if !cfg.data_dir.is_dir() {
        return Err(Error::Config(format!(
            "data directory {} not found (set --data-dir or {DATA_DIR_ENV})",
            cfg.data_dir.display()
        )));
    }
    cfg.addr = a.addr;
    cfg.queue_capacity = a.queue_capacity;
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(cfg))
}
