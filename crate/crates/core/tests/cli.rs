use std::fs;
use std::path::Path;

use kaya_node::cli::cli_dispatch;
use kaya_node::model::{ForecastResult, ModelBundle};
use kaya_node::ode::MlpParams;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["kaya", "--quiet"];
    argv.extend_from_slice(args);
    cli_dispatch(argv)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(&path, "epochs = 60\nhidden = [8]\nfine_tune_epochs = 20\n").unwrap();
    path
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["synth", "--bogus"]), 2);
    assert_eq!(run(&["train"]), 2);
    assert_eq!(run(&["synth", "--kind", "quadratic", "--out", "x"]), 2);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("m.json");
    assert_eq!(run(&["train", "--panel", p(&missing), "--out", p(&out)]), 1);
    assert!(!out.exists());
}

#[test]
fn synth_is_deterministic_in_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run(&["--seed", "7", "synth", "--countries", "2", "--out", p(&a)]), 0);
    assert_eq!(run(&["--seed", "7", "synth", "--countries", "2", "--out", p(&b)]), 0);
    assert_eq!(run(&["--seed", "8", "synth", "--countries", "2", "--out", p(&c)]), 0);
    for name in ["XAA.csv", "XAB.csv"] {
        let first = fs::read(a.join(name)).unwrap();
        assert_eq!(first, fs::read(b.join(name)).unwrap());
        assert_ne!(first, fs::read(c.join(name)).unwrap());
    }
    assert_eq!(fs::read_dir(&a).unwrap().count(), 2);
}

#[test]
fn ingest_splits_by_country() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("mixed.csv");
    fs::write(
        &input,
        "country,year,P,G,E,F,gen_fossil,gen_nuclear,gen_renewable\n\
         FRA,1971,5.1e7,3.6e11,1.6e8,4.3e8,0.6e5,0.1e5,0.3e5\n\
         DEU,1971,7.8e7,6.1e11,3.0e8,9.7e8,2.0e5,0.1e5,0.2e5\n\
         FRA,1972,5.15e7,3.8e11,1.65e8,,0.62e5,0.12e5,0.3e5\n",
    )
    .unwrap();
    let out = dir.path().join("clean");
    assert_eq!(run(&["ingest", p(&input), "--out", p(&out)]), 0);
    let fra = fs::read_to_string(out.join("FRA.csv")).unwrap();
    assert_eq!(fra.lines().count(), 3);
    assert!(out.join("DEU.indicators.csv").exists());

    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "country,year,P,G,E,F,gen_fossil,gen_nuclear,gen_renewable\nFRA,1971,abc,1,1,1,1,1,1\n",
    )
    .unwrap();
    assert_eq!(run(&["ingest", p(&bad), "--out", p(&out)]), 1);
}

#[test]
fn train_forecast_scenario_finetune() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    assert_eq!(
        run(&["--seed", "3", "synth", "--countries", "1", "--out", p(&d.join("fx"))]),
        0
    );
    let panel = d.join("fx/XAA.csv");
    let model = d.join("m/XAA.json");
    assert_eq!(
        run(&[
            "--seed",
            "3",
            "train",
            "--panel",
            p(&panel),
            "--config",
            p(&cfg),
            "--horizon",
            "12",
            "--out",
            p(&model)
        ]),
        0
    );

    let bundle = ModelBundle::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!((bundle.node.train_end, bundle.node.params.seed()), (2007, 3));
    assert!(bundle.var.is_some());
    let loss = fs::read_to_string(d.join("m/XAA.loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,loss"));
    assert_eq!(loss.lines().count(), 61);
    let params: MlpParams = serde_json::from_str(&fs::read_to_string(d.join("m/XAA.params.json")).unwrap()).unwrap();
    assert_eq!(params, bundle.node.params);

    let out = d.join("f.json");
    assert_eq!(
        run(&[
            "forecast",
            "--model",
            p(&model),
            "--horizon",
            "5",
            "--kind",
            "var",
            "--out",
            p(&out)
        ]),
        0
    );
    let f: ForecastResult = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(f.years, (2008..=2012).collect::<Vec<_>>());

    let spec = d.join("pin.json");
    fs::write(
        &spec,
        r#"{"mode": "pinned", "variable": "population", "anchors": [[2000, 1.0e7], [2020, 2.0e7]]}"#,
    )
    .unwrap();
    let out = d.join("s.json");
    assert_eq!(
        run(&["scenario", "--model", p(&model), "--spec", p(&spec), "--out", p(&out)]),
        0
    );
    let s: ForecastResult = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let k = s.years.iter().position(|y| *y == 2010).unwrap();
    assert_eq!(s.variables[&kaya_node::data::VariableId::Population][k], 1.5e7);

    let aug = d.join("aug.json");
    fs::write(
        &aug,
        r#"{"mode": "augmented", "observations": [[2008, "share_renewable", 0.3]]}"#,
    )
    .unwrap();
    let tuned = d.join("tuned.json");
    let args = [
        "finetune",
        "--model",
        p(&model),
        "--panel",
        p(&panel),
        "--spec",
        p(&aug),
        "--config",
        p(&cfg),
    ];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", p(&tuned)]);
    assert_eq!(run(&with_out), 0);
    let tuned = ModelBundle::from_json(&fs::read_to_string(&tuned).unwrap()).unwrap();
    assert_ne!(tuned.node.params, bundle.node.params);
    assert_eq!(tuned.var, bundle.var);

    // an observation inside the training window is rejected
    fs::write(
        &aug,
        r#"{"mode": "augmented", "observations": [[1990, "population", 1.0]]}"#,
    )
    .unwrap();
    with_out.pop();
    with_out.push(p(&out));
    assert_eq!(run(&with_out), 1);
}

#[test]
fn evaluate_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        run(&[
            "synth",
            "--countries",
            "2",
            "--kind",
            "linear",
            "--out",
            p(&d.join("fx"))
        ]),
        0
    );
    let spec = d.join("exp.json");
    fs::write(
        &spec,
        r#"{"countries": ["XAA", "XAB"], "horizons": [2, 5, 12], "train": {"epochs": 20, "hidden": [4]}}"#,
    )
    .unwrap();
    let out = d.join("eval");
    assert_eq!(
        run(&[
            "evaluate",
            "--spec",
            p(&spec),
            "--panels",
            p(&d.join("fx")),
            "--out",
            p(&out)
        ]),
        0
    );
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    // header + countries x horizons x 2 models
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 2);
    assert!(csv.starts_with("country,horizon,model,mse_total,mse_var_1,"));
    let boxplots: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("boxplots.json")).unwrap()).unwrap();
    assert_eq!(boxplots["12"]["VAR"]["n"], 2);
    let plots: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("plot_data.json")).unwrap()).unwrap();
    assert_eq!(plots["trajectories"].as_array().unwrap().len(), 4);

    fs::write(&spec, r#"{"countries": ["XAA"], "horizons": [2], "bogus": 1}"#).unwrap();
    assert_eq!(
        run(&[
            "evaluate",
            "--spec",
            p(&spec),
            "--panels",
            p(&d.join("fx")),
            "--out",
            p(&out)
        ]),
        1
    );
}
