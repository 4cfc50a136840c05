use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use floc_core::config::Config;
use floc_core::dtree::{self, load_model, save_model};
use floc_core::labeling::{self, write_csv, Provenance};
use floc_core::model::{PH_RANGE, TEMP_RANGE};
use floc_core::plantsim::{run_closed_loop, write_table2_csv, Scenario};
use floc_core::{evaluate, export_classifier, fit, label_sample, Condition, Dataset, LabeledSample, TreeHyperparams, TreeNode};
use floc_gateway::Server;
use serde_json::json;

use crate::{CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Label { csv, out, config } => label(&csv, out.as_deref(), config.as_deref()),
        Command::GenData { n, seed, noise, out } => gen_data(n, seed, noise, &out),
        Command::Train { data, out, max_depth, min_samples_split, min_impurity_decrease } => {
            let hp = TreeHyperparams {
                max_depth: max_depth as usize,
                min_samples_split: min_samples_split as usize,
                min_impurity_decrease,
            };
            train(&data, &out, &hp)
        }
        Command::Eval { model, data } => eval(&model, &data),
        Command::Codegen { model, fn_name, out } => codegen(&model, &fn_name, out.as_deref()),
        Command::Simulate { scenario, out } => simulate(&scenario, &out),
        Command::ReplayTable2 { out } => {
            let file = create(&out)?;
            write_table2_csv(file).with_context(|| format!("writing {}", out.display()))?;
            println!("{}", json!({ "rows": floc_core::plantsim::TABLE2.len(), "out": out }));
            Ok(())
        }
        Command::Serve { config } => serve(config),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p).with_context(|| format!("loading config {}", p.display()))?),
        None => Ok(Config::default()),
    }
}

fn label(input: &Path, out: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let bands = load_config(config)?.labeling_thresholds;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(input)
        .with_context(|| format!("opening {}", input.display()))?;
    let headers = reader.headers().context("reading header")?.clone();
    let column = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.contains(&h))
            .ok_or_else(|| anyhow!("{}: no {} column", input.display(), names[0]))
    };
    let (ti, pi, di) = (column(&["temperature", "temp_c"])?, column(&["ph"])?, column(&["tds", "tds_mg_l"])?);

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", input.display(), i + 1))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |idx: usize| -> anyhow::Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => bail!("{} line {line}: {:?} is not a finite number", input.display(), raw),
            }
        };
        let (temp_c, ph, tds_mg_l) = (num(ti)?, num(pi)?, num(di)?);
        if !(TEMP_RANGE.0..=TEMP_RANGE.1).contains(&temp_c) || !(PH_RANGE.0..=PH_RANGE.1).contains(&ph) || tds_mg_l < 0.0 {
            return Err(anyhow!("{} line {line}: reading outside sensor range", input.display()).into());
        }
        let condition = label_sample(temp_c, ph, tds_mg_l, &bands);
        rows.push(LabeledSample { temp_c, ph, tds_mg_l, condition });
    }
    let dataset = Dataset { rows, provenance: Provenance::File(input.to_path_buf()) };
    match out {
        Some(path) => {
            write_csv(&dataset, create(path)?).with_context(|| format!("writing {}", path.display()))?;
            println!(
                "{}",
                json!({ "rows": dataset.len(), "good": dataset.count(Condition::Good), "bad": dataset.count(Condition::Bad) })
            );
        }
        None => write_csv(&dataset, io::stdout().lock()).context("writing stdout")?,
    }
    Ok(())
}

fn gen_data(n: u64, seed: u64, noise: f64, out: &Path) -> Result<()> {
    let dataset = labeling::generate_dataset(n as usize, seed, noise).map_err(|e| CliError::Usage(e.to_string()))?;
    labeling::save_dataset(&dataset, out).context("saving dataset")?;
    println!(
        "{}",
        json!({ "rows": dataset.len(), "good": dataset.count(Condition::Good), "seed": seed, "noise": noise, "out": out })
    );
    Ok(())
}

fn train(data: &Path, out: &Path, hp: &TreeHyperparams) -> Result<()> {
    let dataset = labeling::load_dataset(data).with_context(|| format!("loading {}", data.display()))?;
    let tree = fit(&dataset, hp).context("fitting tree")?;
    save_model(&tree, out).context("saving model")?;
    let report = evaluate(&tree, &dataset).context("scoring training set")?;
    println!(
        "{}",
        json!({
            "rows": dataset.len(),
            "depth": tree.depth(),
            "leaves": tree.leaf_count(),
            "train_accuracy": report.accuracy,
            "out": out,
        })
    );
    Ok(())
}

fn eval(model: &Path, data: &Path) -> Result<()> {
    let tree = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let dataset = labeling::load_dataset(data).with_context(|| format!("loading {}", data.display()))?;
    let report = evaluate(&tree, &dataset).context("evaluating")?;
    println!("{}", serde_json::to_string(&report).context("serialising report")?);
    Ok(())
}

fn codegen(model: &Path, fn_name: &str, out: Option<&Path>) -> Result<()> {
    let tree = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let src = export_classifier(&tree, fn_name).map_err(|e| CliError::Usage(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, src).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().lock().write_all(src.as_bytes()).context("writing stdout")?,
    }
    Ok(())
}

enum TraceFormat {
    Csv,
    Jsonl,
}

fn simulate(scenario_path: &Path, out: &Path) -> Result<()> {
    let format = match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => TraceFormat::Csv,
        Some("jsonl") => TraceFormat::Jsonl,
        _ => return Err(CliError::Usage(format!("--out {}: extension must be .csv or .jsonl", out.display()))),
    };
    let text = std::fs::read_to_string(scenario_path).with_context(|| format!("reading {}", scenario_path.display()))?;
    let scenario: Scenario =
        serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", scenario_path.display()))?;
    let tree = match &scenario.model {
        Some(p) => {
            // Relative model paths are taken from the scenario's directory.
            let p = scenario_path.parent().map_or_else(|| p.clone(), |dir| dir.join(p));
            load_model(&p).with_context(|| format!("loading model {}", p.display()))?
        }
        None => dtree::reference_tree(),
    };
    let trace = run_closed_loop(scenario.initial, &scenario.params, &tree, &Config::default(), &scenario.loop_options())
        .context("running scenario")?;

    let file = create(out)?;
    match format {
        TraceFormat::Csv => trace.write_csv(file).context("writing trace")?,
        TraceFormat::Jsonl => trace.write_jsonl(file).context("writing trace")?,
    }
    let good = trace.conditions().filter(|c| *c == Condition::Good).count();
    let last = trace.steps.last().copied();
    println!("{}", json!({ "ticks": trace.ticks.len(), "good_ticks": good, "final": last, "out": out }));
    Ok(())
}

fn serve(config_arg: Option<PathBuf>) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();

    let path = config_arg.or_else(|| std::env::var_os("FLOC_CONFIG").map(PathBuf::from));
    let mut config = load_config(path.as_deref())?;
    if let Some(listen) = std::env::var("FLOC_LISTEN").ok().filter(|s| !s.is_empty()) {
        config.listen_addr = listen;
    }
    let tree: TreeNode = match &config.model_path {
        Some(p) => load_model(p).with_context(|| format!("loading model {}", p.display()))?,
        None => {
            tracing::info!("no model_path configured, fitting the reference tree");
            dtree::reference_tree()
        }
    };

    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async move {
        let server = Server::from_config(&config, tree).await.context("starting server")?;
        let gateway = server.gateway().clone();
        // Machine-readable readiness line with the bound addresses.
        println!("{}", json!({ "http": server.http_addr(), "ingest": server.ingest_addr() }));
        tokio::spawn(async move {
            wait_for_signal().await;
            tracing::info!("signal received, shutting down");
            gateway.shutdown();
        });
        server.run().await.context("serving")?;
        Ok::<(), anyhow::Error>(())
    })?;
    Ok(())
}

async fn wait_for_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
