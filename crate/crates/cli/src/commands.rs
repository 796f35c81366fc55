use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use macp_core::io::{
    self, read_checkpoint, read_matrix, read_matrix_with_dtype, write_ablation_csv, write_matrix, write_runs_csv,
    AblationEntry, Dtype,
};
use macp_core::memory::MemoryReport;
use macp_core::selection::plan_from_weights;
use macp_core::synth::{run_methods, run_partition_ablation};
use macp_core::{
    adapter, build_partition, dct2, energy_map, AdapterState, ExperimentConfig, MemoryQuery, Method, PartitionScheme,
};
use serde_json::{json, Value};

use crate::{
    AblateArgs, AnalyzeArgs, Cli, Command, DtypeArg, ExperimentArgs, Format, MemoryArgs, MergeArgs, MethodArg,
    SelectArgs, TrainArgs,
};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Analyze(args) => analyze(cli, args),
        Command::Select(args) => select(cli, args),
        Command::Train(args) => train(cli, args),
        Command::Ablate(args) => ablate(cli, args),
        Command::Memory(args) => memory(cli, args),
        Command::Merge(args) => merge(cli, args),
    }
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(cli: &Cli, contents: &[u8]) -> Outcome {
    match &cli.out {
        Some(path) => io::write_atomic(path, contents).map_err(runtime),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents).and_then(|_| stdout.flush()).map_err(runtime)
        }
    }
}

fn pretty(value: &Value) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialise");
    text.push('\n');
    text.into_bytes()
}

fn csv_field(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_table(header: &[&str], rows: &[Vec<Value>]) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(csv_field).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Outcome {
    let weights = read_matrix(&args.weights).map_err(runtime)?;
    let scheme = PartitionScheme::from(args.scheme);
    let mask = build_partition(weights.rows(), weights.cols(), scheme).map_err(runtime)?;
    let energy = energy_map(&dct2(&weights));
    let mut per_band = vec![0.0; mask.num_bands()];
    for u in 0..weights.rows() {
        for v in 0..weights.cols() {
            per_band[mask.band(u, v)] += energy.get(u, v);
        }
    }
    let total: f64 = per_band.iter().sum();
    if total == 0.0 {
        return Err(Failure::Runtime(
            "weight matrix has zero spectral energy; shares are undefined".into(),
        ));
    }
    let sizes = mask.band_sizes();
    let rows: Vec<Vec<Value>> = per_band
        .iter()
        .enumerate()
        .map(|(k, &e)| vec![json!(k), json!(sizes[k]), json!(e), json!(e / total)])
        .collect();
    eprintln!(
        "{}x{} weights, {scheme}: low-band share {:.6}",
        weights.rows(),
        weights.cols(),
        per_band[0] / total
    );
    let body = match cli.format {
        Format::Csv => csv_table(&["band", "cells", "energy", "share"], &rows),
        Format::Json => pretty(&json!({
            "rows": weights.rows(),
            "cols": weights.cols(),
            "scheme": scheme.name(),
            "total_energy": total,
            "bands": rows
                .iter()
                .map(|r| json!({"band": r[0], "cells": r[1], "energy": r[2], "share": r[3]}))
                .collect::<Vec<_>>(),
        })),
    };
    emit(cli, &body)
}

fn select(cli: &Cli, args: &SelectArgs) -> Outcome {
    let weights = read_matrix(&args.weights).map_err(runtime)?;
    let plan = plan_from_weights(&weights, args.scheme.into(), args.n, args.delta, cli.seed).map_err(runtime)?;
    eprintln!(
        "selected {} coordinates, per-band budgets {:?}",
        plan.len(),
        plan.budgets()
    );
    let n = plan.len();
    let state = AdapterState::new(plan, vec![0.0; n], args.alpha).map_err(runtime)?;
    let text = io::encode_checkpoint(&state).map_err(runtime)?;
    emit(cli, text.as_bytes())
}

fn seeds(cli: &Cli, args: &ExperimentArgs, count: u64) -> Vec<u64> {
    args.seeds
        .clone()
        .unwrap_or_else(|| (0..count).map(|k| cli.seed.wrapping_add(k)).collect())
}

fn experiment_config(args: &ExperimentArgs) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.train.epochs = args.epochs as usize;
    config.train.lr = args.lr;
    config.macp.alpha = args.alpha;
    config.macp.delta = args.delta;
    config.macp.init = args.init.into();
    config.dataset.samples_per_class = args.samples_per_class as usize;
    config.target_accuracy = args.target;
    config
}

fn out_dir(cli: &Cli) -> Result<PathBuf, Failure> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn summary_name(stem: &str, format: Format) -> String {
    match format {
        Format::Csv => format!("{stem}.csv"),
        Format::Json => format!("{stem}.json"),
    }
}

fn write_and_print(path: &Path, body: &[u8]) -> Outcome {
    io::write_atomic(path, body).map_err(runtime)?;
    print!("{}", String::from_utf8_lossy(body));
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs) -> Outcome {
    let mut config = experiment_config(&args.experiment);
    config.macp.scheme = args.scheme.into();
    config.lowrank_rank = args.rank as usize;
    config.random_spectral_n = args.random_n;
    match (args.method, args.n) {
        (Some(MethodArg::RandomSpectral), Some(n)) => config.random_spectral_n = n,
        (_, Some(n)) => config.macp.n = n,
        _ => {}
    }
    let methods: Vec<Method> = match args.method {
        Some(m) => vec![m.into()],
        None => Method::ALL.to_vec(),
    };
    let seeds = seeds(cli, &args.experiment, 5);
    let dir = out_dir(cli)?;
    eprintln!(
        "training {} on seeds {seeds:?} for {} epochs",
        methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "),
        config.train.epochs
    );

    let report = run_methods(&seeds, &methods, &config).map_err(runtime)?;
    let runs_path = dir.join("fig3_runs.csv");
    write_runs_csv(&runs_path, &report.records).map_err(runtime)?;
    eprintln!("wrote {}", runs_path.display());

    let budgets = report.budgets();
    let rows: Vec<Value> = report
        .summary
        .iter()
        .map(|s| {
            let method: Method = s.method.parse().expect("summary names come from Method");
            let diverged: Vec<Value> = report
                .records
                .iter()
                .filter(|r| r.method == method && !r.succeeded())
                .map(|r| json!({"seed": r.seed, "epochs_logged": r.epochs.len()}))
                .collect();
            json!({
                "method": s.method,
                "trainable": budgets.get(&method),
                "runs": s.runs,
                "failed": s.failed,
                "median_final_acc": s.median_final_acc,
                "median_epochs_to_target": s.median_epochs_to_target,
                "diverged": diverged,
            })
        })
        .collect();
    for row in &rows {
        if row["failed"].as_u64() != Some(0) {
            eprintln!("warning: {} had {} divergent run(s)", row["method"], row["failed"]);
        }
    }
    let body = match cli.format {
        Format::Json => pretty(&json!({
            "seeds": seeds,
            "epochs": config.train.epochs,
            "lr": config.train.lr,
            "target_accuracy": config.target_accuracy,
            "methods": rows,
        })),
        Format::Csv => csv_table(
            &[
                "method",
                "trainable",
                "runs",
                "failed",
                "median_final_acc",
                "median_epochs_to_target",
            ],
            &rows
                .iter()
                .map(|r| {
                    [
                        "method",
                        "trainable",
                        "runs",
                        "failed",
                        "median_final_acc",
                        "median_epochs_to_target",
                    ]
                    .iter()
                    .map(|k| r[*k].clone())
                    .collect()
                })
                .collect::<Vec<_>>(),
        ),
    };
    write_and_print(&dir.join(summary_name("fig3_summary", cli.format)), &body)
}

fn ablate(cli: &Cli, args: &AblateArgs) -> Outcome {
    let mut config = experiment_config(&args.experiment);
    config.macp.n = args.n;
    let schemes: Vec<PartitionScheme> = args.schemes.iter().map(|&s| s.into()).collect();
    let seeds = seeds(cli, &args.experiment, 3);
    let dir = out_dir(cli)?;
    eprintln!(
        "ablating {} scheme(s) at n={} on seeds {seeds:?}",
        schemes.len(),
        args.n
    );

    let table = run_partition_ablation(&schemes, &seeds, &config).map_err(runtime)?;
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "{} seed {}: {}",
            row.scheme,
            row.seed,
            row.error.as_deref().unwrap_or_default()
        );
    }
    let entries: Vec<AblationEntry> = table
        .rows
        .iter()
        .map(|r| AblationEntry {
            scheme: r.scheme,
            seed: r.seed,
            final_acc: r.final_acc,
        })
        .collect();
    let csv_path = dir.join("ablation.csv");
    write_ablation_csv(&csv_path, &entries).map_err(runtime)?;
    eprintln!("wrote {}", csv_path.display());

    let body = match cli.format {
        Format::Json => pretty(&serde_json::to_value(&table).map_err(runtime)?),
        Format::Csv => csv_table(
            &["scheme", "median_final_acc", "failed"],
            &table
                .summary
                .iter()
                .map(|s| vec![json!(s.scheme.name()), json!(s.median_final_acc), json!(s.failed)])
                .collect::<Vec<_>>(),
        ),
    };
    if let Some(ok) = table.three_band_at_least_low_only {
        eprintln!("three_band median >= low_only median: {ok}");
    }
    write_and_print(&dir.join(summary_name("ablation_summary", cli.format)), &body)
}

fn memory(cli: &Cli, args: &MemoryArgs) -> Outcome {
    let query = MemoryQuery::new(args.batch, args.seq_len, args.hidden, args.n, args.r)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let report = MemoryReport::new(&query, args.element_size).map_err(runtime)?;
    if let Some(note) = &report.note {
        eprintln!("note: {note}");
    }
    let value = serde_json::to_value(&report).map_err(runtime)?;
    let body = match cli.format {
        Format::Json => pretty(&value),
        Format::Csv => {
            let keys: Vec<&str> = value
                .as_object()
                .expect("report is an object")
                .keys()
                .map(String::as_str)
                .collect();
            let row: Vec<Value> = keys.iter().map(|k| value[*k].clone()).collect();
            csv_table(&keys, &[row])
        }
    };
    emit(cli, &body)
}

fn merge(cli: &Cli, args: &MergeArgs) -> Outcome {
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| Failure::Usage("merge requires --out <path>".into()))?;
    let (weights, source_dtype) = read_matrix_with_dtype(&args.weights).map_err(runtime)?;
    let state = read_checkpoint(&args.checkpoint).map_err(runtime)?;
    let merged = adapter::merge(&state, &weights).map_err(runtime)?;
    let dtype = match args.dtype {
        Some(DtypeArg::F32) => Dtype::F32,
        Some(DtypeArg::F64) => Dtype::F64,
        None => source_dtype,
    };
    write_matrix(out, &merged, dtype).map_err(runtime)?;
    eprintln!(
        "merged {} coefficient(s) into {}x{} weights -> {}",
        state.num_trainable(),
        weights.rows(),
        weights.cols(),
        out.display()
    );
    Ok(())
}
