use std::path::Path;
use std::process::{Command, Output};

use macp_core::adapter::{forward, init_adapter};
use macp_core::io::{read_checkpoint, read_matrix, write_checkpoint, write_matrix, Dtype};
use macp_core::{dct2, AdapterConfig, DenseMatrix, PartitionScheme};
use serde_json::Value;

fn macp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macp")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_weights(dir: &Path, name: &str, m: &DenseMatrix) -> String {
    let path = dir.join(name);
    write_matrix(&path, m, Dtype::F64).unwrap();
    path.to_str().unwrap().to_string()
}

fn shares(report: &Value) -> Vec<f64> {
    report["bands"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["share"].as_f64().unwrap())
        .collect()
}

#[test]
fn analyze_reports_band_shares() {
    let dir = tempfile::tempdir().unwrap();
    let constant = write_weights(dir.path(), "c.bin", &DenseMatrix::filled(8, 8, 2.0).unwrap());
    let report = stdout_json(&macp(&["analyze", "--weights", &constant]));
    let s = shares(&report);
    assert!((s[0] - 1.0).abs() < 1e-12);
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let ramp = DenseMatrix::from_fn(16, 16, |i, j| (i + 2 * j) as f64).unwrap();
    let path = write_weights(dir.path(), "r.bin", &ramp);
    let s = shares(&stdout_json(&macp(&[
        "analyze",
        "--weights",
        &path,
        "--scheme",
        "three_band",
    ])));
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(s[0] > 0.9, "{s:?}");

    // Independent check: squared coefficients with u² + v² ≤ d_max²/9.
    let f = dct2(&ramp);
    let (mut low, mut total) = (0.0, 0.0);
    for u in 0..16 {
        for v in 0..16 {
            let e = f.get(u, v).powi(2);
            total += e;
            if ((u * u + v * v) as f64) <= (64.0 + 64.0) / 9.0 {
                low += e;
            }
        }
    }
    assert!((s[0] - low / total).abs() < 1e-9);

    let csv = macp(&["--format", "csv", "analyze", "--weights", &path]);
    assert!(csv.status.success());
    assert!(String::from_utf8(csv.stdout)
        .unwrap()
        .starts_with("band,cells,energy,share\n"));
}

#[test]
fn select_is_deterministic_and_handles_edges() {
    let dir = tempfile::tempdir().unwrap();
    let w = DenseMatrix::from_fn(12, 10, |i, j| ((i * j) as f64).sin()).unwrap();
    let weights = write_weights(dir.path(), "w.bin", &w);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = macp(&[
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
            "select",
            "--weights",
            &weights,
            "--n",
            "17",
        ]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let state = read_checkpoint(&a).unwrap();
    assert_eq!(state.num_trainable(), 17);
    assert!(state.coeffs().iter().all(|&c| c == 0.0));

    let empty = macp(&["select", "--weights", &weights, "--n", "0"]);
    assert!(empty.status.success());
    let doc: Value = serde_json::from_slice(&empty.stdout).unwrap();
    assert_eq!(doc["coords"].as_array().unwrap().len(), 0);

    let constant = write_weights(dir.path(), "c.bin", &DenseMatrix::filled(8, 8, 1.0).unwrap());
    let doc: Value = serde_json::from_slice(
        &macp(&[
            "select",
            "--weights",
            &constant,
            "--n",
            "1",
            "--delta",
            "1.0",
            "--scheme",
            "low_only",
        ])
        .stdout,
    )
    .unwrap();
    assert_eq!(doc["coords"], serde_json::json!([[0, 0]]));

    let too_many = macp(&["select", "--weights", &constant, "--n", "65"]);
    assert_eq!(too_many.status.code(), Some(1));
}

#[test]
fn train_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3");
    let o = macp(&[
        "--out",
        out.to_str().unwrap(),
        "train",
        "--epochs",
        "1",
        "--seeds",
        "0",
        "--samples-per-class",
        "20",
    ]);
    let summary = stdout_json(&o);
    assert_eq!(summary["methods"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(out.join("fig3_runs.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,method,epoch,loss,train_acc");
    assert_eq!(lines.len(), 4);
    for (line, method) in lines[1..].iter().zip(["macp", "lowrank", "random_spectral"]) {
        assert!(line.starts_with(&format!("0,{method},1,")), "{line}");
    }
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(out.join("fig3_summary.json")).unwrap()).unwrap();
    assert_eq!(saved, summary);
    let budgets: Vec<u64> = summary["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["trainable"].as_u64().unwrap())
        .collect();
    assert_eq!(budgets, [90, 128, 128]);
}

#[test]
fn zero_learning_rate_gives_flat_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let o = macp(&[
        "--out",
        dir.path().to_str().unwrap(),
        "train",
        "--method",
        "lowrank",
        "--lr",
        "0",
        "--epochs",
        "6",
        "--seeds",
        "2",
        "--samples-per-class",
        "10",
    ]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("fig3_runs.csv")).unwrap();
    let acc: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(acc.len(), 6);
    assert!(acc.iter().all(|a| *a == acc[0]));
}

#[test]
fn ablate_reports_capacity_errors_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = macp(&[
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "csv",
        "ablate",
        "--schemes",
        "low_only,three_band",
        "--n",
        "1000",
        "--seeds",
        "0",
        "--epochs",
        "2",
        "--samples-per-class",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scheme,seed,final_acc");
    assert_eq!(lines[1], "low_only,0,");
    assert!(lines[2].starts_with("three_band,0,0."));
    assert!(String::from_utf8_lossy(&o.stderr).contains("low_only seed 0"));
}

#[test]
fn memory_reports_and_validates() {
    let report = stdout_json(&macp(&[
        "memory", "--B", "1", "--S", "2048", "--H", "4096", "--n", "1000",
    ]));
    assert_eq!(report["macp"], 8_389_608u64);
    assert_eq!(report["lora"], 16_777_216u64);
    assert!((report["savings"].as_f64().unwrap() - 0.49994).abs() < 1e-5);
    assert!(report["note"].as_str().unwrap().contains("50.01%"));

    let zero_n = stdout_json(&macp(&["memory", "--n", "0"]));
    assert_eq!(zero_n["savings"].as_f64().unwrap(), 0.5);
    assert!(zero_n.get("note").is_none());

    for bad in [
        &["memory", "--B", "0"][..],
        &["memory", "--H", "-3"],
        &["memory", "--bogus"],
    ] {
        let o = macp(bad);
        assert_eq!(o.status.code(), Some(2), "{bad:?}");
        assert!(o.stdout.is_empty());
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn merge_matches_adapter_forward() {
    let dir = tempfile::tempdir().unwrap();
    let base = DenseMatrix::from_fn(16, 12, |i, j| {
        if (i + j) % 5 == 0 {
            -0.0
        } else {
            (i as f64 - j as f64) / 7.0
        }
    })
    .unwrap();
    let weights = write_weights(dir.path(), "w.bin", &base);
    let ck = dir.path().join("zero.json");
    let sel = macp(&[
        "--out",
        ck.to_str().unwrap(),
        "select",
        "--weights",
        &weights,
        "--n",
        "10",
    ]);
    assert!(sel.status.success());

    let merged = dir.path().join("m.bin");
    let twice = dir.path().join("m2.bin");
    let run = |input: &str, out: &Path| {
        macp(&[
            "--out",
            out.to_str().unwrap(),
            "merge",
            "--weights",
            input,
            "--checkpoint",
            ck.to_str().unwrap(),
        ])
    };
    assert!(run(&weights, &merged).status.success());
    assert_eq!(std::fs::read(&merged).unwrap(), std::fs::read(&weights).unwrap());
    assert!(run(merged.to_str().unwrap(), &twice).status.success());
    assert_eq!(std::fs::read(&twice).unwrap(), std::fs::read(&weights).unwrap());

    let config = AdapterConfig {
        n: 30,
        scheme: PartitionScheme::FourBand,
        alpha: 2.5,
        ..Default::default()
    };
    let state = init_adapter(&base, &config, 11).unwrap();
    let random_ck = dir.path().join("random.json");
    write_checkpoint(&random_ck, &state).unwrap();
    let out = dir.path().join("r.bin");
    let o = macp(&[
        "--out",
        out.to_str().unwrap(),
        "merge",
        "--weights",
        &weights,
        "--checkpoint",
        random_ck.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let merged = read_matrix(&out).unwrap();
    let x: Vec<f64> = (0..12).map(|k| ((k * 37 % 11) as f64 - 5.0) / 5.0).collect();
    let via_merge = merged.matvec(&x).unwrap();
    let via_adapter = forward(&state, &base, &x).unwrap();
    for (a, b) in via_merge.iter().zip(&via_adapter) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn merge_errors() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_weights(dir.path(), "a.bin", &DenseMatrix::filled(4, 4, 1.0).unwrap());
    let b = write_weights(dir.path(), "b.bin", &DenseMatrix::filled(5, 4, 1.0).unwrap());
    let ck = dir.path().join("ck.json");
    assert!(
        macp(&["--out", ck.to_str().unwrap(), "select", "--weights", &a, "--n", "3"])
            .status
            .success()
    );

    let mismatch = macp(&[
        "--out",
        "/dev/null",
        "merge",
        "--weights",
        &b,
        "--checkpoint",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));

    let no_out = macp(&["merge", "--weights", &a, "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(no_out.status.code(), Some(2));

    let missing = macp(&["analyze", "--weights", dir.path().join("nope.bin").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));

    std::fs::write(dir.path().join("junk.bin"), b"JUNKJUNKJUNKJUNK").unwrap();
    let junk = macp(&["analyze", "--weights", dir.path().join("junk.bin").to_str().unwrap()]);
    assert_eq!(junk.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&junk.stderr).contains("magic"));
}
