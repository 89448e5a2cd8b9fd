use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use torus_rds::runner::{parse_summary, CONFIG_KEYS, CSV_HEADER};

const BIN: &str = env!("CARGO_BIN_EXE_torus-rds");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const SPECTRUM: &str = r#"{
    "family": {"type": "CoupledStandard", "N": 1, "L": 100},
    "noise": {"type": "Rotational", "c": 0.01, "centers": {"light_grid": 3}},
    "n_steps": 2000, "burn_in": 50, "trials": 3, "seed": 42
}"#;

/// CSV text with the wall-time column blanked.
fn without_wall_time(csv_text: &str) -> Vec<Vec<String>> {
    let col = CSV_HEADER.iter().position(|c| *c == "wall_time_s").unwrap();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(csv_text.as_bytes());
    reader
        .records()
        .map(|r| {
            let mut rec: Vec<String> = r.unwrap().iter().map(str::to_owned).collect();
            rec[col].clear();
            rec
        })
        .enumerate()
        .map(|(i, mut rec)| {
            if i == 0 {
                rec[col] = "wall_time_s".into();
            }
            rec
        })
        .collect()
}

#[test]
fn spectrum_run_is_byte_stable_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "spectrum.json", SPECTRUM);
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let prefix = dir.path().join(tag);
        let out = run(&[
            "spectrum",
            "--config",
            &cfg,
            "--out",
            prefix.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.contains(&format!("{tag}.csv")));
        outputs.push(fs::read_to_string(prefix.with_extension("csv")).unwrap());
    }
    let a = without_wall_time(&outputs[0]);
    assert_eq!(a, without_wall_time(&outputs[1]));
    assert_eq!(a[0], CSV_HEADER);
    assert_eq!(a.len(), 4);
    // The thread count is echoed; every other column must agree.
    let threads_col = CSV_HEADER.iter().position(|c| *c == "threads").unwrap();
    let strip = |rows: Vec<Vec<String>>| -> Vec<Vec<String>> {
        rows.into_iter()
            .map(|mut r| {
                r[threads_col].clear();
                r
            })
            .collect()
    };
    assert_eq!(strip(a), strip(without_wall_time(&outputs[2])));
}

#[test]
fn json_summary_round_trips_and_records_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", SPECTRUM);
    let prefix = dir.path().join("run");
    let out = run(&[
        "spectrum",
        "--config",
        &cfg,
        "--out",
        prefix.to_str().unwrap(),
        "--seed",
        "0",
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(prefix.with_extension("json")).unwrap();
    let summary = parse_summary(&text).unwrap();
    assert_ne!(summary.config.seed, 0, "entropy seed must be recorded");
    assert!(summary.rows.iter().all(|r| r.seed == summary.config.seed));
    // NaN stderrs travel as null, so compare the re-serialized text.
    let again = serde_json::to_string_pretty(&summary).unwrap();
    assert_eq!(again, text);
    assert_eq!(
        serde_json::to_string_pretty(&parse_summary(&again).unwrap()).unwrap(),
        text
    );
    // The recorded seed reproduces the run.
    let cfg2 = write(
        dir.path(),
        "s2.json",
        &serde_json::to_string(&summary.config).unwrap(),
    );
    let prefix2 = dir.path().join("rerun");
    assert!(run(&[
        "spectrum",
        "--config",
        &cfg2,
        "--out",
        prefix2.to_str().unwrap()
    ])
    .status
    .success());
    let rerun =
        parse_summary(&fs::read_to_string(prefix2.with_extension("json")).unwrap()).unwrap();
    let metrics = |s: &torus_rds::runner::RunSummary| -> Vec<Vec<u64>> {
        s.rows
            .iter()
            .map(|r| r.metrics.iter().map(|m| m.value.to_bits()).collect())
            .collect()
    };
    assert_eq!(metrics(&rerun), metrics(&summary));
}

#[test]
fn sweep_emits_one_monotone_row_per_l() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{"family": {"type": "CoupledStandard", "N": 1, "L": 1000},
            "noise": {"type": "Shift", "epsilon": 0.01},
            "n_steps": 5000, "burn_in": 100, "l_values": [1000, 10000, 100000], "seed": 5}"#,
    );
    let prefix = dir.path().join("sweep");
    assert!(
        run(&["sweep", "--config", &cfg, "--out", prefix.to_str().unwrap()])
            .status
            .success()
    );
    let summary =
        parse_summary(&fs::read_to_string(prefix.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary.rows.len(), 3);
    let lead: Vec<f64> = summary
        .rows
        .iter()
        .map(|r| r.metric("lambda_1").unwrap().value)
        .collect();
    assert!(lead.windows(2).all(|w| w[1] > w[0]), "{lead:?}");
    assert_eq!(summary.summary["monotone_lambda_1"], 1.0);
}

#[test]
fn config_errors_exit_with_one_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "syntax",
            "{\"family\": {\"type\": \"StrongCoupling2\", \"L\": 10},\n \"seed\": }",
            "line 2",
        ),
        (
            "unknown",
            r#"{"family": {"type": "StrongCoupling2", "L": 10}, "n_stepz": 3}"#,
            "n_stepz",
        ),
        (
            "range",
            r#"{"family": {"type": "StrongCoupling2", "L": 10}, "beta": 1.5}"#,
            "beta",
        ),
        (
            "mu",
            r#"{"family": {"type": "CoupledStandard", "N": 2, "L": 10, "mu": [[0, 1], [2, 0]]}}"#,
            "mu must be symmetric",
        ),
        (
            "threads",
            r#"{"family": {"type": "StrongCoupling2", "L": 10}, "threads": 0}"#,
            "threads",
        ),
        (
            "mismatch",
            r#"{"experiment": "f2", "family": {"type": "StrongCoupling2", "L": 10}}"#,
            "subcommand",
        ),
    ];
    for (name, doc, needle) in cases {
        let cfg = write(dir.path(), &format!("{name}.json"), doc);
        let prefix = dir.path().join(format!("out_{name}"));
        let out = run(&[
            "spectrum",
            "--config",
            &cfg,
            "--out",
            prefix.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(1), "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{name}: {err}");
        assert!(!prefix.with_extension("csv").exists());
        assert!(!prefix.with_extension("json").exists());
    }
    let out = run(&[
        "spectrum",
        "--config",
        dir.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mid_run_breakdown_exits_with_two_and_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    // |D_x f| ~ 1e301 overflows the QR step.
    let cfg = write(
        dir.path(),
        "overflow.json",
        r#"{"family": {"type": "CoupledStandard", "N": 1, "L": 1e300},
            "n_steps": 10, "burn_in": 0, "seed": 1}"#,
    );
    let prefix = dir.path().join("overflow");
    let out = run(&[
        "spectrum",
        "--config",
        &cfg,
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numeric failure"));
    for ext in ["csv", "json", "csv.partial", "json.partial"] {
        assert!(
            !dir.path().join(format!("overflow.{ext}")).exists(),
            "{ext}"
        );
    }
}

#[test]
fn help_documents_every_config_key() {
    let keys = [
        "experiment",
        "family",
        "noise",
        "n_steps",
        "trials",
        "beta",
        "seed",
        "out_path",
        "threads",
        "burn_in",
        "l_values",
        "samples",
        "bins",
        "grid",
        "refine_iters",
        "system_grid",
    ];
    for args in [
        vec!["--help"],
        vec!["spectrum", "--help"],
        vec!["uniformity", "--help"],
    ] {
        let out = run(&args);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for k in keys {
            assert!(text.contains(k), "{args:?} lacks {k}");
        }
    }
    for k in [
        "sweep",
        "f2",
        "cone-escape",
        "noise-check",
        "transversality",
        "metric-check",
    ] {
        assert!(String::from_utf8(run(&["--help"]).stdout)
            .unwrap()
            .contains(k));
        assert!(CONFIG_KEYS.contains(k));
    }
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "f2",
            r#"{"family": {"type": "CoupledStandard", "N": 1, "L": 100}, "samples": 20000, "l_values": [100, 1000]}"#,
        ),
        (
            "cone-escape",
            r#"{"family": {"type": "CoupledStandard", "N": 1, "L": 1000}, "noise": {"type": "Shift", "epsilon": 0.01}, "n_steps": 1, "trials": 500, "beta": 0.5}"#,
        ),
        (
            "noise-check",
            r#"{"family": {"type": "CoupledStandard", "N": 1, "L": 10}, "noise": {"type": "Rotational", "c": 0.01, "centers": {"light_grid": 3}}, "trials": 500, "samples": 2000}"#,
        ),
        (
            "transversality",
            r#"{"family": {"type": "StrongCoupling2", "L": 10}, "grid": 32, "refine_iters": 5, "system_grid": 64}"#,
        ),
        (
            "metric-check",
            r#"{"family": {"type": "CoupledStandard", "N": 2, "L": 10}, "trials": 200}"#,
        ),
        (
            "uniformity",
            r#"{"family": {"type": "CoupledStandard", "N": 1, "L": 10}, "noise": {"type": "Shift", "epsilon": 0.05}, "n_steps": 1, "samples": 2000}"#,
        ),
    ];
    for (sub, doc) in cases {
        let cfg = write(dir.path(), &format!("{sub}.json"), doc);
        let prefix = dir.path().join(sub);
        let out = run(&[
            sub,
            "--config",
            &cfg,
            "--out",
            prefix.to_str().unwrap(),
            "--seed",
            "9",
        ]);
        assert!(
            out.status.success(),
            "{sub}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let summary =
            parse_summary(&fs::read_to_string(prefix.with_extension("json")).unwrap()).unwrap();
        assert_eq!(summary.experiment, sub);
        assert!(!summary.rows.is_empty());
    }
}
