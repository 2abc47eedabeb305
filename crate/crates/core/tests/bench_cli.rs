use std::process::Command;

use tokmerge::bench::{main_with_args, ResultRow, CSV_COLUMNS};

const BIN: &str = env!("CARGO_BIN_EXE_tokmerge-bench");
const SMALL: [&str; 10] = [
    "--grid",
    "8x8",
    "--dim",
    "4",
    "--timesteps",
    "3",
    "--warmup",
    "0",
    "--repetitions",
    "0",
];

#[test]
fn binary_writes_csv_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let status = Command::new(BIN)
        .args(SMALL)
        .args([
            "--sweep-window",
            "fixed:2",
            "--sweep-window",
            "adaptive",
            "-o",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        CSV_COLUMNS
    );
    assert_eq!(rdr.records().count(), 2);
}

#[test]
fn binary_rejects_bad_input() {
    let bad = Command::new(BIN).args(["--ratio", "1.5"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ratio"));
    assert!(!Command::new(BIN)
        .arg("--bogus")
        .output()
        .unwrap()
        .status
        .success());
    assert!(Command::new(BIN)
        .arg("--help")
        .output()
        .unwrap()
        .status
        .success());
}

#[test]
fn json_round_trips_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let mut args = vec!["tokmerge-bench".to_string()];
    args.extend(SMALL.iter().map(|s| s.to_string()));
    args.extend(
        [
            "--format",
            "json",
            "--sweep-ratio",
            "0.3",
            "--sweep-ratio",
            "0.7",
            "--drift",
            "0.013",
        ]
        .map(String::from),
    );
    args.push("-o".into());
    args.push(out.display().to_string());
    main_with_args(&args).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<ResultRow> = serde_json::from_str(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].ratio.to_bits(), 0.3f64.to_bits());
    assert_eq!(rows[1].drift.to_bits(), 0.013f64.to_bits());
    assert!(rows[1].flop_ratio < rows[0].flop_ratio);

    let again = dir.path().join("again.json");
    let mut args2 = args.clone();
    *args2.last_mut().unwrap() = again.display().to_string();
    main_with_args(&args2).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn config_file_with_flag_override_and_drift_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    std::fs::write(
        &cfg,
        "grid = \"8x8\"\ndim = 4\ntimesteps = 4\nrepetitions = 0\nperiod = 3\ndrift_report = true\ndrift_samples = [0, 3]\n\n[sweep]\ndestination = [\"representative\", \"least\"]\n",
    )
    .unwrap();
    let out = dir.path().join("res.csv");
    let args = [
        "tokmerge-bench",
        "--config",
        cfg.to_str().unwrap(),
        "--period",
        "2",
        "-o",
        out.to_str().unwrap(),
    ];
    main_with_args(args).unwrap();
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let period_col = CSV_COLUMNS.iter().position(|c| *c == "period").unwrap();
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| &r[period_col] == "2"));
    for k in 0..2 {
        let drift = dir.path().join("res_drift").join(format!("row{k}"));
        for f in ["sim_t0.csv", "sim_t3.csv", "correlations.csv"] {
            assert!(drift.join(f).is_file(), "{}", drift.join(f).display());
        }
    }
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "periodd = 3\n").unwrap();
    let e = main_with_args(["tokmerge-bench", "--config", cfg.to_str().unwrap()]).unwrap_err();
    assert!(e.to_string().contains("periodd"), "{e}");
}
