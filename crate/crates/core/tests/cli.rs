use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn assess(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_assess"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> TempDir {
    let dir = TempDir::new().unwrap();
    let o = assess(args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

fn result(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("result.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

// serde_json's default float parser may be one ulp off the shortest repr
fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 2.0 * f64::EPSILON * a.abs().max(b.abs())
}

fn without_timing(mut v: Value) -> String {
    v.as_object_mut().unwrap().remove("timing");
    serde_json::to_string(&v).unwrap()
}

#[test]
fn se_on_rbts() {
    let dir = ok(&["--system", "rbts", "--method", "se", "--max-level", "3"]);
    let r = result(dir.path());
    assert_eq!(r["config"]["method"], "se");
    assert_eq!(r["rng"]["algorithm"], "ChaCha8Rng");
    assert_eq!(r["system"]["components"], 20);
    assert_eq!(r["system"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["report"]["opf_evaluations"], 1 + 20 + 190 + 1140);
    let levels = csv_rows(&dir.path().join("se_levels.csv"));
    assert_eq!(levels.len(), 4);
    let last = &levels[3];
    let lolp: f64 = last[2].parse().unwrap();
    let eens: f64 = last[3].parse().unwrap();
    assert!(same(lolp, r["report"]["lolp"].as_f64().unwrap()));
    assert!(same(eens, r["report"]["eens"].as_f64().unwrap()));
}

#[test]
fn system_file_path_is_accepted() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("rbts.json");
    std::fs::write(
        &path,
        gridlattice::SystemModel::builtin_json("rbts").unwrap(),
    )
    .unwrap();
    let out = ok(&[
        "--system",
        path.to_str().unwrap(),
        "--method",
        "dichotomy",
        "--dn",
        "5",
    ]);
    let by_name = ok(&["--system", "rbts", "--method", "dichotomy", "--dn", "5"]);
    let (a, b) = (result(out.path()), result(by_name.path()));
    assert_eq!(a["system"]["sha256"], b["system"]["sha256"]);
    assert_eq!(a["report"], b["report"]);
}

#[test]
fn missing_system_file_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let o = assess(&["--system", "missing.json", "--method", "se"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing.json"), "{err}");
    assert!(!dir.path().join("result.json").exists());
}

#[test]
fn incomplete_configs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["--system", "rbts", "--method", "dichotomy"][..],
        &["--system", "rbts", "--method", "mcs"][..],
        &[
            "--system",
            "rbts",
            "--method",
            "dichotomy+fmcs",
            "--dn",
            "7",
        ][..],
        &["--system", "rbts", "--method", "warp"][..],
    ] {
        let o = assess(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn failed_lattice_table_rbts() {
    let dir = ok(&["--system", "rbts", "--method", "dichotomy", "--dn", "9"]);
    let rows = csv_rows(&dir.path().join("failed_lattices.csv"));
    let first = &rows[0];
    assert_eq!(&first[0], "1");
    assert_eq!(&first[1], "{20}");
    assert_eq!(&first[2], "20");
    assert_eq!(&first[3], "19");
    let p: f64 = first[4].parse().unwrap();
    assert!((p - 0.0011402).abs() < 1e-7);

    let r = result(dir.path());
    assert!(r["report"]["eens"].is_null());
    let sum: f64 = rows.iter().map(|row| row[4].parse::<f64>().unwrap()).sum();
    assert!((sum - r["report"]["lolp"].as_f64().unwrap()).abs() < 1e-15);
    assert_eq!(
        rows.len() as u64,
        r["partition"]["failed_count"].as_u64().unwrap()
    );
}

#[test]
fn failed_lattice_table_rts79() {
    let dir = ok(&[
        "--system",
        "rts79",
        "--method",
        "dichotomy",
        "--max-opf",
        "50",
    ]);
    let rows = csv_rows(&dir.path().join("failed_lattices.csv"));
    let first = &rows[0];
    assert_eq!(&first[1], "{22,23}");
    assert_eq!(&first[2], "245");
    assert_eq!(&first[3], "68");
    let p: f64 = first[4].parse().unwrap();
    assert!((p - 0.0144).abs() < 1e-9);
}

#[test]
fn empty_failed_set_gives_header_only_table() {
    let dir = ok(&[
        "--system",
        "rbts",
        "--method",
        "dichotomy",
        "--max-opf",
        "1",
    ]);
    let text = std::fs::read_to_string(dir.path().join("failed_lattices.csv")).unwrap();
    assert_eq!(
        text,
        "rank,min_element_failed_ids,shed_mw,num_states_log2,probability\n"
    );
    assert_eq!(result(dir.path())["report"]["lolp"], 0.0);
}

#[test]
fn partition_trace_is_monotone_and_consistent() {
    let dir = ok(&["--system", "rbts", "--method", "dichotomy", "--dn", "7"]);
    let r = result(dir.path());
    let rows = csv_rows(&dir.path().join("partition_trace.csv"));
    let mut prev = 0.0;
    for row in &rows {
        let lolp: f64 = row[2].parse().unwrap();
        let mixed: f64 = row[3].parse().unwrap();
        assert!(lolp >= prev);
        assert!(lolp + mixed <= 1.0 + 1e-12);
        prev = lolp;
    }
    let last = rows.last().unwrap();
    assert!(same(
        last[2].parse::<f64>().unwrap(),
        r["report"]["lolp"].as_f64().unwrap()
    ));
    assert_eq!(
        last[1].parse::<u64>().unwrap(),
        r["partition"]["opf_count"].as_u64().unwrap()
    );
}

#[test]
fn fmcs_indices_recompute_from_traces() {
    let dir = ok(&[
        "--system",
        "rbts",
        "--method",
        "dichotomy+fmcs",
        "--dn",
        "7",
        "--beta",
        "0.05",
        "--seed",
        "42",
    ]);
    let r = result(dir.path());
    let failed = csv_rows(&dir.path().join("failed_lattices.csv"));
    let samples = csv_rows(&dir.path().join("samples.csv"));
    let lolp: f64 = failed
        .iter()
        .map(|row| row[4].parse::<f64>().unwrap())
        .sum();
    let mean = samples
        .iter()
        .map(|row| row[2].parse::<f64>().unwrap())
        .sum::<f64>()
        / samples.len() as f64;
    let report = &r["report"];
    assert_eq!(samples.len() as u64, report["samples"].as_u64().unwrap());
    assert!((lolp - report["lolp"].as_f64().unwrap()).abs() < 1e-15);
    let eens = report["eens"].as_f64().unwrap();
    assert!((lolp * mean - eens).abs() < 1e-6 * eens);
    assert!(same(
        samples.last().unwrap()[3].parse::<f64>().unwrap(),
        eens
    ));
    assert!(report["beta"].as_f64().unwrap() < 0.05);
}

#[test]
fn mcs_indices_recompute_from_samples() {
    let dir = ok(&[
        "--system",
        "rbts",
        "--method",
        "mcs",
        "--max-samples",
        "5000",
        "--beta",
        "0.001",
        "--seed",
        "3",
    ]);
    let r = result(dir.path());
    let samples = csv_rows(&dir.path().join("samples.csv"));
    assert_eq!(samples.len(), 5000);
    let shed: Vec<f64> = samples.iter().map(|row| row[2].parse().unwrap()).collect();
    let lolp = shed
        .iter()
        .filter(|&&c| c > gridlattice::SHED_EPSILON_MW)
        .count() as f64
        / 5000.0;
    let eens = shed.iter().sum::<f64>() / 5000.0;
    assert!(same(lolp, r["report"]["lolp"].as_f64().unwrap()));
    assert!((eens - r["report"]["eens"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn repeated_runs_are_identical_apart_from_timing() {
    let args = [
        "--system", "rbts", "--method", "mcs", "--beta", "0.2", "--seed", "7",
    ];
    let a = ok(&args);
    let b = ok(&[&args[..], &["--threads", "2"]].concat());
    assert_eq!(
        without_timing(result(a.path())),
        without_timing(result(b.path()))
    );
    assert_eq!(
        std::fs::read(a.path().join("samples.csv")).unwrap(),
        std::fs::read(b.path().join("samples.csv")).unwrap()
    );
    let c = ok(&[
        "--system", "rbts", "--method", "mcs", "--beta", "0.2", "--seed", "8",
    ]);
    assert_ne!(
        without_timing(result(a.path())),
        without_timing(result(c.path()))
    );
}

#[test]
fn summary_row_is_printed() {
    let dir = TempDir::new().unwrap();
    let o = assess(
        &["--system", "rbts", "--method", "dichotomy", "--dn", "7"],
        dir.path(),
    );
    let out = String::from_utf8(o.stdout).unwrap();
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("method | beta | LOLP"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("dichotomy | - | 0.9473"), "{row}");
}
