use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdma-bounds"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn bound_finite_noiseless() {
    let out = stdout(&["bound", "--m", "1", "--n", "2", "--noise", "none", "--side", "lower"]);
    let v: f64 = value(&out, "bits_total").parse().unwrap();
    assert!((v - 1.415037).abs() < 1e-6);
    assert_eq!(value(&out, "kind"), "lower");
}

#[test]
fn bound_asymptotic_examples() {
    let out = stdout(&["bound", "--zeta", "1", "--noise", "none", "--side", "lower", "--asymptotic"]);
    assert_eq!(value(&out, "bits_per_user"), "0.5");
    let out = stdout(&["bound", "--beta", "1", "--sigma2", "0.5", "--side", "upper", "--asymptotic"]);
    let v: f64 = value(&out, "bits_per_user").parse().unwrap();
    assert!((v - 0.792481).abs() < 1e-6);
}

#[test]
fn bound_json_record() {
    let out = stdout(&["bound", "--m", "4", "--n", "6", "--ebn0-db", "4", "--json"]);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    let records = doc["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["side"], "lower");
    assert!(records[0]["gamma"].as_f64().unwrap() > 0.0);
    assert_eq!(records[1]["kind"], "conjectured_upper");
    assert!(records[0]["bits_total"].as_f64().unwrap() <= records[1]["bits_total"].as_f64().unwrap());
}

#[test]
fn ebn0_and_sigma2_flags_agree() {
    let db = 6.0f64;
    let s2 = 1.0 / (2.0 * 10f64.powf(db / 10.0));
    let a = stdout(&["bound", "--m", "8", "--n", "12", "--ebn0-db", "6", "--json"]);
    let b = stdout(&["bound", "--m", "8", "--n", "12", "--sigma2", &s2.to_string(), "--json"]);
    let parse = |t: &str| -> Vec<f64> {
        let doc: serde_json::Value = serde_json::from_str(t).unwrap();
        doc["records"].as_array().unwrap().iter().map(|r| r["bits_total"].as_f64().unwrap()).collect()
    };
    for (x, y) in parse(&a).iter().zip(parse(&b)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["bound", "--m", "2", "--noise", "none"][..],
        &["bound", "--m", "2", "--n", "2", "--sigma2", "1", "--ebn0-db", "3"],
        &["figure", "11"],
        &["figure", "5", "--ebn0-db", "3"],
        &["bound", "--m", "2", "--n", "2", "--noise", "laplace:1"],
    ] {
        assert_eq!(run(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn oracle_exact_reports_and_checks() {
    let out = stdout(&["oracle", "exact", "--m", "2", "--n", "2"]);
    assert_eq!(value(&out, "max"), "2.0");
    let mean: f64 = value(&out, "mean").parse().unwrap();
    assert!(mean > 1.678 && mean < 2.0);

    let out = stdout(&["oracle", "exact", "--m", "1", "--n", "2", "--check-bounds"]);
    assert!(out.contains("1.415037 ≤ 1.5 ≤ 1.5"), "{out}");

    assert_eq!(run(&["oracle", "exact", "--m", "5", "--n", "5"]).status.code(), Some(4));
}

#[test]
fn oracle_mc_reads_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("walsh2.txt");
    std::fs::write(&path, "2 2\n+1 +1\n+1 -1\n").unwrap();
    let p = path.to_str().unwrap();
    let args = ["oracle", "mc", "--matrix", p, "--sigma2", "1", "--samples", "20000", "--seed", "7"];
    let first = stdout(&args);
    assert_eq!(first, stdout(&args));
    assert_eq!(value(&first, "seed"), "7");
    assert_eq!(value(&first, "samples"), "20000");
    let mean: f64 = value(&first, "mean_bits").parse().unwrap();
    assert!(mean > 0.0 && mean < 2.0);

    std::fs::write(&path, "2 2\n+1 +1\n+1 0\n").unwrap();
    assert_eq!(run(&args).status.code(), Some(2));
    let missing = dir.path().join("absent.txt");
    assert_ne!(run(&["oracle", "mc", "--matrix", missing.to_str().unwrap(), "--sigma2", "1"]).status.code(), Some(0));
}

#[test]
fn figure_one_csv_schema() {
    let text = stdout(&["figure", "1"]);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["figure", "series", "x_name", "x", "y_name", "y", "params"]
    );
    let mut found = false;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let params: serde_json::Value = serde_json::from_str(&rec[6]).unwrap();
        let y: f64 = rec[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&y));
        if &rec[1] == "lower" && &rec[3] == "239" && params["m"] == 64 {
            assert!(y >= 0.9);
            found = true;
        }
    }
    assert!(found);
}

#[test]
fn figure_out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig5.csv");
    let text = stdout(&["figure", "5"]);
    stdout(&["figure", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    let last_bpsk = text.lines().filter(|l| l.starts_with("5,bpsk,")).last().unwrap();
    let y: f64 = last_bpsk.split(',').nth(5).unwrap().parse().unwrap();
    assert!((y - 1.0).abs() < 1e-9);
}

#[test]
fn sweep_over_users() {
    let text = stdout(&["sweep", "--var", "n", "--range", "1:4:1", "--m", "2", "--noise", "none"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    assert!(lines[1].starts_with("sweep,lower,n,1,bits_per_user,"));
    assert!(lines[5].starts_with("sweep,upper,n,1,"));
    let text = stdout(&["sweep", "--var", "ebn0-db", "--values", "-2,0,2", "--beta", "2", "--asymptotic"]);
    assert!(text.contains("sweep,tanaka,ebn0_db,-2,"));
}
