use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ricci(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricci")).args(args).current_dir(dir).output().unwrap()
}

fn ricci_threads(args: &[&str], dir: &Path, threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricci"))
        .args(args)
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .unwrap()
}

/// Header and rows of a report CSV (the schema line is checked and dropped).
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    let rest: String = lines.map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(rest.as_bytes());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn field(header: &[String], row: &[String], key: &str) -> String {
    let i = header.iter().position(|h| h == key).unwrap_or_else(|| panic!("no column {key}"));
    row[i].clone()
}

fn num(header: &[String], row: &[String], key: &str) -> f64 {
    field(header, row, key).parse().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> Value {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(err.lines().last().unwrap()).unwrap()
}

#[test]
fn flat_sphere_bounds_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&ricci(&["bounds", "--manifold", "sphere:2:1", "--potential", "0", "--grid", "512"], dir.path()));
    let (h, rows) = table(&out);
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!((num(&h, r, "lambda1") - 1.0).abs() < 1e-3);
    assert_eq!(num(&h, r, "harmonic_mean"), 0.5);
    assert_eq!(num(&h, r, "lichnerowicz"), 1.0);
    assert_eq!(field(&h, r, "dominance_ok"), "true");
}

#[test]
fn brownian_directional_kappa_on_the_unit_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let args =
        ["kappa", "--manifold", "sphere:2:1", "--field", "brownian", "--method", "formula", "--direction", "any"];
    let (h, rows) = table(&stdout(&ricci(&args, dir.path())));
    assert!((num(&h, &rows[0], "kappa") - 0.5).abs() < 1e-12);
}

#[test]
fn invalid_manifold_exits_2_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["kappa", "--manifold", "torus:2", "--field", "brownian", "--direction", "any", "--output", "run"];
    let o = ricci(&args, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "validation");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn numerical_errors_exit_3_with_a_reason_and_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["kappa", "--manifold", "sphere:2:1", "--field", "brownian", "--pair", "0,0,-1", "--output", "run"];
    let o = ricci(&args, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "cut_locus");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unknown_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ricci(&["bounds", "--gird", "5"], dir.path()).status.code(), Some(2));
}

#[test]
fn output_files_carry_the_schema_version_and_round_trip_floats() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "bounds",
        "--manifold",
        "sphere:2:1",
        "--potential",
        "0.2*cos",
        "--grid",
        "128",
        "--nprime",
        "3,10",
        "--output",
        "b",
    ];
    let o = ricci(&args, dir.path());
    assert!(stdout(&o).contains("lambda1"));
    let (h, rows) = table(&fs::read_to_string(dir.path().join("b.csv")).unwrap());
    let json: Value = serde_json::from_slice(&fs::read(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["command"], "bounds");
    for key in ["lambda1", "harmonic_mean", "cd_nprime_3", "cd_nprime_10"] {
        let from_csv = num(&h, &rows[0], key);
        let from_json = json["rows"][0][key].as_f64().unwrap();
        assert_eq!(from_csv.to_bits(), from_json.to_bits(), "{key}");
        let digits = field(&h, &rows[0], key);
        assert_eq!(digits.split('e').next().unwrap().trim_start_matches('-').len(), 18, "{digits}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"manifold": "sphere:2:1", "potential": "0.1*cos", "grid": 64}"#).unwrap();
    let (h, rows) = table(&stdout(&ricci(&["bounds", "--config", "c.json", "--grid", "96"], dir.path())));
    assert_eq!(field(&h, &rows[0], "grid"), "96");
    assert_eq!(field(&h, &rows[0], "potential"), "0.1*cos");

    fs::write(dir.path().join("bad.json"), r#"{"manifold": "sphere:2:1", "gird": 64}"#).unwrap();
    assert_eq!(ricci(&["bounds", "--config", "bad.json"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("other.json"), r#"{"command": "kappa", "manifold": "sphere:2:1"}"#).unwrap();
    assert_eq!(ricci(&["bounds", "--config", "other.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn empty_sweep_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("l.json"), "[]").unwrap();
    let out = stdout(&ricci(&["sweep", "--list", "l.json"], dir.path()));
    assert_eq!(out, "# schema_version=1\nindex,command,error,error_kind\n");
}

#[test]
fn potential_sweep_keeps_order_and_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<Value> = ["0.3*cos", "0", "0.2*cos", "0.1*cos"]
        .iter()
        .map(|p| serde_json::json!({"command": "bounds", "manifold": "sphere:2:1", "potential": p, "grid": 256, "nprime": "3,10"}))
        .collect();
    fs::write(dir.path().join("l.json"), serde_json::to_string(&entries).unwrap()).unwrap();
    let (h, rows) = table(&stdout(&ricci(&["sweep", "--list", "l.json"], dir.path())));
    assert_eq!(rows.len(), 4);
    let pots: Vec<String> = rows.iter().map(|r| field(&h, r, "potential")).collect();
    assert_eq!(pots, ["0.3*cos", "0", "0.2*cos", "0.1*cos"]);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(field(&h, r, "index"), i.to_string());
        assert_eq!(field(&h, r, "error"), "");
        assert_eq!(field(&h, r, "dominance_ok"), "true");
        assert!(num(&h, r, "best_bound") <= num(&h, r, "lambda1") + 1e-6);
    }
}

#[test]
fn sweep_reports_failures_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let list = r#"[
        {"command": "kappa", "manifold": "sphere:2:1", "field": "brownian", "direction": "any"},
        {"command": "kappa", "manifold": "sphere:2:1", "field": "brownian", "pair": "0,0,-1"},
        {"command": "bounds", "manifold": "nowhere"},
        {"manifold": "sphere:2:1"},
        {"command": "kappa", "manifold": "sphere:2:1", "field": "brownian", "direction": "any"}
    ]"#;
    fs::write(dir.path().join("l.json"), list).unwrap();
    let (h, rows) = table(&stdout(&ricci(&["sweep", "--list", "l.json"], dir.path())));
    assert_eq!(rows.len(), 5);
    let kinds: Vec<String> = rows.iter().map(|r| field(&h, r, "error_kind")).collect();
    assert_eq!(kinds, ["", "cut_locus", "validation", "validation", ""]);
    // Duplicate configs give identical rows apart from the index.
    assert_eq!(rows[0][1..], rows[4][1..]);
}

#[test]
fn coupling_of_identities_is_minus_identity() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b", "d"] {
        fs::write(dir.path().join(format!("{name}.csv")), "1,0\n0,1\n").unwrap();
    }
    let o = ricci(&["coupling", "--a", "a.csv", "--b", "b.csv", "--d", "d.csv", "--output", "c"], dir.path());
    stdout(&o);
    let (h, rows) = table(&fs::read_to_string(dir.path().join("c.csv")).unwrap());
    assert!((num(&h, &rows[0], "value") + 2.0).abs() < 1e-12);
    assert_eq!(field(&h, &rows[0], "feasible"), "true");
    let (ch, c) = table(&fs::read_to_string(dir.path().join("c_c0.csv")).unwrap());
    assert_eq!(ch, ["c0", "c1"]);
    let c: Vec<Vec<f64>> = c.iter().map(|r| r.iter().map(|v| v.parse().unwrap()).collect()).collect();
    for (i, r) in c.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            let want = if i == j { -1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }
    fs::write(dir.path().join("d.csv"), "1,0,0\n0,1,0\n").unwrap();
    let o = ricci(&["coupling", "--a", "a.csv", "--b", "b.csv", "--d", "d.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulation_files_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: usize, prefix: &str| {
        let args = [
            "simulate",
            "--manifold",
            "sphere:2:1",
            "--field",
            "brownian",
            "--dt",
            "1e-3",
            "--horizon",
            "0.05",
            "--paths",
            "16",
            "--seed",
            "9",
            "--record-stride",
            "10",
            "--output",
            &format!("runs/{prefix}"),
        ];
        stdout(&ricci_threads(&args, dir.path(), threads));
    };
    run(1, "one");
    run(3, "three");
    for suffix in [".csv", ".json", "_paths.csv"] {
        let a = fs::read(dir.path().join(format!("runs/one{suffix}"))).unwrap();
        let b = fs::read(dir.path().join(format!("runs/three{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
    let (h, rows) = table(&fs::read_to_string(dir.path().join("runs/one.csv")).unwrap());
    assert!(num(&h, &rows[0], "mean_defect") < 1e-3);
    assert_eq!(num(&h, &rows[0], "abort_fraction"), 0.0);
    let (ph, prow) = table(&fs::read_to_string(dir.path().join("runs/one_paths.csv")).unwrap());
    assert_eq!(ph, ["path", "t", "d", "kappa_integral", "defect", "status"]);
    assert_eq!(prow.len(), 16 * 6);
}

#[test]
fn monte_carlo_kappa_is_reproducible_and_covers_the_formula() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "kappa",
        "--manifold",
        "euclidean:2",
        "--field",
        "ou",
        "--distance",
        "1",
        "--method",
        "mc",
        "--samples",
        "2000",
        "--t-ladder",
        "0.05,0.025",
        "--seed",
        "3",
    ];
    let a = stdout(&ricci_threads(&args, dir.path(), 1));
    let b = stdout(&ricci_threads(&args, dir.path(), 2));
    assert_eq!(a, b);
    let (h, rows) = table(&a);
    assert_eq!(num(&h, &rows[0], "kappa_formula"), 1.0);
    assert!(num(&h, &rows[0], "ci_low") <= num(&h, &rows[0], "kappa"));
}

#[test]
fn check_h_separates_example_fields_from_perturbed_ones() {
    let dir = tempfile::tempdir().unwrap();
    for m in ["euclidean:2", "sphere:2:1", "hyperbolic:2:1"] {
        let args = ["check-h", "--manifold", m, "--field", "example-random:2:4+metric:0.5", "--geodesics", "20"];
        let (h, rows) = table(&stdout(&ricci(&args, dir.path())));
        assert_eq!(field(&h, &rows[0], "satisfies_h"), "true", "{m}");
    }
    let args = [
        "check-h",
        "--manifold",
        "sphere:2:1",
        "--field",
        "example-random:2:4+conformal:1:0.2;0;0",
        "--geodesics",
        "20",
    ];
    let (h, rows) = table(&stdout(&ricci(&args, dir.path())));
    assert_eq!(field(&h, &rows[0], "satisfies_h"), "false");
    assert!(num(&h, &rows[0], "max_residual") > 1e-3);
}

#[test]
fn example_tensor_files_are_read_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    // Kulkarni–Nomizu square of the identity in dimension 3: T = 2 (δδ − δδ).
    let mut data = vec![0.0; 81];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let d = |a: usize, b: usize| f64::from(u8::from(a == b));
                    data[((i * 3 + j) * 3 + k) * 3 + l] = 2.0 * (d(i, k) * d(j, l) - d(i, l) * d(j, k));
                }
            }
        }
    }
    fs::write(dir.path().join("t.json"), serde_json::json!({"dim": 3, "data": data}).to_string()).unwrap();
    let args = ["kappa", "--manifold", "sphere:2:1", "--field", "example-T:t.json", "--direction", "any"];
    let (h, rows) = table(&stdout(&ricci(&args, dir.path())));
    // A = 2 g⁻¹ on the unit sphere, so κ(x,u) = 2 · ½ = 1.
    assert!((num(&h, &rows[0], "kappa") - 1.0).abs() < 1e-10);

    data[1] = 1.0;
    fs::write(dir.path().join("t.json"), serde_json::json!({"dim": 3, "data": data}).to_string()).unwrap();
    assert_eq!(ricci(&args, dir.path()).status.code(), Some(2));
}

#[test]
fn variance_and_spectrum_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (h, rows) = table(&stdout(&ricci(&["variance", "--manifold", "sphere:3:1", "--samples", "20000"], dir.path())));
    assert_eq!(num(&h, &rows[0], "bound"), 0.5);
    assert_eq!(field(&h, &rows[0], "holds"), "true");
    let args = ["spectrum", "--manifold", "sphere:1:1", "--grid", "256", "--count", "3"];
    let (h, rows) = table(&stdout(&ricci(&args, dir.path())));
    assert_eq!(rows.len(), 3);
    // ½ d²/dθ² on the unit circle: 0, ½, ½.
    assert!(num(&h, &rows[0], "eigenvalue").abs() < 1e-9);
    assert!((num(&h, &rows[1], "eigenvalue") - 0.5).abs() < 1e-4);
    assert!(!h.contains(&"sector_eigenvalue".to_string()));
    let o = ricci(&["variance", "--manifold", "euclidean:2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
