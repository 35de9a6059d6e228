use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn divdis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divdis"))
        .args(args)
        .output()
        .expect("spawn divdis")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", dir.to_str().unwrap(), "--samples", "400"];
    if !extra.contains(&"--models") {
        args.extend(["--models", "5"]);
    }
    args.extend_from_slice(extra);
    let text = stdout(&divdis(&args));
    PathBuf::from(text.trim())
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(csv: &str, name: &str) -> usize {
    csv.lines().next().unwrap().split(',').position(|c| c == name).unwrap()
}

const SUBCOMMANDS: [&str; 8] = [
    "disagree",
    "error",
    "line",
    "estimate",
    "detect",
    "calibrate",
    "synth",
    "grid",
];

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var_os("DIVDIS_BLESS").is_some();
    let mut cases: Vec<(String, Vec<&str>)> = vec![("divdis".into(), vec!["--help"])];
    for sub in SUBCOMMANDS {
        cases.push((sub.to_string(), vec![sub, "--help"]));
    }
    for (name, args) in cases {
        let text = stdout(&divdis(&args));
        let path = golden.join(format!("{name}.txt"));
        if bless {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(
            text, expected,
            "help text of `{name}` changed (DIVDIS_BLESS=1 to update)"
        );
    }
}

#[test]
fn help_documents_flags() {
    let flags: [(&str, &[&str]); 8] = [
        ("disagree", &["--manifest", "--notion", "--out", "--format", "--force"]),
        ("error", &["--manifest", "--notion", "--out", "--format", "--force"]),
        (
            "line",
            &["--manifest", "--notion", "--transform", "--out", "--format", "--force"],
        ),
        (
            "estimate",
            &[
                "--manifest",
                "--notion",
                "--transform",
                "--method",
                "--r2-gate",
                "--table1",
            ],
        ),
        (
            "detect",
            &["--manifest", "--kinds", "--table2", "--pooled", "--out", "--format"],
        ),
        ("calibrate", &["--manifest", "--notion", "--bins", "--out", "--format"]),
        ("synth", &["--out", "--seed", "--severities", "--planted", "--force"]),
        (
            "grid",
            &["--figure", "--notion", "--resolution", "--mode", "--label", "--out"],
        ),
    ];
    for (sub, wanted) in flags {
        let text = stdout(&divdis(&[sub, "--help"]));
        for flag in wanted {
            assert!(text.contains(flag), "`{sub} --help` lacks {flag}");
        }
    }
}

#[test]
fn planted_manifest_gives_zero_mape() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--planted", "250"]);
    for method in ["aline-s", "aline-d"] {
        let out = stdout(&divdis(&[
            "estimate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--method",
            method,
            "--notion",
            "hd",
            "--format",
            "json",
        ]));
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let summary = v["estimate_summary"].as_array().unwrap();
        assert_eq!(summary.len(), 1);
        let mape = summary[0]["mape"].as_f64().unwrap();
        if method == "aline-s" {
            assert!(mape < 1e-8, "{method}: MAPE {mape}");
        } else {
            // pair rows pull towards the disagreement level, which differs from the error level
            assert!(mape.is_finite());
        }
    }
    let out = stdout(&divdis(&[
        "estimate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--method",
        "aline-s",
        "--notion",
        "hd",
    ]));
    let summary = out.split("# estimate_summary\n").nth(1).unwrap();
    let mape: f64 = rows(summary)[0][column(summary, "mape")].parse().unwrap();
    assert!(format!("{mape:.2}") == "0.00", "{mape}");
}

#[test]
fn table1_lists_gated_splits() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let m = manifest.to_str().unwrap();
    let all = stdout(&divdis(&["estimate", "--manifest", m, "--table1", "--r2-gate", "1e-9"]));
    assert_eq!(all.lines().next().unwrap(), "ood_split,top1,hd,jsd,kld");
    assert_eq!(rows(&all).len(), 5);
    let none = stdout(&divdis(&["estimate", "--manifest", m, "--table1", "--r2-gate", "1"]));
    assert_eq!(rows(&none).len(), 0);
    assert_eq!(
        divdis(&["estimate", "--manifest", m, "--r2-gate", "0"]).status.code(),
        Some(1)
    );
}

#[test]
fn grid_respects_simplex_constraint() {
    let out = stdout(&divdis(&[
        "grid",
        "--figure",
        "1",
        "--notion",
        "top1",
        "--resolution",
        "200",
    ]));
    assert_eq!(out.lines().next().unwrap(), "p1,p2,value");
    let rows = rows(&out);
    assert_eq!(rows.len(), 201 * 202 / 2);
    for r in &rows {
        let p1: f64 = r[0].parse().unwrap();
        let p2: f64 = r[1].parse().unwrap();
        assert!(p1 + p2 <= 1.0 + 1e-9, "{p1} + {p2}");
        assert!(r[2] == "0" || r[2] == "1", "top1 value {}", r[2]);
    }
    let curve = stdout(&divdis(&[
        "grid",
        "--figure",
        "2",
        "--notion",
        "hd",
        "--resolution",
        "10",
    ]));
    let rows = self::rows(&curve);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0], ["0", "1"]);
    assert_eq!(rows[10], ["1", "0"]);
}

#[test]
fn detect_table2_is_monotone_in_severity() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let out = stdout(&divdis(&[
        "detect",
        "--manifest",
        manifest.to_str().unwrap(),
        "--kinds",
        "neg-msp,pair-hd",
        "--table2",
    ]));
    assert_eq!(out.lines().next().unwrap(), "severity,neg-msp,pair-hd");
    let rows = rows(&out);
    assert_eq!(rows.len(), 5);
    for col in 1..=2 {
        let aucs: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        assert!(aucs.windows(2).all(|w| w[1] > w[0]), "column {col}: {aucs:?}");
    }
}

#[test]
fn every_subcommand_writes_files_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("world"), &[]);
    let m = manifest.to_str().unwrap();
    let runs: [&[&str]; 6] = [
        &["disagree", "--manifest", m],
        &["error", "--manifest", m],
        &["line", "--manifest", m, "--transform", "probit"],
        &["estimate", "--manifest", m, "--method", "aline-d"],
        &["detect", "--manifest", m, "--pooled"],
        &["calibrate", "--manifest", m],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out_dir = dir.path().join(format!("out{i}-{threads}"));
            let mut full = args.to_vec();
            full.extend([
                "--out",
                out_dir.to_str().unwrap(),
                "--format",
                "csv,json",
                "--threads",
                threads,
            ]);
            stdout(&divdis(&full));
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (
                        e.file_name().to_string_lossy().into_owned(),
                        std::fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
            files.sort();
            assert!(!files.is_empty());
            assert!(files.iter().any(|(n, _)| n.ends_with(".csv")));
            assert!(files.iter().any(|(n, _)| n.ends_with(".json")));
            outputs.push(files);
        }
        assert_eq!(outputs[0], outputs[1], "{:?} differs across thread counts", args[0]);
    }
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let args = [
        "grid",
        "--figure",
        "2",
        "--resolution",
        "4",
        "--out",
        out.to_str().unwrap(),
    ];
    stdout(&divdis(&args));
    let again = divdis(&args);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    stdout(&divdis(&forced));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(divdis(&["bogus"]).status.code(), Some(1));
    assert_eq!(divdis(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        divdis(&["disagree", "--manifest", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(divdis(&["grid", "--figure", "3"]).status.code(), Some(1));
    assert_eq!(
        divdis(&["grid", "--figure", "1", "--notion", "nope"]).status.code(),
        Some(1)
    );

    // malformed manifest: the message carries the file and line
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"k\": 3,\n  \"id_split\": \n}\n").unwrap();
    let out = divdis(&["error", "--manifest", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json") && err.contains("line 4"), "{err}");

    // identical models make every ID disagreement equal: a numerical failure
    let world = dir.path().join("w");
    let manifest = synth(&world, &["--models", "3"]);
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let first = v["models"][0]["predictions"].clone();
    for m in v["models"].as_array_mut().unwrap() {
        m["predictions"] = first.clone();
    }
    std::fs::write(&manifest, serde_json::to_string(&v).unwrap()).unwrap();
    let out = divdis(&["line", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
