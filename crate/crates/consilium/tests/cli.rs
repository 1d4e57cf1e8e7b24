//! End-to-end checks of the compiled `consilium` binary: subcommand output,
//! exit-code conventions (0 success, 1 usage error, 2 runtime error), and the
//! record → replay round trip, all against the bundled demo assets.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consilium"))
}

fn asset(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets")
        .join(rel)
        .display()
        .to_string()
}

fn demo_backend() -> String {
    format!("scripted:{}", asset("demo_script.json"))
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let out = bin().arg(flag).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{flag} must exit 0");
    }
    let help = bin().arg("--help").output().unwrap();
    let text = stdout_of(&help);
    for sub in ["classify", "run", "eval", "report", "replay"] {
        assert!(text.contains(sub), "--help must list the {sub} subcommand");
    }
}

#[test]
fn usage_errors_exit_one() {
    // No subcommand at all.
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Unknown flag.
    let out = bin().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Unknown subcommand.
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two_with_message() {
    // A query but no backend configured anywhere.
    let out = bin()
        .args(["run", "--question", "Is this configured?"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("no backend configured"),
        "stderr should say what is missing: {}",
        stderr_of(&out)
    );

    // A backend script that does not exist.
    let out = bin()
        .args([
            "--backend",
            "scripted:/nonexistent/script.json",
            "run",
            "--question",
            "x",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Malformed --option value (parsed at runtime, not by the CLI grammar).
    let out = bin()
        .args([
            "--backend",
            &demo_backend(),
            "run",
            "--question",
            "x",
            "--option",
            "not-a-pair",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("not-a-pair"));

    // Eval over a dataset that does not exist.
    let tmp = tempfile::TempDir::new().unwrap();
    let out = bin()
        .args([
            "--backend",
            &demo_backend(),
            "eval",
            "--dataset",
            "/nonexistent/data.jsonl",
            "--out",
        ])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn classify_prints_complexity_json() {
    let out = bin()
        .args([
            "--backend",
            &demo_backend(),
            "classify",
            "--question",
            "A short single-domain question.",
            "--id",
            "probe",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(v["id"], "probe");
    assert_eq!(v["complexity"], "low");
    assert_eq!(v["calls"], 1, "classification alone costs one call");
}

#[test]
fn run_answers_query_and_writes_transcript() {
    let tmp = tempfile::TempDir::new().unwrap();
    let transcript = tmp.path().join("transcript.json");
    let out = bin()
        .args([
            "--backend",
            &demo_backend(),
            "run",
            "--id",
            "q01",
            "--question",
            "A 34-year-old woman reports fatigue and brittle, spoon-shaped nails. \
             Laboratory studies show microcytic anemia. Which deficiency explains this?",
            "--option",
            "A=Iron",
            "--option",
            "B=Vitamin B12",
            "--option",
            "C=Folate",
            "--option",
            "D=Zinc",
            "--transcript",
        ])
        .arg(&transcript)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let decision: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(decision["answer"], "A");
    assert_eq!(decision["complexity"], "low");
    assert_eq!(decision["stats"]["calls"], 3);

    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&transcript).unwrap()).unwrap();
    assert_eq!(t["id"], "q01");
    assert!(t["transcript"]["events"].as_array().unwrap().len() >= 3);
}

#[test]
fn query_can_come_from_a_json_file() {
    let tmp = tempfile::TempDir::new().unwrap();
    let qfile = tmp.path().join("query.json");
    std::fs::write(
        &qfile,
        r#"{
            "id": "file-query",
            "question": "A toddler improves with a salbutamol inhaler during wheezy episodes. Most likely diagnosis?",
            "options": {"A": "Asthma", "B": "Croup", "C": "Epiglottitis", "D": "Foreign body"}
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["--backend", &demo_backend(), "run", "--file"])
        .arg(&qfile)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let decision: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(decision["answer"], "B");
}

#[test]
fn eval_then_report_round_trip() {
    let tmp = tempfile::TempDir::new().unwrap();
    let out_dir = tmp.path().join("eval");

    let out = bin()
        .args([
            "--backend",
            &demo_backend(),
            "eval",
            "--dataset",
            &asset("toy_dataset.jsonl"),
            "--concurrency",
            "2",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["total"], 10);
    assert!((summary["accuracy"].as_f64().unwrap() - 0.8).abs() < 1e-12);

    // CSV report to stdout.
    let out = bin()
        .args(["report", "--format", "csv", "--dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = stdout_of(&out);
    assert!(csv.contains("summary,,accuracy,0.800000"), "csv: {csv}");
    assert!(csv.contains("item,q03,correct,false"));

    // JSON report to a file.
    let report_file = tmp.path().join("report.json");
    let out = bin()
        .args(["report", "--format", "json", "--dir"])
        .arg(&out_dir)
        .args(["--out"])
        .arg(&report_file)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_file).unwrap()).unwrap();
    assert_eq!(report["summary"]["total"], 10);

    // Unknown format is a runtime error.
    let out = bin()
        .args(["report", "--format", "yaml", "--dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn record_then_replay_reproduces_the_decision() {
    let tmp = tempfile::TempDir::new().unwrap();
    let session = tmp.path().join("session.jsonl");
    let question =
        "An elderly man has painless gross hematuria and a flank mass. What is the next step?";
    let query: Vec<String> = [
        "--id",
        "replayed",
        "--question",
        question,
        "--option",
        "A=Cystoscopy and imaging",
        "--option",
        "B=Reassurance",
        "--option",
        "C=Antibiotics",
        "--option",
        "D=Repeat urinalysis in a year",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let mut cmd = bin();
    cmd.args(["--backend", &demo_backend(), "--record"]).arg(&session);
    cmd.arg("run").args(&query);
    let recorded = cmd.output().unwrap();
    assert_eq!(
        recorded.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&recorded)
    );
    assert!(session.exists(), "recording must create the session file");

    let mut cmd = bin();
    cmd.args(["replay", "--session"]).arg(&session).args(&query);
    let replayed = cmd.output().unwrap();
    assert_eq!(
        replayed.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&replayed)
    );

    let mut a: serde_json::Value = serde_json::from_str(&stdout_of(&recorded)).unwrap();
    let mut b: serde_json::Value = serde_json::from_str(&stdout_of(&replayed)).unwrap();
    a["elapsed_ms"] = 0.into();
    b["elapsed_ms"] = 0.into();
    assert_eq!(a, b, "replay must reproduce the recorded decision");
}

#[test]
fn config_file_supplies_engine_and_backend() {
    // assets/config.toml documents paths relative to the repository root,
    // so run from there.
    let repo_root = Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf();
    let out = bin()
        .current_dir(&repo_root)
        .args([
            "--config",
            "crates/consilium/assets/config.toml",
            "run",
            "--id",
            "q06",
            "--question",
            "A newborn of a diabetic mother is jittery with a low glucose reading. First action?",
            "--option",
            "A=Feed and recheck glucose",
            "--option",
            "B=Intravenous insulin",
            "--option",
            "C=Observation only",
            "--option",
            "D=Septic workup",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let decision: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(decision["answer"], "A");
}
