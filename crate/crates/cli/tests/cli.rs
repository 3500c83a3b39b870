use std::path::PathBuf;
use std::process::{Command, Output};

fn asset(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/assets")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delayguard")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn rta_exit_codes() {
    let ts = asset("table1.json");
    assert_eq!(run(&["rta", &ts]).status.code(), Some(0));
    assert_eq!(run(&["rta", &ts, "--victim", "2", "--delay", "6"]).status.code(), Some(0));
    assert_eq!(run(&["rta", &ts, "--victim", "2", "--delay", "7"]).status.code(), Some(3));
    assert_eq!(run(&["rta", &ts, "--victim", "2", "--delay", "8"]).status.code(), Some(2));
    assert_eq!(run(&["rta", "does-not-exist.json"]).status.code(), Some(2));
}

#[test]
fn rta_records_carry_per_job_bounds() {
    let o = run(&["rta", &asset("table1.json"), "--victim", "2", "--delay", "3", "--format", "records"]);
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let victim: Vec<_> = rows.iter().filter(|r| r["task"] == 2).collect();
    assert_eq!(victim.len(), 2);
    assert!(victim.iter().all(|r| r["wcrt"] == 4 && r["status"] == "ok"));
}

#[test]
fn peak_delay_csv() {
    let o = run(&["peak-delay", &asset("table2.json"), "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("task,period,wcet,peak_delay"));
    for row in ["1,10,2,8", "2,40,3,35", "3,20,2,13"] {
        assert!(text.lines().any(|l| l == row), "{row} missing in\n{text}");
    }
}

#[test]
fn optimize_writes_reusable_sequence_and_milp() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let lp = dir.path().join("instance.lp");
    let o = run(&[
        "optimize",
        &asset("table2_rm.json"),
        "--victim",
        "3",
        "--max-delay",
        "8",
        "--dump-milp",
        lp.to_str().unwrap(),
        "--out-dir",
        &out,
        "--format",
        "records",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(rec["baseline_overlap"], 45);
    assert_eq!(rec["optimized_overlap"], 18);
    let lp_text = std::fs::read_to_string(lp).unwrap();
    assert!(lp_text.contains("Minimize") && lp_text.contains("Binaries") && lp_text.trim_end().ends_with("End"));

    // the written file feeds straight back into the analysis
    let seq = dir.path().join("delays_3.json");
    let o = run(&["rta", &asset("table2_rm.json"), "--delays", seq.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn optimize_rejects_delay_beyond_peak() {
    let o = run(&["optimize", &asset("table2_rm.json"), "--victim", "3", "--max-delay", "40"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn max_delay_reports_threshold_crossing() {
    let o = run(&[
        "max-delay",
        &asset("table1.json"),
        &asset("table1_plant.json"),
        "--format",
        "records",
    ]);
    assert!(o.status.success());
    let last: serde_json::Value = serde_json::from_str(stdout(&o).lines().last().unwrap()).unwrap();
    assert_eq!(last["max_delay"], 3);
}

#[test]
fn simulate_writes_trace_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let o = run(&[
        "simulate",
        &asset("table2.json"),
        &asset("table2_plants.json"),
        "--case",
        "ii",
        "--horizon",
        "600",
        "--seed",
        "3",
        "--out-dir",
        &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("fdi_hits="));
    let trace = std::fs::read_to_string(dir.path().join("trace.txt")).unwrap();
    assert!(trace.lines().any(|l| l.split_whitespace().nth(1) == Some("fdi_attempt")));
    let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,task,x0,x1,xhat0,xhat1,u0,J_cumulative,g,Th");
}

#[test]
fn simulate_rejects_trusted_attacker() {
    let o = run(&[
        "simulate",
        &asset("table2.json"),
        &asset("table2_plants.json"),
        "--attacker",
        "1",
        "--horizon",
        "100",
        "--out-dir",
        tempfile::tempdir().unwrap().path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_emits_rows_per_range_and_group() {
    let o = run(&["sweep", "--tasks", "5", "--sets-per-range", "4", "--format", "csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 10 * 3);
}

#[test]
fn case_study_reports_four_cases() {
    let o = run(&["case-study", "--format", "records", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let cases: Vec<_> = rows.iter().map(|r| r["case"].as_str().unwrap().to_string()).collect();
    assert_eq!(cases, ["i", "ii", "iii", "iv"]);
    assert_eq!(rows[0]["fdi_hits"], 0);
}

#[test]
fn bad_case_is_a_usage_error() {
    let o = run(&["simulate", &asset("table2.json"), &asset("table2_plants.json"), "--case", "v"]);
    assert_eq!(o.status.code(), Some(2));
}
