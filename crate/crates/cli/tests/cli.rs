use std::process::{Command, Output};

use permcac::permanent::permanent_ryser;
use permcac::stats::{SecondMomentReport, TailReport};
use permcac::verify::{self, Level};
use permcac::{sample, EnsembleSpec};
use permcac_cli::commands::{CacResult, CoeffsResult, CurveResult, ExactResult, VerifyResult};
use permcac_cli::{run, CommandKind, ErrorRecord, Params, Record, RunConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

fn perm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perm")).args(args).output().expect("binary runs")
}

fn perm_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perm"))
        .args(args)
        .env("PERM_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

fn round_trips<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(cfg: RunConfig) {
    let text = run(&cfg).unwrap().record;
    let parsed: Record<T> = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap(), text);
    let again: Record<T> = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(again, parsed);
    assert_eq!(parsed.schema_version, "1");
    assert_eq!(parsed.config, cfg);
}

#[test]
fn exact_example() {
    let out = perm(&["exact", "--n", "6", "--ensemble", "gaussian", "--mu", "0", "--seed", "1"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["config"]["ensemble"]["n"], 6);
    let want = permanent_ryser(&sample(&EnsembleSpec::gaussian(6, 0.0, 1), 0)).unwrap();
    assert_eq!(v["result"]["value"][0].as_f64().unwrap(), want.re);
    assert_eq!(v["result"]["value"][1].as_f64().unwrap(), want.im);
}

#[test]
fn cac_example() {
    let out = perm(&["cac", "--n", "10", "--b", "2", "--beta", "2.71828", "--m", "60", "--path", "auto", "--seed", "5"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let v = json(&out);
    for key in ["f_hat", "g_hat", "exact", "rel_err", "s_trace", "err_budget", "curve_id"] {
        assert!(v["result"].get(key).is_some(), "missing {key}");
    }
    assert!(v["result"]["rel_err"].is_number());
}

#[test]
fn feasible_cac_matches_ryser() {
    let out = perm(&["cac", "--n", "10", "--b", "1", "--m", "1000", "--seed", "5"]);
    let v = json(&out);
    assert_eq!(v["result"]["clear"], true);
    assert!(v["result"]["rel_err"].as_f64().unwrap() < 1e-9);
}

#[test]
fn sweep_rows_per_grid_point_and_trial() {
    let out = perm(&["sweep", "--n", "5", "--b", "1", "--grid", "m=20,40,80", "--repeat", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "m");
    assert_eq!(&headers[1], "trial");
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 12);
    let ms: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(ms.iter().filter(|m| **m == "80").count(), 4);
}

#[test]
fn sweep_writes_record_beside_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let p = path.to_str().unwrap();
    let out = perm(&["sweep", "--n", "4", "--b", "1", "--grid", "m=40", "--repeat", "2", "--output", p]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(p).unwrap().lines().count(), 3);
    let rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(format!("{p}.json")).unwrap()).unwrap();
    assert_eq!(rec["result"]["rows"], 2);
    assert_eq!(rec["config"]["command"], "sweep");
}

#[test]
fn records_round_trip() {
    let ens = EnsembleSpec::gaussian(5, 0.0, 9);
    round_trips::<ExactResult>(RunConfig::new(CommandKind::Exact, ens, Params::default()));
    round_trips::<CoeffsResult>(RunConfig::new(CommandKind::Coeffs, ens, Params::default()));
    round_trips::<CacResult>(RunConfig::new(CommandKind::Cac, ens, Params { b: 1.0, ..Params::default() }));
    round_trips::<CurveResult>(RunConfig::new(CommandKind::Curve, ens, Params { epsilon: 0.09, ..Params::default() }));
    round_trips::<SecondMomentReport>(RunConfig::new(
        CommandKind::StatsMoment,
        ens,
        Params { trials: 50, ..Params::default() },
    ));
    round_trips::<TailReport>(RunConfig::new(CommandKind::StatsTail, ens, Params::default()));
}

#[test]
fn rerun_from_embedded_config_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("moment.json");
    let p = path.to_str().unwrap();
    let first = perm(&["stats", "moment", "--n", "6", "--r", "0.5", "--trials", "100", "--seed", "4", "--output", p]);
    assert!(first.status.success());
    let original: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    let replay = perm(&["run", "--config", p]);
    // the embedded config carries the output path, so the rerun rewrites the same file
    assert!(replay.status.success());
    let rerun: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    assert_eq!(rerun, original);
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["stats", "moment", "--n", "7", "--trials", "64", "--seed", "11"];
    let one = perm_env(&args, "1");
    let many = perm(&[&args[..], &["--threads", "4"]].concat());
    assert_eq!(stdout(&one), stdout(&many));
    let roots = ["roots", "--n", "6", "--trials", "8", "--seed", "2"];
    assert_eq!(stdout(&perm_env(&roots, "1")), stdout(&perm_env(&roots, "3")));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let mut cfg = serde_json::to_value(RunConfig::new(
        CommandKind::Exact,
        EnsembleSpec::gaussian(3, 0.0, 1),
        Params::default(),
    ))
    .unwrap();
    cfg["params"]["betta"] = serde_json::json!(3.0);
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = perm(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: ErrorRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err.error.code, "cli_runner.invalid_config");
    assert!(err.error.message.contains("betta"));
}

#[test]
fn validation_error_exits_2() {
    let out = perm(&["curve", "--epsilon", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let err: ErrorRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err.error.code, "curve_planner.epsilon_out_of_range");
    assert!(err.config.is_some());
    let out = perm(&["cac", "--beta", "2.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = perm(&["bw-demo", "--rate", "one/eight"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn algorithm_error_exits_3() {
    let out = perm(&["cac", "--n", "5", "--path", "straight", "--steps", "50", "--m", "8"]);
    assert_eq!(out.status.code(), Some(3));
    let err: ErrorRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err.error.code, "cac_engine.schedule_underflow");
}

#[test]
fn per_trial_table_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shift.csv");
    let p = path.to_str().unwrap();
    let out = perm(&["stats", "meanshift", "--n", "4", "--mu", "0.2", "--trials", "30", "--per-trial", p]);
    let v = json(&out);
    assert_eq!(v["result"]["aggregate"]["per_trial_path"], p);
    let text = std::fs::read_to_string(p).unwrap();
    assert_eq!(text.lines().next(), Some("trial,value"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn bw_demo_accepts_fraction_rate() {
    let out = perm(&["bw-demo", "--n", "4", "--m", "21", "--rate", "1/8", "--seed", "3"]);
    let v = json(&out);
    assert_eq!(v["config"]["params"]["rate"], 0.125);
    assert_eq!(v["result"]["matches"], true);
    assert_eq!(v["result"]["recovered"], v["result"]["expected"]);
}

#[test]
fn tampered_ryser_fails_a1() {
    let tampered = |a: &permcac::ComplexMatrix| {
        let v = permanent_ryser(a)?;
        Ok(if a.dim() == 5 { -v } else { v })
    };
    let report = VerifyResult::from_results(Level::Fast, vec![verify::oracle_equivalence_with(tampered)]);
    assert!(!report.passed);
    assert_eq!(report.failed, vec!["A1".to_string()]);
    let honest = VerifyResult::from_results(Level::Fast, vec![verify::oracle_equivalence_with(permanent_ryser)]);
    assert!(honest.passed);
}

#[test]
fn fast_verify_passes() {
    let out = perm(&["verify", "--level", "fast"]);
    let v = json(&out);
    let ids: Vec<&str> = v["result"]["results"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["A1", "A2", "A6", "A8"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}
