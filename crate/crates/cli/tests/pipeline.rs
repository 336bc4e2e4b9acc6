use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMOKE: &str = r#"
seed = 11

[sampler]
n_chains = 2
n_iterations = 300
n_warmup = 150

[simulation]
n_draws = 30
mode = "own_player"

[train]
iterations = 50
min_samples_leaf = 5
folds = 2

[evaluate]
min_plays = 1

[report]
plays = 3

[diagnostics]
fail_on_breach = false

[synth]
n_plays = 20
"#;

fn stepturn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepturn"))
        .args(["--config", "smoke.toml", "--out", "run"])
        .args(args)
        .current_dir(dir)
        .env_remove("STEPTURN_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("smoke.toml"), config).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn smoke_run_emits_leaderboards_and_reruns_are_skipped() {
    let ws = workspace(SMOKE);
    let first = stepturn(ws.path(), &["run"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(stdout(&first).matches("Ran").count(), 11, "{}", stdout(&first));

    let run = ws.path().join("run");
    for name in ["yards_success_rate", "explosiveness", "accumulated_delta_per_play"] {
        let text = fs::read_to_string(run.join(format!("leaderboard/{name}.tsv"))).unwrap();
        assert!(text.starts_with("rank\tplayer_id\tteam\tplays\t"));
        assert!(text.lines().count() > 1, "{name} leaderboard is empty");
    }
    for name in ["carrier_step_effect", "carrier_turn_effect", "defense_step_effect"] {
        assert!(run.join(format!("leaderboard/{name}.tsv")).is_file());
    }
    assert!(run.join("run_manifest.json").is_file());
    assert!(fs::read_dir(run.join("report")).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    let second = stepturn(ws.path(), &["run"]);
    assert!(second.status.success());
    assert_eq!(stdout(&second).matches("Skipped").count(), 11, "{}", stdout(&second));

    // a tampered output forces that stage, and only that stage, to rerun
    fs::write(run.join("leaderboard/explosiveness.tsv"), "edited").unwrap();
    let third = stepturn(ws.path(), &["run"]);
    assert!(third.status.success());
    assert_eq!(stdout(&third).matches("Ran").count(), 1, "{}", stdout(&third));
}

#[test]
fn report_regenerates_identical_figures() {
    let ws = workspace(SMOKE);
    assert!(stepturn(ws.path(), &["run"]).status.success());
    let report = ws.path().join("run/report");
    let before: Vec<(String, Vec<u8>)> = svgs(&report);
    assert!(!before.is_empty());
    let again = stepturn(ws.path(), &["report", "--force"]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert!(stdout(&again).contains("Ran"));
    assert_eq!(svgs(&report), before);
}

fn svgs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn short_chains_fail_diagnostics() {
    let ws = workspace(&SMOKE.replace("fail_on_breach = false", "fail_on_breach = true"));
    let out = stepturn(ws.path(), &["run"]);
    assert_eq!(out.status.code(), Some(6), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diagnostics"));
    assert!(!ws.path().join("run/simulate").exists());

    let lenient = stepturn(ws.path(), &["diagnose", "--no-fail-on-diagnostics"]);
    assert!(lenient.status.success(), "{}", String::from_utf8_lossy(&lenient.stderr));
}

#[test]
fn missing_upstream_and_missing_seed_have_their_own_exit_codes() {
    let ws = workspace(SMOKE);
    let out = stepturn(ws.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(ws.path().join("smoke.toml"), SMOKE.replace("seed = 11", "")).unwrap();
    let out = stepturn(ws.path(), &["fit", "step"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let out = stepturn(ws.path(), &["fit", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn jobs_do_not_change_results() {
    let ws = workspace(SMOKE);
    assert!(stepturn(ws.path(), &["run", "--jobs", "1"]).status.success());
    fs::rename(ws.path().join("run"), ws.path().join("one")).unwrap();
    assert!(stepturn(ws.path(), &["run", "--jobs", "3"]).status.success());
    for part in ["fit_step/draws/draws.f64", "fit_turn/draws/draws.f64", "evaluate/evaluations.json", "leaderboard/yards_success_rate.tsv"] {
        assert_eq!(fs::read(ws.path().join("one").join(part)).unwrap(), fs::read(ws.path().join("run").join(part)).unwrap(), "{part}");
    }
}
