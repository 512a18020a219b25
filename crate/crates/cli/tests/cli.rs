use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use memprobe_core::modelclient::MemoryProfile;

fn memprobe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memprobe"))
        .args(args)
        .current_dir(cwd)
        .env("MEMPROBE_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&memprobe(&["--help"], dir.path())), 0);
    assert_eq!(code(&memprobe(&["--version"], dir.path())), 0);
    assert_eq!(code(&memprobe(&[], dir.path())), 1);
    assert_eq!(code(&memprobe(&["frobnicate"], dir.path())), 1);
    let o = memprobe(&["run"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    let o = memprobe(&["simulate", "--scenario", "bogus", "--seed", "1", "--out", "x"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn missing_scores_is_a_stage_failure_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = memprobe(
        &["analyze", "--scores", "nowhere/scores.csv", "--corpus", "c.jsonl", "--out", "a"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere/scores.csv"), "{}", stderr(&o));
}

#[test]
fn simulate_then_rerun_from_written_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = memprobe(&["simulate", "--scenario", "null", "--seed", "4", "--models", "1", "--out", "sim"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).matches(" ran ").count(), 6, "{}", stdout(&o));
    assert!(dir.path().join("sim/report/summary.txt").is_file());

    let o = memprobe(&["--config", "sim/run.toml", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("up to date").count(), 6, "{}", stdout(&o));

    // Edited upstream artifact: stale.
    let scores = dir.path().join("sim/grades/scores.csv");
    let mut text = fs::read_to_string(&scores).unwrap();
    text.push('\n');
    fs::write(&scores, text).unwrap();
    let o = memprobe(&["--config", "sim/run.toml", "run", "--stages", "analyze"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("scores.csv"));
}

#[test]
fn stage_commands_chain_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = memprobe(&["ingest", "--summary", "--out", "corpus"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["n_papers"], 549);

    let o = memprobe(
        &["gen-probes", "--corpus", "corpus/corpus.jsonl", "--per-type", "2", "--seed", "3", "--out", "probes"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let mut profile = MemoryProfile::new(0.2, 0.03, 0.15, 0.05, 9);
    profile.affinity_sd = 0.05;
    fs::write(d.join("profile.json"), serde_json::to_string(&profile).unwrap()).unwrap();
    let o = memprobe(
        &[
            "evaluate", "--probes", "probes", "--model", "Qwen2.5-7B-Instruct", "--mock", "profile.json", "--corpus",
            "corpus/corpus.jsonl", "--out", "responses",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let log = d.join("responses/Qwen2.5-7B-Instruct.jsonl");
    let first = fs::read(&log).unwrap();
    // Resuming a complete log queries nothing and leaves it untouched.
    let o = memprobe(
        &[
            "evaluate", "--probes", "probes", "--model", "Qwen2.5-7B-Instruct", "--mock", "profile.json", "--corpus",
            "corpus/corpus.jsonl", "--out", "responses",
        ],
        d,
    );
    assert!(stdout(&o).contains(" 0 queried"), "{}", stdout(&o));
    assert_eq!(fs::read(&log).unwrap(), first);

    let o = memprobe(&["grade", "--responses", "responses", "--probes", "probes", "--out", "grades"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = memprobe(
        &[
            "analyze", "--scores", "grades/scores.csv", "--corpus", "corpus/corpus.jsonl", "--bins", "strata7",
            "--sidedness", "two-sided", "--bonferroni-tests", "1", "--out", "analysis",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = memprobe(&["report", "--analysis", "analysis", "--out", "report"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = fs::read_to_string(d.join("report/summary.txt")).unwrap();
    assert!(summary.contains("Qwen2.5-7B-Instruct"));
    assert!(summary.contains("(two-sided)"), "{summary}");
}

#[test]
fn evaluate_needs_a_target_and_a_known_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = memprobe(&["evaluate", "--probes", "p", "--model", "m"], dir.path());
    assert_eq!(code(&o), 1);
    let o = memprobe(&["evaluate", "--probes", "p", "--model", "no-such", "--endpoint", "http://127.0.0.1:9"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no-such"));
}

#[test]
fn two_runs_produce_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = memprobe(
            &["run", "--seed", "5", "--output-root", out, "--select", "Llama-3.2-3B-Instruct,gemma-2-9b-it"],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let list = |root: &Path| {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(p) = stack.pop() {
            for e in fs::read_dir(&p).unwrap() {
                let path = e.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        files
    };
    let (a, b) = (list(&dir.path().join("a")), list(&dir.path().join("b")));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}
