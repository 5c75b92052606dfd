use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_winne");

/// Flags that shrink training and tournaments to a few seconds.
const SMALL: &[&str] = &[
    "--set",
    "runs=1",
    "--set",
    "tournaments=1",
    "--set",
    "roster_size=8",
    "--set",
    "training.vs_naive_games=10",
    "--set",
    "training.self_play_games=10",
    "--set",
    "training.self_play_generations=1",
];

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, output_root: &str, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .env("WINNE_OUTPUT_ROOT", self.path().join(output_root))
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The run directory a successful command printed last.
fn run_dir(o: &Output) -> PathBuf {
    assert!(o.status.success(), "stderr: {}", stderr(o));
    PathBuf::from(stdout(o).lines().last().expect("run directory printed"))
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = base.to_vec();
    v.extend_from_slice(extra);
    v
}

#[test]
fn minimal_config_produces_a_complete_run_directory() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "min.toml",
        "env = \"duel\"\nexperiment = \"benchmark\"\nseed = 1\n",
    );
    let cfg = cfg.to_str().unwrap();
    let out = sb.run("runs", &with(&["run", "-c", cfg], SMALL));
    let dir = run_dir(&out);
    assert!(dir.starts_with(sb.path().join("runs")));
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["seed"], 1);
    assert_eq!(config["env"], "duel");
    assert_eq!(
        config["opponents"],
        serde_json::json!(["naive-greedy", "naive-random"])
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["build"].as_str().is_some_and(|b| !b.is_empty()));
    let csv = fs::read_to_string(dir.join("benchmark.csv")).unwrap();
    assert!(csv.starts_with("run,tournament,phase,game,agent,opponents,metric,value\n"));
    assert!(!csv.contains('\r'));
}

#[test]
fn unknown_keys_are_configuration_errors() {
    let sb = Sandbox::new();
    let cfg = sb.config("bad.toml", "env = \"duel\"\nseed = 1\ngama = 0.9\n");
    let out = sb.run("runs", &["exp-benchmark", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gama"), "{}", stderr(&out));
    let missing = sb.config("missing.toml", "env = \"duel\"\n");
    let out = sb.run("runs", &["exp-benchmark", "-c", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
    assert!(!sb.path().join("runs").exists());
}

#[test]
fn flags_override_the_file() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.toml", "env = \"duel\"\nseed = 1\n");
    let out = sb.run(
        "runs",
        &with(
            &["exp-benchmark", "-c", cfg.to_str().unwrap(), "--seed", "7"],
            SMALL,
        ),
    );
    let dir = run_dir(&out);
    assert!(
        dir.ends_with("exp-benchmark-duel-seed7"),
        "{}",
        dir.display()
    );
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["seed"], 7);
    assert_eq!(config["runs"], 1);
}

#[test]
fn tampered_transcripts_name_the_diverging_turn() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "c.toml",
        "env = \"duel\"\nseed = 3\nroster = []\nroster_size = 2\nrecord_transcripts = true\n",
    );
    let out = sb.run("runs", &["tournament", "-c", cfg.to_str().unwrap()]);
    let transcript = run_dir(&out).join("transcripts/game-000.jsonl");
    let ok = sb.run("runs", &["replay-verify", transcript.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("turns verified"));

    let text = fs::read_to_string(&transcript).unwrap();
    let mut lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let event = lines
        .iter_mut()
        .find(|e| e["turn"] == 2 && e["player"] == 0)
        .expect("the game reaches turn 2");
    let action = event["action_id"].as_u64().unwrap();
    event["action_id"] = ((action + 1) % 6).into();
    let tampered: String = lines.iter().map(|l| format!("{l}\n")).collect();
    let bad = sb.config("tampered.jsonl", &tampered);
    let out = sb.run("runs", &["replay-verify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("turn 2"), "{}", stderr(&out));
}

#[test]
fn retention_writes_one_row_per_type_and_cycle() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "r.toml",
        "env = \"duel\"\nseed = 5\nopponents = [\"naive-random\", \"naive-greedy\", \"ppo-ofvn\"]\ncycles = 3\nblock = 2\n",
    );
    let out = sb.run(
        "runs",
        &with(&["exp-retention", "-c", cfg.to_str().unwrap()], SMALL),
    );
    let dir = run_dir(&out);
    let csv = fs::read_to_string(dir.join("retention.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(dir.join("bundle/manifest.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let sb = Sandbox::new();
    let cfg = sb.config("c.toml", "env = \"duel\"\nseed = 11\n");
    let cfg = cfg.to_str().unwrap();
    let a = run_dir(&sb.run("a", &with(&["exp-benchmark", "-c", cfg], SMALL)));
    let b = run_dir(&sb.run("b", &with(&["exp-benchmark", "-c", cfg], SMALL)));
    for name in [
        "benchmark.csv",
        "benchmark_summary.csv",
        "config.json",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn gradcheck_passes_quickly() {
    let sb = Sandbox::new();
    let started = Instant::now();
    let out = sb.run("runs", &["gradcheck"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(started.elapsed().as_secs() < 60);
    let report = stdout(&out);
    assert!(report.contains("max relative error"));
    assert!(report.contains("worst"));
}

#[test]
fn usage_errors_exit_with_two() {
    let sb = Sandbox::new();
    assert_eq!(sb.run("runs", &["no-such-command"]).status.code(), Some(2));
    assert!(sb.run("runs", &["--help"]).status.success());
}
