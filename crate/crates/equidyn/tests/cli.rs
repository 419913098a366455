use std::path::Path;
use std::process::{Command, Output};

use equidyn::formats::{read_trajectory_file, SUMMARY_HEADER, TRAJECTORY_HEADER};

const TOY_RUN: &str = "\
[group]
kind = \"rotation\"
[architecture]
scale = \"toy\"
[flow]
learning_rate = 0.05
epochs = 4
augmentation = \"sampled\"
n_aug = 2
batch_size = 0
repetitions = 2
seed = 3
[data]
source = \"generate\"
[output]
dir = \"OUT\"
checkpoints = true
";

fn equidyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equidyn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, out: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, TOY_RUN.replace("OUT", &out.display().to_string())).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    let help = equidyn(&["run", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("learning_rate"));
    let version = equidyn(&["version"]);
    assert_eq!(version.status.code(), Some(0));
    assert!(stdout(&version).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(equidyn(&["check", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        equidyn(&["counterexample", "--n", "many"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_config_exits_three() {
    let o = equidyn(&["run", "--config", "/nonexistent/equidyn.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[flow]\nlearning_rate = \"fast\"\n").unwrap();
    assert_eq!(
        equidyn(&["run", "--config", path.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn counterexample_prints_four_verdicts() {
    let o = equidyn(&["counterexample", "--n", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let verdicts: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .collect();
    assert_eq!(verdicts.len(), 4, "{out}");
    assert!(verdicts.iter().all(|l| l.starts_with("PASS")));
}

#[test]
fn gradient_suite_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("reports.jsonl");
    let o = equidyn(&[
        "check",
        "--suite",
        "grad",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&report).unwrap();
    let reports: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r["status"] != "Fail"));
}

#[test]
fn toy_run_writes_files_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let cfg = write_config(dir.path(), out);
        let o = equidyn(&["run", "--config", cfg.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for mode in ["nominal", "augmented", "equivariant"] {
        for rep in 0..2 {
            let name = format!("{mode}_rep{rep:03}.csv");
            let a = std::fs::read(out_a.join(&name)).unwrap();
            assert_eq!(a, std::fs::read(out_b.join(&name)).unwrap(), "{name}");
            assert!(String::from_utf8_lossy(&a).starts_with(TRAJECTORY_HEADER));
            let rows = read_trajectory_file(&out_a.join(&name)).unwrap();
            assert_eq!(rows.len(), 5);
            assert_eq!(rows[0].epoch, 0);
            assert_eq!(rows[0].dist_from_init, 0.0);
            if mode == "equivariant" {
                assert!(rows.iter().all(|r| r.dist_from_e <= 1e-8));
            }
        }
        assert!(out_a.join(format!("{mode}_rep000.json")).exists());
    }
    let summary = std::fs::read_to_string(out_a.join("summary.csv")).unwrap();
    assert!(summary.starts_with(SUMMARY_HEADER));
    assert!(std::fs::read_to_string(out_a.join("plot.svg"))
        .unwrap()
        .contains("<svg"));
    assert!(out_a.join("config.toml").exists());

    let spectrum = dir.path().join("spectrum.json");
    let o = equidyn(&[
        "spectrum",
        "--checkpoint",
        out_a.join("augmented_rep000.json").to_str().unwrap(),
        "--output",
        spectrum.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(spectrum.exists());
}

#[test]
fn generated_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("unused"));
    let data = dir.path().join("shapes.json");
    let o = equidyn(&[
        "data",
        "gen",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        data.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let ds = equidyn::formats::load_dataset(&data).unwrap();
    assert_eq!(ds.len(), 12);
    assert_eq!(ds.inputs().cols(), 9);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = equidyn::config::Config::load(&path).unwrap();
            cfg.experiment()
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 4);
}
