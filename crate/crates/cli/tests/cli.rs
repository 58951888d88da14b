use std::fs;
use std::process::Command;

fn lch() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lch"))
}

#[test]
fn generate_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("qa2_2k.jsonl");
    let status = lch()
        .args(["generate", "--task", "qa2", "--tokens", "2k", "--n", "3", "--seed", "4", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("\"question\":\"Where is the"));
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let output = lch()
        .args(["run", "--offline", "oracle", "--task", "qa7,qa10", "--tokens", "1k", "--samples", "2"])
        .args(["--method", "baseline,proposed", "--order", "question_first", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Accuracy: qa7"));
    for f in ["records.csv", "table_baseline.txt", "table_proposed.txt", "heatmap.csv", "heatmap.svg", "transcripts.log", "config.resolved"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert!(!run.join("table_naive_rag.txt").exists());
    let csv = fs::read_to_string(run.join("records.csv")).unwrap();
    // Proposed outputs span several lines; rows start with the task name.
    assert_eq!(csv.lines().filter(|l| l.starts_with("qa")).count(), 2 * 2 * 2);

    let rebuilt = dir.path().join("rebuilt");
    let status = lch()
        .args(["report", "--records"])
        .arg(run.join("records.csv"))
        .arg("--out")
        .arg(&rebuilt)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(run.join("heatmap.svg")).unwrap(),
        fs::read(rebuilt.join("heatmap.svg")).unwrap()
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &config,
        format!(
            "tasks = [\"qa2\"]\ncontext_sizes = [\"1k\"]\nmethods = [\"naive_rag\"]\nsamples_per_cell = 5\noffline = \"oracle\"\nout = {:?}\n",
            out.display().to_string()
        ),
    )
    .unwrap();
    let status = lch().args(["run", "--samples", "2", "--config"]).arg(&config).status().unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_input_fails_cleanly() {
    let status = lch().args(["run", "--offline", "nonsense"]).status().unwrap();
    assert!(!status.success());
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[endpoint]\napi_key = \"sk-should-not-be-here\"\n").unwrap();
    let output = lch().args(["run", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    assert!(!String::from_utf8_lossy(&output.stderr).contains("sk-should-not-be-here"));
}
