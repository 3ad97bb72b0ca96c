use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rwresnet");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stderr_last(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or("").to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_defaults() {
    let o = run(&["train", "--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[default: 128000]"), "{text}");
    assert!(text.contains("--checkpoint-dir"));
}

#[test]
fn usage_errors_exit_1() {
    for args in [&["train", "--epochz", "3"][..], &[], &["train", "--cg", "3", "--synth", "2"]] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr_last(&o).starts_with("ERROR 1 "), "{}", stderr_last(&o));
    }
}

#[test]
fn missing_inputs_exit_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck");
    let o = run(&["train", "--train-protocol", "/no/such/protocol", "--audio-root", s(dir.path()), "--checkpoint-dir", s(&ck)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!ck.exists());
}

#[test]
fn empty_synth_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let o = run(&["synth-data", "--n", "0", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr_last(&o));
    assert_eq!(std::fs::read_to_string(out.join("protocol.txt")).unwrap(), "");
    let o = run(&["synth-data", "--n", "1", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(1), "a populated directory is refused");

    let fresh = dir.path().join("fresh");
    std::fs::create_dir(&fresh).unwrap();
    let o = run(&["synth-data", "--n", "1", "--out-dir", s(&fresh)]);
    assert!(o.status.success(), "an empty directory may be used: {}", stderr_last(&o));
    assert!(fresh.join("protocol.txt").is_file());
}

fn write_eval_inputs(dir: &Path, swap: bool) -> (String, String) {
    let protocol = dir.join("protocol.txt");
    let scores = dir.join("scores.txt");
    let mut p = String::new();
    let mut sc = String::new();
    for i in 0..4 {
        let (label, score) = if i < 2 { ("bonafide", 2.0 + i as f64) } else { ("spoof", -1.0 - i as f64) };
        p.push_str(&format!("SPK U{i} - - {label}\n"));
        sc.push_str(&format!("U{i} {:.6}\n", if swap { -score } else { score }));
    }
    std::fs::write(&protocol, p).unwrap();
    std::fs::write(&scores, sc).unwrap();
    (s(&protocol).to_string(), s(&scores).to_string())
}

#[test]
fn eval_reports_percent() {
    let dir = tempfile::tempdir().unwrap();
    let (p, sc) = write_eval_inputs(dir.path(), false);
    let o = run(&["eval", "--scores", &sc, "--protocol", &p]);
    assert!(o.status.success(), "{}", stderr_last(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("eer,0.000000")), "{text}");

    let (p, sc) = write_eval_inputs(dir.path(), true);
    let o = run(&["eval", "--scores", &sc, "--protocol", &p]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("eer,100.000000")), "{text}");
}

#[test]
fn eval_with_missing_scores_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (p, sc) = write_eval_inputs(dir.path(), false);
    let text = std::fs::read_to_string(&sc).unwrap();
    std::fs::write(&sc, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    let o = run(&["eval", "--scores", &sc, "--protocol", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_last(&o).contains("U0"), "{}", stderr_last(&o));
}

#[test]
fn train_score_eval_and_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(run(&["synth-data", "--n", "3", "--length", "3200", "--out-dir", s(&data)]).status.success());
    let protocol = data.join("protocol.txt");
    let ck = dir.path().join("ck");
    let cfg = dir.path().join("train.cfg");
    std::fs::write(&cfg, "preset=S\ncg=2\ninput_len=3200\nepochs=2\nbatch=3\n").unwrap();
    let o = run(&[
        "train", "--config", s(&cfg), "--train-protocol", s(&protocol), "--audio-root", s(&data),
        "--checkpoint-dir", s(&ck),
    ]);
    assert!(o.status.success(), "{}", stderr_last(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("best_checkpoint="), "{stdout}");
    let effective = std::fs::read_to_string(ck.join("run.cfg")).unwrap();
    assert!(effective.contains("epochs=2") && effective.contains("preset=S"), "{effective}");

    let scores = dir.path().join("scores.txt");
    let o = run(&[
        "score", "--checkpoint", s(&ck.join("best.ckpt")), "--protocol", s(&protocol), "--audio-root", s(&data),
        "--output", s(&scores),
    ]);
    assert!(o.status.success(), "{}", stderr_last(&o));
    assert_eq!(std::fs::read_to_string(&scores).unwrap().lines().count(), 6);
    let o = run(&["eval", "--scores", s(&scores), "--protocol", s(&protocol)]);
    assert!(o.status.success(), "{}", stderr_last(&o));

    let bytes = std::fs::read(ck.join("best.ckpt")).unwrap();
    let broken = dir.path().join("broken.ckpt");
    std::fs::write(&broken, &bytes[..bytes.len() / 2]).unwrap();
    let out = dir.path().join("never.txt");
    let o = run(&[
        "score", "--checkpoint", s(&broken), "--protocol", s(&protocol), "--audio-root", s(&data),
        "--output", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}
