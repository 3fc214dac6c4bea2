use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use slotedit_core::metrics::DialogueLog;
use slotedit_core::nlu::{BioLabel, Category, CorpusRecord};
use slotedit_core::{DialogueAct, Image, RuleTagger};
use slotedit_server::commands::{score_corpus, EngineOptions};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn slotedit() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slotedit"));
    // keep the ambient environment from leaking into flag defaults
    for (key, _) in std::env::vars() {
        if key.starts_with("SLOTEDIT_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn corpus_generation_and_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("synthetic.jsonl");
    run(slotedit().args(["gen-corpus", "--n", "200", "--seed", "9", "--scenes"]).arg(fixtures_dir()).arg("--out").arg(&corpus));
    let text = fs::read_to_string(&corpus).unwrap();
    assert_eq!(text.lines().count(), 200);

    let out = run(slotedit().args(["eval", "nlu", "--corpus"]).arg(&corpus));
    let table = String::from_utf8(out.stdout).unwrap();
    let mut lines = table.lines();
    let header = lines.next().unwrap();
    for col in ["ACTION", "ATTRIBUTE", "REFER", "VALUE", "Mean"] {
        assert!(header.contains(col), "{header}");
    }
    let row = lines.next().unwrap();
    assert!(row.starts_with("synthetic"));
    assert_eq!(row.matches("100.00").count(), 5, "{row}");

    // same seed, same bytes
    let again = dir.path().join("again.jsonl");
    run(slotedit().args(["gen-corpus", "--n", "200", "--seed", "9", "--scenes"]).arg(fixtures_dir()).arg("--out").arg(&again));
    assert_eq!(fs::read(&corpus).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn corpus_from_single_scene_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("farm.jsonl");
    run(slotedit().args(["gen-corpus", "--n", "5", "--scenes"]).arg(fixtures_dir().join("farm")).arg("--out").arg(&out));
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 5);
}

#[test]
fn scoring_rejects_misaligned_records() {
    let good = CorpusRecord {
        text: "brighten the sky".into(),
        tokens: vec!["brighten".into(), "the".into(), "sky".into()],
        labels: vec![BioLabel::Begin(Category::Action), BioLabel::Begin(Category::Refer), BioLabel::Inside(Category::Refer)],
    };
    score_corpus(std::slice::from_ref(&good), &RuleTagger).unwrap();
    let mut bad = good.clone();
    bad.tokens.pop();
    assert!(score_corpus(&[bad], &RuleTagger).is_err());
    let mut short = good;
    short.labels.pop();
    assert!(score_corpus(&[short], &RuleTagger).is_err());
}

#[test]
fn replay_and_evaluate_with_env_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    fs::create_dir(&logs).unwrap();
    let script = dir.path().join("walkthrough.txt");
    fs::write(&script, "# farm walkthrough\nthe big cow\nyes\n\nsaturation\n-30\nmake the barn darker\nno\n").unwrap();
    let log_path = logs.join("walkthrough.jsonl");
    let png = dir.path().join("final.png");

    run(slotedit()
        .env("SLOTEDIT_FIXTURES", fixtures_dir())
        .env("SLOTEDIT_IMAGE", "farm")
        .args(["replay", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(&log_path)
        .arg("--image-out")
        .arg(&png));
    let log = DialogueLog::load(&log_path).unwrap();
    assert_eq!(log.session_id, "walkthrough");
    assert_eq!(log.user_utterances().count(), 6);
    assert_eq!((log.query_count, log.execute_count), (2, 1));
    let edited = Image::load_png(&png).unwrap();
    assert_eq!(edited.width(), 64);

    // stdout variant writes the same records
    let out = run(slotedit()
        .args(["replay", "--image", "farm", "--script"])
        .arg(&script)
        .arg("--fixtures")
        .arg(fixtures_dir()));
    let streamed = DialogueLog::read_jsonl(out.stdout.as_slice()).unwrap();
    assert_eq!(streamed.records.len(), log.records.len());

    let out = run(slotedit().env("SLOTEDIT_LOGS", &logs).args(["eval", "dialogues"]));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("vision accuracy (mean over 1 defined): 0.5000"), "{report}");
    let json_start = report.find('{').unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report[json_start..]).unwrap();
    assert_eq!(parsed["mean_vision_accuracy"], 0.5);
}

#[test]
fn max_turns_flag_ends_replay() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("s.txt");
    fs::write(&script, "the sky\nyes\nhue\n10\n").unwrap();
    let out = run(slotedit()
        .env("SLOTEDIT_MAX_TURNS", "2")
        .args(["replay", "--image", "farm", "--script"])
        .arg(&script)
        .arg("--fixtures")
        .arg(fixtures_dir()));
    let log = DialogueLog::read_jsonl(out.stdout.as_slice()).unwrap();
    assert_eq!(log.user_utterances().collect::<Vec<_>>(), ["the sky", "yes"]);
    assert!(log.records.last().unwrap().text.contains("end of this session"));
}

#[test]
fn chat_reads_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = slotedit()
        .args(["chat", "--image", "beach", "--fixtures"])
        .arg(fixtures_dir())
        .arg("--logs")
        .arg(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"increase lightness of the dog by 25\nyes\n/quit\nnever read\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("system: ")).count(), 3);
    assert!(text.contains("[applied lightness +25 to the dog]"), "{text}");

    let saved: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(saved.len(), 1);
    let log = DialogueLog::load(&saved[0]).unwrap();
    assert!(log.records.iter().any(|r| r.acts.contains(&DialogueAct::Execute)));
}

#[test]
fn bad_invocations_fail() {
    let out = slotedit().args(["replay", "--image", "moon", "--script", "nope.txt", "--fixtures"]).arg(fixtures_dir()).output().unwrap();
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("s.txt");
    fs::write(&script, "hello\n").unwrap();
    let out = slotedit()
        .args(["replay", "--image", "moon", "--script"])
        .arg(&script)
        .arg("--fixtures")
        .arg(fixtures_dir())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown image `moon`"));

    let opts = EngineOptions { threshold: Some(1.5), ..Default::default() };
    assert!(opts.session_config().is_err());
    let templates = dir.path().join("t.txt");
    fs::write(&templates, "request_value=How much?\n").unwrap();
    let opts = EngineOptions { templates: Some(templates), ..Default::default() };
    assert!(opts.session_config().is_err());

    let out = slotedit().arg("serve").output().unwrap();
    assert!(!out.status.success(), "serve without --fixtures must fail");
}
