use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vlcorpus"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_lines(p: &Path) -> Vec<Value> {
    fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn report(p: &Path) -> Value {
    let r: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
    let drops: u64 = r["drops"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(
        r["records_in"].as_u64().unwrap(),
        r["records_kept"].as_u64().unwrap() + drops + r["errors"].as_u64().unwrap(),
        "unbalanced report {r}"
    );
    r
}

fn pair(id: &str, text: &str) -> String {
    serde_json::json!({
        "id": id, "dataset": "laion-en", "image_width": 640, "image_height": 480,
        "text": text, "language": "en", "clip_score": 0.4, "image_key": format!("{id}.jpg")
    })
    .to_string()
}

#[test]
fn clean_counts_drops_by_rule() {
    let dir = TempDir::new().unwrap();
    let input = [pair("a", "a dog on the beach"), pair("b", "\u{1F642} nice"), pair("c", "two cats &amp; a <b>mouse</b>")]
        .join("\n");
    let input = write(&dir, "in.jsonl", &input);
    let (out, verdicts, rep) = (dir.path().join("out.jsonl"), dir.path().join("v.jsonl"), dir.path().join("r.json"));
    ok(&["clean", "--input", s(&input), "--output", s(&out), "--verdicts", s(&verdicts), "--report", s(&rep)]);

    let r = report(&rep);
    assert_eq!(r["records_kept"], 2);
    assert_eq!(r["drops"], serde_json::json!({"R5_emoji": 1}));
    let kept = json_lines(&out);
    assert_eq!(kept.len(), 2);
    assert_eq!(kept[1]["text"], "two cats & a mouse");
    let v = json_lines(&verdicts);
    assert_eq!(v[1], serde_json::json!({"id": "b", "decision": "drop", "rule_id": "R5_emoji", "detail": "emoji U+1F642"}));
    assert_eq!(v[0]["decision"], "keep");
    assert_eq!(v[0]["rule_id"], Value::Null);
}

#[test]
fn clean_empty_and_malformed_inputs() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.jsonl", "");
    let (out, rep) = (dir.path().join("out.jsonl"), dir.path().join("r.json"));
    ok(&["clean", "--input", s(&empty), "--output", s(&out), "--report", s(&rep)]);
    let r = report(&rep);
    assert_eq!((r["records_in"].as_u64(), r["records_kept"].as_u64()), (Some(0), Some(0)));
    assert_eq!(r["drops"], serde_json::json!({}));

    let mixed = write(&dir, "mixed.jsonl", &format!("{}\n{{not json\n{}\n", pair("a", "a dog on a log"), pair("b", "a frog on a log")));
    ok(&["clean", "--input", s(&mixed), "--output", s(&out), "--report", s(&rep)]);
    let r = report(&rep);
    assert_eq!(r["records_kept"], 2);
    assert_eq!(r["errors"], 1);
    assert!(r["error_samples"][0].as_str().unwrap().contains("mixed.jsonl:2"));
}

#[test]
fn clean_document_kinds_diverge() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", &pair("d", "the word m\u{0101}ori appears here"));
    let out = dir.path().join("out.jsonl");
    for (kind, kept) in [("pdf", 0), ("html", 1)] {
        ok(&["clean", "--kind", kind, "--input", s(&input), "--output", s(&out)]);
        assert_eq!(json_lines(&out).len(), kept, "{kind}");
    }
}

#[test]
fn build_task_mask_matches_span_oracle() {
    let dir = TempDir::new().unwrap();
    let line = r#"{"id": "cap-1", "task": "caption", "image": "cc3m/01581435.jpg", "caption": "the beautiful flowers for design."}"#;
    let input = write(&dir, "in.jsonl", line);
    let out = dir.path().join("out.jsonl");
    ok(&["build-task", "--input", s(&input), "--output", s(&out)]);
    let recs = json_lines(&out);
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    let golden = fs::read_to_string(Path::new(FIXTURES).join("multitask_formats.txt")).unwrap();
    assert_eq!(r["text"], golden.lines().next().unwrap());
    // byte tokens for the caption plus one <eos> token
    let supervised = r["token_mask"].as_array().unwrap().iter().filter(|m| m.as_bool().unwrap()).count();
    assert_eq!(supervised, "the beautiful flowers for design.".len() + 1);
    assert_eq!(r["token_ids"].as_array().unwrap().len(), r["token_mask"].as_array().unwrap().len());
    // <img> + 17 bytes + </img> are excluded
    assert_eq!(r["token_len"].as_u64().unwrap() as usize, r["token_ids"].as_array().unwrap().len() - 19);
    assert_eq!(r["n_images"], 1);
}

#[test]
fn build_chat_golden_and_empty() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.jsonl");
    let input = Path::new(FIXTURES).join("chatml_dialogue.jsonl");
    ok(&["build-chat", "--input", s(&input), "--output", s(&out)]);
    let recs = json_lines(&out);
    let golden = fs::read_to_string(Path::new(FIXTURES).join("chatml_dialogue.txt")).unwrap();
    assert_eq!(recs[0]["text"], golden);
    assert_eq!(recs[0]["id"], "dialogue-1");

    let empty = write(&dir, "empty.jsonl", "\n");
    ok(&["build-chat", "--input", s(&empty), "--output", s(&out)]);
    assert!(fs::read_to_string(&out).unwrap().is_empty());
}

fn sample(id: &str, task: &str, len: usize) -> String {
    serde_json::json!({"id": id, "task": task, "token_len": len}).to_string()
}

#[test]
fn pack_examples_end_to_end() {
    let dir = TempDir::new().unwrap();
    let (out, rep) = (dir.path().join("out.jsonl"), dir.path().join("r.json"));

    let input = write(&dir, "a.jsonl", &[sample("a", "t", 1000), sample("b", "t", 1000), sample("c", "t", 100)].join("\n"));
    ok(&["pack", "--input", s(&input), "--output", s(&out), "--report", s(&rep)]);
    let seqs = json_lines(&out);
    assert_eq!(seqs[0]["sample_ids"], serde_json::json!(["a", "b"]));
    assert_eq!(seqs[1]["sample_ids"], serde_json::json!(["c"]));
    let r = report(&rep);
    assert_eq!(r["sequences_out"], 2);
    assert!((r["mean_fill"].as_f64().unwrap() - 2100.0 / 4096.0).abs() < 1e-12);

    let input = write(&dir, "b.jsonl", &sample("big", "t", 2049));
    ok(&["pack", "--input", s(&input), "--output", s(&out), "--report", s(&rep)]);
    assert!(json_lines(&out).is_empty());
    assert_eq!(report(&rep)["drops"], serde_json::json!({"oversize": 1}));

    let mixed: Vec<String> = (0..8).map(|i| sample(&format!("s{i}"), if i % 2 == 0 { "A" } else { "B" }, 300)).collect();
    let input = write(&dir, "c.jsonl", &mixed.join("\n"));
    ok(&["pack", "--input", s(&input), "--output", s(&out)]);
    for seq in json_lines(&out) {
        let task = seq["task"].as_str().unwrap();
        for id in seq["sample_ids"].as_array().unwrap() {
            let n: usize = id.as_str().unwrap()[1..].parse().unwrap();
            assert_eq!(task, if n % 2 == 0 { "A" } else { "B" });
        }
    }

    let stats_out = dir.path().join("stats.json");
    let packed = dir.path().join("packed.jsonl");
    let input = write(&dir, "d.jsonl", &[sample("a", "t", 1000), sample("b", "t", 1000), sample("c", "t", 100)].join("\n"));
    ok(&["pack", "--input", s(&input), "--output", s(&packed)]);
    ok(&["stats", "--input", s(&packed), "--output", s(&stats_out)]);
    let stats: Value = serde_json::from_str(&fs::read_to_string(&stats_out).unwrap()).unwrap();
    assert_eq!(stats["sequences"], 2);
    assert_eq!(stats["per_task"]["t"]["tokens"], 2100);
}

#[test]
fn build_then_pack_counts_images() {
    let dir = TempDir::new().unwrap();
    let built = dir.path().join("built.jsonl");
    let packed = dir.path().join("packed.jsonl");
    let input = Path::new(FIXTURES).join("chatml_dialogue.jsonl");
    ok(&["build-chat", "--input", s(&input), "--output", s(&built)]);
    ok(&["pack", "--input", s(&built), "--output", s(&packed)]);
    let rec = &json_lines(&built)[0];
    let seq = &json_lines(&packed)[0];
    assert_eq!(seq["total_len"].as_u64().unwrap(), rec["token_len"].as_u64().unwrap() + 258);
}

/// A few thousand records mixing keeps, drops and malformed lines.
fn big_corpus() -> String {
    let texts = ["a dog on the beach", "\u{1F600} wow", "tiny", "caf\u{e9} &nbsp; menu", "<PERSON> at the park", "click here now"];
    (0..6000)
        .map(|i| if i % 997 == 0 { "{oops".to_string() } else { pair(&format!("r{i}"), texts[i % texts.len()]) })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn outputs_are_deterministic_and_worker_independent() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", &big_corpus());
    let config = write(&dir, "cfg.json", r#"{"filters": {"banned_patterns": ["click here*"]}}"#);
    let mut seen: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for (run, workers) in ["1", "1", "4", "7"].iter().enumerate() {
        let out = dir.path().join(format!("out{run}.jsonl"));
        let v = dir.path().join(format!("v{run}.jsonl"));
        let rep = dir.path().join(format!("r{run}.json"));
        ok(&[
            "clean", "--input", s(&input), "--output", s(&out), "--verdicts", s(&v), "--report", s(&rep),
            "--config", s(&config), "--workers", workers,
        ]);
        let r = report(&rep);
        assert_eq!(r["records_in"], 6000);
        assert_eq!(r["errors"], 7);
        assert_eq!(r["drops"]["R8_pattern"], 999);
        assert_eq!(r["drops"]["T_special_tag"], 999);
        seen.push((fs::read(&out).unwrap(), fs::read(&v).unwrap()));
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.jsonl", &pair("a", "a dog"));
    let out = dir.path().join("out.jsonl");

    let missing = dir.path().join("missing.jsonl");
    assert_eq!(run(&["clean", "--input", s(&missing), "--output", s(&out)]).status.code(), Some(2));
    assert!(!out.exists());
    let bad = write(&dir, "bad.json", r#"{"filters": {"min_chars": 10, "max_chars": 5}}"#);
    assert_eq!(run(&["clean", "--input", s(&input), "--output", s(&out), "--config", s(&bad)]).status.code(), Some(1));
    let unknown = write(&dir, "unknown.json", r#"{"filtres": {}}"#);
    assert_eq!(run(&["clean", "--input", s(&input), "--output", s(&out), "--config", s(&unknown)]).status.code(), Some(1));
    assert_eq!(run(&["clean", "--input", s(&input), "--output", s(&input)]).status.code(), Some(1));
    assert_eq!(run(&["clean", "--input", s(&input), "--output", s(&out), "--workers", "0"]).status.code(), Some(1));
    assert_eq!(run(&["lr-curve", "--stage", "warmup"]).status.code(), Some(1));
    assert_eq!(run(&["clean", "--input", s(&input)]).status.code(), Some(1));
    let dir_as_output = dir.path().to_path_buf();
    assert_eq!(run(&["clean", "--input", s(&input), "--output", s(&dir_as_output)]).status.code(), Some(2));
}

#[test]
fn lr_curve_csv() {
    let out = ok(&["lr-curve", "--stage", "pretrain"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "step,lr");
    assert_eq!(rows.len(), 50_002);
    let lr = |step: usize| rows[step + 1].split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert_eq!(lr(0), 0.0);
    assert!((lr(250) - 1e-4).abs() < 1e-18);
    assert_eq!(lr(500), 2e-4);
    // midpoint of the cosine phase is (peak + min) / 2
    assert!((lr(25_250) - 1.005e-4).abs() < 1e-15);
    assert!((lr(50_000) - 1e-6).abs() < 1e-12);

    let dir = TempDir::new().unwrap();
    let p = dir.path().join("curve.csv");
    ok(&["lr-curve", "--stage", "sft", "--out", s(&p), "--every", "1000"]);
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 1 + 9);
    assert!(text.lines().nth(4).unwrap().starts_with("3000,1e-5"));
}

#[test]
fn check_markup_reports_bad_lines() {
    let dir = TempDir::new().unwrap();
    let lines = [
        "<ref>bees</ref><box>(661,612),(833,812)</box>",
        "<box>(1,2),(3,4)</box>",
        "<ref>x</ref><box>(1000,0),(3,4)</box>",
        "plain text",
    ];
    let input = write(&dir, "in.txt", &lines.join("\n"));
    let (out, rep) = (dir.path().join("out.jsonl"), dir.path().join("r.json"));
    ok(&["check-markup", "--input", s(&input), "--output", s(&out), "--report", s(&rep)]);
    let r = report(&rep);
    assert_eq!((r["records_kept"].as_u64(), r["errors"].as_u64()), (Some(2), Some(2)));
    let valid: Vec<bool> = json_lines(&out).iter().map(|v| v["valid"].as_bool().unwrap()).collect();
    assert_eq!(valid, [true, false, false, true]);
}

#[test]
fn resampler_commands() {
    let out = ok(&["grad-check", "--seeds", "0,1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().last().unwrap().starts_with("PASS"), "{text}");

    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("loss.csv");
    let out = ok(&["demo-resampler", "--steps", "200", "--out", s(&csv)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("initial loss"), "{text}");
    let rows = fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().next(), Some("step,loss"));
    assert_eq!(rows.lines().count(), 1 + 201);
}
