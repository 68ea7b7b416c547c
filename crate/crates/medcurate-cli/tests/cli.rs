//! End-to-end checks of the `medcurate` binary: exit codes, output files,
//! run manifests, and rerun determinism.

mod common;

use std::path::Path;

use common::{
    build_project, exit_code, mcq_sample, medcurate, stderr_text, stdout_text, write_config,
    BASE_CONFIG,
};
use medcurate_core::sample::{read_corpus, write_corpus};

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn ingest_writes_per_dataset_files_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);

    let out = medcurate(root, &["--config", "pipeline.toml", "ingest"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    for name in ["caps", "skin", "chest-masks", "ct-vols", "us-videos"] {
        assert!(root.join(format!("out/ingest/{name}.records.jsonl")).exists());
        assert!(root.join(format!("out/ingest/{name}.rejects.jsonl")).exists());
    }
    let manifest = read_json(&root.join("out/ingest/run.json"));
    assert_eq!(manifest["command"], "ingest");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["counters"]["caps.records"], 3);
    assert_eq!(manifest["counters"]["skin.records"], 4);
    assert_eq!(manifest["counters"]["ct-vols.rejects"], 0);

    let first = std::fs::read(root.join("out/ingest/run.json")).unwrap();
    let rerun = medcurate(root, &["--config", "pipeline.toml", "ingest"]);
    assert_eq!(exit_code(&rerun), 0);
    assert_eq!(first, std::fs::read(root.join("out/ingest/run.json")).unwrap());
}

#[test]
fn unknown_dataset_in_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    write_config(
        root,
        "bad.toml",
        &format!("{BASE_CONFIG}\n[ingest]\ndatasets = [\"caps\", \"nope\"]\n"),
    );

    let out = medcurate(root, &["--config", "bad.toml", "ingest"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_text(&out).contains("nope"));
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = medcurate(dir.path(), &["ingest"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_text(&out).contains("--config"));
}

#[test]
fn synthesize_counts_every_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "ingest"])), 0);

    let out = medcurate(root, &["--config", "pipeline.toml", "synthesize"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let manifest = read_json(&root.join("out/synthesize/run.json"));
    assert_eq!(manifest["counters"]["caption"], 3);
    assert_eq!(manifest["counters"]["label"], 8, "one MCQ and one open question per label");
    assert_eq!(manifest["counters"]["mask"], 2);
    assert_eq!(manifest["counters"]["volume"], 1);
    assert_eq!(manifest["counters"]["video-summary"], 2);
    assert_eq!(manifest["counters"]["samples"], 16);
    assert!(manifest.get("gateway").is_none());

    let samples = read_corpus(root.join("out/synthesize/corpus.jsonl")).unwrap();
    assert_eq!(samples.len(), 16);

    // The volume sample carries the subsampled series: 4 of 6 slices.
    let volume = samples.iter().find(|s| s.provenance.dataset == "ct-vols").unwrap();
    match &volume.media[0] {
        medcurate_core::sample::MediaRef::SliceSeries { slices, source_depth } => {
            assert_eq!(slices.len(), 4);
            assert_eq!(*source_depth, 6);
        }
        other => panic!("expected slice series, got {other:?}"),
    }
}

#[test]
fn synthesize_with_no_strategies_warns_and_writes_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "ingest"])), 0);
    write_config(
        root,
        "none.toml",
        &BASE_CONFIG.replace("[synthesize]", "[synthesize]\nstrategies = []"),
    );

    let out = medcurate(root, &["--config", "none.toml", "synthesize"]);
    assert_eq!(exit_code(&out), 0);
    assert!(stderr_text(&out).contains("disabled"));
    let samples = read_corpus(root.join("out/synthesize/corpus.jsonl")).unwrap();
    assert!(samples.is_empty());
}

#[test]
fn prepare_grpo_reformulates_and_emits_training_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "ingest"])), 0);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "synthesize"])), 0);

    let out = medcurate(root, &["--config", "pipeline.toml", "prepare-grpo"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let manifest = read_json(&root.join("out/grpo/run.json"));
    assert_eq!(manifest["counters"]["input"], 16);
    assert_eq!(manifest["counters"]["converted"], 4, "the four label MCQs");
    assert_eq!(manifest["counters"]["samples"], 16);

    let samples = read_corpus(root.join("out/grpo/corpus.jsonl")).unwrap();
    assert!(samples.iter().all(|s| !s.task.is_multiple_choice()));

    let training = read_json(&root.join("out/grpo/training_manifest.json"));
    assert_eq!(training["stages"].as_array().unwrap().len(), 4);
    assert_eq!(training["grpo"]["num_generations"], 8);
    assert_eq!(training["effective_batch_size"], 128);
}

#[test]
fn prepare_grpo_draw_larger_than_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "ingest"])), 0);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "synthesize"])), 0);
    write_config(root, "big.toml", &format!("{BASE_CONFIG}\n[grpo]\ndraw = 10000\n"));

    let out = medcurate(root, &["--config", "big.toml", "prepare-grpo"]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("10000"));
}

#[test]
fn budget_reports_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "ingest"])), 0);
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "synthesize"])), 0);

    let out = medcurate(root, &["--config", "pipeline.toml", "budget"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let rows: Vec<serde_json::Value> =
        std::fs::read_to_string(root.join("out/budget/budget.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
    assert_eq!(rows.len(), 16);
    let caption_row = rows
        .iter()
        .find(|r| r["sample_id"].as_str().unwrap().starts_with("caps/"))
        .unwrap();
    // A 448x448 image fills exactly one tile: 256 visual tokens.
    assert_eq!(caption_row["visual_tokens"], 256);
    assert!(caption_row["within_budget"].as_bool().unwrap());
}

#[test]
fn score_groups_without_open_tasks_needs_no_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    let groups = r#"{"prompt_id":"g1","task":"mcq","gold":"B","generations":["Answer: B","Answer: A","Answer: B","nonsense"]}
{"prompt_id":"g2","task":"mcq","gold":"C","generations":["Answer: C","Answer: C","Answer: C","Answer: C"]}
"#;
    std::fs::write(root.join("groups.jsonl"), groups).unwrap();

    let out = medcurate(
        root,
        &["--config", "pipeline.toml", "score-groups", "--groups", "groups.jsonl"],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));

    let rows: Vec<serde_json::Value> =
        std::fs::read_to_string(root.join("out/score/scores.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
    assert_eq!(rows.len(), 2);
    let advantages: Vec<f64> = rows[0]["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["advantage"].as_f64().unwrap())
        .collect();
    assert!(advantages.iter().sum::<f64>().abs() < 1e-9);
    // A constant group standardizes to all zeros.
    assert!(rows[1]["results"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["advantage"].as_f64().unwrap() == 0.0));
}

#[test]
fn open_groups_without_gateway_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    std::fs::write(
        root.join("groups.jsonl"),
        r#"{"prompt_id":"g1","task":"open","gold":"effusion","generations":["Answer: effusion","Answer: nothing"]}
"#,
    )
    .unwrap();

    let out = medcurate(
        root,
        &["--config", "pipeline.toml", "score-groups", "--groups", "groups.jsonl"],
    );
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_text(&out).contains("[gateway]"));
}

#[test]
fn replay_without_fixtures_is_a_gateway_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    std::fs::create_dir_all(root.join("fixtures")).unwrap();
    assert_eq!(exit_code(&medcurate(root, &["--config", "pipeline.toml", "ingest"])), 0);
    write_config(
        root,
        "replay.toml",
        &format!(
            "{}\n[gateway]\nmode = \"replay\"\ncache_dir = \"fixtures\"\n",
            BASE_CONFIG.replace("[synthesize]", "[synthesize]\nbilingual = true")
        ),
    );

    let out = medcurate(root, &["--config", "replay.toml", "synthesize"]);
    assert_eq!(exit_code(&out), 3, "stderr: {}", stderr_text(&out));
    assert!(stderr_text(&out).contains("fixture"));
}

#[test]
fn evaluate_scores_perfect_predictions_at_100() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    let refs: Vec<_> = (0..3).map(|i| mcq_sample(&format!("q{i}"))).collect();
    write_corpus(root.join("refs.jsonl"), &refs).unwrap();
    let preds = (0..3)
        .map(|i| format!("{{\"id\":\"q{i}\",\"prediction\":\"Answer: B\"}}\n"))
        .collect::<String>();
    std::fs::write(root.join("preds.jsonl"), preds).unwrap();

    let out = medcurate(
        root,
        &[
            "--config",
            "pipeline.toml",
            "evaluate",
            "--refs",
            "refs.jsonl",
            "--preds",
            "preds.jsonl",
        ],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    let table = stdout_text(&out);
    assert!(table.contains("accuracy"), "table: {table}");
    assert!(table.contains("100.00"), "table: {table}");

    let report = read_json(&root.join("out/evaluate/report.json"));
    assert_eq!(report["metrics"]["accuracy"], 100.0);
    assert_eq!(report["sample_count"], 3);
}

#[test]
fn evaluate_marks_learned_scorer_metrics_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    let refs: Vec<_> = (0..2).map(|i| mcq_sample(&format!("q{i}"))).collect();
    write_corpus(root.join("refs.jsonl"), &refs).unwrap();
    std::fs::write(
        root.join("preds.jsonl"),
        "{\"id\":\"q0\",\"prediction\":\"B\"}\n{\"id\":\"q1\",\"prediction\":\"A\"}\n",
    )
    .unwrap();
    write_config(
        root,
        "rate.toml",
        &BASE_CONFIG.replace("metrics = [\"accuracy\"]", "metrics = [\"accuracy\", \"RaTE\"]"),
    );

    let out = medcurate(
        root,
        &[
            "--config",
            "rate.toml",
            "evaluate",
            "--refs",
            "refs.jsonl",
            "--preds",
            "preds.jsonl",
        ],
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    assert!(stdout_text(&out).contains("rate       unsupported"));
    let report = read_json(&root.join("out/evaluate/report.json"));
    assert_eq!(report["config"]["unsupported"][0], "rate");
}

#[test]
fn evaluate_rejects_malformed_predictions_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    let refs: Vec<_> = (0..2).map(|i| mcq_sample(&format!("q{i}"))).collect();
    write_corpus(root.join("refs.jsonl"), &refs).unwrap();
    std::fs::write(
        root.join("preds.jsonl"),
        "{\"id\":\"q0\",\"prediction\":\"B\"}\nnot json\n",
    )
    .unwrap();

    let out = medcurate(
        root,
        &[
            "--config",
            "pipeline.toml",
            "evaluate",
            "--refs",
            "refs.jsonl",
            "--preds",
            "preds.jsonl",
        ],
    );
    assert_eq!(exit_code(&out), 1);
    let stderr = stderr_text(&out);
    assert!(
        stderr.contains("preds.jsonl:2") && stderr.contains("malformed"),
        "stderr: {stderr}"
    );
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    build_project(root);
    assert_eq!(
        exit_code(&medcurate(root, &["--config", "pipeline.toml", "--seed", "99", "ingest"])),
        0
    );
    let manifest = read_json(&root.join("out/ingest/run.json"));
    assert_eq!(manifest["seed"], 99);
}
