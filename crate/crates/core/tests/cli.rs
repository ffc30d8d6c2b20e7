mod common;

use std::fs;
use std::path::Path;

use common::demo::{self, OBJECTS, QUESTIONS};
use common::{pekit, stderr, stdout};
use pekit::eval::{self, BenchmarkOptions, MetricsReport};
use pekit::pipeline::PipelineConfig;

fn replay_endpoint(dir: &Path) -> serde_json::Value {
    serde_json::json!({"mode": "replay", "fixture_dir": dir})
}

/// Config pointing at the shipped replay fixtures with a store in `store`.
fn replay_config(dir: &Path, store: &Path) -> std::path::PathBuf {
    let fixtures = demo::fixture_root().join("replay");
    let e = replay_endpoint(&fixtures);
    let cfg = serde_json::json!({
        "store_path": store,
        "adapters": {"segment": e, "propose": e, "embed": e, "generate": e}
    });
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn introduce_all(cfg: &Path, cwd: &Path) -> Vec<String> {
    let root = demo::fixture_root();
    OBJECTS
        .iter()
        .map(|o| {
            let images: Vec<String> = (1..=demo::REFS_PER_OBJECT)
                .map(|i| demo::reference_path(&root, o.slug, i).display().to_string())
                .collect();
            let mut args = vec![
                "--config",
                cfg.to_str().unwrap(),
                "introduce",
                "--name",
                o.name,
                "--category",
                o.category,
                "--context",
                o.context,
                "--images",
            ];
            args.extend(images.iter().map(String::as_str));
            let out = pekit(&args, cwd);
            assert!(out.status.success(), "{}", stderr(&out));
            stdout(&out).trim().to_string()
        })
        .collect()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn replayed_introduction_is_deterministic_and_matches_the_shipped_store() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ids_a = introduce_all(&replay_config(a.path(), &a.path().join("store")), a.path());
    let ids_b = introduce_all(&replay_config(b.path(), &b.path().join("store")), b.path());
    assert_eq!(ids_a, ids_b);
    assert!(ids_a.iter().all(|id| id.starts_with("obj-")));
    let store_a = dir_bytes(&a.path().join("store"));
    assert_eq!(store_a, dir_bytes(&b.path().join("store")));
    assert_eq!(store_a, dir_bytes(&demo::fixture_root().join("store")));
}

#[test]
fn missing_name_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pekit(&["introduce", "--category", "toy", "--images", "a.png"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--name"));
}

#[test]
fn infer_on_empty_store_passes_the_question_through() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), &dir.path().join("empty"));
    let scene = demo::fixture_root().join(demo::SCENE_FILE);
    let annotated = dir.path().join("out.png");
    let out = pekit(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "infer",
            "--image",
            scene.to_str().unwrap(),
            "--question",
            QUESTIONS[0],
            "--json",
            "--save-annotated",
            annotated.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["prompt"], QUESTIONS[0]);
    assert_eq!(v["detections"].as_array().unwrap().len(), 0);
    assert!(!annotated.exists());
}

#[test]
fn infer_with_shipped_config_answers_with_names() {
    let root = demo::fixture_root();
    let dir = tempfile::tempdir().unwrap();
    let annotated = dir.path().join("annotated.png");
    let out = pekit(
        &[
            "--config",
            root.join(demo::CONFIG_FILE).to_str().unwrap(),
            "infer",
            "--image",
            root.join(demo::SCENE_FILE).to_str().unwrap(),
            "--question",
            QUESTIONS[1],
            "--save-annotated",
            annotated.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let answer = stdout(&out);
    for o in &OBJECTS {
        assert!(answer.contains(o.name), "{answer}");
    }
    assert!(annotated.exists());
}

#[test]
fn config_comes_from_the_environment_when_no_flag_is_given() {
    let root = demo::fixture_root();
    let dir = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_pekit"))
        .args(["memory", "list", "--json"])
        .env("PEKIT_CONFIG", root.join(demo::CONFIG_FILE))
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}

#[test]
fn unreachable_server_fails_with_a_stage_label() {
    let dir = tempfile::tempdir().unwrap();
    let e = serde_json::json!({"mode": "live", "base_url": "http://127.0.0.1:9", "timeout_ms": 500, "retries": 0});
    let cfg = serde_json::json!({
        "store_path": demo::fixture_root().join("store"),
        "adapters": {"segment": e, "propose": e, "embed": e, "generate": e}
    });
    let path = dir.path().join("live.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let scene = demo::fixture_root().join(demo::SCENE_FILE);
    let out = pekit(
        &["--config", path.to_str().unwrap(), "infer", "--image", scene.to_str().unwrap(), "--question", "hi"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error: propose:"), "{}", stderr(&out));
}

#[test]
fn missing_fixture_in_replay_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replay_config(dir.path(), &demo::fixture_root().join("store"));
    let image = dir.path().join("other.png");
    fs::write(&image, pekit::pipeline::encode_png(&image::RgbImage::new(32, 32)).unwrap()).unwrap();
    let out = pekit(
        &["--config", cfg.to_str().unwrap(), "infer", "--image", image.to_str().unwrap(), "--question", "hi"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("propose:"), "{}", stderr(&out));
}

#[test]
fn memory_remove_export_and_list() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    for (name, bytes) in dir_bytes(&demo::fixture_root().join("store")) {
        fs::create_dir_all(&store).unwrap();
        fs::write(store.join(name), bytes).unwrap();
    }
    let s = store.to_str().unwrap();

    let export = dir.path().join("export");
    let out = pekit(&["--store", s, "memory", "export", export.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(dir_bytes(&export), dir_bytes(&store));

    let list = stdout(&pekit(&["--store", s, "memory", "list"], dir.path()));
    let id = list.lines().nth(1).unwrap().split_whitespace().next().unwrap().to_string();
    let out = pekit(&["--store", s, "memory", "remove", &id], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let list = stdout(&pekit(&["--store", s, "memory", "list"], dir.path()));
    assert!(!list.contains(&id));
    assert_eq!(list.lines().count(), 3);
    assert!(!store.join(format!("emb_{id}.f32")).exists());

    let out = pekit(&["--store", s, "memory", "remove", &id], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_in_replay_writes_the_expected_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let fixtures = dir.path().join("replay");
    let tools = common::dataset::build(&data).into_recording_tools(&fixtures);
    let ds = eval::load_dataset(&data).unwrap();
    eval::run_benchmark(&ds, &tools, &PipelineConfig::default(), BenchmarkOptions::default()).unwrap();

    let e = replay_endpoint(&fixtures);
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        serde_json::json!({"adapters": {"segment": e, "propose": e, "embed": e, "generate": e}}).to_string(),
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let args = [
        "--config",
        cfg.to_str().unwrap(),
        "eval",
        "--dataset",
        data.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ];
    let out = pekit(&args, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("Precision"));
    let r: MetricsReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!((r.weighted_acc - common::dataset::expected::WEIGHTED).abs() < 1e-9);
    assert!((r.vqa_acc.unwrap() - common::dataset::expected::VQA).abs() < 1e-9);

    // recognition-only needs no generate fixtures at all
    fs::remove_dir_all(fixtures.join("generate")).unwrap();
    let mut ro = args.to_vec();
    ro.push("--recognition-only");
    let out = pekit(&ro, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let r: MetricsReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.vqa_acc, None);

    fs::remove_dir_all(data.join("plant/val/hard_negative")).unwrap();
    let out = pekit(&args, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing split"), "{}", stderr(&out));
}

#[test]
fn shipped_fixtures_regenerate_identically() {
    let dir = tempfile::tempdir().unwrap();
    demo::build(dir.path());
    let shipped = demo::fixture_root();
    for sub in ["", "store", "replay/segment", "replay/propose", "replay/embed", "replay/generate"] {
        assert_eq!(dir_bytes(&dir.path().join(sub)), dir_bytes(&shipped.join(sub)), "{sub}");
    }
    for o in &OBJECTS {
        assert_eq!(dir_bytes(&dir.path().join("refs").join(o.slug)), dir_bytes(&shipped.join("refs").join(o.slug)));
    }
}
