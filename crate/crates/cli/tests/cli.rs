use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ordinal_depth::crowd::{read_events, simulate, SimConfig, Store};
use ordinal_depth::metrics::evaluate;
use ordinal_depth::pairs::{load_pairs, PairRecord};
use ordinal_depth::sampling::{SamplerConfig, Strategy};
use ordinal_depth::synthetic::{make_dataset, DatasetConfig};
use ordinal_depth_cli::commands::{eval_items, eval_options};
use ordinal_depth_cli::config::RunConfig;
use ordinal_depth_cli::manifest::Manifest;

fn odepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odepth")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = odepth(args);
    assert!(
        out.status.success(),
        "odepth {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(path: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bad_invocations_fail_with_a_message() {
    let out = odepth(&["train", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));

    let dir = tempfile::tempdir().unwrap();
    let out = odepth(&["eval", "--pred", "/nonexistent/dir", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let out = odepth(&["sample", "--config", "/nonexistent.toml", "--depth", ".", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent.toml"));

    let out = odepth(&["simulate", "--error", "1.5", "--trials", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

/// synth + sample through the binary reproduce the in-process dataset.
#[test]
fn synth_and_sample_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", s(&data), "--n", "6", "--width", "32", "--height", "24", "--seed", "4"]);
    let pairs = dir.path().join("pairs.csv");
    ok(&[
        "sample", "--depth", s(&data.join("depth")), "--out", s(&pairs),
        "--per-image", "7", "--strategy", "distance-constrained", "--seed", "4",
    ]);
    let lib = make_dataset(&DatasetConfig {
        n_images: 6,
        pairs_per_image: 7,
        equal_ratio: 1.02,
        sampler: SamplerConfig::new(32, 24, Strategy::DistanceConstrained, 4),
        scene_seed: 4,
    })
    .unwrap();
    let expected: Vec<PairRecord> = lib
        .iter()
        .flat_map(|smp| smp.queries.iter().map(|q| PairRecord { image_id: smp.id.clone(), query: *q }))
        .collect();
    assert_eq!(load_pairs(&pairs).unwrap(), expected);
    for smp in &lib {
        let png = image::open(data.join("images").join(format!("{}.png", smp.id))).unwrap().to_rgb8();
        assert_eq!(png, smp.image);
        let depth = ordinal_depth::DepthMap::load(data.join("depth").join(format!("{}.depth", smp.id))).unwrap();
        assert_eq!(depth, smp.depth.quantized());
    }
    let m = manifest(&data.join("manifest.json"));
    assert_eq!(m.command, "synth");
    assert_eq!(m.seed, 4);
    assert_eq!(m.outputs.len(), 12);
    assert!(dir.path().join("pairs.csv.manifest.json").exists());
}

fn train_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("data");
    ok(&["synth", "--out", s(&data), "--n", "8", "--width", "32", "--height", "32", "--seed", "2"]);
    let pairs = dir.join("pairs.csv");
    ok(&["sample", "--depth", s(&data.join("depth")), "--out", s(&pairs), "--per-image", "20", "--seed", "2"]);
    let run = dir.join("run");
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    ok(&[
        "train", "--config", s(&cfg), "--epochs", "2", "--images", s(&data.join("images")),
        "--pairs", s(&pairs), "--out", s(&run),
    ]);
    (data, pairs, run)
}

#[test]
fn train_predict_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let (data, pairs, run) = train_fixture(dir.path());
    for f in ["model.ckpt", "model.json", "loss.csv", "config.toml", "manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let curve = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3, "{curve}");
    assert!(curve.starts_with("epoch,loss,seconds\n0,"));
    let m = manifest(&run.join("manifest.json"));
    let mut cfg = RunConfig::load(Some(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml"))).unwrap();
    cfg.train.epochs = 2;
    assert_eq!(m.config_sha256, cfg.digest().unwrap());
    assert_eq!(m.seed, 1);
    assert!(m.outputs.keys().any(|k| k.ends_with("model.ckpt")));

    let pred = dir.path().join("pred");
    ok(&["predict", "--model", s(&run), "--images", s(&data.join("images")), "--out", s(&pred)]);
    let out_cli = dir.path().join("eval_cli");
    let text = ok(&[
        "eval", "--pred", s(&pred), "--pairs", s(&pairs), "--gt", s(&data.join("depth")), "--out", s(&out_cli),
    ]);
    for key in ["wkdr", "wkdr_eq", "wkdr_neq", "tau", "whdr", "rmse", "rmse_log", "rmse_sinv", "absrel", "sqrrel"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{key}="))), "{key} missing from {text}");
    }

    // Same inputs through the library produce byte-identical files.
    let items = eval_items(&pred, Some(&pairs), Some(&data.join("depth"))).unwrap();
    let (report, _) = evaluate(&items, &eval_options(&RunConfig::default()).unwrap()).unwrap();
    let out_lib = dir.path().join("eval_lib");
    std::fs::create_dir_all(&out_lib).unwrap();
    report.write_files(&out_lib, "metrics").unwrap();
    for f in ["metrics.txt", "metrics.json"] {
        assert_eq!(std::fs::read(out_cli.join(f)).unwrap(), std::fs::read(out_lib.join(f)).unwrap(), "{f}");
    }

    // Fixed tau and no ground truth leave the metric entries absent.
    let out_tau = dir.path().join("eval_tau");
    let text = ok(&["eval", "--pred", s(&pred), "--pairs", s(&pairs), "--out", s(&out_tau), "--tau", "0"]);
    assert!(text.contains("tau=0\n") || text.contains("tau=0.0"), "{text}");
    assert!(text.contains("rmse=NA"), "{text}");
}

#[test]
fn simulate_then_export() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.jsonl");
    let out = dir.path().join("sim");
    let text = ok(&[
        "simulate", "--error", "0.1", "--workers", "6", "--trials", "500", "--no-filter", "--seed", "3",
        "--events", s(&events), "--out", s(&out),
    ]);
    assert!(text.contains("analytic_error=0.012195"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("simulation.json")).unwrap()).unwrap();
    assert_eq!(report["trials"], 500);
    assert!(out.join("manifest.json").exists());

    let mut cfg = SimConfig::uniform(6, 0.1, 0.0, 500, 3);
    cfg.crowd.gold_filter = false;
    let (lib_report, store) = simulate(&cfg, None).unwrap();
    assert_eq!(lib_report.to_text(), text);
    assert_eq!(report["accepted"], lib_report.accepted);

    let pairs = dir.path().join("accepted.csv");
    ok(&["export", "--events", s(&events), "--out", s(&pairs)]);
    let exported = load_pairs(&pairs).unwrap();
    assert_eq!(exported, store.export());
    assert_eq!(exported.len(), lib_report.accepted);
    let replayed = Store::replay(read_events(std::fs::File::open(&events).unwrap()).unwrap()).unwrap();
    assert_eq!(replayed.state(), store.state());
}
