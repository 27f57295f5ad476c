use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "synth.n_images=40",
    "train.epochs=2",
    "train.batch_size=8",
    "train.queue_size=32",
    "crop_dump.n_pairs=4",
    "overlap.n_samples=100",
    "sweep.values=[0.0,0.3]",
    "bench.n_iters=2",
    "bench.warmup=0",
];

const STAGES: &[&str] = &[
    "synth-gen",
    "bing-train",
    "propose",
    "crop-dump",
    "pretrain",
    "probe",
    "overlap",
    "sweep",
    "bench",
];

fn objcrop(out: &Path, args: &[&str], sets: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_objcrop"));
    cmd.args(args).arg("--out").arg(out);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Path, args: &[&str], sets: &[&str]) -> String {
    let o = objcrop(out, args, sets);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let last = err.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|_| panic!("stderr is not a JSON error line: {err}"))
}

/// Every file under `root`, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

#[test]
fn pipeline_reruns_from_echoed_configs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for stage in STAGES {
        ok(a.path(), &[stage, "--seed", "5"], SMALL);
    }
    for stage in STAGES {
        let cfg = a.path().join(format!("configs/{stage}.json"));
        ok(b.path(), &[stage, "--config", cfg.to_str().unwrap()], &[]);
    }
    let (sa, mut sb) = (snapshot(a.path()), snapshot(b.path()));
    for rel in [
        "data/manifest.jsonl",
        "bing/model.bin",
        "proposals/proposals.jsonl",
        "crops/pairs.jsonl",
        "pretrain/model.ckpt",
        "pretrain/metrics.csv",
        "probe/per_class.csv",
        "overlap/overlap.json",
        "sweep/sweep.csv",
    ] {
        assert!(sa.contains_key(Path::new(rel)), "missing {rel}");
    }
    // timings differ run to run
    sb.insert("bench/bench.json".into(), sa[Path::new("bench/bench.json")].clone());
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(sb[k] == *v, "{} differs", k.display());
    }
    let sweep = std::str::from_utf8(&sa[Path::new("sweep/sweep.csv")]).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some("param,value,seed,map,pos_sim,neg_sim"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn propose_twice_is_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    for stage in ["synth-gen", "bing-train", "propose"] {
        ok(d.path(), &[stage], SMALL);
    }
    let p = d.path().join("proposals/proposals.jsonl");
    let first = std::fs::read(&p).unwrap();
    ok(d.path(), &["propose"], SMALL);
    assert_eq!(std::fs::read(&p).unwrap(), first);
}

#[test]
fn zero_lr_gives_constant_loss() {
    let d = tempfile::tempdir().unwrap();
    let sets = [
        "synth.n_images=10",
        "train.strategy=\"SceneScene\"",
        "train.lr=0",
        "train.epochs=5",
        "train.batch_size=8",
        "train.queue_size=8",
        "train.crop.scale_lo=1",
        "train.crop.ratio_lo=1",
        "train.crop.ratio_hi=1",
        "train.crop.flip_prob=0",
    ];
    ok(d.path(), &["synth-gen"], &sets);
    ok(d.path(), &["pretrain"], &sets);
    let csv = std::fs::read_to_string(d.path().join("pretrain/metrics.csv")).unwrap();
    let losses: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 5);
    // the queue is empty for the first epoch only
    for l in &losses[2..] {
        assert!((l - losses[1]).abs() < 1e-9, "{losses:?}");
    }
}

#[test]
fn resume_matches_uninterrupted_training() {
    let d = tempfile::tempdir().unwrap();
    let base = ["synth.n_images=12", "train.strategy=\"SceneScene\"", "train.batch_size=4", "train.queue_size=8"];
    ok(d.path(), &["synth-gen"], &base);
    let four: Vec<&str> = base.iter().copied().chain(["train.epochs=4"]).collect();
    ok(d.path(), &["pretrain"], &four);
    let straight = std::fs::read(d.path().join("pretrain/model.ckpt")).unwrap();
    std::fs::remove_dir_all(d.path().join("pretrain")).unwrap();

    let two: Vec<&str> = base.iter().copied().chain(["train.epochs=2"]).collect();
    ok(d.path(), &["pretrain"], &two);
    ok(d.path(), &["pretrain", "--resume"], &four);
    assert!(std::fs::read(d.path().join("pretrain/model.ckpt")).unwrap() == straight);

    // a checkpoint from a different config is refused
    let other: Vec<&str> = four.iter().copied().chain(["train.lr=0.5"]).collect();
    let o = objcrop(d.path(), &["pretrain", "--resume"], &other);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn exit_codes_and_error_lines() {
    let d = tempfile::tempdir().unwrap();
    let o = objcrop(d.path(), &["probe"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"], "missing_input");

    let o = objcrop(d.path(), &["synth-gen"], &["train.nope=1"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_line(&o)["code"], 3);

    let o = objcrop(d.path(), &["synth-gen"], &["synth.n_classes=0"]);
    assert_eq!(o.status.code(), Some(3));

    ok(d.path(), &["synth-gen"], &["synth.n_images=8"]);
    std::fs::create_dir_all(d.path().join("pretrain")).unwrap();
    std::fs::write(d.path().join("pretrain/model.ckpt"), b"not a checkpoint").unwrap();
    let o = objcrop(d.path(), &["probe"], &["synth.n_images=8"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_line(&o)["error"], "bad_artifact");

    let o = objcrop(d.path(), &["no-such-command"], &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bench_gate_compares_against_a_baseline() {
    let d = tempfile::tempdir().unwrap();
    let sets = ["synth.n_images=20", "bench.n_iters=2", "bench.warmup=0", "bench.side=120"];
    ok(d.path(), &["synth-gen"], &sets);
    ok(d.path(), &["bing-train"], &sets);
    std::fs::write(d.path().join("slow.json"), r#"{"fps": 0.001}"#).unwrap();
    std::fs::write(d.path().join("fast.json"), r#"{"fps": 1e12}"#).unwrap();
    let with = |b: &str| -> Vec<String> {
        sets.iter().map(|s| s.to_string()).chain([format!("bench.baseline=\"{b}\"")]).collect()
    };
    let slow = with("slow.json");
    ok(d.path(), &["bench"], &slow.iter().map(String::as_str).collect::<Vec<_>>());
    let fast = with("fast.json");
    let o = objcrop(d.path(), &["bench"], &fast.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("regression"));
}
