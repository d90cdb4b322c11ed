use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
[data.synth]
users = 120
items = 80
per_user = 10

[hdnn]
layers = 1

[wavelet]
layers = 1

[train]
epochs = 2
batch_size = 512
seeds = [1, 2]
"#;

fn hyperwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperwave"))
        .args(args)
        .env("HYPERWAVE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_is_deterministic_and_eval_reproduces_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = hyperwave(&["train", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["config.toml", "summary.csv", "seed_1/history.csv", "seed_1/metrics.csv", "seed_2/checkpoint.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.starts_with("split,k,recall_mean,recall_std,ndcg_mean,ndcg_std,n_seeds\n"));
    assert_eq!(summary.lines().count(), 1 + 2 * 3);

    let ckpt = a.join("seed_1/checkpoint.bin");
    let o = hyperwave(&["eval", "--checkpoint", s(&ckpt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), fs::read_to_string(a.join("seed_1/metrics.csv")).unwrap());

    let o = hyperwave(&["eval", "--checkpoint", s(&ckpt), "--k", "5"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("val,5,"));
}

#[test]
fn seeds_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("run");
    let o = hyperwave(&["train", "--config", s(&cfg), "--seeds", "7", "--out", s(&out)]);
    assert!(o.status.success());
    assert!(out.join("seed_7/checkpoint.bin").exists());
    assert!(!out.join("seed_1").exists());
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("run");
    assert!(hyperwave(&["train", "--config", s(&cfg), "--seeds", "1", "--out", s(&out)]).status.success());
    let ckpt = out.join("seed_1/checkpoint.bin");
    let mut bytes = fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&ckpt, &bytes).unwrap();
    let o = hyperwave(&["eval", "--checkpoint", s(&ckpt)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));
}

#[test]
fn ablate_each_writes_one_variant_per_component() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("abl");
    let o = hyperwave(&["ablate", "--config", s(&cfg), "--each", "--seeds", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let mut variants: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    variants.dedup();
    assert_eq!(variants, ["full", "w/o hdnn", "w/o wavelet", "w/o fusion", "w/o contrastive"]);

    let o = hyperwave(&["ablate", "--config", s(&cfg), "--disable", "hdnn,wavelet", "--seeds", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "both encoders off must be a config error");
    let o = hyperwave(&["ablate", "--config", s(&cfg), "--disable", "attention", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_emits_one_row_per_value_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("sweep");
    let o = hyperwave(&["sweep", "--config", s(&cfg), "--param", "model.dim=4,8", "--seeds", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,value,n_seeds,recall@10,ndcg@10,recall@20,ndcg@20,recall@40,ndcg@40");
    assert!(lines[1].starts_with("model.dim,4,1,"));
    assert!(lines[2].starts_with("model.dim,8,1,"));

    let o = hyperwave(&["sweep", "--config", s(&cfg), "--param", "model.depth=1..3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.depth"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(hyperwave(&["train", "--config", s(&missing)]).status.code(), Some(2));
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[model]\ndims = 3\n").unwrap();
    assert_eq!(hyperwave(&["train", "--config", s(&bad)]).status.code(), Some(2));
    assert_eq!(hyperwave(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_detects_an_injected_fault() {
    let o = hyperwave(&["gradcheck"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("component,max_rel_err,coordinates,status\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",pass")));

    let o = hyperwave(&["gradcheck", "--inject-fault", "softplus"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn synth_output_loads_back_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.tsv"), tmp.path().join("b.tsv"));
    for p in [&a, &b] {
        let o = hyperwave(&["synth", "--users", "60", "--items", "40", "--per-user", "10", "--seed", "3", "--out", s(p)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 600);

    let cfg = tmp.path().join("file.toml");
    fs::write(&cfg, format!("[data]\ninteractions = {:?}\n[train]\nepochs = 1\nseeds = [1]\n", s(&a))).unwrap();
    let out = tmp.path().join("run");
    let o = hyperwave(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = hyperwave(&["eval", "--checkpoint", s(&out.join("seed_1/checkpoint.bin")), "--data", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
