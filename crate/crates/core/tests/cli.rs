use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set", "hidden=5", "--set", "input_dim=6", "--set", "synth_n_adr=40", "--set", "synth_n_ade=60",
    "--set", "synth_n_pool=30", "--set", "synth_cluster=0.3", "--epochs", "2", "--seed", "3",
];

fn adrmtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adrmtl"))
        .args(SMALL)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = adrmtl(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn synth(dir: &Path) -> PathBuf {
    let d = dir.join("synth");
    ok(&["--mode", "synth-gen", "--out", d.to_str().unwrap()]);
    d
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_gen_writes_corpora_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path());
    for f in ["adr.tsv", "ade.tsv", "pool.txt", "fresh_pool.txt", "embeddings.txt", "manifest.txt"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(d.join("manifest.txt")).unwrap();
    assert!(manifest.contains("mode=synth-gen"));
    assert!(manifest.contains("seed=3"));
    assert!(manifest.contains("# status: ok"));
    assert_eq!(fs::read_to_string(d.join("ade.tsv")).unwrap().lines().count(), 60);
}

#[test]
fn missing_embeddings_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path());
    let out = adrmtl(&["--mode", "train-single", "--adr-data", p(&d.join("adr.tsv")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--embeddings"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(adrmtl(&["--mode", "fly"]).status.code(), Some(2));
    assert_eq!(adrmtl(&["--bogus-flag"]).status.code(), Some(2));
    assert_eq!(adrmtl(&["--mode", "ablate", "--axis", "width"]).status.code(), Some(2));
    assert_eq!(adrmtl(&["--mode", "train-single", "--lambda", "3"]).status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_three_and_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path());
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "headache\tI-ADR\nnow\tB-ADR\n").unwrap();
    let out = adrmtl(&[
        "--mode", "train-single", "--adr-data", p(&bad), "--embeddings", p(&d.join("embeddings.txt")),
        "--out", p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.tsv:2"), "{err}");
    let manifest = fs::read_to_string(dir.path().join("o/manifest.txt")).unwrap();
    assert!(manifest.contains("# status: failed"));

    let out = adrmtl(&[
        "--mode", "train-single", "--adr-data", p(&dir.path().join("missing.tsv")),
        "--embeddings", p(&d.join("embeddings.txt")), "--out", p(&dir.path().join("o2")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn grad_check_mode_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("gc");
    ok(&["--mode", "grad-check", "--set", "gradcheck_configs=4", "--out", p(&o)]);
    let tsv = fs::read_to_string(o.join("gradcheck.tsv")).unwrap();
    assert!(tsv.lines().skip(1).all(|l| l.ends_with("true")));
    assert!(tsv.lines().count() > 4 * 3);
}

#[test]
fn train_evaluate_and_replay_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path());
    let run = dir.path().join("mtl");
    ok(&[
        "--mode", "train-mtl", "--adr-data", p(&d.join("adr.tsv")), "--ade-data", p(&d.join("ade.tsv")),
        "--embeddings", p(&d.join("embeddings.txt")), "--out", p(&run),
    ]);
    let log = fs::read_to_string(run.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let replay = dir.path().join("replay");
    let out = Command::new(env!("CARGO_BIN_EXE_adrmtl"))
        .args(["--config", p(&run.join("manifest.txt")), "--out", p(&replay)])
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(run.join("model.ckpt")).unwrap(), fs::read(replay.join("model.ckpt")).unwrap());

    let ev = dir.path().join("eval");
    let out = ok(&[
        "--mode", "evaluate", "--checkpoint", p(&run.join("model.ckpt")), "--adr-data", p(&d.join("adr.tsv")),
        "--embeddings", p(&d.join("embeddings.txt")), "--out", p(&ev),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("precision"));
    let tsv = fs::read_to_string(ev.join("report.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert!(rows[0].starts_with("metric\tmean\tstd"));
    assert!(rows[3].starts_with("f1\t"));
}

#[test]
fn cross_validate_ten_folds_over_639_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("synth");
    ok(&["--mode", "synth-gen", "--out", p(&d), "--set", "synth_n_adr=639"]);
    let o = dir.path().join("cv");
    ok(&[
        "--mode", "cross-validate", "--k", "10", "--adr-data", p(&d.join("adr.tsv")),
        "--embeddings", p(&d.join("embeddings.txt")), "--out", p(&o), "--epochs", "1",
    ]);
    let table = fs::read_to_string(o.join("report.txt")).unwrap();
    let sizes: Vec<usize> = table
        .lines()
        .skip(1)
        .take(10)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(sizes.len(), 10);
    assert!(sizes.iter().all(|&s| s == 63 || s == 64));
    assert_eq!(sizes.iter().sum::<usize>(), 639);
    let tsv = fs::read_to_string(o.join("report.tsv")).unwrap();
    assert_eq!(tsv.lines().next().unwrap().split('\t').count(), 3 + 10);

    let out = adrmtl(&[
        "--mode", "cross-validate", "--k", "1", "--adr-data", p(&d.join("adr.tsv")),
        "--embeddings", p(&d.join("embeddings.txt")), "--out", p(&dir.path().join("k1")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn sweep_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(String::from).collect())
        .collect()
}

#[test]
fn ablation_axes_produce_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path());
    let base = |axis: &str, out: &Path| -> Vec<String> {
        [
            "--mode", "ablate", "--axis", axis, "--k", "2", "--epochs", "1",
            "--adr-data", p(&d.join("adr.tsv")), "--ade-data", p(&d.join("ade.tsv")),
            "--pool", p(&d.join("pool.txt")), "--embeddings", p(&d.join("embeddings.txt")), "--out", p(out),
            "--set", "max_iterations=1", "--set", "finetune_epochs=1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    for (axis, rows) in [("ade-fraction", 5), ("pool-fraction", 5), ("layers", 3)] {
        let o = dir.path().join(axis);
        let args = base(axis, &o);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        let got = sweep_rows(&o.join("ablation.tsv"));
        assert_eq!(got.len(), rows, "{axis}");
        for r in &got {
            assert_eq!(r[0], axis);
            let f1: f64 = r[4].parse().unwrap();
            assert!(f1.is_finite() && (0.0..=1.0).contains(&f1));
        }
    }
}

#[test]
fn weak_supervision_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path());
    let emb = d.join("embeddings.txt");
    let st = dir.path().join("st");
    ok(&[
        "--mode", "self-train", "--adr-data", p(&d.join("adr.tsv")), "--pool", p(&d.join("pool.txt")),
        "--embeddings", p(&emb), "--out", p(&st), "--tau", "0.2", "--set", "max_iterations=2",
    ]);
    let log = fs::read_to_string(st.join("selftrain.tsv")).unwrap();
    assert!(log.lines().count() >= 2);

    let weak = dir.path().join("weak");
    ok(&[
        "--mode", "gen-weak", "--checkpoint", p(&st.join("model.ckpt")), "--pool", p(&d.join("fresh_pool.txt")),
        "--prior-pool", p(&d.join("pool.txt")), "--embeddings", p(&emb), "--out", p(&weak), "--tau", "0.2",
    ]);
    let ade = fs::read_to_string(weak.join("weak_ade.tsv")).unwrap();
    let fresh = fs::read_to_string(d.join("fresh_pool.txt")).unwrap();
    assert_eq!(ade.lines().count(), fresh.lines().count());

    let overlap = adrmtl(&[
        "--mode", "gen-weak", "--checkpoint", p(&st.join("model.ckpt")), "--pool", p(&d.join("pool.txt")),
        "--prior-pool", p(&d.join("pool.txt")), "--embeddings", p(&emb), "--out", p(&dir.path().join("w2")),
    ]);
    assert_eq!(overlap.status.code(), Some(3));

    let joint = dir.path().join("joint");
    ok(&[
        "--mode", "train-joint", "--weak-adr", p(&weak.join("weak_adr.tsv")), "--weak-ade",
        p(&weak.join("weak_ade.tsv")), "--adr-data", p(&d.join("adr.tsv")), "--embeddings", p(&emb),
        "--out", p(&joint), "--lambda", "0.8",
    ]);
    assert!(joint.join("model.ckpt").exists());
}

#[test]
fn preprocess_normalizes_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let adr = dir.path().join("adr.tsv");
    fs::write(&adr, "@bob\tO\nHeadache!!\tI-ADR\nhttp://x.co\tO\n\nfine\tO\n").unwrap();
    let pool = dir.path().join("pool.txt");
    fs::write(&pool, "Check www.site.com @amy #tired\n\n").unwrap();
    let o = dir.path().join("pre");
    ok(&["--mode", "preprocess", "--adr-data", p(&adr), "--pool", p(&pool), "--out", p(&o)]);
    let adr_out = fs::read_to_string(o.join("adr.tsv")).unwrap();
    assert!(adr_out.starts_with("⟨USER⟩\tO\nHeadache!!\tI-ADR\n⟨LINKS⟩\tO\n"), "{adr_out}");
    let pool_out = fs::read_to_string(o.join("pool.txt")).unwrap();
    assert_eq!(pool_out.trim(), "Check ⟨LINKS⟩ ⟨USER⟩ #tired");
    assert!(fs::read_to_string(o.join("vocab.txt")).unwrap().starts_with("⟨PAD⟩\n"));
}
