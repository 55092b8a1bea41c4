//! End-to-end tests driving the `pne` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pne() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pne"))
}

struct Workdir {
    root: PathBuf,
}

impl Workdir {
    fn new(tag: &str) -> Self {
        let root = std::env::temp_dir().join(format!(
            "pne_cli_{}_{}_{}",
            tag,
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::create_dir_all(&root).unwrap();
        Workdir { root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, content).unwrap();
        path
    }
}

impl Drop for Workdir {
    fn drop(&mut self) {
        fs::remove_dir_all(&self.root).ok();
    }
}

/// 8 users x 10 items with timestamps, two interest groups expressed in the
/// interactions and the item text.
fn write_dataset(dir: &Workdir) -> (PathBuf, PathBuf) {
    let mut interactions = String::new();
    interactions.push_str("# synthetic smoke dataset\n");
    for user in 0..8 {
        let group = user % 2;
        for t in 0..4 {
            let item = group * 5 + (user / 2 + t) % 5;
            interactions.push_str(&format!("u{}\ti{}\t{}\n", user, item, t));
        }
    }
    let mut text = String::new();
    for item in 0..10 {
        let words = if item < 5 {
            "news politics election vote"
        } else {
            "game score player goal"
        };
        text.push_str(&format!("i{}\t{}\n", item, words));
    }
    (
        dir.write("interactions.tsv", &interactions),
        dir.write("text.tsv", &text),
    )
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn train_args(
    interactions: &Path,
    text: Option<&Path>,
    out_dir: &Path,
    seed: u64,
    extra: &[&str],
) -> Vec<String> {
    let mut args = vec![
        "train".to_string(),
        "--interactions".into(),
        interactions.display().to_string(),
        "--dim".into(),
        "4".into(),
        "--hidden".into(),
        "4".into(),
        "--epochs".into(),
        "3".into(),
        "--batch".into(),
        "8".into(),
        "--seed".into(),
        seed.to_string(),
        "--out-dir".into(),
        out_dir.display().to_string(),
    ];
    if let Some(text) = text {
        args.push("--text".into());
        args.push(text.display().to_string());
    }
    for e in extra {
        args.push(e.to_string());
    }
    args
}

#[test]
fn train_is_deterministic_and_writes_artifacts() {
    let dir = Workdir::new("train_det");
    let (interactions, text) = write_dataset(&dir);

    for run_dir in ["a", "b"] {
        let out_dir = dir.path(run_dir);
        let out = run(pne().args(train_args(&interactions, Some(&text), &out_dir, 7, &[])));
        assert_success(&out);
    }

    let a = fs::read(dir.path("a").join("checkpoint.pne")).unwrap();
    let b = fs::read(dir.path("b").join("checkpoint.pne")).unwrap();
    assert_eq!(a, b, "same seed, same inputs must give identical checkpoints");

    let log_a = fs::read_to_string(dir.path("a").join("train_log.tsv")).unwrap();
    let log_b = fs::read_to_string(dir.path("b").join("train_log.tsv")).unwrap();
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.lines().count(), 3);
    for line in log_a.lines() {
        assert_eq!(line.split('\t').count(), 5);
    }

    for sidecar in ["users.tsv", "items.tsv", "vocab.tsv", "manifest.tsv"] {
        assert!(dir.path("a").join(sidecar).exists(), "{} missing", sidecar);
    }
    let users = fs::read_to_string(dir.path("a").join("users.tsv")).unwrap();
    assert_eq!(users.lines().count(), 8);
    let manifest = fs::read_to_string(dir.path("a").join("manifest.tsv")).unwrap();
    assert!(manifest.contains("interactions_fnv1a64\t"));
    assert!(manifest.contains("wall_seconds\t"));
}

#[test]
fn train_without_text_needs_no_memnet_flag() {
    let dir = Workdir::new("train_text");
    let (interactions, _) = write_dataset(&dir);

    let out = run(pne().args(train_args(&interactions, None, &dir.path("x"), 1, &[])));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--text"));

    let out = run(pne().args(train_args(
        &interactions,
        None,
        &dir.path("cf_only"),
        1,
        &["--no-memnet"],
    )));
    assert_success(&out);
    assert!(dir.path("cf_only").join("checkpoint.pne").exists());
}

#[test]
fn unknown_flag_exits_with_usage_code() {
    let out = run(pne().args(["train", "--does-not-exist"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_writes_scaled_report() {
    let dir = Workdir::new("evaluate");
    let (interactions, text) = write_dataset(&dir);
    let out_dir = dir.path("model");
    assert_success(&run(pne().args(train_args(
        &interactions,
        Some(&text),
        &out_dir,
        3,
        &[],
    ))));

    let eval_dir = dir.path("eval");
    let out = run(pne().args([
        "evaluate",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &out_dir.join("checkpoint.pne").display().to_string(),
        "--num-negatives",
        "5",
        "--seed",
        "3",
        "--out-dir",
        &eval_dir.display().to_string(),
    ]));
    assert_success(&out);

    let report = fs::read_to_string(eval_dir.join("report.tsv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "K\tHR\tNDCG\tMRR");
    assert_eq!(lines.len(), 4); // header + K in {5, 10, 20}
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 4);
        for value in &fields[1..] {
            // two-decimal x100 formatting
            assert!(value.contains('.') && value.split('.').nth(1).unwrap().len() == 2);
        }
    }

    let details = fs::read_to_string(eval_dir.join("details.tsv")).unwrap();
    assert_eq!(details.lines().count(), 1 + 8); // header + one row per test user

    // single-cutoff report
    let eval_dir_2 = dir.path("eval2");
    let out = run(pne().args([
        "evaluate",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &out_dir.join("checkpoint.pne").display().to_string(),
        "--cutoffs",
        "10",
        "--num-negatives",
        "5",
        "--seed",
        "3",
        "--out-dir",
        &eval_dir_2.display().to_string(),
    ]));
    assert_success(&out);
    let report = fs::read_to_string(eval_dir_2.join("report.tsv")).unwrap();
    assert_eq!(report.lines().count(), 2);

    // re-running the same evaluation overwrites with byte-identical outputs
    let before_report = fs::read(eval_dir.join("report.tsv")).unwrap();
    let before_details = fs::read(eval_dir.join("details.tsv")).unwrap();
    let out = run(pne().args([
        "evaluate",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &out_dir.join("checkpoint.pne").display().to_string(),
        "--num-negatives",
        "5",
        "--seed",
        "3",
        "--out-dir",
        &eval_dir.display().to_string(),
    ]));
    assert_success(&out);
    assert_eq!(before_report, fs::read(eval_dir.join("report.tsv")).unwrap());
    assert_eq!(before_details, fs::read(eval_dir.join("details.tsv")).unwrap());
}

#[test]
fn models_share_candidates_under_one_eval_seed() {
    let dir = Workdir::new("eval_seed");
    let (interactions, text) = write_dataset(&dir);
    for (name, seed) in [("m1", 11u64), ("m2", 22)] {
        assert_success(&run(pne().args(train_args(
            &interactions,
            Some(&text),
            &dir.path(name),
            seed,
            &[],
        ))));
    }

    let mut detail_files = Vec::new();
    for name in ["m1", "m2"] {
        let eval_dir = dir.path(&format!("eval_{}", name));
        let out = run(pne().args([
            "evaluate",
            "--interactions",
            &interactions.display().to_string(),
            "--text",
            &text.display().to_string(),
            "--checkpoint",
            &dir.path(name).join("checkpoint.pne").display().to_string(),
            "--eval-seed",
            "77",
            "--num-negatives",
            "5",
            "--out-dir",
            &eval_dir.display().to_string(),
        ]));
        assert_success(&out);
        detail_files.push(fs::read_to_string(eval_dir.join("details.tsv")).unwrap());
    }

    // ranks may differ between the two models, but the evaluated users and
    // held-out items must match line for line
    let key_columns = |s: &str| -> Vec<(String, String)> {
        s.lines()
            .skip(1)
            .map(|l| {
                let mut f = l.split('\t');
                (f.next().unwrap().to_string(), f.next().unwrap().to_string())
            })
            .collect()
    };
    assert_eq!(key_columns(&detail_files[0]), key_columns(&detail_files[1]));
}

#[test]
fn evaluate_rejects_mismatched_checkpoint() {
    let dir = Workdir::new("dim_mismatch");
    let (interactions, text) = write_dataset(&dir);
    assert_success(&run(pne().args(train_args(
        &interactions,
        Some(&text),
        &dir.path("model"),
        5,
        &[],
    ))));

    // same checkpoint, smaller dataset -> user/item counts disagree
    let (other_interactions, other_text) = {
        let mut s = String::new();
        for user in 0..4 {
            for item in 0..3 {
                s.push_str(&format!("u{}\ti{}\t{}\n", user, item, item));
            }
        }
        (dir.write("other.tsv", &s), text.clone())
    };
    let out = run(pne().args([
        "evaluate",
        "--interactions",
        &other_interactions.display().to_string(),
        "--text",
        &other_text.display().to_string(),
        "--checkpoint",
        &dir.path("model").join("checkpoint.pne").display().to_string(),
        "--out-dir",
        &dir.path("eval").display().to_string(),
    ]));
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("expected") && stderr.contains("found"), "{}", stderr);
}

#[test]
fn recommend_excludes_positives_and_handles_unknown_users() {
    let dir = Workdir::new("recommend");
    let (interactions, text) = write_dataset(&dir);
    let out_dir = dir.path("model");
    assert_success(&run(pne().args(train_args(
        &interactions,
        Some(&text),
        &out_dir,
        9,
        &[],
    ))));

    let base = [
        "recommend".to_string(),
        "--interactions".into(),
        interactions.display().to_string(),
        "--text".into(),
        text.display().to_string(),
        "--checkpoint".into(),
        out_dir.join("checkpoint.pne").display().to_string(),
        "--seed".into(),
        "9".into(),
    ];

    // top_k larger than the catalog: every non-consumed item, each once
    let out = run(pne().args(&base).args(["--user", "u0", "--top-k", "100"]));
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let recommended: Vec<&str> = stdout
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    // u0 trained on 3 of its 4 interactions (one held out), so 7 of the 10
    // items remain recommendable
    assert_eq!(recommended.len(), 7);
    let unique: std::collections::BTreeSet<&str> = recommended.iter().copied().collect();
    assert_eq!(unique.len(), recommended.len());
    // training positives of u0: items i0..i2 minus the held-out one
    for line in stdout.lines() {
        let score: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
    }

    let out = run(pne().args(&base).args(["--user", "nobody", "--top-k", "3"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nobody"));
}

#[test]
fn recommend_breaks_ties_by_ascending_item_id() {
    use pne_core::model::{save_checkpoint, PneConfig, PneParams};
    use pne_core::numkernel::Rng;

    let dir = Workdir::new("ties");
    let (interactions, text) = write_dataset(&dir);

    // h = 0 makes every score exactly 0.5, so ordering is pure tie-breaking
    let config = PneConfig {
        num_users: 8,
        num_items: 10,
        vocab_size: 8,
        d: 4,
        hidden: 4,
        use_memnet: true,
    };
    let mut params: PneParams<f32> = PneParams::init(&config, 0.1, &mut Rng::new(1));
    params.h = vec![0.0; config.output_dim()];
    let crafted = dir.path("tied.pne");
    save_checkpoint(&crafted, &config, &params).unwrap();

    let out = run(pne().args([
        "recommend",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &crafted.display().to_string(),
        "--user",
        "u3",
        "--top-k",
        "100",
    ]));
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let recommended: Vec<String> = stdout
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();

    // dense item ids follow first appearance in the interactions file
    let mut dense_order: Vec<String> = Vec::new();
    for line in fs::read_to_string(&interactions).unwrap().lines() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let key = line.split('\t').nth(1).unwrap().to_string();
        if !dense_order.contains(&key) {
            dense_order.push(key);
        }
    }
    let expected: Vec<String> = dense_order
        .into_iter()
        .filter(|k| recommended.contains(k))
        .collect();
    assert_eq!(recommended, expected, "tied scores must list items by ascending dense id");
}

#[test]
fn export_writes_aligned_tsv_and_finds_identical_neighbor() {
    use pne_core::model::{save_checkpoint, PneConfig, PneParams};
    use pne_core::numkernel::Rng;

    let dir = Workdir::new("export");
    let (interactions, text) = write_dataset(&dir);
    let out_dir = dir.path("model");
    assert_success(&run(pne().args(train_args(
        &interactions,
        Some(&text),
        &out_dir,
        4,
        &[],
    ))));

    let export_dir = dir.path("export");
    let out = run(pne().args([
        "export-embeddings",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &out_dir.join("checkpoint.pne").display().to_string(),
        "--seed",
        "4",
        "--out-dir",
        &export_dir.display().to_string(),
    ]));
    assert_success(&out);
    let vectors = fs::read_to_string(export_dir.join("vectors.tsv")).unwrap();
    let metadata = fs::read_to_string(export_dir.join("metadata.tsv")).unwrap();
    assert_eq!(vectors.lines().count(), metadata.lines().count());
    assert_eq!(vectors.lines().count(), 8); // 8 distinct words in the corpus
    for line in vectors.lines() {
        assert_eq!(line.split('\t').count(), 4); // dim 4
    }

    // craft a checkpoint whose word rows 0 and 1 are identical; the nearest
    // neighbor of the first word must then be the second at cosine 1.0
    let config = PneConfig {
        num_users: 8,
        num_items: 10,
        vocab_size: 8,
        d: 4,
        hidden: 4,
        use_memnet: true,
    };
    let mut params: PneParams<f32> = PneParams::init(&config, 0.1, &mut Rng::new(5));
    let row0 = params.a.row(0).to_vec();
    params.a.row_mut(1).copy_from_slice(&row0);
    let crafted = dir.path("crafted.pne");
    save_checkpoint(&crafted, &config, &params).unwrap();

    let metadata_words: Vec<&str> = metadata.lines().collect();
    let first = metadata_words[0];
    let second = metadata_words[1];

    let out = run(pne().args([
        "export-embeddings",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &crafted.display().to_string(),
        "--seed",
        "4",
        "--out-dir",
        &dir.path("export2").display().to_string(),
        "--nearest",
        first,
        "--n",
        "3",
    ]));
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let neighbor_line = stdout
        .lines()
        .skip_while(|l| !l.starts_with("nearest"))
        .nth(1)
        .expect("neighbor output");
    assert!(
        neighbor_line.starts_with(&format!("{}\t", second)),
        "expected {} first, got: {}",
        second,
        neighbor_line
    );
    let cos: f64 = neighbor_line.split('\t').nth(1).unwrap().parse().unwrap();
    assert!((cos - 1.0).abs() < 1e-6);

    let out = run(pne().args([
        "export-embeddings",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &crafted.display().to_string(),
        "--seed",
        "4",
        "--out-dir",
        &dir.path("export3").display().to_string(),
        "--nearest",
        "not_a_word",
    ]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn nearest_neighbors_match_full_scan_oracle() {
    let dir = Workdir::new("nearest_oracle");
    let (interactions, text) = write_dataset(&dir);
    let out_dir = dir.path("model");
    assert_success(&run(pne().args(train_args(
        &interactions,
        Some(&text),
        &out_dir,
        6,
        &[],
    ))));

    let export_dir = dir.path("export");
    let out = run(pne().args([
        "export-embeddings",
        "--interactions",
        &interactions.display().to_string(),
        "--text",
        &text.display().to_string(),
        "--checkpoint",
        &out_dir.join("checkpoint.pne").display().to_string(),
        "--seed",
        "6",
        "--out-dir",
        &export_dir.display().to_string(),
        "--nearest",
        "news",
        "--n",
        "4",
    ]));
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let reported: Vec<&str> = stdout
        .lines()
        .skip_while(|l| !l.starts_with("nearest"))
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();

    // recompute from the exported vectors with an exhaustive scan
    let vectors: Vec<Vec<f64>> = fs::read_to_string(export_dir.join("vectors.tsv"))
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
        .collect();
    let words: Vec<String> = fs::read_to_string(export_dir.join("metadata.tsv"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let query = words.iter().position(|w| w == "news").unwrap();
    let cosine = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut oracle: Vec<(usize, f64)> = (0..words.len())
        .filter(|&i| i != query)
        .map(|i| (i, cosine(&vectors[query], &vectors[i])))
        .collect();
    oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let expected: Vec<&str> = oracle.iter().take(4).map(|&(i, _)| words[i].as_str()).collect();
    assert_eq!(reported, expected);
}
