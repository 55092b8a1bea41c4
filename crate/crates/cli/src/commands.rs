use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use pne_core::data::{
    build_corpus, leave_one_out_split, load_interactions, load_texts, Corpus, InteractionDataset,
};
use pne_core::eval::{evaluate_model, write_details_tsv, write_report_tsv, RankingReport};
use pne_core::model::{forward, load_checkpoint, save_checkpoint, PneConfig, PneParams};
use pne_core::numkernel::Rng;
use pne_core::train::{train_epoch, AdamState, TrainConfig};
use pne_core::PneError;

use crate::manifest::Manifest;
use crate::{DataArgs, EvalArgs};

pub enum CliError {
    Core(PneError),
    Msg(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Msg(m) => f.write_str(m),
        }
    }
}

impl From<PneError> for CliError {
    fn from(e: PneError) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Split and corpus rebuilt deterministically from the input files. The
/// split draws from `Rng::derive(seed, 0)`; parameter init and the epoch
/// loop use streams 1 and 2, so any later command that re-runs the split
/// with the same seed reconstructs it exactly.
struct Pipeline {
    ds: InteractionDataset,
    corpus: Corpus,
}

fn build_pipeline(data: &DataArgs, with_text: bool) -> Result<Pipeline> {
    let raw = load_interactions(&data.interactions)?;
    let mut split_rng = Rng::derive(data.seed, 0);
    let ds = leave_one_out_split(&raw, &mut split_rng)?;
    let corpus = if with_text {
        let path = data.text.as_ref().expect("checked by caller");
        let by_key = load_texts(path)?;
        let texts: Vec<String> = ds
            .item_keys
            .iter()
            .map(|key| by_key.get(key).cloned().unwrap_or_default())
            .collect();
        build_corpus(&texts, data.vocab, data.doc_len)
    } else {
        Corpus::empty(ds.num_items)
    };
    Ok(Pipeline { ds, corpus })
}

fn check_dims(config: &PneConfig, ds: &InteractionDataset, corpus: &Corpus) -> Result<()> {
    let checks = [
        ("users", config.num_users, ds.num_users),
        ("items", config.num_items, ds.num_items),
    ];
    for (what, expected, found) in checks {
        if expected != found {
            return Err(PneError::DimMismatch {
                context: format!("checkpoint vs dataset {}", what),
                expected: expected.to_string(),
                found: found.to_string(),
            }
            .into());
        }
    }
    if config.use_memnet && config.vocab_size != corpus.vocab_size() {
        return Err(PneError::DimMismatch {
            context: "checkpoint vs corpus vocabulary".to_string(),
            expected: config.vocab_size.to_string(),
            found: corpus.vocab_size().to_string(),
        }
        .into());
    }
    Ok(())
}

fn write_id_maps(out_dir: &Path, ds: &InteractionDataset) -> Result<()> {
    for (name, keys) in [("users.tsv", &ds.user_keys), ("items.tsv", &ds.item_keys)] {
        let path = out_dir.join(name);
        let file = File::create(&path).map_err(|e| PneError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (id, key) in keys.iter().enumerate() {
            writeln!(w, "{}\t{}", key, id).map_err(|e| PneError::io(&path, e))?;
        }
        w.flush().map_err(|e| PneError::io(&path, e))?;
    }
    Ok(())
}

fn write_vocab(out_dir: &Path, corpus: &Corpus) -> Result<()> {
    let path = out_dir.join("vocab.tsv");
    let file = File::create(&path).map_err(|e| PneError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for (id, word) in corpus.words.iter().enumerate() {
        writeln!(w, "{}\t{}", word, id).map_err(|e| PneError::io(&path, e))?;
    }
    w.flush().map_err(|e| PneError::io(&path, e))?;
    Ok(())
}

fn print_report(report: &RankingReport) {
    println!("{:<4} {:>8} {:>8} {:>8}", "K", "HR", "NDCG", "MRR");
    for row in &report.rows {
        println!(
            "{:<4} {:>8.2} {:>8.2} {:>8.2}",
            row.k,
            row.hr * 100.0,
            row.ndcg * 100.0,
            row.mrr * 100.0
        );
    }
}

pub struct TrainOptions {
    pub data: DataArgs,
    pub eval: EvalArgs,
    pub dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub neg_ratio: usize,
    pub epochs: usize,
    pub no_memnet: bool,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

pub fn train(opts: TrainOptions) -> Result<()> {
    let use_memnet = !opts.no_memnet;
    if use_memnet && opts.data.text.is_none() {
        return Err(CliError::Msg(
            "the semantic branch needs item text: pass --text <file>, or --no-memnet for the CF-only model"
                .to_string(),
        ));
    }

    std::fs::create_dir_all(&opts.out_dir).map_err(|e| PneError::io(&opts.out_dir, e))?;
    let started = Instant::now();

    let pipeline = build_pipeline(&opts.data, use_memnet)?;
    let Pipeline { ds, corpus } = &pipeline;

    let config = PneConfig {
        num_users: ds.num_users,
        num_items: ds.num_items,
        vocab_size: corpus.vocab_size(),
        d: opts.dim,
        hidden: opts.hidden,
        use_memnet,
    };
    let tcfg = TrainConfig {
        batch_size: opts.batch,
        neg_ratio: opts.neg_ratio,
        epochs: opts.epochs,
        seed: opts.data.seed,
        learning_rate: opts.lr,
        threads: opts.eval.threads,
        ..TrainConfig::default()
    };

    let checkpoint_path = opts
        .checkpoint
        .clone()
        .unwrap_or_else(|| opts.out_dir.join("checkpoint.pne"));

    let mut manifest = Manifest::new(opts.out_dir.join("manifest.tsv"), "train");
    manifest.set_input("interactions", &opts.data.interactions)?;
    if let Some(text) = &opts.data.text {
        manifest.set_input("text", text)?;
    }
    manifest.set("num_users", ds.num_users);
    manifest.set("num_items", ds.num_items);
    manifest.set("vocab_size", corpus.vocab_size());
    manifest.set("vocab_max", opts.data.vocab);
    manifest.set("doc_len", opts.data.doc_len);
    manifest.set("dim", opts.dim);
    manifest.set("hidden", opts.hidden);
    manifest.set("use_memnet", use_memnet);
    manifest.set("lr", opts.lr);
    manifest.set("batch", opts.batch);
    manifest.set("neg_ratio", opts.neg_ratio);
    manifest.set("epochs", opts.epochs);
    manifest.set("init_stddev", tcfg.init_stddev);
    manifest.set("seed", opts.data.seed);
    manifest.set("eval_seed", opts.eval.eval_seed);
    manifest.set("num_negatives", opts.eval.num_negatives);
    manifest.set("threads", opts.eval.threads);
    manifest.set("checkpoint", checkpoint_path.display());
    manifest.write()?;

    write_id_maps(&opts.out_dir, ds)?;
    write_vocab(&opts.out_dir, corpus)?;

    let mut params: PneParams<f32> =
        PneParams::init(&config, tcfg.init_stddev, &mut Rng::derive(tcfg.seed, 1));
    let mut state = AdamState::new(&config, tcfg.learning_rate);
    let mut train_rng = Rng::derive(tcfg.seed, 2);

    let log_path = opts.out_dir.join("train_log.tsv");
    let log_file = File::create(&log_path).map_err(|e| PneError::io(&log_path, e))?;
    let mut log = BufWriter::new(log_file);

    println!(
        "training: {} users, {} items, {} words, {} train pairs, {} test users",
        ds.num_users,
        ds.num_items,
        corpus.vocab_size(),
        ds.train_pairs.len(),
        ds.test_pairs.len()
    );
    for epoch in 0..tcfg.epochs {
        let mean_loss =
            train_epoch(&mut params, &mut state, ds, corpus, &config, &tcfg, &mut train_rng)?;
        let val = evaluate_model(
            &params,
            &config,
            ds,
            corpus,
            opts.eval.num_negatives,
            &[10],
            opts.eval.eval_seed,
            opts.eval.threads,
        )?;
        let row = val.rows[0];
        writeln!(
            log,
            "{}\t{}\t{}\t{}\t{}",
            epoch, mean_loss, row.hr, row.ndcg, row.mrr
        )
        .map_err(|e| PneError::io(&log_path, e))?;
        println!(
            "epoch {:>4}  loss {:.4}  HR@10 {:>6.2}  NDCG@10 {:>6.2}  MRR@10 {:>6.2}",
            epoch,
            mean_loss,
            row.hr * 100.0,
            row.ndcg * 100.0,
            row.mrr * 100.0
        );
        if (epoch + 1) % 10 == 0 && epoch + 1 < tcfg.epochs {
            save_checkpoint(&checkpoint_path, &config, &params)?;
        }
    }
    log.flush().map_err(|e| PneError::io(&log_path, e))?;

    save_checkpoint(&checkpoint_path, &config, &params)?;
    manifest.finish(started.elapsed().as_secs_f64())?;
    println!("checkpoint written to {}", checkpoint_path.display());
    Ok(())
}

pub fn evaluate(
    data: DataArgs,
    eval: EvalArgs,
    checkpoint: PathBuf,
    cutoffs: Vec<usize>,
    out_dir: PathBuf,
) -> Result<()> {
    let (config, params) = load_checkpoint(&checkpoint)?;
    if config.use_memnet && data.text.is_none() {
        return Err(CliError::Msg(
            "this checkpoint uses the semantic branch; pass --text <file> so documents can be rebuilt"
                .to_string(),
        ));
    }
    let pipeline = build_pipeline(&data, config.use_memnet)?;
    check_dims(&config, &pipeline.ds, &pipeline.corpus)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| PneError::io(&out_dir, e))?;
    let started = Instant::now();

    let mut manifest = Manifest::new(out_dir.join("eval_manifest.tsv"), "evaluate");
    manifest.set_input("interactions", &data.interactions)?;
    if let Some(text) = &data.text {
        manifest.set_input("text", text)?;
    }
    manifest.set_input("checkpoint", &checkpoint)?;
    manifest.set("seed", data.seed);
    manifest.set("eval_seed", eval.eval_seed);
    manifest.set("num_negatives", eval.num_negatives);
    manifest.set(
        "cutoffs",
        cutoffs.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.set("threads", eval.threads);
    manifest.write()?;

    write_id_maps(&out_dir, &pipeline.ds)?;

    let report = evaluate_model(
        &params,
        &config,
        &pipeline.ds,
        &pipeline.corpus,
        eval.num_negatives,
        &cutoffs,
        eval.eval_seed,
        eval.threads,
    )?;
    print_report(&report);
    write_report_tsv(&report, &out_dir.join("report.tsv"))?;
    write_details_tsv(&report, &out_dir.join("details.tsv"))?;
    manifest.finish(started.elapsed().as_secs_f64())?;
    println!(
        "report written to {} ({} test users)",
        out_dir.join("report.tsv").display(),
        report.details.len()
    );
    Ok(())
}

pub fn recommend(data: DataArgs, checkpoint: PathBuf, user_key: &str, top_k: usize) -> Result<()> {
    let (config, params) = load_checkpoint(&checkpoint)?;
    if config.use_memnet && data.text.is_none() {
        return Err(CliError::Msg(
            "this checkpoint uses the semantic branch; pass --text <file> so documents can be rebuilt"
                .to_string(),
        ));
    }
    let pipeline = build_pipeline(&data, config.use_memnet)?;
    check_dims(&config, &pipeline.ds, &pipeline.corpus)?;

    let user = pipeline.ds.user_id(user_key).ok_or(PneError::UnknownKey {
        kind: "user key",
        key: user_key.to_string(),
    })?;

    let positives = &pipeline.ds.user_positives[user as usize];
    let mut scored: Vec<(u32, f32)> = (0..pipeline.ds.num_items as u32)
        .filter(|item| !positives.contains(item))
        .map(|item| {
            let trace = forward(&params, &config, user, item, pipeline.corpus.doc(item));
            (item, trace.y_hat)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(top_k);

    for (item, score) in scored {
        println!("{}\t{:.6}", pipeline.ds.item_keys[item as usize], score);
    }
    Ok(())
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return f64::NEG_INFINITY;
    }
    dot / (na * nb)
}

pub fn export_embeddings(
    data: DataArgs,
    checkpoint: PathBuf,
    out_dir: PathBuf,
    nearest: Option<&str>,
    n: usize,
) -> Result<()> {
    let (config, params) = load_checkpoint(&checkpoint)?;
    if data.text.is_none() {
        return Err(CliError::Msg(
            "word export needs the vocabulary; pass --text <file> used at training time".to_string(),
        ));
    }
    let pipeline = build_pipeline(&data, true)?;
    let corpus = &pipeline.corpus;
    if config.vocab_size != corpus.vocab_size() {
        return Err(PneError::DimMismatch {
            context: "checkpoint vs corpus vocabulary".to_string(),
            expected: config.vocab_size.to_string(),
            found: corpus.vocab_size().to_string(),
        }
        .into());
    }

    std::fs::create_dir_all(&out_dir).map_err(|e| PneError::io(&out_dir, e))?;

    let vectors_path = out_dir.join("vectors.tsv");
    let metadata_path = out_dir.join("metadata.tsv");
    {
        let file = File::create(&vectors_path).map_err(|e| PneError::io(&vectors_path, e))?;
        let mut w = BufWriter::new(file);
        for word in 0..corpus.vocab_size() {
            let row = params.a.row(word);
            let line = row
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("\t");
            writeln!(w, "{}", line).map_err(|e| PneError::io(&vectors_path, e))?;
        }
        w.flush().map_err(|e| PneError::io(&vectors_path, e))?;
    }
    {
        let file = File::create(&metadata_path).map_err(|e| PneError::io(&metadata_path, e))?;
        let mut w = BufWriter::new(file);
        for word in &corpus.words {
            writeln!(w, "{}", word).map_err(|e| PneError::io(&metadata_path, e))?;
        }
        w.flush().map_err(|e| PneError::io(&metadata_path, e))?;
    }
    println!(
        "wrote {} ({} words) and {}",
        vectors_path.display(),
        corpus.vocab_size(),
        metadata_path.display()
    );

    if let Some(query) = nearest {
        let word = *corpus.vocab.get(query).ok_or(PneError::UnknownKey {
            kind: "word",
            key: query.to_string(),
        })? as usize;
        let mut sims: Vec<(usize, f64)> = (0..corpus.vocab_size())
            .filter(|&other| other != word)
            .map(|other| (other, cosine(params.a.row(word), params.a.row(other))))
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        println!("nearest to {:?}:", query);
        for (other, sim) in sims.into_iter().take(n) {
            println!("{}\t{:.6}", corpus.words[other], sim);
        }
    }
    Ok(())
}
