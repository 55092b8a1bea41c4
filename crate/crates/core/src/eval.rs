//! Leave-one-out ranking evaluation: HR@K, NDCG@K, and MRR@K.
//!
//! Each test user's held-out item is ranked against sampled negatives.
//! Candidate sampling derives a per-user generator from the evaluation
//! seed, so two models evaluated with the same seed rank identical
//! candidate lists regardless of thread count or user order. Ties are
//! broken pessimistically: the positive loses against every equal-scored
//! negative.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{sample_negatives, Corpus, InteractionDataset};
use crate::error::PneError;
use crate::model::{forward, PneConfig, PneParams};
use crate::numkernel::{Real, Rng};

/// Anything that can score a (user, item) pair. Higher means more relevant.
/// Ranking only compares scores, so any strictly increasing transform of a
/// scorer produces identical metrics.
pub trait Scorer: Sync {
    fn score(&self, user: u32, item: u32) -> f64;
}

/// Scores pairs with the model's pre-sigmoid logit (the sigmoid is strictly
/// increasing, so ranking by logit equals ranking by probability while
/// avoiding `f32` saturation ties).
pub struct PneScorer<'a, T: Real> {
    pub params: &'a PneParams<T>,
    pub config: &'a PneConfig,
    pub corpus: &'a Corpus,
}

impl<T: Real> Scorer for PneScorer<'_, T> {
    fn score(&self, user: u32, item: u32) -> f64 {
        forward(self.params, self.config, user, item, self.corpus.doc(item))
            .logit
            .as_f64()
    }
}

/// Rank of the positive among the candidates: `1 + |negatives scoring
/// strictly higher| + |negatives scoring equal|`.
pub fn rank_from_scores(positive: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= positive).count()
}

/// Scores the positive and every negative with the model and ranks the
/// positive. The positive must not appear among the negatives.
pub fn rank_candidates<T: Real>(
    params: &PneParams<T>,
    config: &PneConfig,
    user: u32,
    positive: u32,
    negatives: &[u32],
    corpus: &Corpus,
) -> usize {
    debug_assert!(!negatives.contains(&positive));
    let scorer = PneScorer {
        params,
        config,
        corpus,
    };
    let pos = scorer.score(user, positive);
    let neg: Vec<f64> = negatives.iter().map(|&i| scorer.score(user, i)).collect();
    rank_from_scores(pos, &neg)
}

/// Single-relevant-item metrics at cutoff `k`:
/// hit ratio, `1 / log2(rank + 1)`, and `1 / rank`, all zero past the cutoff.
pub fn metrics_at_k(rank: usize, k: usize) -> (f64, f64, f64) {
    assert!(rank >= 1 && k >= 1, "metrics_at_k: rank and k must be >= 1");
    if rank > k {
        return (0.0, 0.0, 0.0);
    }
    let hr = 1.0;
    let ndcg = 1.0 / ((rank as f64) + 1.0).log2();
    let mrr = 1.0 / rank as f64;
    (hr, ndcg, mrr)
}

/// Mean metrics at one cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub mrr: f64,
}

/// Per-user ranking outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserRank {
    pub user: u32,
    pub held_out_item: u32,
    pub rank: usize,
    pub num_candidates: usize,
}

/// Aggregate evaluation result with per-user detail.
#[derive(Clone, Debug)]
pub struct RankingReport {
    pub rows: Vec<CutoffMetrics>,
    pub details: Vec<UserRank>,
}

impl RankingReport {
    pub fn at_k(&self, k: usize) -> Option<&CutoffMetrics> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// Evaluates a scorer over every test pair. For each test user,
/// `num_negatives` candidates are drawn (excluding the held-out positive
/// and the user's training positives) from `Rng::derive(eval_seed, user)`.
pub fn evaluate(
    scorer: &dyn Scorer,
    ds: &InteractionDataset,
    num_negatives: usize,
    cutoffs: &[usize],
    eval_seed: u64,
    threads: usize,
) -> Result<RankingReport, PneError> {
    if ds.test_pairs.is_empty() {
        return Err(PneError::EmptyTestSet);
    }
    assert!(num_negatives >= 1 && !cutoffs.is_empty());

    let rank_one = |&(user, positive): &(u32, u32)| -> UserRank {
        let mut rng = Rng::derive(eval_seed, user as u64);
        let negatives = sample_negatives(ds, user, num_negatives, &[positive], &mut rng);
        let pos_score = scorer.score(user, positive);
        let neg_scores: Vec<f64> = negatives
            .items
            .iter()
            .map(|&i| scorer.score(user, i))
            .collect();
        UserRank {
            user,
            held_out_item: positive,
            rank: rank_from_scores(pos_score, &neg_scores),
            num_candidates: neg_scores.len() + 1,
        }
    };

    let details: Vec<UserRank> = if threads <= 1 || ds.test_pairs.len() < 2 {
        ds.test_pairs.iter().map(rank_one).collect()
    } else {
        let chunk = ds.test_pairs.len().div_ceil(threads);
        let mut slots: Vec<Option<UserRank>> = (0..ds.test_pairs.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (slot_chunk, pair_chunk) in slots.chunks_mut(chunk).zip(ds.test_pairs.chunks(chunk))
            {
                scope.spawn(move || {
                    for (slot, pair) in slot_chunk.iter_mut().zip(pair_chunk) {
                        *slot = Some(rank_one(pair));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("slot filled")).collect()
    };

    let rows = aggregate(&details, cutoffs);
    Ok(RankingReport { rows, details })
}

fn aggregate(details: &[UserRank], cutoffs: &[usize]) -> Vec<CutoffMetrics> {
    cutoffs
        .iter()
        .map(|&k| {
            let mut hr = 0.0;
            let mut ndcg = 0.0;
            let mut mrr = 0.0;
            for d in details {
                let (h, n, m) = metrics_at_k(d.rank, k);
                hr += h;
                ndcg += n;
                mrr += m;
            }
            let count = details.len() as f64;
            CutoffMetrics {
                k,
                hr: hr / count,
                ndcg: ndcg / count,
                mrr: mrr / count,
            }
        })
        .collect()
}

/// Convenience wrapper scoring with the model itself.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model<T: Real>(
    params: &PneParams<T>,
    config: &PneConfig,
    ds: &InteractionDataset,
    corpus: &Corpus,
    num_negatives: usize,
    cutoffs: &[usize],
    eval_seed: u64,
    threads: usize,
) -> Result<RankingReport, PneError> {
    let scorer = PneScorer {
        params,
        config,
        corpus,
    };
    evaluate(&scorer, ds, num_negatives, cutoffs, eval_seed, threads)
}

/// Writes `K<TAB>HR<TAB>NDCG<TAB>MRR` rows with values scaled by 100 and
/// rounded to two decimals, the same convention the per-user detail file
/// leaves reversible (exact metrics are recomputable from the ranks).
pub fn write_report_tsv(report: &RankingReport, path: &Path) -> Result<(), PneError> {
    let file = File::create(path).map_err(|e| PneError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| PneError::io(path, e);
    writeln!(w, "K\tHR\tNDCG\tMRR").map_err(io_err)?;
    for row in &report.rows {
        writeln!(
            w,
            "{}\t{:.2}\t{:.2}\t{:.2}",
            row.k,
            row.hr * 100.0,
            row.ndcg * 100.0,
            row.mrr * 100.0
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes `user<TAB>held_out_item<TAB>rank` per test user.
pub fn write_details_tsv(report: &RankingReport, path: &Path) -> Result<(), PneError> {
    let file = File::create(path).map_err(|e| PneError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| PneError::io(path, e);
    writeln!(w, "user\theld_out_item\trank").map_err(io_err)?;
    for d in &report.details {
        writeln!(w, "{}\t{}\t{}", d.user, d.held_out_item, d.rank).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
