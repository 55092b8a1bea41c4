//! Synthetic dataset with planted user/item/word clusters.
//!
//! Generative recipe (everything below is deterministic given the seed, so
//! tests can recompute expected affinities):
//!
//! - user `u` belongs to cluster `u % num_clusters`; item `i` to
//!   `i % num_clusters`; word `w` to `w % num_clusters`;
//! - each user draws `interactions_per_user` distinct items, each from the
//!   user's own cluster with probability `within_prob` and otherwise from a
//!   uniformly chosen other cluster, timestamped by draw order;
//! - every item's document is `doc_len` tokens; each token comes from the
//!   item's own word cluster with probability `word_purity`, otherwise from
//!   a uniformly chosen other cluster, the word uniform within its cluster.
//!
//! Synthetic words are named `w0000`, `w0001`, ... so that lexicographic
//! order equals id order.

use super::{split_dense, Corpus, InteractionDataset};
use crate::error::PneError;
use crate::numkernel::Rng;
use std::collections::BTreeMap;
use std::collections::BTreeSet;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub vocab_size: usize,
    pub num_clusters: usize,
    pub interactions_per_user: usize,
    /// Probability that an interaction stays in the user's own cluster.
    pub within_prob: f64,
    pub doc_len: usize,
    /// Probability that a document token comes from the item's own cluster.
    pub word_purity: f64,
}

impl SynthConfig {
    pub fn new(num_users: usize, num_items: usize, vocab_size: usize) -> Self {
        SynthConfig {
            num_users,
            num_items,
            vocab_size,
            num_clusters: 2,
            interactions_per_user: 10,
            within_prob: 0.9,
            doc_len: 20,
            word_purity: 1.0,
        }
    }

    pub fn user_cluster(&self, user: u32) -> usize {
        user as usize % self.num_clusters
    }

    pub fn item_cluster(&self, item: u32) -> usize {
        item as usize % self.num_clusters
    }

    pub fn word_cluster(&self, word: u32) -> usize {
        word as usize % self.num_clusters
    }
}

/// Generates the planted dataset and corpus described in the module docs.
pub fn synth_planted(
    cfg: &SynthConfig,
    rng: &mut Rng,
) -> Result<(InteractionDataset, Corpus), PneError> {
    assert!(cfg.num_users >= 2, "synth_planted: num_users must be >= 2");
    assert!(cfg.num_items >= 2, "synth_planted: num_items must be >= 2");
    assert!(cfg.vocab_size >= 2, "synth_planted: vocab_size must be >= 2");
    assert!(cfg.num_clusters >= 1 && cfg.num_clusters <= cfg.vocab_size);
    assert!((0.0..=1.0).contains(&cfg.within_prob));
    assert!((0.0..=1.0).contains(&cfg.word_purity));

    let k = cfg.num_clusters;

    let mut items_by_cluster: Vec<Vec<u32>> = vec![Vec::new(); k];
    for item in 0..cfg.num_items as u32 {
        items_by_cluster[cfg.item_cluster(item)].push(item);
    }

    let pick_other_cluster = |own: usize, rng: &mut Rng| -> usize {
        if k == 1 {
            return own;
        }
        let mut c = rng.below(k as u64 - 1) as usize;
        if c >= own {
            c += 1;
        }
        c
    };

    let mut pairs: Vec<(u32, u32, Option<i64>)> = Vec::new();
    for user in 0..cfg.num_users as u32 {
        let own = cfg.user_cluster(user);
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        let mut t: i64 = 0;
        let mut attempts = 0usize;
        while seen.len() < cfg.interactions_per_user && attempts < cfg.interactions_per_user * 100 {
            attempts += 1;
            let cluster = if rng.next_f64() < cfg.within_prob {
                own
            } else {
                pick_other_cluster(own, rng)
            };
            let pool = &items_by_cluster[cluster];
            if pool.is_empty() {
                continue;
            }
            let item = pool[rng.below(pool.len() as u64) as usize];
            if seen.insert(item) {
                pairs.push((user, item, Some(t)));
                t += 1;
            }
        }
    }

    let user_keys: Vec<String> = (0..cfg.num_users).map(|u| format!("u{}", u)).collect();
    let item_keys: Vec<String> = (0..cfg.num_items).map(|i| format!("i{}", i)).collect();
    let dataset = split_dense(pairs, user_keys, item_keys, rng)?;

    let words_per_cluster: Vec<Vec<u32>> = (0..k)
        .map(|c| {
            (0..cfg.vocab_size as u32)
                .filter(|&w| cfg.word_cluster(w) == c)
                .collect()
        })
        .collect();
    for (c, ws) in words_per_cluster.iter().enumerate() {
        assert!(!ws.is_empty(), "synth_planted: word cluster {} is empty", c);
    }

    let mut docs: Vec<Vec<u32>> = Vec::with_capacity(cfg.num_items);
    for item in 0..cfg.num_items as u32 {
        let own = cfg.item_cluster(item);
        let mut doc = Vec::with_capacity(cfg.doc_len);
        for _ in 0..cfg.doc_len {
            let cluster = if rng.next_f64() < cfg.word_purity {
                own
            } else {
                pick_other_cluster(own, rng)
            };
            let pool = &words_per_cluster[cluster];
            doc.push(pool[rng.below(pool.len() as u64) as usize]);
        }
        docs.push(doc);
    }

    let words: Vec<String> = (0..cfg.vocab_size).map(|w| format!("w{:04}", w)).collect();
    let vocab: BTreeMap<String, u32> = words
        .iter()
        .enumerate()
        .map(|(id, w)| (w.clone(), id as u32))
        .collect();

    Ok((dataset, Corpus { vocab, words, docs }))
}
