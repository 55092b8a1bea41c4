//! Interaction ingestion, corpus building, leave-one-out splitting, and
//! negative sampling.
//!
//! File formats:
//! - interactions: UTF-8 TSV, one `user_key<TAB>item_key[<TAB>timestamp]`
//!   per line, `#`-prefixed lines ignored;
//! - item text: UTF-8 TSV, `item_key<TAB>free text`, multiple lines per item
//!   concatenated in file order (the text may itself contain tabs; only the
//!   first tab separates key from text).

mod synth;

pub use synth::{synth_planted, SynthConfig};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::PneError;
use crate::numkernel::Rng;

/// One raw interaction record, still keyed by external strings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawInteraction {
    pub user_key: String,
    pub item_key: String,
    pub timestamp: Option<i64>,
}

/// Implicit-feedback dataset after dense re-indexing and the leave-one-out
/// split. Every entry of the original interaction matrix is either a
/// training positive, the single held-out test positive of its user, or
/// unobserved.
#[derive(Clone, Debug)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train_pairs: Vec<(u32, u32)>,
    /// One held-out pair per eligible user (a user with >= 2 interactions).
    pub test_pairs: Vec<(u32, u32)>,
    /// Per-user set of training positives, indexed by dense user id.
    pub user_positives: Vec<BTreeSet<u32>>,
    /// Dense id -> external key maps, written as sidecar files by the CLI.
    pub user_keys: Vec<String>,
    pub item_keys: Vec<String>,
}

impl InteractionDataset {
    pub fn user_id(&self, key: &str) -> Option<u32> {
        self.user_keys.iter().position(|k| k == key).map(|i| i as u32)
    }
}

/// Vocabulary plus per-item token-id documents.
///
/// Items with no text get an empty document, never a missing entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    /// word -> id, ids assigned by (frequency desc, word asc).
    pub vocab: BTreeMap<String, u32>,
    /// id -> word, index aligned with the ids in `vocab`.
    pub words: Vec<String>,
    /// Per-item token ids, truncated to the corpus `l_max`.
    pub docs: Vec<Vec<u32>>,
}

impl Corpus {
    /// Corpus with no vocabulary and an empty document per item, for
    /// CF-only models that never read text.
    pub fn empty(num_items: usize) -> Self {
        Corpus {
            vocab: BTreeMap::new(),
            words: Vec::new(),
            docs: vec![Vec::new(); num_items],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn doc(&self, item: u32) -> &[u32] {
        &self.docs[item as usize]
    }

    pub fn doc_lengths(&self) -> Vec<usize> {
        self.docs.iter().map(|d| d.len()).collect()
    }
}

/// Parses an interactions TSV. Duplicate (user, item) lines collapse to one
/// positive keeping the largest timestamp (a missing timestamp counts as
/// older than any present one).
pub fn load_interactions(path: &Path) -> Result<Vec<RawInteraction>, PneError> {
    let file = File::open(path).map_err(|e| PneError::io(path, e))?;
    let reader = BufReader::new(file);

    let mut order: Vec<(String, String)> = Vec::new();
    let mut merged: HashMap<(String, String), Option<i64>> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| PneError::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(PneError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!(
                    "expected `user<TAB>item[<TAB>timestamp]`, found {} field(s)",
                    fields.len()
                ),
            });
        }
        let timestamp = if fields.len() == 3 {
            Some(fields[2].parse::<i64>().map_err(|_| PneError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("timestamp is not an integer: {:?}", fields[2]),
            })?)
        } else {
            None
        };
        let key = (fields[0].to_string(), fields[1].to_string());
        match merged.get_mut(&key) {
            Some(existing) => {
                if timestamp > *existing {
                    *existing = timestamp;
                }
            }
            None => {
                merged.insert(key.clone(), timestamp);
                order.push(key);
            }
        }
    }

    if order.is_empty() {
        return Err(PneError::EmptyInput {
            path: path.to_path_buf(),
        });
    }

    Ok(order
        .into_iter()
        .map(|key| {
            let timestamp = merged[&key];
            RawInteraction {
                user_key: key.0,
                item_key: key.1,
                timestamp,
            }
        })
        .collect())
}

/// Parses an item-text TSV into `item_key -> concatenated text`.
pub fn load_texts(path: &Path) -> Result<BTreeMap<String, String>, PneError> {
    let file = File::open(path).map_err(|e| PneError::io(path, e))?;
    let reader = BufReader::new(file);

    let mut texts: BTreeMap<String, String> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| PneError::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() {
            continue;
        }
        let (key, text) = trimmed.split_once('\t').ok_or_else(|| PneError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: "expected `item_key<TAB>text`".to_string(),
        })?;
        let entry = texts.entry(key.to_string()).or_default();
        if !entry.is_empty() {
            entry.push(' ');
        }
        entry.push_str(text);
    }
    Ok(texts)
}

/// Lowercases and splits on any run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Builds the vocabulary (the `v_max` most frequent tokens, ties broken
/// lexicographically) and tokenizes each item's text into ids, keeping the
/// first `l_max` in-vocabulary tokens. `texts` is indexed by dense item id.
pub fn build_corpus(texts: &[String], v_max: usize, l_max: usize) -> Corpus {
    assert!(v_max >= 1, "build_corpus: v_max must be >= 1");
    assert!(l_max >= 1, "build_corpus: l_max must be >= 1");

    let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();

    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in &tokenized {
        for tok in doc {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(v_max);

    let words: Vec<String> = ranked.iter().map(|(w, _)| w.to_string()).collect();
    let vocab: BTreeMap<String, u32> = words
        .iter()
        .enumerate()
        .map(|(id, w)| (w.clone(), id as u32))
        .collect();

    let docs: Vec<Vec<u32>> = tokenized
        .iter()
        .map(|doc| {
            doc.iter()
                .filter_map(|tok| vocab.get(tok).copied())
                .take(l_max)
                .collect()
        })
        .collect();

    Corpus { vocab, words, docs }
}

/// Re-indexes external keys densely (in order of first appearance) and holds
/// out one interaction per eligible user: the latest by timestamp when every
/// interaction of that user carries one, otherwise one chosen uniformly.
/// Users with a single interaction stay entirely in train.
pub fn leave_one_out_split(
    raw: &[RawInteraction],
    rng: &mut Rng,
) -> Result<InteractionDataset, PneError> {
    let mut user_ids: HashMap<&str, u32> = HashMap::new();
    let mut item_ids: HashMap<&str, u32> = HashMap::new();
    let mut user_keys: Vec<String> = Vec::new();
    let mut item_keys: Vec<String> = Vec::new();
    let mut merged: BTreeMap<(u32, u32), Option<i64>> = BTreeMap::new();
    let mut pair_order: Vec<(u32, u32)> = Vec::new();

    for r in raw {
        let u = *user_ids.entry(&r.user_key).or_insert_with(|| {
            user_keys.push(r.user_key.clone());
            (user_keys.len() - 1) as u32
        });
        let i = *item_ids.entry(&r.item_key).or_insert_with(|| {
            item_keys.push(r.item_key.clone());
            (item_keys.len() - 1) as u32
        });
        match merged.get_mut(&(u, i)) {
            Some(existing) => {
                if r.timestamp > *existing {
                    *existing = r.timestamp;
                }
            }
            None => {
                merged.insert((u, i), r.timestamp);
                pair_order.push((u, i));
            }
        }
    }

    let pairs: Vec<(u32, u32, Option<i64>)> =
        pair_order.iter().map(|&(u, i)| (u, i, merged[&(u, i)])).collect();
    split_dense(pairs, user_keys, item_keys, rng)
}

/// Leave-one-out split over already-dense, already-deduplicated pairs.
pub(crate) fn split_dense(
    pairs: Vec<(u32, u32, Option<i64>)>,
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    rng: &mut Rng,
) -> Result<InteractionDataset, PneError> {
    let num_users = user_keys.len();
    let num_items = item_keys.len();

    let mut per_user: Vec<Vec<(u32, Option<i64>)>> = vec![Vec::new(); num_users];
    for (u, i, ts) in pairs {
        per_user[u as usize].push((i, ts));
    }

    let mut train_pairs: Vec<(u32, u32)> = Vec::new();
    let mut test_pairs: Vec<(u32, u32)> = Vec::new();
    let mut user_positives: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); num_users];

    for (u, interactions) in per_user.iter().enumerate() {
        let user = u as u32;
        if interactions.len() < 2 {
            for &(i, _) in interactions {
                train_pairs.push((user, i));
                user_positives[u].insert(i);
            }
            continue;
        }
        let all_timestamped = interactions.iter().all(|(_, ts)| ts.is_some());
        let held_idx = if all_timestamped {
            // latest timestamp; among ties the last occurrence wins
            let mut best = 0usize;
            for (idx, (_, ts)) in interactions.iter().enumerate() {
                if ts >= &interactions[best].1 {
                    best = idx;
                }
            }
            best
        } else {
            rng.below(interactions.len() as u64) as usize
        };
        for (idx, &(i, _)) in interactions.iter().enumerate() {
            if idx == held_idx {
                test_pairs.push((user, i));
            } else {
                train_pairs.push((user, i));
                user_positives[u].insert(i);
            }
        }
    }

    if test_pairs.is_empty() {
        return Err(PneError::NoEligibleUsers);
    }

    Ok(InteractionDataset {
        num_users,
        num_items,
        train_pairs,
        test_pairs,
        user_positives,
        user_keys,
        item_keys,
    })
}

/// Result of a negative-sampling request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    pub items: Vec<u32>,
    /// True when fewer candidates existed than were requested; `items` then
    /// holds every candidate.
    pub shortfall: bool,
}

/// Draws `count` items uniformly without replacement from the items that are
/// neither training positives of `user` nor in `exclude`.
pub fn sample_negatives(
    ds: &InteractionDataset,
    user: u32,
    count: usize,
    exclude: &[u32],
    rng: &mut Rng,
) -> NegativeSample {
    assert!(count >= 1, "sample_negatives: count must be >= 1");
    let positives = &ds.user_positives[user as usize];
    let blocked = |item: u32| positives.contains(&item) || exclude.contains(&item);

    let num_blocked = (0..ds.num_items as u32).filter(|&i| blocked(i)).count();
    let available = ds.num_items - num_blocked;

    if available <= count {
        let items: Vec<u32> = (0..ds.num_items as u32).filter(|&i| !blocked(i)).collect();
        let shortfall = items.len() < count;
        return NegativeSample { items, shortfall };
    }

    // Rejection sampling stays cheap while draws are sparse in the catalog;
    // otherwise shuffle the explicit candidate pool.
    if count * 4 <= available {
        let mut drawn: BTreeSet<u32> = BTreeSet::new();
        let mut items = Vec::with_capacity(count);
        while items.len() < count {
            let cand = rng.below(ds.num_items as u64) as u32;
            if blocked(cand) || drawn.contains(&cand) {
                continue;
            }
            drawn.insert(cand);
            items.push(cand);
        }
        NegativeSample {
            items,
            shortfall: false,
        }
    } else {
        let mut pool: Vec<u32> = (0..ds.num_items as u32).filter(|&i| !blocked(i)).collect();
        rng.shuffle(&mut pool);
        pool.truncate(count);
        NegativeSample {
            items: pool,
            shortfall: false,
        }
    }
}
