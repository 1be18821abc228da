//! Planted synthetic dataset.
//!
//! Users and items belong to latent clusters. Each modality sees the
//! clusters through its own noise:
//!
//! - structure: a `cold_item_rate` share of items are new releases. Only a
//!   user's `recent` latest interactions reach them; earlier clicks go to
//!   established items of the user's cluster, or with probability
//!   `interaction_noise` to any item.
//! - text: each item describes a cluster drawn independently of its true
//!   cluster with probability `item_text_noise`; only a `bio_rate` share of
//!   users has a profile text.
//!
//! Every user's recent interactions are items of their own cluster, warm or
//! cold, as long as the cluster has items the user has not seen. Once those are kept out of the message-passing graph, a model needs
//! the graph for warm items and the text for cold ones.

use std::collections::BTreeSet;

use hybridrec::semantic::Corpus;
use hybridrec::Interaction;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    pub min_history: usize,
    pub max_history: usize,
    /// Trailing interactions per user drawn from all items of the cluster.
    pub recent: usize,
    pub interaction_noise: f64,
    pub cold_item_rate: f64,
    pub item_text_noise: f64,
    pub bio_rate: f64,
    pub bio_noise: f64,
    pub keywords_per_cluster: usize,
    pub item_keywords: usize,
    pub item_filler: usize,
    pub bio_keywords: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n_users: usize, n_items: usize, seed: u64) -> Self {
        Self {
            n_users,
            n_items,
            n_clusters: 20,
            min_history: 4,
            max_history: 8,
            recent: 2,
            interaction_noise: 0.1,
            cold_item_rate: 0.65,
            item_text_noise: 0.15,
            bio_rate: 0.6,
            bio_noise: 0.1,
            keywords_per_cluster: 6,
            item_keywords: 4,
            item_filler: 2,
            bio_keywords: 3,
            seed,
        }
    }
}

/// The latent assignments behind a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    pub user_cluster: Vec<usize>,
    pub item_cluster: Vec<usize>,
    /// Cluster whose keywords the item text uses.
    pub item_text_cluster: Vec<usize>,
    pub cold: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub interactions: Vec<Interaction>,
    pub corpus: Corpus,
    pub truth: SyntheticTruth,
}

const SYLLABLES: [&str; 16] =
    ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "zu", "pe", "da", "gi", "ho", "ju", "be", "fy"];

const FILLER: [&str; 24] = [
    "great", "quality", "item", "value", "fast", "shipping", "nice", "good", "works", "recommend", "price", "fine",
    "solid", "buy", "product", "love", "okay", "happy", "order", "arrived", "decent", "classic", "new", "favorite",
];

/// Keyword `j` of cluster `k`: three syllables, unique per `(k, j)` for
/// `k < 256`, `j < 16`.
pub fn keyword(k: usize, j: usize) -> String {
    format!("{}{}{}", SYLLABLES[k / 16 % 16], SYLLABLES[k % 16], SYLLABLES[j % 16])
}

fn words(rng: &mut ChaCha8Rng, cluster: usize, n: usize, vocab: usize) -> Vec<String> {
    (0..n).map(|_| keyword(cluster, rng.gen_range(0..vocab))).collect()
}

fn noisy_cluster(rng: &mut ChaCha8Rng, cluster: usize, noise: f64, k: usize) -> usize {
    if rng.gen_bool(noise) {
        rng.gen_range(0..k)
    } else {
        cluster
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> SyntheticData {
    assert!(cfg.n_users >= 10 && cfg.n_items >= 10, "synthetic data needs at least 10 users and items");
    assert!(cfg.n_clusters >= 1 && cfg.min_history >= 1 && cfg.min_history <= cfg.max_history);
    let k = cfg.n_clusters;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let item_cluster: Vec<usize> = (0..cfg.n_items).map(|_| rng.gen_range(0..k)).collect();
    let cold: Vec<bool> = (0..cfg.n_items).map(|_| rng.gen_bool(cfg.cold_item_rate)).collect();
    let item_text_cluster: Vec<usize> =
        item_cluster.iter().map(|&c| noisy_cluster(&mut rng, c, cfg.item_text_noise, k)).collect();

    let mut members: Vec<Vec<u64>> = vec![Vec::new(); k];
    let mut warm: Vec<Vec<u64>> = vec![Vec::new(); k];
    for i in 0..cfg.n_items {
        members[item_cluster[i]].push(i as u64);
        if !cold[i] {
            warm[item_cluster[i]].push(i as u64);
        }
    }

    let mut corpus = Corpus::default();
    for i in 0..cfg.n_items {
        let mut w = words(&mut rng, item_text_cluster[i], cfg.item_keywords, cfg.keywords_per_cluster);
        w.extend((0..cfg.item_filler).map(|_| FILLER[rng.gen_range(0..FILLER.len())].to_owned()));
        w.shuffle(&mut rng);
        corpus.item_docs.insert(i as u64, w.join(" "));
    }

    let mut user_cluster = Vec::with_capacity(cfg.n_users);
    let mut interactions = Vec::new();
    for u in 0..cfg.n_users as u64 {
        let c = rng.gen_range(0..k);
        user_cluster.push(c);
        let len = rng.gen_range(cfg.min_history..=cfg.max_history);
        let mut history = BTreeSet::new();
        let mut order = Vec::with_capacity(len + cfg.recent);
        let mut attempts = 0;
        while order.len() < len && attempts < 50 * len {
            attempts += 1;
            let item = if rng.gen_bool(cfg.interaction_noise) || warm[c].is_empty() {
                rng.gen_range(0..cfg.n_items) as u64
            } else {
                warm[c][rng.gen_range(0..warm[c].len())]
            };
            if history.insert(item) {
                order.push(item);
            }
        }
        for _ in 0..cfg.recent {
            let fresh: Vec<u64> = members[c].iter().copied().filter(|i| !history.contains(i)).collect();
            if fresh.is_empty() {
                break;
            }
            let item = fresh[rng.gen_range(0..fresh.len())];
            history.insert(item);
            order.push(item);
        }
        for (t, &item) in order.iter().enumerate() {
            let rating = if rng.gen_bool(0.5) { 5.0 } else { 4.0 };
            interactions.push(Interaction::new(u, item, rating, t as i64 + 1));
        }
        if rng.gen_bool(cfg.bio_rate) {
            let b = noisy_cluster(&mut rng, c, cfg.bio_noise, k);
            let mut w = words(&mut rng, b, cfg.bio_keywords, cfg.keywords_per_cluster);
            w.push(FILLER[rng.gen_range(0..FILLER.len())].to_owned());
            corpus.user_docs.insert(u, w.join(" "));
        }
    }

    SyntheticData { interactions, corpus, truth: SyntheticTruth { user_cluster, item_cluster, item_text_cluster, cold } }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = generate_synthetic(&SynthConfig::new(50, 40, 3));
        let b = generate_synthetic(&SynthConfig::new(50, 40, 3));
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(&SynthConfig::new(50, 40, 4)));
    }

    #[test]
    fn keywords_are_unique() {
        let all: BTreeSet<String> = (0..40).flat_map(|k| (0..6).map(move |j| keyword(k, j))).collect();
        assert_eq!(all.len(), 240);
    }

    #[test]
    fn last_interaction_is_in_cluster() {
        // About 20 items per cluster, more than any history, so recent
        // picks always find an item the user has not seen.
        let d = generate_synthetic(&SynthConfig::new(200, 400, 1));
        let mut last = std::collections::BTreeMap::new();
        for x in &d.interactions {
            let e = last.entry(x.user).or_insert_with(|| x.clone());
            if x.timestamp > e.timestamp {
                *e = x.clone();
            }
        }
        for (u, x) in last {
            assert_eq!(d.truth.user_cluster[u as usize], d.truth.item_cluster[x.item as usize]);
        }
    }
}
