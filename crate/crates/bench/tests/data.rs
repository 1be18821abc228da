use std::collections::{BTreeMap, BTreeSet};

use hybridrec_bench::data::{load_dataset_dir, write_dataset_dir, Dataset, DEFAULT_THRESHOLD};
use hybridrec_bench::synth::{generate_synthetic, keyword, SynthConfig};

#[test]
fn synthetic_dataset_survives_disk_round_trip() {
    let d = generate_synthetic(&SynthConfig::new(300, 120, 5));
    let original = Dataset { interactions: d.interactions, corpus: d.corpus };
    let dir = tempfile::tempdir().unwrap();
    write_dataset_dir(dir.path(), &original).unwrap();
    let back = load_dataset_dir(dir.path(), DEFAULT_THRESHOLD).unwrap();
    assert_eq!(back, original);
}

#[test]
fn within_cluster_interaction_rate_is_at_least_three_times_across() {
    let d = generate_synthetic(&SynthConfig::new(2000, 800, 11));
    let t = &d.truth;
    let k = t.item_cluster.iter().max().unwrap() + 1;
    let mut users_in = vec![0usize; k];
    let mut items_in = vec![0usize; k];
    t.user_cluster.iter().for_each(|&c| users_in[c] += 1);
    t.item_cluster.iter().for_each(|&c| items_in[c] += 1);
    let same_pairs: usize = (0..k).map(|c| users_in[c] * items_in[c]).sum();
    let all_pairs = t.user_cluster.len() * t.item_cluster.len();

    let pairs: BTreeSet<(u64, u64)> = d.interactions.iter().map(|x| (x.user, x.item)).collect();
    let same = pairs.iter().filter(|(u, i)| t.user_cluster[*u as usize] == t.item_cluster[*i as usize]).count();
    let within = same as f64 / same_pairs as f64;
    let across = (pairs.len() - same) as f64 / (all_pairs - same_pairs) as f64;
    assert!(within >= 3.0 * across, "within {within}, across {across}");
}

#[test]
fn same_cluster_item_texts_share_a_keyword() {
    let cfg = SynthConfig::new(100, 600, 13);
    let d = generate_synthetic(&cfg);
    let vocab: BTreeMap<String, usize> = (0..cfg.n_clusters)
        .flat_map(|c| (0..cfg.keywords_per_cluster).map(move |j| (keyword(c, j), c)))
        .collect();
    let words: Vec<BTreeSet<&str>> = (0..cfg.n_items as u64)
        .map(|i| d.corpus.item_docs[&i].split(' ').filter(|w| vocab.contains_key(*w)).collect())
        .collect();
    let (mut pairs, mut sharing) = (0usize, 0usize);
    for a in 0..cfg.n_items {
        for b in a + 1..cfg.n_items {
            if d.truth.item_text_cluster[a] == d.truth.item_text_cluster[b] {
                pairs += 1;
                sharing += usize::from(!words[a].is_disjoint(&words[b]));
            }
        }
    }
    let rate = sharing as f64 / pairs as f64;
    assert!(pairs > 1000 && rate > 0.9, "{sharing}/{pairs}");
}
