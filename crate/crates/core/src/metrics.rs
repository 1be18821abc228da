//! Top-k ranking metrics and latency summaries.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// A ranked recommendation list and the held-out relevant set for one user.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub items: Vec<u64>,
    pub relevant: HashSet<u64>,
}

impl RankedList {
    pub fn new(items: Vec<u64>, relevant: impl IntoIterator<Item = u64>) -> Self {
        Self { items, relevant: relevant.into_iter().collect() }
    }

    fn hits_at(&self, k: usize) -> usize {
        self.items.iter().take(k).filter(|i| self.relevant.contains(i)).count()
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    Ok(())
}

/// Hits in the top `k` divided by `k`.
pub fn precision_at_k(list: &RankedList, k: usize) -> Result<f64> {
    check_k(k)?;
    Ok(list.hits_at(k) as f64 / k as f64)
}

/// Hits in the top `k` divided by `|relevant|`; 0 when nothing is relevant.
pub fn recall_at_k(list: &RankedList, k: usize) -> Result<f64> {
    check_k(k)?;
    if list.relevant.is_empty() {
        return Ok(0.0);
    }
    Ok(list.hits_at(k) as f64 / list.relevant.len() as f64)
}

/// Binary-relevance NDCG with `1 / log2(rank + 1)` discounts; the ideal
/// ranking places `min(k, |relevant|)` hits first.
pub fn ndcg_at_k(list: &RankedList, k: usize) -> Result<f64> {
    check_k(k)?;
    if list.relevant.is_empty() {
        return Ok(0.0);
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = list
        .items
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| list.relevant.contains(i))
        .map(|(pos, _)| discount(pos + 1))
        .sum();
    let idcg: f64 = (1..=k.min(list.relevant.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// Mean of each metric over a set of users.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RankingSummary {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    /// Users that entered the averages.
    pub users: usize,
    /// Users left out because nothing was relevant for them.
    pub skipped: usize,
}

pub fn summarize(lists: &[RankedList], k: usize) -> Result<RankingSummary> {
    check_k(k)?;
    let scored: Vec<&RankedList> = lists.iter().filter(|l| !l.relevant.is_empty()).collect();
    let mut s = RankingSummary { users: scored.len(), skipped: lists.len() - scored.len(), ..Default::default() };
    if scored.is_empty() {
        return Ok(s);
    }
    for l in &scored {
        s.precision += precision_at_k(l, k)?;
        s.recall += recall_at_k(l, k)?;
        s.ndcg += ndcg_at_k(l, k)?;
    }
    let n = scored.len() as f64;
    s.precision /= n;
    s.recall /= n;
    s.ndcg /= n;
    Ok(s)
}

/// Summary of per-request wall-clock latencies, in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    /// Sample standard deviation (n − 1); 0 for a single sample.
    pub std_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn latency_stats(samples_ms: &[f64]) -> Result<LatencyStats> {
    if samples_ms.is_empty() {
        return Err(Error::InvalidInput("no latency samples".into()));
    }
    if samples_ms.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("latency samples must be finite and non-negative".into()));
    }
    let n = samples_ms.len();
    let mean = samples_ms.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (samples_ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        count: n,
        mean_ms: mean,
        std_ms: std,
        p50_ms: percentile(&sorted, 50.0),
        p99_ms: percentile(&sorted, 99.0),
        min_ms: sorted[0],
        max_ms: sorted[n - 1],
    })
}

/// `"140 ± 12"`: both values rounded to whole numbers.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{} ± {}", mean.round() as i64, std.round() as i64)
}

impl fmt::Display for LatencyStats {
    /// `"mean ± std"`, both rounded to whole milliseconds.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_mean_std(self.mean_ms, self.std_ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-4
    }

    #[test]
    fn single_hit_at_rank_three() {
        let l = RankedList::new(vec![5, 9, 1, 7, 3], [1]);
        assert_eq!(precision_at_k(&l, 5).unwrap(), 0.2);
        assert_eq!(recall_at_k(&l, 5).unwrap(), 1.0);
        assert!(close(ndcg_at_k(&l, 5).unwrap(), 0.5));
    }

    #[test]
    fn two_relevant_one_found() {
        let l = RankedList::new(vec![1, 2, 3], [1, 4]);
        assert!(close(precision_at_k(&l, 3).unwrap(), 0.3333));
        assert_eq!(recall_at_k(&l, 3).unwrap(), 0.5);
        assert!(close(ndcg_at_k(&l, 3).unwrap(), 0.6131));
    }

    #[test]
    fn nothing_relevant_is_zero() {
        let l = RankedList::new(vec![1, 2, 3], []);
        assert_eq!(precision_at_k(&l, 3).unwrap(), 0.0);
        assert_eq!(recall_at_k(&l, 3).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&l, 3).unwrap(), 0.0);
    }

    #[test]
    fn short_lists_and_zero_k() {
        let l = RankedList::new(vec![4], [4]);
        assert_eq!(precision_at_k(&l, 10).unwrap(), 0.1);
        assert_eq!(ndcg_at_k(&l, 10).unwrap(), 1.0);
        assert!(precision_at_k(&l, 0).is_err());
    }

    #[test]
    fn ndcg_with_gap() {
        let l = RankedList::new(vec![1, 2, 3], [1, 3]);
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at_k(&l, 3).unwrap() - expected).abs() < 1e-12);
        assert!(close(ndcg_at_k(&l, 3).unwrap(), 0.91972));
    }

    #[test]
    fn latency_summary() {
        let s = latency_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean_ms, 2.5);
        assert!(close(s.std_ms, 1.29099));
        assert_eq!((s.p50_ms, s.p99_ms, s.min_ms, s.max_ms), (2.0, 4.0, 1.0, 4.0));
        let flat = latency_stats(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((flat.mean_ms, flat.std_ms), (5.0, 0.0));
        assert_eq!(latency_stats(&[7.0]).unwrap().std_ms, 0.0);
        assert!(latency_stats(&[]).is_err());
        assert_eq!(format_mean_std(140.2, 12.4), "140 ± 12");
        assert_eq!(format_mean_std(45.0, 3.0), "45 ± 3");
    }

    #[test]
    fn summary_averages() {
        let lists = [RankedList::new(vec![1, 2], [1]), RankedList::new(vec![1, 2], [3])];
        let s = summarize(&lists, 2).unwrap();
        assert_eq!(s.users, 2);
        assert_eq!(s.recall, 0.5);
        assert_eq!(s.precision, 0.25);
        let with_empty = [RankedList::new(vec![1, 2], [1]), RankedList::new(vec![1, 2], [])];
        let s = summarize(&with_empty, 2).unwrap();
        assert_eq!((s.users, s.skipped, s.recall), (1, 1, 1.0));
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval(
            items in proptest::collection::vec(0u64..30, 0..20),
            relevant in proptest::collection::hash_set(0u64..30, 0..8),
            k in 1usize..15,
        ) {
            let mut seen = HashSet::new();
            let items: Vec<u64> = items.into_iter().filter(|i| seen.insert(*i)).collect();
            let l = RankedList { items, relevant };
            for v in [precision_at_k(&l, k).unwrap(), recall_at_k(&l, k).unwrap(), ndcg_at_k(&l, k).unwrap()] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }

        #[test]
        fn order_below_cutoff_is_irrelevant(
            seed in any::<u64>(),
            k in 1usize..8,
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut items: Vec<u64> = (0..15).collect();
            items.shuffle(&mut rng);
            let relevant: Vec<u64> = items.iter().copied().filter(|i| i % 3 == 0).collect();
            let a = RankedList::new(items.clone(), relevant.clone());
            items[k..].shuffle(&mut rng);
            let b = RankedList::new(items, relevant);
            prop_assert_eq!(precision_at_k(&a, k).unwrap(), precision_at_k(&b, k).unwrap());
            prop_assert_eq!(recall_at_k(&a, k).unwrap(), recall_at_k(&b, k).unwrap());
            prop_assert_eq!(ndcg_at_k(&a, k).unwrap(), ndcg_at_k(&b, k).unwrap());
        }

        #[test]
        fn promoting_a_relevant_item_never_lowers_ndcg(
            relevant in proptest::collection::hash_set(0u64..12, 1..6),
            pos in 1usize..12,
            k in 1usize..12,
        ) {
            let items: Vec<u64> = (0..12).collect();
            let before = RankedList { items: items.clone(), relevant: relevant.clone() };
            let mut swapped = items;
            if before.relevant.contains(&swapped[pos]) {
                swapped.swap(pos - 1, pos);
            }
            let after = RankedList { items: swapped, relevant };
            prop_assert!(ndcg_at_k(&after, k).unwrap() >= ndcg_at_k(&before, k).unwrap() - 1e-15);
        }

        #[test]
        fn perfect_ranking_scores_one(n in 1usize..10, k in 1usize..12) {
            let items: Vec<u64> = (0..n as u64).collect();
            let l = RankedList::new(items.clone(), items);
            prop_assert!((ndcg_at_k(&l, k).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
