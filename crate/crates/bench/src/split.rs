//! Leave-one-out train/test split.

use std::collections::BTreeMap;

use hybridrec::semantic::Corpus;
use hybridrec::Interaction;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Interaction>,
    /// User id to its held-out item id.
    pub test: BTreeMap<u64, u64>,
    pub corpus: Corpus,
}

/// Holds out each user's latest interaction; equal timestamps resolve to the
/// larger item id. Repeat interactions with the held-out item are dropped
/// from train. Users left with no other item stay train-only.
///
/// The split is fully determined by timestamps, so `_seed` is unused; it is
/// kept so callers can treat every data step alike.
pub fn split_leave_one_out(interactions: &[Interaction], corpus: Corpus, _seed: u64) -> SplitDataset {
    let mut by_user: BTreeMap<u64, Vec<&Interaction>> = BTreeMap::new();
    for x in interactions {
        by_user.entry(x.user).or_default().push(x);
    }
    let mut out = SplitDataset { corpus, ..Default::default() };
    for (user, xs) in by_user {
        let last = xs.iter().max_by_key(|x| (x.timestamp, x.item)).expect("non-empty group");
        let held = last.item;
        let rest: Vec<Interaction> = xs.iter().filter(|x| x.item != held).map(|x| (*x).clone()).collect();
        if rest.is_empty() {
            out.train.extend(xs.iter().map(|x| (*x).clone()));
        } else {
            out.test.insert(user, held);
            out.train.extend(rest);
        }
    }
    out
}
