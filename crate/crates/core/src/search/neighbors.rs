//! Radius-1 modifications of a candidate set: add one attribute, remove
//! one, or swap one member for one non-member.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sorted, duplicate-free attribute indices into the source table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct CandidateSet(Vec<usize>);

impl CandidateSet {
    pub fn new(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        CandidateSet(idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Attribute names in source order.
    pub fn names(&self, attrs: &[String]) -> Vec<String> {
        self.0.iter().map(|&i| attrs[i].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Add(usize),
    Remove(usize),
    Swap { out: usize, inn: usize },
}

fn apply(set: &CandidateSet, mv: Move) -> CandidateSet {
    let mut v = set.0.clone();
    match mv {
        Move::Add(i) => v.push(i),
        Move::Remove(i) => v.retain(|&x| x != i),
        Move::Swap { out, inn } => {
            v.retain(|&x| x != out);
            v.push(inn);
        }
    }
    CandidateSet::new(v)
}

struct MoveSpace {
    members: Vec<usize>,
    others: Vec<usize>,
}

impl MoveSpace {
    fn new(set: &CandidateSet, universe: usize) -> Self {
        MoveSpace {
            members: set.0.clone(),
            others: (0..universe).filter(|i| !set.contains(*i)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.members.len() + self.others.len() + self.members.len() * self.others.len()
    }

    /// Removals, then additions, then swaps (member-major).
    fn get(&self, k: usize) -> Move {
        let (m, o) = (self.members.len(), self.others.len());
        if k < m {
            Move::Remove(self.members[k])
        } else if k < m + o {
            Move::Add(self.others[k - m])
        } else {
            let s = k - m - o;
            Move::Swap {
                out: self.members[s / o],
                inn: self.others[s % o],
            }
        }
    }
}

/// Every radius-1 neighbor of `set` within `0..universe`, in a fixed order.
pub fn radius1_neighbors(set: &CandidateSet, universe: usize) -> Vec<CandidateSet> {
    let space = MoveSpace::new(set, universe);
    (0..space.len()).map(|k| apply(set, space.get(k))).collect()
}

/// Uniform draw among the neighbors of `set` that are not in `taken`, or
/// `None` when all are taken.
pub fn sample_fresh_neighbor<R: Rng + ?Sized>(
    set: &CandidateSet,
    universe: usize,
    taken: &HashSet<CandidateSet>,
    rng: &mut R,
) -> Option<CandidateSet> {
    let space = MoveSpace::new(set, universe);
    let n = space.len();
    if n == 0 {
        return None;
    }
    // rejection sampling is uniform over the fresh ones; fall back to
    // enumeration when most are taken
    for _ in 0..32 {
        let cand = apply(set, space.get(rng.gen_range(0..n)));
        if !taken.contains(&cand) {
            return Some(cand);
        }
    }
    let fresh: Vec<CandidateSet> = (0..n)
        .map(|k| apply(set, space.get(k)))
        .filter(|c| !taken.contains(c))
        .collect();
    if fresh.is_empty() {
        None
    } else {
        let k = rng.gen_range(0..fresh.len());
        fresh.into_iter().nth(k)
    }
}
