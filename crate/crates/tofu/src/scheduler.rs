//! Seed scheduling: scoring, the priority queue, and the coverage
//! dictionary.
//!
//! A seed's score is the smallest distance between its execution trace and
//! any still-uncovered target: the minimum over those targets of the
//! minimum over covered blocks of the block's distance. Lower scores are
//! better and the queue pops them first.
//!
//! Two mechanisms keep the queue from going stale. Popping a seed
//! reinserts a copy at 1.2x its score, so a seed that never pays off
//! gradually loses its slot. And inserting a seed whose exact coverage set
//! was already accepted n times only succeeds with probability 1/(n+1), so
//! behaviorally identical inputs stop piling up.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::Rng;

use crate::distance::{Distance, DistanceMap};
use crate::icfg::BlockId;

/// Score assigned when a trace gives no finite distance to any uncovered
/// target. Such seeds are never enqueued.
pub const INFINITE_SCORE: f64 = f64::INFINITY;

/// Live score of a reinserted seed whose base score is 0: zero cannot decay
/// by multiplication, so a fixed positive score takes its place.
const ZERO_REINSERT_SCORE: f64 = 0.5;

const REINSERT_FACTOR: f64 = 1.2;

/// Tracks which targets are covered and which are still open.
#[derive(Debug, Clone, Default)]
pub struct TargetLedger {
    uncovered: BTreeSet<BlockId>,
    covered: BTreeSet<BlockId>,
}

impl TargetLedger {
    pub fn new(targets: impl IntoIterator<Item = BlockId>) -> Self {
        TargetLedger {
            uncovered: targets.into_iter().collect(),
            covered: BTreeSet::new(),
        }
    }

    /// Marks targets hit by `coverage` as covered and returns the ones that
    /// were newly hit.
    pub fn update(&mut self, coverage: &BTreeSet<BlockId>) -> BTreeSet<BlockId> {
        let newly: BTreeSet<BlockId> = self.uncovered.intersection(coverage).cloned().collect();
        for t in &newly {
            self.uncovered.remove(t);
            self.covered.insert(t.clone());
        }
        newly
    }

    pub fn uncovered(&self) -> &BTreeSet<BlockId> {
        &self.uncovered
    }

    pub fn covered(&self) -> &BTreeSet<BlockId> {
        &self.covered
    }

    pub fn done(&self) -> bool {
        self.uncovered.is_empty()
    }
}

/// Scores a trace against the still-uncovered targets.
///
/// Covered targets are ignored so that a queue full of inputs sitting on an
/// already-reached target does not drown out progress toward the rest.
/// Returns [`INFINITE_SCORE`] when no covered block has a finite distance
/// to any uncovered target (or when the trace is empty).
pub fn score_trace(
    coverage: &BTreeSet<BlockId>,
    maps: &BTreeMap<BlockId, DistanceMap>,
    ledger: &TargetLedger,
) -> f64 {
    let mut best: Option<u64> = None;
    for target in ledger.uncovered() {
        let Some(map) = maps.get(target) else {
            continue;
        };
        for block in coverage {
            if let Some(Distance::Finite(d)) = map.dist.get(block) {
                best = Some(match best {
                    None => *d,
                    Some(b) => b.min(*d),
                });
            }
        }
    }
    match best {
        Some(d) => d as f64,
        None => INFINITE_SCORE,
    }
}

/// Uniform score in `[0, 1)`, used instead of [`score_trace`] when guidance
/// is disabled.
pub fn random_score(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

/// Counts how many accepted seeds produced each exact coverage set.
#[derive(Debug, Clone, Default)]
pub struct CoverageDictionary {
    counts: BTreeMap<Vec<BlockId>, u64>,
}

impl CoverageDictionary {
    fn key(coverage: &BTreeSet<BlockId>) -> Vec<BlockId> {
        coverage.iter().cloned().collect()
    }

    pub fn count(&self, coverage: &BTreeSet<BlockId>) -> u64 {
        self.counts.get(&Self::key(coverage)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// A scheduled input with the coverage and score of its execution.
#[derive(Debug, Clone)]
pub struct Seed<I> {
    pub input: I,
    pub coverage: BTreeSet<BlockId>,
    pub score: f64,
    /// Monotone insertion counter; breaks score ties first-in-first-out.
    pub insert_seq: u64,
}

/// Heap entry ordered so the binary max-heap pops the lowest score, oldest
/// insertion first.
#[derive(Debug, Clone)]
struct QueueEntry<I> {
    seed: Seed<I>,
    /// Score the entry currently sits at; grows with each reinsertion while
    /// `seed.score` keeps the original execution's score.
    live_score: f64,
    seq: u64,
}

impl<I> PartialEq for QueueEntry<I> {
    fn eq(&self, other: &Self) -> bool {
        self.live_score.total_cmp(&other.live_score).is_eq() && self.seq == other.seq
    }
}

impl<I> Eq for QueueEntry<I> {}

impl<I> PartialOrd for QueueEntry<I> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<I> Ord for QueueEntry<I> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // reversed: the max-heap must surface the smallest (score, seq)
        self.live_score
            .total_cmp(&other.live_score)
            .then(self.seq.cmp(&other.seq))
            .reverse()
    }
}

/// Priority queue of seeds with dictionary-gated insertion.
#[derive(Debug, Clone, Default)]
pub struct SeedQueue<I> {
    heap: BinaryHeap<QueueEntry<I>>,
    dict: CoverageDictionary,
    next_seq: u64,
    pops: u64,
    accepted: u64,
    rejected_infinite: u64,
    rejected_dict: u64,
}

impl<I: Clone> SeedQueue<I> {
    pub fn new() -> Self {
        SeedQueue {
            heap: BinaryHeap::new(),
            dict: CoverageDictionary::default(),
            next_seq: 0,
            pops: 0,
            accepted: 0,
            rejected_infinite: 0,
            rejected_dict: 0,
        }
    }

    /// Tries to enqueue an executed input.
    ///
    /// Seeds with an infinite score are dropped outright and do not touch
    /// the dictionary. Otherwise the insert goes through with probability
    /// 1/(n+1) where n is the number of previously accepted seeds with the
    /// same coverage set; one random draw happens on every such attempt.
    pub fn try_insert(
        &mut self,
        input: I,
        coverage: BTreeSet<BlockId>,
        score: f64,
        rng: &mut impl Rng,
    ) -> bool {
        if score.is_infinite() {
            self.rejected_infinite += 1;
            return false;
        }
        let n = self.dict.count(&coverage);
        let accept = rng.random_range(0..n + 1) == 0;
        if !accept {
            self.rejected_dict += 1;
            return false;
        }
        *self
            .dict
            .counts
            .entry(CoverageDictionary::key(&coverage))
            .or_insert(0) += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.accepted += 1;
        self.heap.push(QueueEntry {
            seed: Seed {
                input,
                coverage,
                score,
                insert_seq: seq,
            },
            live_score: score,
            seq,
        });
        true
    }

    /// Pops the best seed and reinserts a copy at 1.2x its live score (or at
    /// a fixed 0.5 if the score is 0). The popped seed is returned with its
    /// original score.
    pub fn select_next(&mut self) -> Option<Seed<I>> {
        let entry = self.heap.pop()?;
        self.pops += 1;
        let bumped = if entry.live_score == 0.0 {
            ZERO_REINSERT_SCORE
        } else {
            entry.live_score * REINSERT_FACTOR
        };
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(QueueEntry {
            seed: entry.seed.clone(),
            live_score: bumped,
            seq,
        });
        Some(entry.seed)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn dictionary(&self) -> &CoverageDictionary {
        &self.dict
    }

    /// Lowest live score currently queued, with its seq.
    pub fn peek_score(&self) -> Option<(f64, u64)> {
        self.heap.peek().map(|e| (e.live_score, e.seq))
    }

    pub fn stats(&self) -> QueueStats {
        QueueStats {
            pops: self.pops,
            accepted: self.accepted,
            rejected_infinite: self.rejected_infinite,
            rejected_dict: self.rejected_dict,
            dictionary_entries: self.dict.len() as u64,
        }
    }
}

/// Counters for the campaign report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct QueueStats {
    pub pops: u64,
    pub accepted: u64,
    pub rejected_infinite: u64,
    pub rejected_dict: u64,
    pub dictionary_entries: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DistanceMap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blocks(ids: &[&str]) -> BTreeSet<BlockId> {
        ids.iter().map(|b| BlockId::from(*b)).collect()
    }

    fn map_for(target: &str, dists: &[(&str, u64)], inf: &[&str]) -> DistanceMap {
        let mut dist = BTreeMap::new();
        for (b, d) in dists {
            dist.insert(BlockId::from(*b), Distance::Finite(*d));
        }
        for b in inf {
            dist.insert(BlockId::from(*b), Distance::Infinite);
        }
        DistanceMap {
            target: BlockId::from(target),
            dist,
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ledger_tracks_newly_covered_targets() {
        let mut ledger = TargetLedger::new(blocks(&["t1", "t2"]));
        assert_eq!(ledger.uncovered().len(), 2);
        assert!(!ledger.done());

        let newly = ledger.update(&blocks(&["x", "t1"]));
        assert_eq!(newly, blocks(&["t1"]));
        assert_eq!(ledger.covered(), &blocks(&["t1"]));

        // covering the same target again reports nothing new
        assert!(ledger.update(&blocks(&["t1"])).is_empty());

        let newly = ledger.update(&blocks(&["t2"]));
        assert_eq!(newly, blocks(&["t2"]));
        assert!(ledger.done());
    }

    #[test]
    fn score_is_the_least_distance_over_uncovered_targets() {
        let maps: BTreeMap<BlockId, DistanceMap> = [
            (
                BlockId::from("t1"),
                map_for("t1", &[("a", 5), ("b", 2), ("t1", 0)], &["c"]),
            ),
            (
                BlockId::from("t2"),
                map_for("t2", &[("a", 1), ("t2", 0)], &["b", "c"]),
            ),
        ]
        .into_iter()
        .collect();
        let ledger = TargetLedger::new(blocks(&["t1", "t2"]));

        assert_eq!(score_trace(&blocks(&["a", "b"]), &maps, &ledger), 1.0);
        assert_eq!(score_trace(&blocks(&["b"]), &maps, &ledger), 2.0);
        assert_eq!(score_trace(&blocks(&["c"]), &maps, &ledger), INFINITE_SCORE);
        assert_eq!(score_trace(&BTreeSet::new(), &maps, &ledger), INFINITE_SCORE);
        assert_eq!(score_trace(&blocks(&["t2"]), &maps, &ledger), 0.0);
    }

    #[test]
    fn covered_targets_stop_contributing_to_the_score() {
        let maps: BTreeMap<BlockId, DistanceMap> = [
            (
                BlockId::from("t1"),
                map_for("t1", &[("a", 1), ("t1", 0)], &[]),
            ),
            (
                BlockId::from("t2"),
                map_for("t2", &[("a", 4), ("t2", 0)], &[]),
            ),
        ]
        .into_iter()
        .collect();
        let mut ledger = TargetLedger::new(blocks(&["t1", "t2"]));
        assert_eq!(score_trace(&blocks(&["a"]), &maps, &ledger), 1.0);
        ledger.update(&blocks(&["t1"]));
        // only t2 is left, so the near-t1 block no longer helps
        assert_eq!(score_trace(&blocks(&["a"]), &maps, &ledger), 4.0);
    }

    #[test]
    fn first_seed_with_a_fresh_coverage_set_is_always_accepted() {
        for seed in 0..50 {
            let mut q: SeedQueue<u32> = SeedQueue::new();
            assert!(q.try_insert(1, blocks(&["a"]), 3.0, &mut rng(seed)));
        }
    }

    #[test]
    fn infinite_scores_are_rejected_without_touching_the_dictionary() {
        let mut q: SeedQueue<u32> = SeedQueue::new();
        assert!(!q.try_insert(1, blocks(&["a"]), INFINITE_SCORE, &mut rng(0)));
        assert!(q.dictionary().is_empty());
        assert_eq!(q.len(), 0);
        let stats = q.stats();
        assert_eq!(stats.rejected_infinite, 1);
        assert_eq!(stats.accepted, 0);
    }

    #[test]
    fn duplicate_coverage_is_admitted_about_half_the_time_at_n1() {
        // second insert of the same set goes through with probability 1/2
        let mut admitted = 0;
        for seed in 0..200 {
            let mut q: SeedQueue<u32> = SeedQueue::new();
            let mut r = rng(seed);
            assert!(q.try_insert(1, blocks(&["a"]), 3.0, &mut r));
            if q.try_insert(2, blocks(&["a"]), 3.0, &mut r) {
                admitted += 1;
            }
        }
        assert!((60..140).contains(&admitted), "admitted {admitted} of 200");
    }

    #[test]
    fn dictionary_counts_exact_coverage_sets() {
        let mut q: SeedQueue<u32> = SeedQueue::new();
        let mut r = rng(7);
        q.try_insert(1, blocks(&["a", "b"]), 1.0, &mut r);
        q.try_insert(2, blocks(&["a"]), 1.0, &mut r);
        assert_eq!(q.dictionary().count(&blocks(&["a", "b"])), 1);
        assert_eq!(q.dictionary().count(&blocks(&["b", "a"])), 1);
        assert_eq!(q.dictionary().count(&blocks(&["c"])), 0);
        assert_eq!(q.dictionary().len(), 2);
    }

    #[test]
    fn pops_come_back_in_score_order_with_fifo_ties() {
        let mut q: SeedQueue<&str> = SeedQueue::new();
        let mut r = rng(1);
        q.try_insert("mid", blocks(&["a"]), 1.3, &mut r);
        q.try_insert("low-first", blocks(&["b"]), 1.0, &mut r);
        q.try_insert("low-second", blocks(&["c"]), 1.0, &mut r);
        assert_eq!(q.select_next().unwrap().input, "low-first");
        assert_eq!(q.select_next().unwrap().input, "low-second");
        // both low seeds came back at 1.2, still ahead of mid at 1.3, and
        // their relative order is preserved
        assert_eq!(q.select_next().unwrap().input, "low-first");
        assert_eq!(q.select_next().unwrap().input, "low-second");
        // now they sit at 1.44 and mid finally leads
        assert_eq!(q.select_next().unwrap().input, "mid");
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn reinsertion_compounds_the_live_score_by_twenty_percent() {
        let mut q: SeedQueue<&str> = SeedQueue::new();
        let mut r = rng(1);
        q.try_insert("s", blocks(&["a"]), 2.0, &mut r);
        let seed = q.select_next().unwrap();
        assert_eq!(seed.score, 2.0);
        assert_eq!(q.peek_score().unwrap().0, 2.0 * 1.2);
        q.select_next();
        assert_eq!(q.peek_score().unwrap().0, 2.0 * 1.2 * 1.2);
        // the returned seed always carries its original score
        assert_eq!(q.select_next().unwrap().score, 2.0);
    }

    #[test]
    fn zero_scores_reinsert_at_the_fixed_fallback() {
        let mut q: SeedQueue<&str> = SeedQueue::new();
        let mut r = rng(1);
        q.try_insert("zero", blocks(&["a"]), 0.0, &mut r);
        q.try_insert("near", blocks(&["b"]), 0.4, &mut r);
        assert_eq!(q.select_next().unwrap().input, "zero");
        // zero came back at 0.5, so the 0.4 seed now leads
        assert_eq!(q.select_next().unwrap().input, "near");
        assert_eq!(q.peek_score().unwrap().0, 0.4 * 1.2);
    }

    #[test]
    fn a_bumped_seed_keeps_cycling_rather_than_disappearing() {
        let mut q: SeedQueue<&str> = SeedQueue::new();
        let mut r = rng(1);
        q.try_insert("only", blocks(&["a"]), 1.0, &mut r);
        for _ in 0..10 {
            assert_eq!(q.select_next().unwrap().input, "only");
        }
        let expected = 1.0f64 * 1.2f64.powi(10);
        assert!((q.peek_score().unwrap().0 - expected).abs() < 1e-9);
    }

    #[test]
    fn stats_reflect_queue_activity() {
        let mut q: SeedQueue<u32> = SeedQueue::new();
        let mut r = rng(3);
        q.try_insert(1, blocks(&["a"]), 1.0, &mut r);
        q.try_insert(2, blocks(&["b"]), INFINITE_SCORE, &mut r);
        // hammer duplicates until one is rejected by the dictionary draw
        let mut dict_rejected = false;
        for _ in 0..64 {
            if !q.try_insert(3, blocks(&["a"]), 1.0, &mut r) {
                dict_rejected = true;
                break;
            }
        }
        assert!(dict_rejected);
        q.select_next();
        let stats = q.stats();
        assert_eq!(stats.pops, 1);
        assert!(stats.accepted >= 1);
        assert_eq!(stats.rejected_infinite, 1);
        assert!(stats.rejected_dict >= 1);
        assert_eq!(stats.dictionary_entries, 1);
    }

    #[test]
    fn select_on_an_empty_queue_returns_none() {
        let mut q: SeedQueue<u32> = SeedQueue::new();
        assert!(q.select_next().is_none());
        assert!(q.is_empty());
    }

    #[test]
    fn random_score_stays_in_the_unit_interval() {
        let mut r = rng(11);
        for _ in 0..1000 {
            let s = random_score(&mut r);
            assert!((0.0..1.0).contains(&s));
        }
    }
}
