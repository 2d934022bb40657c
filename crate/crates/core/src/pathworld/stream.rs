use serde::{Deserialize, Serialize};

use super::rollout::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamMode {
    /// Bucket `i` holds exactly task `i`'s demonstrations.
    Sequential,
    /// Adjacent tasks overlap: interior task `i` is split in thirds over
    /// buckets `i−1, i, i+1`; the first and last tasks are halved.
    Blurry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamBucket {
    pub index: usize,
    pub trajectories: Vec<Trajectory>,
}

impl StreamBucket {
    pub fn pair_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn task_counts(&self, task_count: usize) -> Vec<usize> {
        let mut counts = vec![0; task_count];
        for t in &self.trajectories {
            counts[t.task] += 1;
        }
        counts
    }
}

/// Sizes of `count` items split over `parts` buckets; the remainder goes
/// one-by-one to the earliest buckets.
pub fn split_sizes(count: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|k| count / parts + usize::from(k < count % parts)).collect()
}

/// Orders per-task demonstrations (`demos[i]` = task `i`) into buckets.
///
/// Sequential mode yields `N` buckets, blurry mode `N + 1` (indices `0..=N`,
/// task `i` being 1-based in the bucket arithmetic).
pub fn build_stream(demos: &[Vec<Trajectory>], mode: StreamMode) -> Result<Vec<StreamBucket>> {
    let n = demos.len();
    if n < 2 {
        return Err(Error::config("a stream needs at least two tasks"));
    }
    match mode {
        StreamMode::Sequential => Ok(demos
            .iter()
            .enumerate()
            .map(|(index, d)| StreamBucket { index, trajectories: d.clone() })
            .collect()),
        StreamMode::Blurry => {
            let mut buckets: Vec<StreamBucket> =
                (0..=n).map(|index| StreamBucket { index, trajectories: Vec::new() }).collect();
            for (i0, task_demos) in demos.iter().enumerate() {
                let task = i0 + 1;
                let targets: Vec<usize> = if task == 1 {
                    vec![0, 1]
                } else if task == n {
                    vec![n - 1, n]
                } else {
                    vec![task - 1, task, task + 1]
                };
                let mut rest = task_demos.as_slice();
                for (bucket, size) in targets.iter().zip(split_sizes(task_demos.len(), targets.len())) {
                    let (head, tail) = rest.split_at(size);
                    buckets[*bucket].trajectories.extend_from_slice(head);
                    rest = tail;
                }
            }
            Ok(buckets)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fake(task: usize, k: usize) -> Trajectory {
        Trajectory { task, states: vec![[k as f64, task as f64]], actions: vec![[0.0, 0.0]], success: true }
    }

    fn demos(n: usize, per: usize) -> Vec<Vec<Trajectory>> {
        (0..n).map(|t| (0..per).map(|k| fake(t, k)).collect()).collect()
    }

    fn sorted_keys(buckets: &[StreamBucket]) -> Vec<(usize, u64)> {
        let mut keys: Vec<(usize, u64)> = buckets
            .iter()
            .flat_map(|b| b.trajectories.iter().map(|t| (t.task, t.states[0][0].to_bits())))
            .collect();
        keys.sort();
        keys
    }

    #[test]
    fn sequential_buckets_are_tasks() {
        let s = build_stream(&demos(3, 100), StreamMode::Sequential).unwrap();
        assert_eq!(s.len(), 3);
        for (i, b) in s.iter().enumerate() {
            assert_eq!(b.trajectories.len(), 100);
            assert!(b.trajectories.iter().all(|t| t.task == i));
        }
    }

    #[test]
    fn blurry_thirds_rule() {
        let s = build_stream(&demos(10, 99), StreamMode::Blurry).unwrap();
        assert_eq!(s.len(), 11);
        // interior task 5 (index 4) lands in buckets 4, 5, 6 with 33 each
        for b in [4, 5, 6] {
            assert_eq!(s[b].task_counts(10)[4], 33);
        }
        assert_eq!(s[0].task_counts(10)[0] + s[1].task_counts(10)[0], 99);
        assert_eq!(s[0].task_counts(10)[0], 50);
        assert_eq!(s[9].task_counts(10)[9], 50);
        assert_eq!(s[10].task_counts(10)[9], 49);
        assert_eq!(s[10].task_counts(10).iter().sum::<usize>(), 49 + 33);
    }

    #[test]
    fn too_few_tasks() {
        assert!(build_stream(&demos(1, 3), StreamMode::Blurry).is_err());
    }

    proptest! {
        #[test]
        fn streams_partition_demos(n in 2usize..8, per in 0usize..13, blurry in any::<bool>()) {
            let d = demos(n, per);
            let mode = if blurry { StreamMode::Blurry } else { StreamMode::Sequential };
            let s = build_stream(&d, mode).unwrap();
            let mut all: Vec<(usize, u64)> = d.iter().flatten().map(|t| (t.task, t.states[0][0].to_bits())).collect();
            all.sort();
            prop_assert_eq!(sorted_keys(&s), all);
        }

        #[test]
        fn split_sizes_are_balanced(count in 0usize..1000, parts in 1usize..5) {
            let sizes = split_sizes(count, parts);
            prop_assert_eq!(sizes.iter().sum::<usize>(), count);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
