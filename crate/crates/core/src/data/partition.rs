//! Splitting a dataset across federated clients.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use crate::data::types::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{streams, Rng64, RngStream};

/// How examples are distributed across clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionMode {
    /// Uniform random split with sizes equal up to ±1.
    Iid,
    /// Label-skewed split: per class, client proportions are drawn from a
    /// symmetric Dirichlet with the given concentration.
    Dirichlet { alpha: f64 },
}

/// Client-id → indices into the partitioned dataset. Index sets are pairwise
/// disjoint, jointly cover `0..len`, and are each non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    sets: Vec<Vec<usize>>,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.sets.len()
    }

    pub fn client(&self, id: usize) -> &[usize] {
        &self.sets[id]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }
}

/// Partition `ds` into `n_clients` non-empty index sets.
///
/// Deterministic in `seed`. Dirichlet mode requires labels and resamples up
/// to 100 times if a draw leaves some client empty; IID mode instead requires
/// `len >= n_clients` up front.
pub fn partition(
    ds: &Dataset,
    n_clients: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Partition> {
    if n_clients == 0 {
        return Err(Error::Config("partition: n_clients = 0".to_string()));
    }
    if ds.len() < n_clients {
        return Err(Error::Config(format!(
            "partition: {} examples cannot cover {} clients",
            ds.len(),
            n_clients
        )));
    }
    let mut rng = RngStream::derived(seed, &[streams::PARTITION]).rng();
    match mode {
        PartitionMode::Iid => {
            let mut indices: Vec<usize> = (0..ds.len()).collect();
            indices.shuffle(&mut rng);
            let mut sets = vec![Vec::new(); n_clients];
            for (i, idx) in indices.into_iter().enumerate() {
                sets[i % n_clients].push(idx);
            }
            for set in &mut sets {
                set.sort_unstable();
            }
            Ok(Partition { sets })
        }
        PartitionMode::Dirichlet { alpha } => {
            if !(alpha > 0.0) {
                return Err(Error::Config(format!(
                    "partition: dirichlet alpha = {alpha}, need > 0"
                )));
            }
            let n_classes = ds.n_classes().ok_or_else(|| {
                Error::Config("dirichlet partition requires a labeled dataset".to_string())
            })? as usize;
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for (i, label) in ds.labels().enumerate() {
                let label = label.ok_or_else(|| {
                    Error::Config("dirichlet partition requires a labeled dataset".to_string())
                })?;
                by_class[label as usize].push(i);
            }

            for _attempt in 0..100 {
                let sets = dirichlet_attempt(&by_class, n_clients, alpha, &mut rng);
                if sets.iter().all(|s| !s.is_empty()) {
                    let mut sets = sets;
                    for set in &mut sets {
                        set.sort_unstable();
                    }
                    return Ok(Partition { sets });
                }
            }
            Err(Error::Config(format!(
                "dirichlet partition left a client empty after 100 attempts \
                 ({} examples, {n_clients} clients, alpha {alpha})",
                ds.len()
            )))
        }
    }
}

/// One Dirichlet draw: split each class's indices by sampled proportions.
fn dirichlet_attempt(
    by_class: &[Vec<usize>],
    n_clients: usize,
    alpha: f64,
    rng: &mut Rng64,
) -> Vec<Vec<usize>> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated by caller");
    let mut sets = vec![Vec::new(); n_clients];
    for class_indices in by_class {
        if class_indices.is_empty() {
            continue;
        }
        // Dirichlet(alpha, ..., alpha) via normalized Gamma draws.
        let mut props: Vec<f64> = (0..n_clients).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = props.iter().sum();
        if sum <= f64::MIN_POSITIVE {
            props = vec![1.0 / n_clients as f64; n_clients];
        } else {
            for p in &mut props {
                *p /= sum;
            }
        }

        // Largest-remainder rounding of proportions to integer counts.
        let total = class_indices.len();
        let quotas: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut remainders: Vec<(usize, f64)> = quotas
            .iter()
            .enumerate()
            .map(|(i, q)| (i, q - q.floor()))
            .collect();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(i, _) in remainders.iter().take(total - assigned) {
            counts[i] += 1;
        }

        let mut shuffled = class_indices.clone();
        shuffled.shuffle(rng);
        let mut cursor = 0;
        for (client, &count) in counts.iter().enumerate() {
            sets[client].extend_from_slice(&shuffled[cursor..cursor + count]);
            cursor += count;
        }
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn check_disjoint_cover(p: &Partition, len: usize) {
        let mut seen = BTreeSet::new();
        for set in p.sets() {
            assert!(!set.is_empty(), "empty client");
            for &i in set {
                assert!(seen.insert(i), "index {i} assigned twice");
            }
        }
        assert_eq!(seen.len(), len);
        assert_eq!(seen.last(), Some(&(len - 1)));
    }

    #[test]
    fn single_client_owns_everything() {
        let ds = generate_synthetic(2, 10, (1, 8, 8), 1.0, 0.0, 1).unwrap();
        let p = partition(&ds, 1, PartitionMode::Iid, 0).unwrap();
        assert_eq!(p.client(0).len(), 20);
        check_disjoint_cover(&p, 20);
    }

    #[test]
    fn iid_split_is_balanced() {
        let ds = generate_synthetic(4, 250, (1, 8, 8), 1.0, 0.0, 2).unwrap();
        let p = partition(&ds, 10, PartitionMode::Iid, 7).unwrap();
        assert_eq!(p.n_clients(), 10);
        for id in 0..10 {
            assert_eq!(p.client(id).len(), 100);
        }
        check_disjoint_cover(&p, 1000);
    }

    #[test]
    fn deterministic_in_seed() {
        let ds = generate_synthetic(4, 25, (1, 8, 8), 1.0, 0.0, 2).unwrap();
        for mode in [PartitionMode::Iid, PartitionMode::Dirichlet { alpha: 0.5 }] {
            let a = partition(&ds, 5, mode, 42).unwrap();
            let b = partition(&ds, 5, mode, 42).unwrap();
            let c = partition(&ds, 5, mode, 43).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn dirichlet_requires_labels() {
        let ds = generate_synthetic(2, 10, (1, 8, 8), 1.0, 0.0, 1).unwrap();
        let unlabeled = Dataset::new(
            ds.shape(),
            ds.examples()
                .iter()
                .map(|e| crate::data::Example { label: None, ..e.clone() })
                .collect(),
            None,
        )
        .unwrap();
        assert!(partition(&unlabeled, 3, PartitionMode::Dirichlet { alpha: 0.5 }, 0).is_err());
    }

    /// Shannon entropy of a client's label distribution.
    fn label_entropy(ds: &Dataset, indices: &[usize], n_classes: usize) -> f64 {
        let mut counts = vec![0usize; n_classes];
        for &i in indices {
            counts[ds.get(i).label.unwrap() as usize] += 1;
        }
        let total = indices.len() as f64;
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.ln()
            })
            .sum()
    }

    #[test]
    fn dirichlet_is_more_skewed_than_iid() {
        // Monte-Carlo over 50 seeds: the most class-diverse client under
        // Dirichlet(0.5) is still less diverse on average than under IID.
        let ds = generate_synthetic(10, 60, (1, 8, 8), 1.0, 0.0, 3).unwrap();
        let (mut iid_sum, mut dir_sum) = (0.0, 0.0);
        for seed in 0..50 {
            let iid = partition(&ds, 10, PartitionMode::Iid, seed).unwrap();
            let dir = partition(&ds, 10, PartitionMode::Dirichlet { alpha: 0.5 }, seed).unwrap();
            let max_ent = |p: &Partition| {
                p.sets()
                    .iter()
                    .map(|s| label_entropy(&ds, s, 10))
                    .fold(0.0f64, f64::max)
            };
            iid_sum += max_ent(&iid);
            dir_sum += max_ent(&dir);
        }
        assert!(
            dir_sum < iid_sum,
            "dirichlet mean max-entropy {dir_sum} not below iid {iid_sum}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn partition_invariants_hold(
            n_clients in 1usize..8,
            seed in 0u64..1000,
            dirichlet in proptest::bool::ANY,
        ) {
            let ds = generate_synthetic(4, 20, (1, 8, 8), 1.0, 0.0, 5).unwrap();
            let mode = if dirichlet {
                PartitionMode::Dirichlet { alpha: 0.5 }
            } else {
                PartitionMode::Iid
            };
            let p = partition(&ds, n_clients, mode, seed).unwrap();
            check_disjoint_cover(&p, ds.len());
            prop_assert_eq!(p.n_clients(), n_clients);
        }
    }
}
