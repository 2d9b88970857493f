//! The sample universe and its labeled / unlabeled partition.
//!
//! A [`Pool`] is an immutable value. Operations that change the partition
//! return a new pool; the feature matrix and hidden labels are shared between
//! versions. Ground-truth labels can only be read for ids that are already in
//! the labeled set, and every attempt to read anything else is recorded in a
//! [`LabelAudit`] shared by all versions of the pool.

use std::collections::{BTreeSet, HashSet};
use std::sync::{Arc, Mutex};

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::util::round_half_up;

/// Log of label reads that targeted unlabeled (or unknown) ids.
#[derive(Debug, Clone, Default)]
pub struct LabelAudit {
    violations: Arc<Mutex<Vec<usize>>>,
}

impl LabelAudit {
    fn record(&self, id: usize) {
        self.violations.lock().expect("audit lock poisoned").push(id);
    }

    /// Ids whose label was requested before they were annotated.
    pub fn violations(&self) -> Vec<usize> {
        self.violations.lock().expect("audit lock poisoned").clone()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.lock().expect("audit lock poisoned").is_empty()
    }
}

/// One row of the pool as seen by a learner: features without the label.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub id: usize,
    pub features: ArrayView1<'a, f64>,
}

#[derive(Debug, Clone)]
pub struct Pool {
    features: Arc<Array2<f64>>,
    labels: Arc<Vec<usize>>,
    num_classes: usize,
    labeled: Vec<usize>,
    labeled_mask: Vec<bool>,
    unlabeled: BTreeSet<usize>,
    audit: LabelAudit,
}

impl Pool {
    /// Builds a pool with every sample unlabeled. Ids are the row indices.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config(format!(
                "a pool needs at least 2 classes, got {num_classes}"
            )));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Shape {
                expected: format!("{} label(s)", features.nrows()),
                actual: format!("{} label(s)", labels.len()),
            });
        }
        if features.ncols() == 0 {
            return Err(Error::data("samples must have at least one feature"));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::data(format!(
                "sample {i} has label {y}, outside [0, {num_classes})"
            )));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::data(format!(
                "sample {i} feature {j} is not finite ({v})"
            )));
        }
        let n = labels.len();
        Ok(Self {
            features: Arc::new(features),
            labels: Arc::new(labels),
            num_classes,
            labeled: Vec::new(),
            labeled_mask: vec![false; n],
            unlabeled: (0..n).collect(),
            audit: LabelAudit::default(),
        })
    }

    /// Builds a pool whose samples are all annotated (used for held-out test sets).
    pub fn fully_labeled(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let pool = Self::new(features, labels, num_classes)?;
        let all: Vec<usize> = (0..pool.len()).collect();
        pool.move_to_labeled(&all)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Labeled ids in the order they were annotated.
    pub fn labeled_ids(&self) -> &[usize] {
        &self.labeled
    }

    /// Unlabeled ids in ascending order.
    pub fn unlabeled_ids(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled.len()
    }

    pub fn num_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn is_labeled(&self, id: usize) -> bool {
        self.labeled_mask.get(id).copied().unwrap_or(false)
    }

    pub fn sample(&self, id: usize) -> Option<Sample<'_>> {
        (id < self.len()).then(|| Sample {
            id,
            features: self.features.row(id),
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn audit(&self) -> &LabelAudit {
        &self.audit
    }

    /// Reads the ground-truth label of an annotated sample.
    ///
    /// Requests for unlabeled or unknown ids are refused and logged.
    pub fn label(&self, id: usize) -> Result<usize> {
        if self.is_labeled(id) {
            Ok(self.labels[id])
        } else {
            self.audit.record(id);
            Err(Error::Invariant(format!(
                "label of sample {id} requested before annotation"
            )))
        }
    }

    /// Moves `round(init_fraction * n)` ids chosen uniformly at random into the
    /// labeled set. Requires a pool with nothing labeled yet.
    pub fn split_initial(&self, init_fraction: f64, seed: u64) -> Result<Pool> {
        let count = self.initial_count(init_fraction)?;
        let mut rng = rng_from_seed(seed);
        let mut chosen = index::sample(&mut rng, self.len(), count).into_vec();
        chosen.sort_unstable();
        self.move_to_labeled(&chosen)
    }

    /// Class-stratified variant of [`Pool::split_initial`].
    ///
    /// This reads hidden labels of unannotated samples to balance the draw, so
    /// it is a simulation convenience rather than a valid protocol step; the
    /// reads bypass the audit log.
    pub fn split_initial_stratified(&self, init_fraction: f64, seed: u64) -> Result<Pool> {
        let count = self.initial_count(init_fraction)?;
        let n = self.len();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (id, &y) in self.labels.iter().enumerate() {
            by_class[y].push(id);
        }
        // Largest-remainder apportionment so the quota sums to `count` exactly.
        let exact: Vec<f64> = by_class
            .iter()
            .map(|ids| count as f64 * ids.len() as f64 / n as f64)
            .collect();
        let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
        let mut short = count - quota.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..self.num_classes).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for c in order {
            if short == 0 {
                break;
            }
            if quota[c] < by_class[c].len() {
                quota[c] += 1;
                short -= 1;
            }
        }
        let mut rng = rng_from_seed(seed);
        let mut chosen = Vec::with_capacity(count);
        for (ids, &q) in by_class.iter().zip(&quota) {
            chosen.extend(
                index::sample(&mut rng, ids.len(), q)
                    .into_iter()
                    .map(|i| ids[i]),
            );
        }
        chosen.sort_unstable();
        self.move_to_labeled(&chosen)
    }

    fn initial_count(&self, init_fraction: f64) -> Result<usize> {
        if !(init_fraction > 0.0 && init_fraction <= 1.0) {
            return Err(Error::config(format!(
                "initial fraction must lie in (0, 1], got {init_fraction}"
            )));
        }
        if self.num_labeled() != 0 {
            return Err(Error::Invariant(format!(
                "initial split requires an unlabeled pool, {} id(s) already labeled",
                self.num_labeled()
            )));
        }
        let count = round_half_up(init_fraction * self.len() as f64);
        if count == 0 {
            return Err(Error::config(format!(
                "initial fraction {init_fraction} of {} samples labels nothing",
                self.len()
            )));
        }
        Ok(count)
    }

    /// Annotates `ids`: removes them from the unlabeled set and appends them,
    /// in the given order, to the labeled set.
    pub fn move_to_labeled(&self, ids: &[usize]) -> Result<Pool> {
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in ids {
            if id >= self.len() {
                return Err(Error::Invariant(format!("unknown sample id {id}")));
            }
            if self.labeled_mask[id] {
                return Err(Error::Invariant(format!("sample {id} is already labeled")));
            }
            if !seen.insert(id) {
                return Err(Error::Invariant(format!(
                    "sample {id} appears more than once in the batch"
                )));
            }
        }
        let mut next = self.clone();
        for &id in ids {
            next.unlabeled.remove(&id);
            next.labeled_mask[id] = true;
            next.labeled.push(id);
        }
        Ok(next)
    }

    /// Features and labels of the labeled set, rows in ascending id order.
    pub fn labeled_view(&self) -> Result<(Array2<f64>, Vec<usize>)> {
        let mut ids = self.labeled.clone();
        ids.sort_unstable();
        let labels = ids
            .iter()
            .map(|&id| self.label(id))
            .collect::<Result<Vec<_>>>()?;
        Ok((self.features.select(Axis(0), &ids), labels))
    }

    /// Ids (ascending) and features of the unlabeled set.
    pub fn unlabeled_view(&self) -> (Vec<usize>, Array2<f64>) {
        let ids = self.unlabeled_ids();
        let x = self.features.select(Axis(0), &ids);
        (ids, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn toy(n: usize) -> Pool {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let y = (0..n).map(|i| i % 2).collect();
        Pool::new(x, y, 2).unwrap()
    }

    #[test]
    fn initial_split_sizes_follow_rounding_rule() {
        for (n, expect) in [(50_000usize, 2000usize), (73_257, 2930)] {
            let x = Array2::zeros((n, 1));
            let pool = Pool::new(x, vec![0; n], 2).unwrap();
            let split = pool.split_initial(0.04, 1).unwrap();
            assert_eq!(split.num_labeled(), expect);
            assert_eq!(split.num_unlabeled(), n - expect);
        }
    }

    #[test]
    fn full_fraction_labels_everything() {
        let split = toy(100).split_initial(1.0, 3).unwrap();
        assert_eq!(split.num_labeled(), 100);
        assert!(split.unlabeled_view().0.is_empty());
    }

    #[test]
    fn bad_fractions_rejected() {
        let pool = toy(10);
        for f in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(pool.split_initial(f, 0), Err(Error::Config(_))));
        }
        // round(0.01 * 10) = 0
        assert!(matches!(pool.split_initial(0.01, 0), Err(Error::Config(_))));
    }

    #[test]
    fn split_requires_fresh_pool() {
        let pool = toy(10).move_to_labeled(&[1]).unwrap();
        assert!(matches!(pool.split_initial(0.5, 0), Err(Error::Invariant(_))));
    }

    #[test]
    fn split_is_seed_deterministic() {
        let pool = toy(200);
        let a = pool.split_initial(0.1, 42).unwrap();
        let b = pool.split_initial(0.1, 42).unwrap();
        let c = pool.split_initial(0.1, 43).unwrap();
        assert_eq!(a.labeled_ids(), b.labeled_ids());
        assert_ne!(a.labeled_ids(), c.labeled_ids());
    }

    #[test]
    fn stratified_split_balances_classes() {
        let n = 1000;
        let x = Array2::zeros((n, 1));
        let y: Vec<usize> = (0..n).map(|i| usize::from(i >= 900)).collect();
        let pool = Pool::new(x, y, 2).unwrap();
        let split = pool.split_initial_stratified(0.1, 5).unwrap();
        let (_, labels) = split.labeled_view().unwrap();
        assert_eq!(labels.len(), 100);
        assert_eq!(labels.iter().filter(|&&c| c == 1).count(), 10);
    }

    #[test]
    fn single_move() {
        let pool = toy(3).move_to_labeled(&[0]).unwrap();
        let moved = pool.move_to_labeled(&[2]).unwrap();
        assert_eq!(moved.labeled_ids(), &[0, 2]);
        assert_eq!(moved.unlabeled_ids(), vec![1]);
        // the source value is untouched
        assert_eq!(pool.labeled_ids(), &[0]);
    }

    #[test]
    fn empty_move_is_identity() {
        let pool = toy(3).move_to_labeled(&[1]).unwrap();
        let same = pool.move_to_labeled(&[]).unwrap();
        assert_eq!(same.labeled_ids(), pool.labeled_ids());
        assert_eq!(same.unlabeled_ids(), pool.unlabeled_ids());
    }

    #[test]
    fn bad_moves_name_the_id() {
        let pool = toy(3).move_to_labeled(&[0]).unwrap();
        let dup = pool.move_to_labeled(&[1, 1]).unwrap_err().to_string();
        assert!(dup.contains("sample 1"), "{dup}");
        let again = pool.move_to_labeled(&[0]).unwrap_err().to_string();
        assert!(again.contains("sample 0"), "{again}");
        let unknown = pool.move_to_labeled(&[9]).unwrap_err().to_string();
        assert!(unknown.contains('9'), "{unknown}");
    }

    #[test]
    fn views_are_ordered_by_id() {
        let x = array![[0.0, 0.5], [1.0, 1.5], [2.0, 2.5]];
        let pool = Pool::new(x, vec![1, 0, 1], 2)
            .unwrap()
            .move_to_labeled(&[2, 0])
            .unwrap();
        let (lx, ly) = pool.labeled_view().unwrap();
        assert_eq!(lx, array![[0.0, 0.5], [2.0, 2.5]]);
        assert_eq!(ly, vec![1, 1]);
        let (ids, ux) = pool.unlabeled_view();
        assert_eq!(ids, vec![1]);
        assert_eq!(ux, array![[1.0, 1.5]]);
    }

    #[test]
    fn empty_labeled_view_keeps_width() {
        let (x, y) = toy(4).labeled_view().unwrap();
        assert_eq!(x.dim(), (0, 2));
        assert!(y.is_empty());
    }

    #[test]
    fn unlabeled_label_reads_are_refused_and_logged() {
        let pool = toy(4).move_to_labeled(&[0]).unwrap();
        assert_eq!(pool.label(0).unwrap(), 0);
        assert!(pool.audit().is_clean());
        assert!(pool.label(3).is_err());
        assert_eq!(pool.audit().violations(), vec![3]);
    }

    #[test]
    fn construction_validates() {
        assert!(Pool::new(Array2::zeros((2, 1)), vec![0, 1], 1).is_err());
        assert!(Pool::new(Array2::zeros((2, 1)), vec![0, 2], 2).is_err());
        assert!(Pool::new(Array2::zeros((2, 1)), vec![0], 2).is_err());
        let mut x = Array2::zeros((2, 1));
        x[[1, 0]] = f64::NAN;
        assert!(Pool::new(x, vec![0, 1], 2).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_conserved(n in 1usize..60, moves in prop::collection::vec(prop::collection::vec(0usize..60, 0..8), 0..6)) {
            let mut pool = toy(n);
            for batch in moves {
                let mut batch: Vec<usize> = batch.into_iter().filter(|&i| i < n && !pool.is_labeled(i)).collect();
                batch.sort_unstable();
                batch.dedup();
                pool = pool.move_to_labeled(&batch).unwrap();
                prop_assert_eq!(pool.num_labeled() + pool.num_unlabeled(), n);
                prop_assert!(pool.labeled_ids().iter().all(|id| !pool.unlabeled_ids().contains(id)));
            }
        }

        #[test]
        fn sequential_moves_compose(n in 2usize..40, split in 0usize..40, seed in any::<u64>()) {
            let pool = toy(n);
            let take = split.min(n);
            let mut rng = rng_from_seed(seed);
            let ids = index::sample(&mut rng, n, take).into_vec();
            let (a, b) = ids.split_at(take / 2);
            let stepwise = pool.move_to_labeled(a).unwrap().move_to_labeled(b).unwrap();
            let once = pool.move_to_labeled(&ids).unwrap();
            let mut l1 = stepwise.labeled_ids().to_vec();
            let mut l2 = once.labeled_ids().to_vec();
            l1.sort_unstable();
            l2.sort_unstable();
            prop_assert_eq!(l1, l2);
            prop_assert_eq!(stepwise.unlabeled_ids(), once.unlabeled_ids());
        }
    }
}
