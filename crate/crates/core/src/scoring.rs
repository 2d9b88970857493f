//! Confidence criteria over model posteriors and deterministic ranking.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Row-stochastic matrix of class posteriors, one row per sample.
///
/// Rows are validated on construction and never renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    values: Array2<f64>,
}

impl ProbabilityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for (row, p) in values.outer_iter().enumerate() {
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::MalformedPosterior {
                    row,
                    message: format!("entry {v} outside [0, 1]"),
                });
            }
            let sum: f64 = p.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::MalformedPosterior {
                    row,
                    message: format!("row sums to {sum}"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != c) {
            return Err(Error::Shape {
                expected: format!("{c} columns"),
                actual: format!("{} columns in row {i}", r.len()),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), c), flat).expect("checked row widths");
        Self::new(values)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Index of the largest entry in each row; ties go to the lower class.
    pub fn argmax(&self) -> Vec<usize> {
        self.values
            .outer_iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &v)| {
                        if v > best.1 {
                            (c, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Which end of a [`ScoreVector`] is selected first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherIsSelected,
    LowerIsSelected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    direction: Direction,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, direction: Direction) -> Result<Self> {
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(Error::data(format!("score {i} is not finite ({s})")));
        }
        Ok(Self { scores, direction })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn row_max(p: ArrayView1<'_, f64>) -> f64 {
    p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Highest class posterior per sample; larger means more confident.
pub fn max_confidence(probs: &ProbabilityMatrix) -> ScoreVector {
    ScoreVector {
        scores: probs.values.outer_iter().map(row_max).collect(),
        direction: Direction::HigherIsSelected,
    }
}

/// `1 - max_c p[c]` per sample; larger means less confident.
pub fn least_confidence(probs: &ProbabilityMatrix) -> ScoreVector {
    ScoreVector {
        scores: probs.values.outer_iter().map(|p| 1.0 - row_max(p)).collect(),
        direction: Direction::HigherIsSelected,
    }
}

/// Orders positions of `scores` by the selection direction, ties by id.
fn ordering<'a>(ids: &'a [usize], scores: &'a ScoreVector) -> impl Fn(&usize, &usize) -> Ordering + 'a {
    move |&a, &b| {
        let (sa, sb) = (scores.scores[a], scores.scores[b]);
        let by_score = match scores.direction {
            Direction::HigherIsSelected => sb.total_cmp(&sa),
            Direction::LowerIsSelected => sa.total_cmp(&sb),
        };
        by_score.then(ids[a].cmp(&ids[b]))
    }
}

fn check_lengths(ids: &[usize], scores: &ScoreVector) -> Result<()> {
    if ids.len() != scores.len() {
        return Err(Error::Shape {
            expected: format!("{} score(s)", ids.len()),
            actual: format!("{} score(s)", scores.len()),
        });
    }
    Ok(())
}

/// Every id, best first. Equal scores are ordered by ascending id.
pub fn rank(ids: &[usize], scores: &ScoreVector) -> Result<Vec<usize>> {
    check_lengths(ids, scores)?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(ordering(ids, scores));
    Ok(order.into_iter().map(|i| ids[i]).collect())
}

/// The best `min(k, n)` ids in rank order.
pub fn top_k(ids: &[usize], scores: &ScoreVector, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::config("top_k requires k >= 1"));
    }
    check_lengths(ids, scores)?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let cmp = ordering(ids, scores);
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, &cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    Ok(order.into_iter().map(|i| ids[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn probs(rows: &[Vec<f64>]) -> ProbabilityMatrix {
        ProbabilityMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn max_confidence_examples() {
        let p = probs(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.6, 0.3, 0.1, 0.0],
        ]);
        let s = max_confidence(&p);
        assert_eq!(s.scores(), &[1.0, 0.25, 0.6]);
        assert_eq!(s.direction(), Direction::HigherIsSelected);
    }

    #[test]
    fn least_confidence_examples() {
        let p = probs(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.25, 0.25, 0.25, 0.25]]);
        assert_eq!(least_confidence(&p).scores(), &[0.0, 0.75]);
        let binary = probs(&[vec![0.5, 0.5], vec![0.9, 0.1], vec![0.2, 0.8]]);
        let s = least_confidence(&binary);
        assert_eq!(s.scores()[0], 0.5);
        assert!(s.scores().iter().all(|&v| v <= 0.5));
    }

    #[test]
    fn malformed_rows_rejected() {
        let err = ProbabilityMatrix::new(array![[0.5, 0.5], [0.5, 0.6]]).unwrap_err();
        assert!(matches!(err, Error::MalformedPosterior { row: 1, .. }));
        assert!(ProbabilityMatrix::new(array![[1.2, -0.2]]).is_err());
        assert!(ProbabilityMatrix::new(array![[f64::NAN, 1.0]]).is_err());
    }

    #[test]
    fn argmax_prefers_lower_class_on_ties() {
        let p = probs(&[vec![0.5, 0.5], vec![0.3, 0.7]]);
        assert_eq!(p.argmax(), vec![0, 1]);
    }

    #[test]
    fn top_k_tie_goes_to_lower_id() {
        let s = ScoreVector::new(vec![0.9, 0.9, 0.1], Direction::HigherIsSelected).unwrap();
        assert_eq!(top_k(&[0, 1, 2], &s, 1).unwrap(), vec![0]);
        let s = ScoreVector::new(vec![0.9, 0.9, 0.1], Direction::HigherIsSelected).unwrap();
        assert_eq!(top_k(&[5, 3, 9], &s, 1).unwrap(), vec![3]);
    }

    #[test]
    fn top_k_saturates() {
        let s = ScoreVector::new(vec![0.1, 0.7, 0.4], Direction::HigherIsSelected).unwrap();
        assert_eq!(top_k(&[0, 1, 2], &s, 10).unwrap(), vec![1, 2, 0]);
        let lo = ScoreVector::new(vec![0.1, 0.7, 0.4], Direction::LowerIsSelected).unwrap();
        assert_eq!(top_k(&[0, 1, 2], &lo, 3).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn top_k_errors() {
        let s = ScoreVector::new(vec![0.1, 0.7], Direction::HigherIsSelected).unwrap();
        assert!(matches!(top_k(&[0, 1], &s, 0), Err(Error::Config(_))));
        assert!(matches!(top_k(&[0], &s, 1), Err(Error::Shape { .. })));
        assert!(ScoreVector::new(vec![f64::INFINITY], Direction::HigherIsSelected).is_err());
    }

    /// Reference: sort every (score, id) pair and truncate.
    fn sort_then_truncate(ids: &[usize], scores: &[f64], higher: bool, k: usize) -> Vec<usize> {
        let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(ids.iter().copied()).collect();
        pairs.sort_by(|a, b| {
            let o = if higher { b.0.partial_cmp(&a.0) } else { a.0.partial_cmp(&b.0) };
            o.unwrap().then(a.1.cmp(&b.1))
        });
        pairs.into_iter().take(k).map(|p| p.1).collect()
    }

    #[test]
    fn top_k_matches_full_sort_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n = rng.random_range(1..=200);
            let ids: Vec<usize> = (0..n).map(|i| i * 3 + trial % 7).collect();
            // coarse values force plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 20.0).collect();
            for higher in [true, false] {
                let dir = if higher { Direction::HigherIsSelected } else { Direction::LowerIsSelected };
                let sv = ScoreVector::new(scores.clone(), dir).unwrap();
                for k in [1, 5, n] {
                    assert_eq!(top_k(&ids, &sv, k).unwrap(), sort_then_truncate(&ids, &scores, higher, k));
                }
            }
        }
    }

    fn arb_probs() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..6).prop_flat_map(|c| {
            prop::collection::vec(prop::collection::vec(0.001f64..1.0, c), 1..30).prop_map(|rows| {
                rows.into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|v| v / s).collect()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn confidences_are_complementary(rows in arb_probs()) {
            let p = probs(&rows);
            let hi = max_confidence(&p);
            let lo = least_confidence(&p);
            for (a, b) in hi.scores().iter().zip(lo.scores()) {
                prop_assert!((a + b - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn top_k_ignores_input_order(scores in prop::collection::vec(0u8..10, 1..40), k in 1usize..45, seed in any::<u64>()) {
            let n = scores.len();
            let ids: Vec<usize> = (0..n).collect();
            let vals: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
            let base = top_k(&ids, &ScoreVector::new(vals.clone(), Direction::HigherIsSelected).unwrap(), k).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pids: Vec<usize> = perm.iter().map(|&i| ids[i]).collect();
            let pvals: Vec<f64> = perm.iter().map(|&i| vals[i]).collect();
            let shuffled = top_k(&pids, &ScoreVector::new(pvals, Direction::HigherIsSelected).unwrap(), k).unwrap();
            prop_assert_eq!(base, shuffled);
        }

        #[test]
        fn raising_confidence_never_demotes(rows in arb_probs(), pick in any::<prop::sample::Index>()) {
            let p = probs(&rows);
            let ids: Vec<usize> = (0..rows.len()).collect();
            let target = pick.index(rows.len());
            let before = rank(&ids, &max_confidence(&p)).unwrap();
            // Move mass from the other classes onto the argmax class.
            let mut boosted = rows.clone();
            let arg = p.argmax()[target];
            let row = &mut boosted[target];
            for (c, v) in row.iter_mut().enumerate() {
                if c != arg { *v *= 0.5; }
            }
            let rest: f64 = row.iter().enumerate().filter(|(c, _)| *c != arg).map(|(_, v)| v).sum();
            row[arg] = 1.0 - rest;
            let after = rank(&ids, &max_confidence(&probs(&boosted))).unwrap();
            let pos = |r: &[usize]| r.iter().position(|&i| i == target).unwrap();
            prop_assert!(pos(&after) <= pos(&before));
        }
    }
}
