//! Seeded k-means (k-means++ seeding, Lloyd iterations) and the
//! distance-from-centroid diversity ranking built on it.
//!
//! The random draws are part of the contract so results can be reproduced
//! outside this crate. With `rng = ChaCha8Rng::seed_from_u64(seed)` and
//! `u = rng.random::<f64>()`:
//!
//! * the first centre is point `floor(u * n)`;
//! * with `w_i` the squared distance from point `i` to its nearest chosen
//!   centre and `W = sum w_i`, each further centre is chosen greedily from
//!   `2 + floor(ln k)` candidates. Each candidate draws one `u` and is the
//!   first `i` whose running sum of `w` exceeds `u * W` (the last point with
//!   `w_i > 0` if rounding runs past the end). The candidate whose addition
//!   leaves the smallest `sum_i min(w_i, |x_i - c|^2)` wins, the earliest
//!   drawn on ties. If `W == 0` a single `u` is drawn and the centre is
//!   `floor(u * n)`.
//!
//! Lloyd iterations then alternate assignment (nearest centroid, ties to the
//! lower cluster index) and mean updates accumulated in ascending point order.
//! A cluster left empty is re-seeded at the point farthest from its assigned
//! centroid; several empty clusters take successive farthest points, ties to
//! the lower point index. Iteration stops once the largest absolute coordinate
//! shift of any centroid is below `tol`, or after `max_iter` updates.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Below this many points the assignment step runs on one thread.
const PAR_THRESHOLD: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Absolute tolerance on the largest per-coordinate centroid shift.
    pub tol: f64,
}

impl KMeansConfig {
    pub const DEFAULT_MAX_ITER: usize = 100;
    pub const DEFAULT_TOL: f64 = 1e-6;

    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// `k x d` centroid matrix.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Euclidean distance from each point to its assigned centroid.
    pub distances: Vec<f64>,
    /// Sum of squared assigned distances.
    pub inertia: f64,
    /// Number of centroid updates performed.
    pub iterations: usize,
    /// Inertia after every assignment step, final assignment included.
    pub inertia_trace: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and squared distance for every point.
fn assign(points: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    let nearest = |p: ArrayView1<'_, f64>| {
        let mut best = (0, f64::INFINITY);
        for (k, c) in centroids.outer_iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    };
    if points.nrows() >= PAR_THRESHOLD {
        (0..points.nrows())
            .into_par_iter()
            .map(|i| nearest(points.row(i)))
            .collect()
    } else {
        points.outer_iter().map(nearest).collect()
    }
}

/// Candidate draws per greedy k-means++ step.
pub fn local_trials(k: usize) -> usize {
    2 + (k as f64).ln().floor() as usize
}

/// Index picked by one D^2 draw: the first `i` whose running weight exceeds
/// `u * total`, else the last positive weight.
fn weighted_pick(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("total > 0 implies a positive weight")
}

fn plus_plus_init(points: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.len_of(Axis(0));
    let pick_uniform = |u: f64| ((u * n as f64) as usize).min(n - 1);
    let trials = local_trials(k);

    let mut chosen = vec![pick_uniform(rng.random::<f64>())];
    let mut nearest: Vec<f64> = points
        .outer_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])))
        .collect();

    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            let next = pick_uniform(rng.random::<f64>());
            chosen.push(next);
            continue;
        }
        // Greedy step: draw `trials` candidates, keep the one leaving the
        // smallest potential (first drawn on ties).
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = weighted_pick(&nearest, total, rng.random::<f64>());
            let updated: Vec<f64> = points
                .outer_iter()
                .zip(&nearest)
                .map(|(p, &w)| w.min(sq_dist(p, points.row(cand))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((cand, potential, updated));
            }
        }
        let (next, _, updated) = best.expect("at least one trial");
        chosen.push(next);
        nearest = updated;
    }
    points.select(Axis(0), &chosen)
}

fn validate(points: ArrayView2<'_, f64>, k: usize) -> Result<()> {
    let (n, d) = points.dim();
    if k == 0 {
        return Err(Error::config("k-means needs k >= 1"));
    }
    if k > n {
        return Err(Error::config(format!(
            "k-means asked for {k} clusters over {n} point(s)"
        )));
    }
    if d == 0 {
        return Err(Error::data("k-means needs points with at least one dimension"));
    }
    if let Some(((i, j), v)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::data(format!(
            "point {i} coordinate {j} is not finite ({v})"
        )));
    }
    Ok(())
}

/// Fits k-means to the rows of `points`.
pub fn kmeans_fit(points: ArrayView2<'_, f64>, cfg: &KMeansConfig) -> Result<Clustering> {
    validate(points, cfg.k)?;
    if cfg.max_iter == 0 {
        return Err(Error::config("k-means needs max_iter >= 1"));
    }
    let (n, d) = points.dim();
    let k = cfg.k;
    let mut rng = rng_from_seed(cfg.seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let assigned = assign(points, &centroids);
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        if let Some(&prev) = trace.last() {
            assert!(
                inertia <= prev + 1e-9 * prev.max(1.0),
                "k-means inertia rose from {prev} to {inertia}"
            );
        }
        trace.push(inertia);
        if converged || iterations == cfg.max_iter {
            return Ok(finish(centroids, assigned, iterations, trace));
        }

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &points.row(i);
        }
        let mut updated = centroids.clone();
        let mut empties = Vec::new();
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                empties.push(c);
            } else {
                let mean = &sums.row(c) / count as f64;
                updated.row_mut(c).assign(&mean);
            }
        }
        if !empties.is_empty() {
            let mut far: Vec<usize> = (0..n).collect();
            far.sort_by(|&a, &b| assigned[b].1.total_cmp(&assigned[a].1).then(a.cmp(&b)));
            for (c, &p) in empties.iter().zip(&far) {
                updated.row_mut(*c).assign(&points.row(p));
            }
        }
        let shift = (&updated - &centroids)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        centroids = updated;
        iterations += 1;
        converged = shift < cfg.tol;
    }
}

fn finish(
    centroids: Array2<f64>,
    assigned: Vec<(usize, f64)>,
    iterations: usize,
    inertia_trace: Vec<f64>,
) -> Clustering {
    let inertia = assigned.iter().map(|a| a.1).sum();
    Clustering {
        centroids,
        assignments: assigned.iter().map(|a| a.0).collect(),
        distances: assigned.iter().map(|a| a.1.sqrt()).collect(),
        inertia,
        iterations,
        inertia_trace,
    }
}

/// Fits k-means over `points` and orders `ids` (one per row) by distance to
/// their own centroid, farthest first; equal distances by ascending id.
pub fn diversity_rank(
    points: ArrayView2<'_, f64>,
    ids: &[usize],
    cfg: &KMeansConfig,
) -> Result<(Vec<usize>, Clustering)> {
    if ids.len() != points.nrows() {
        return Err(Error::Shape {
            expected: format!("{} id(s)", points.nrows()),
            actual: format!("{} id(s)", ids.len()),
        });
    }
    let clustering = kmeans_fit(points, cfg)?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        clustering.distances[b]
            .total_cmp(&clustering.distances[a])
            .then(ids[a].cmp(&ids[b]))
    });
    Ok((order.into_iter().map(|i| ids[i]).collect(), clustering))
}
