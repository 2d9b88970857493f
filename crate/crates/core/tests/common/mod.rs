//! Brute-force reference implementations used as test oracles. Nothing here
//! calls into the crate's ranking, clustering or selection code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact rational `num / den`, used for multipliers and ratios so ceilings
/// never see float noise.
#[derive(Clone, Copy, Debug)]
pub struct Ratio {
    pub num: usize,
    pub den: usize,
}

impl Ratio {
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn ceil_times(self, b: usize) -> usize {
        (self.num * b).div_ceil(self.den)
    }
}

pub fn max_conf(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            let mut m = r[0];
            for &v in r {
                if v > m {
                    m = v;
                }
            }
            m
        })
        .collect()
}

pub fn least_conf(rows: &[Vec<f64>]) -> Vec<f64> {
    max_conf(rows).into_iter().map(|m| 1.0 - m).collect()
}

/// Ids sorted by score descending, ties by ascending id (insertion sort).
pub fn rank_desc(ids: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut pairs: Vec<(usize, f64)> = ids.iter().copied().zip(scores.iter().copied()).collect();
    for i in 1..pairs.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (pairs[j - 1], pairs[j]);
            let out_of_order = b.1 > a.1 || (b.1 == a.1 && b.0 < a.0);
            if !out_of_order {
                break;
            }
            pairs.swap(j - 1, j);
            j -= 1;
        }
    }
    pairs.into_iter().map(|p| p.0).collect()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        s += (a[j] - b[j]) * (a[j] - b[j]);
    }
    s
}

pub struct RefClustering {
    pub assignments: Vec<usize>,
    pub sq_distances: Vec<f64>,
    pub inertia: f64,
}

/// Textbook k-means following the crate's documented draw contract.
pub fn ref_kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> RefClustering {
    let n = points.len();
    let d = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |u: f64| ((u * n as f64).floor() as usize).min(n - 1);

    let mut centres: Vec<Vec<f64>> = vec![points[uniform(rng.random::<f64>())].clone()];
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut w: Vec<f64> = points.iter().map(|p| sq(p, &centres[0])).collect();
    while centres.len() < k {
        let mut total = 0.0;
        for &x in &w {
            total += x;
        }
        if total <= 0.0 {
            let u: f64 = rng.random();
            centres.push(points[uniform(u)].clone());
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for _ in 0..trials {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &x) in w.iter().enumerate() {
                acc += x;
                if acc > u * total {
                    pick = Some(i);
                    break;
                }
            }
            let cand = pick.unwrap_or_else(|| (0..n).rev().find(|&i| w[i] > 0.0).unwrap());
            let mut potential = 0.0;
            for (i, p) in points.iter().enumerate() {
                potential += w[i].min(sq(p, &points[cand]));
            }
            if best.is_none() || potential < best.unwrap().1 {
                best = Some((cand, potential));
            }
        }
        let pick = best.unwrap().0;
        for (i, p) in points.iter().enumerate() {
            w[i] = w[i].min(sq(p, &points[pick]));
        }
        centres.push(points[pick].clone());
    }

    let assign = |centres: &[Vec<f64>]| -> Vec<(usize, f64)> {
        points
            .iter()
            .map(|p| {
                let mut best = (0, f64::INFINITY);
                for (c, centre) in centres.iter().enumerate() {
                    let dist = sq(p, centre);
                    if dist < best.1 {
                        best = (c, dist);
                    }
                }
                best
            })
            .collect()
    };

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let a = assign(&centres);
        if converged || iterations == max_iter {
            let mut inertia = 0.0;
            for x in &a {
                inertia += x.1;
            }
            return RefClustering {
                assignments: a.iter().map(|x| x.0).collect(),
                sq_distances: a.iter().map(|x| x.1).collect(),
                inertia,
            };
        }
        let mut next = centres.clone();
        let mut empty = Vec::new();
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| a[i].0 == c).collect();
            if members.is_empty() {
                empty.push(c);
                continue;
            }
            let mut sum = vec![0.0; d];
            for &i in &members {
                for j in 0..d {
                    sum[j] += points[i][j];
                }
            }
            next[c] = sum.iter().map(|s| s / members.len() as f64).collect();
        }
        let mut far: Vec<usize> = (0..n).collect();
        far.sort_by(|&x, &y| a[y].1.partial_cmp(&a[x].1).unwrap().then(x.cmp(&y)));
        for (slot, &c) in empty.iter().enumerate() {
            next[c] = points[far[slot]].clone();
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            for j in 0..d {
                shift = shift.max((next[c][j] - centres[c][j]).abs());
            }
        }
        centres = next;
        iterations += 1;
        converged = shift < tol;
    }
}

/// Candidate ids ordered farthest-from-own-centroid first.
pub fn ref_diversity(ids: &[usize], rows: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let c = ref_kmeans(rows, k, seed, 100, 1e-6);
    let dist: Vec<f64> = c.sq_distances.iter().map(|v| v.sqrt()).collect();
    rank_desc(ids, &dist)
}

/// Smallest within-cluster sum of squares over all partitions into `k`
/// non-empty groups.
pub fn exhaustive_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut used = vec![false; k];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().all(|&u| u) {
            let mut cost = 0.0;
            for c in 0..k {
                let members: Vec<&Vec<f64>> =
                    (0..n).filter(|&i| labels[i] == c).map(|i| &points[i]).collect();
                let mut mean = vec![0.0; d];
                for p in &members {
                    for j in 0..d {
                        mean[j] += p[j] / members.len() as f64;
                    }
                }
                for p in &members {
                    cost += sq(p, &mean);
                }
            }
            best = best.min(cost);
        }
        // next labeling in base k
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Everything a strategy sees, in plain vectors. `unlabeled` is ascending and
/// `probs`/`emb` are aligned with it.
pub struct Instance {
    pub unlabeled: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
    pub emb: Vec<Vec<f64>>,
    pub batch: usize,
    pub k: usize,
    pub m: Ratio,
    pub rho: Ratio,
    pub seed: u64,
}

impl Instance {
    fn rows(&self, ids: &[usize]) -> Vec<Vec<f64>> {
        ids.iter()
            .map(|id| self.emb[self.unlabeled.binary_search(id).unwrap()].clone())
            .collect()
    }

    fn b(&self) -> usize {
        self.batch.min(self.unlabeled.len())
    }

    /// All candidates of one stream, most diverse first.
    fn stream(&self, scores: &[f64], quota: usize) -> Vec<usize> {
        let count = self.m.ceil_times(quota).min(self.unlabeled.len());
        let cands: Vec<usize> = rank_desc(&self.unlabeled, scores).into_iter().take(count).collect();
        ref_diversity(&cands, &self.rows(&cands), self.k.min(count), self.seed)
    }

    pub fn hcd(&self) -> Vec<usize> {
        let b = self.b();
        if b == 0 {
            return vec![];
        }
        self.stream(&max_conf(&self.probs), b)[..b].to_vec()
    }

    pub fn lcd(&self) -> Vec<usize> {
        let b = self.b();
        if b == 0 {
            return vec![];
        }
        self.stream(&least_conf(&self.probs), b)[..b].to_vec()
    }

    pub fn lchc(&self) -> Vec<usize> {
        let b = self.b();
        let low = b.div_ceil(2);
        let mut out: Vec<usize> = rank_desc(&self.unlabeled, &least_conf(&self.probs))
            .into_iter()
            .take(low)
            .collect();
        for id in rank_desc(&self.unlabeled, &max_conf(&self.probs)) {
            if out.len() == b {
                break;
            }
            if !out.contains(&id) {
                out.push(id);
            }
        }
        out
    }

    pub fn dsal(&self) -> Vec<usize> {
        let b = self.b();
        if b == 0 {
            return vec![];
        }
        let hard = self.rho.ceil_times(b).min(b);
        let easy = b - hard;
        let mut out = Vec::new();
        if hard > 0 {
            out.extend_from_slice(&self.stream(&least_conf(&self.probs), hard)[..hard]);
        }
        if easy > 0 {
            let mc = max_conf(&self.probs);
            let mut order = self.stream(&mc, easy);
            order.extend(rank_desc(&self.unlabeled, &mc));
            let mut taken = 0;
            for id in order {
                if taken == easy {
                    break;
                }
                if !out.contains(&id) {
                    out.push(id);
                    taken += 1;
                }
            }
        }
        out
    }

    pub fn lc_only(&self) -> Vec<usize> {
        rank_desc(&self.unlabeled, &least_conf(&self.probs))
            .into_iter()
            .take(self.b())
            .collect()
    }

    pub fn random(&self) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rand::seq::index::sample(&mut rng, self.unlabeled.len(), self.b())
            .into_iter()
            .map(|i| self.unlabeled[i])
            .collect()
    }
}

/// Random posterior rows on a coarse grid so that ties occur.
pub fn random_probs(rng: &mut impl Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..c).map(|_| rng.random_range(1..=4) as f64).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g.push((up - down) / (2.0 * h));
    }
    g
}

/// `||a - b|| / max(||a|| + ||b||, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()) + norm(&mut b.iter().copied());
    diff / scale.max(1e-12)
}

pub mod harness {
    use super::*;
    use hybrid_al::{select, Pool, ProbabilityMatrix, StrategyConfig, StrategyKind};
    use ndarray::Array2;

    pub struct Case {
        pub pool: Pool,
        pub probs: ProbabilityMatrix,
        pub emb: Array2<f64>,
        pub inst: Instance,
    }

    const MULTIPLIERS: [Ratio; 4] = [
        Ratio { num: 1, den: 1 },
        Ratio { num: 3, den: 2 },
        Ratio { num: 2, den: 1 },
        Ratio { num: 3, den: 1 },
    ];
    const RATIOS: [Ratio; 6] = [
        Ratio { num: 0, den: 1 },
        Ratio { num: 1, den: 4 },
        Ratio { num: 3, den: 10 },
        Ratio { num: 1, den: 2 },
        Ratio { num: 7, den: 10 },
        Ratio { num: 1, den: 1 },
    ];

    /// Random pool with n <= 20, d <= 4, C <= 3 and some ids already labeled.
    pub fn random_case(seed: u64) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=20);
        let d = rng.random_range(1..=4);
        let c = rng.random_range(2..=3);
        // a coarse grid makes equal distances and duplicate points likely
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-3..=3) as f64 / 2.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let mut pool = Pool::new(x.clone(), labels, c).unwrap();
        let pre: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).take(n - 1).collect();
        pool = pool.move_to_labeled(&pre).unwrap();
        let unlabeled = pool.unlabeled_ids();
        let probs = random_probs(&mut rng, unlabeled.len(), c);
        let emb = x.select(ndarray::Axis(0), &unlabeled);
        let inst = Instance {
            probs: probs.clone(),
            emb: emb.outer_iter().map(|r| r.to_vec()).collect(),
            unlabeled,
            batch: rng.random_range(1..=n + 2),
            k: rng.random_range(1..=4),
            m: MULTIPLIERS[rng.random_range(0..MULTIPLIERS.len())],
            rho: RATIOS[rng.random_range(0..RATIOS.len())],
            seed: rng.random(),
        };
        Case {
            pool,
            probs: ProbabilityMatrix::from_rows(&probs).unwrap(),
            emb,
            inst,
        }
    }

    impl Case {
        pub fn config(&self, kind: StrategyKind) -> StrategyConfig {
            StrategyConfig {
                kind,
                batch_size: self.inst.batch,
                candidate_multiplier: self.inst.m.value(),
                dsal_ratio: self.inst.rho.value(),
                k: self.inst.k,
                seed: self.inst.seed,
            }
        }

        pub fn run(&self, kind: StrategyKind) -> Vec<usize> {
            self.run_with(&self.config(kind))
        }

        pub fn run_with(&self, cfg: &StrategyConfig) -> Vec<usize> {
            select(&self.pool, Some(&self.probs), Some(self.emb.view()), cfg)
                .unwrap()
                .ids
        }

        pub fn oracle(&self, kind: StrategyKind) -> Vec<usize> {
            match kind {
                StrategyKind::Hcd => self.inst.hcd(),
                StrategyKind::Lcd => self.inst.lcd(),
                StrategyKind::Dsal => self.inst.dsal(),
                StrategyKind::Lchc => self.inst.lchc(),
                StrategyKind::LcOnly => self.inst.lc_only(),
                StrategyKind::Random => self.inst.random(),
            }
        }
    }

    /// Compares every strategy with its oracle; describes the first mismatch.
    pub fn check_case(seed: u64) -> Result<(), String> {
        let case = random_case(seed);
        for kind in StrategyKind::ALL {
            let got = case.run(kind);
            let want = case.oracle(kind);
            if got != want {
                return Err(format!(
                    "case {seed}, {kind}: got {got:?}, oracle {want:?} (B={}, K={}, m={:?}, rho={:?})",
                    case.inst.batch, case.inst.k, case.inst.m, case.inst.rho
                ));
            }
        }
        Ok(())
    }
}
