//! Batch query strategies.
//!
//! The hybrid strategies rank the unlabeled pool by a confidence criterion,
//! keep a candidate set of `ceil(m * quota)` ids, cluster the candidates'
//! embeddings with k-means and take the candidates farthest from their own
//! centroid:
//!
//! | kind     | candidates by                         | meaning             |
//! |----------|---------------------------------------|---------------------|
//! | `hcd`    | max confidence                        | high-conf-diverse   |
//! | `lcd`    | least confidence                      | low-conf-diverse    |
//! | `dsal`   | both, `ceil(rho * B)` hard + rest easy| low/high-conf-diverse |
//! | `lchc`   | no clustering: half least, half most  | low-conf / high-conf |
//! | `lc-only`| no clustering: least confidence       | low-conf            |
//! | `random` | uniform without replacement           | random              |
//!
//! Inputs are positional: row `i` of the posteriors and embeddings belongs to
//! the `i`-th unlabeled id in ascending order.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::clustering::{diversity_rank, KMeansConfig};
use crate::error::{Error, Result};
use crate::pool::Pool;
use crate::scoring::{least_confidence, max_confidence, rank, top_k, ProbabilityMatrix, ScoreVector};
use crate::seed::rng_from_seed;
use crate::util::ceil_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    Hcd,
    Lchc,
    Dsal,
    Lcd,
    Random,
    LcOnly,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Hcd,
        StrategyKind::Lchc,
        StrategyKind::Dsal,
        StrategyKind::Lcd,
        StrategyKind::Random,
        StrategyKind::LcOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Hcd => "hcd",
            StrategyKind::Lchc => "lchc",
            StrategyKind::Dsal => "dsal",
            StrategyKind::Lcd => "lcd",
            StrategyKind::Random => "random",
            StrategyKind::LcOnly => "lc-only",
        }
    }

    /// Whether the strategy reads model posteriors.
    pub fn needs_posteriors(self) -> bool {
        self != StrategyKind::Random
    }

    /// Whether the strategy clusters embeddings.
    pub fn needs_embeddings(self) -> bool {
        matches!(self, StrategyKind::Hcd | StrategyKind::Dsal | StrategyKind::Lcd)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "hcd" => Ok(StrategyKind::Hcd),
            "lchc" => Ok(StrategyKind::Lchc),
            "dsal" => Ok(StrategyKind::Dsal),
            "lcd" => Ok(StrategyKind::Lcd),
            "random" => Ok(StrategyKind::Random),
            "lc-only" | "lconly" | "lc" => Ok(StrategyKind::LcOnly),
            other => Err(Error::config(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub batch_size: usize,
    /// Candidate set size is `min(ceil(m * quota), |unlabeled|)`.
    pub candidate_multiplier: f64,
    /// Fraction of the batch drawn by the hard (least-confidence) stream in DSAL.
    pub dsal_ratio: f64,
    /// Number of k-means clusters; capped at the candidate count.
    pub k: usize,
    pub seed: u64,
}

impl StrategyConfig {
    pub const DEFAULT_CANDIDATE_MULTIPLIER: f64 = 2.0;
    pub const DEFAULT_DSAL_RATIO: f64 = 0.5;

    pub fn new(kind: StrategyKind, batch_size: usize, k: usize, seed: u64) -> Self {
        Self {
            kind,
            batch_size,
            candidate_multiplier: Self::DEFAULT_CANDIDATE_MULTIPLIER,
            dsal_ratio: Self::DEFAULT_DSAL_RATIO,
            k,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.candidate_multiplier.is_finite() && self.candidate_multiplier >= 1.0) {
            return Err(Error::config(format!(
                "candidate multiplier must be >= 1, got {}",
                self.candidate_multiplier
            )));
        }
        if !(0.0..=1.0).contains(&self.dsal_ratio) {
            return Err(Error::config(format!(
                "DSAL ratio must lie in [0, 1], got {}",
                self.dsal_ratio
            )));
        }
        if self.k == 0 {
            return Err(Error::config("k-means cluster count must be at least 1"));
        }
        Ok(())
    }

    /// Hard/easy split of a batch of `b` for DSAL.
    pub fn dsal_split(&self, b: usize) -> (usize, usize) {
        let hard = ceil_count(self.dsal_ratio * b as f64).min(b);
        (hard, b - hard)
    }
}

/// Why an id entered the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    HighConfDiverse,
    LowConfDiverse,
    HighConf,
    LowConf,
    Random,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::HighConfDiverse => "high-conf-diverse",
            Provenance::LowConfDiverse => "low-conf-diverse",
            Provenance::HighConf => "high-conf",
            Provenance::LowConf => "low-conf",
            Provenance::Random => "random",
        }
    }
}

/// Candidate-set bookkeeping for one clustered stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamReport {
    pub provenance: Provenance,
    pub quota: usize,
    pub candidates: usize,
    pub k_requested: usize,
    pub k_used: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionBatch {
    pub ids: Vec<usize>,
    pub provenance: Vec<Provenance>,
    /// Criterion value per id at selection time: least confidence for
    /// low-confidence picks, max confidence for high-confidence picks, 0 for
    /// random picks.
    pub scores: Vec<f64>,
    pub streams: Vec<StreamReport>,
}

impl SelectionBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn push(&mut self, id: usize, tag: Provenance, score: f64) {
        self.ids.push(id);
        self.provenance.push(tag);
        self.scores.push(score);
    }
}

/// Positional inputs checked against the pool's unlabeled set.
struct Inputs<'a> {
    ids: Vec<usize>,
    embeddings: Option<ArrayView2<'a, f64>>,
    max_conf: ScoreVector,
    least_conf: ScoreVector,
}

impl<'a> Inputs<'a> {
    fn new(
        pool: &Pool,
        probs: &ProbabilityMatrix,
        embeddings: Option<ArrayView2<'a, f64>>,
    ) -> Result<Self> {
        let ids = pool.unlabeled_ids();
        if probs.nrows() != ids.len() {
            return Err(Error::Shape {
                expected: format!("{} posterior row(s), one per unlabeled id", ids.len()),
                actual: format!("{}", probs.nrows()),
            });
        }
        if let Some(e) = embeddings {
            if e.nrows() != ids.len() {
                return Err(Error::Shape {
                    expected: format!("{} embedding row(s), one per unlabeled id", ids.len()),
                    actual: format!("{}", e.nrows()),
                });
            }
        }
        Ok(Self {
            ids,
            embeddings,
            max_conf: max_confidence(probs),
            least_conf: least_confidence(probs),
        })
    }

    fn position(&self, id: usize) -> usize {
        self.ids.binary_search(&id).expect("candidate ids come from the unlabeled set")
    }

    fn score(&self, tag: Provenance, id: usize) -> f64 {
        let i = self.position(id);
        match tag {
            Provenance::HighConf | Provenance::HighConfDiverse => self.max_conf.scores()[i],
            Provenance::LowConf | Provenance::LowConfDiverse => self.least_conf.scores()[i],
            Provenance::Random => 0.0,
        }
    }

    fn criterion(&self, tag: Provenance) -> &ScoreVector {
        match tag {
            Provenance::HighConf | Provenance::HighConfDiverse => &self.max_conf,
            _ => &self.least_conf,
        }
    }

    /// Confidence ranking, then diversity ranking of the candidate set.
    /// Returns every candidate, most diverse first.
    fn diverse_stream(
        &self,
        tag: Provenance,
        quota: usize,
        cfg: &StrategyConfig,
    ) -> Result<(Vec<usize>, StreamReport)> {
        let embeddings = self
            .embeddings
            .ok_or_else(|| Error::config(format!("{} selection needs embeddings", cfg.kind)))?;
        let count = ceil_count(cfg.candidate_multiplier * quota as f64).min(self.ids.len());
        let candidates = top_k(&self.ids, self.criterion(tag), count)?;
        let rows: Vec<usize> = candidates.iter().map(|&id| self.position(id)).collect();
        let points = embeddings.select(Axis(0), &rows);
        let k_used = cfg.k.min(count);
        let (ranked, _) = diversity_rank(points.view(), &candidates, &KMeansConfig::new(k_used, cfg.seed))?;
        let report = StreamReport {
            provenance: tag,
            quota,
            candidates: count,
            k_requested: cfg.k,
            k_used,
        };
        Ok((ranked, report))
    }
}

fn batch_len(pool: &Pool, cfg: &StrategyConfig) -> Result<usize> {
    cfg.validate()?;
    Ok(cfg.batch_size.min(pool.num_unlabeled()))
}

fn single_diverse(
    pool: &Pool,
    probs: &ProbabilityMatrix,
    embeddings: ArrayView2<'_, f64>,
    cfg: &StrategyConfig,
    tag: Provenance,
) -> Result<SelectionBatch> {
    let b = batch_len(pool, cfg)?;
    let inputs = Inputs::new(pool, probs, Some(embeddings))?;
    let mut batch = SelectionBatch::default();
    if b == 0 {
        return Ok(batch);
    }
    let (ranked, report) = inputs.diverse_stream(tag, b, cfg)?;
    for &id in &ranked[..b] {
        batch.push(id, tag, inputs.score(tag, id));
    }
    batch.streams.push(report);
    Ok(batch)
}

/// High confidence, then diverse.
pub fn select_hcd(
    pool: &Pool,
    probs: &ProbabilityMatrix,
    embeddings: ArrayView2<'_, f64>,
    cfg: &StrategyConfig,
) -> Result<SelectionBatch> {
    single_diverse(pool, probs, embeddings, cfg, Provenance::HighConfDiverse)
}

/// Least confidence, then diverse.
pub fn select_lcd(
    pool: &Pool,
    probs: &ProbabilityMatrix,
    embeddings: ArrayView2<'_, f64>,
    cfg: &StrategyConfig,
) -> Result<SelectionBatch> {
    single_diverse(pool, probs, embeddings, cfg, Provenance::LowConfDiverse)
}

/// `ceil(B/2)` least-confident ids, then `floor(B/2)` most-confident ids
/// among the rest.
pub fn select_lchc(pool: &Pool, probs: &ProbabilityMatrix, cfg: &StrategyConfig) -> Result<SelectionBatch> {
    let b = batch_len(pool, cfg)?;
    let inputs = Inputs::new(pool, probs, None)?;
    let mut batch = SelectionBatch::default();
    if b == 0 {
        return Ok(batch);
    }
    let low = b.div_ceil(2);
    let high = b - low;
    let low_ids = top_k(&inputs.ids, &inputs.least_conf, low)?;
    let taken: HashSet<usize> = low_ids.iter().copied().collect();
    for &id in &low_ids {
        batch.push(id, Provenance::LowConf, inputs.score(Provenance::LowConf, id));
    }
    let by_conf = rank(&inputs.ids, &inputs.max_conf)?;
    for id in by_conf.into_iter().filter(|id| !taken.contains(id)).take(high) {
        batch.push(id, Provenance::HighConf, inputs.score(Provenance::HighConf, id));
    }
    Ok(batch)
}

/// Two clustered streams: `ceil(rho * B)` hard (least-confident) ids and the
/// remainder easy (most-confident) ids. Each stream clusters its own
/// candidates. Ids claimed by the hard stream are skipped by the easy stream,
/// which then continues down its diversity ranking and, if that runs out,
/// down the confidence ranking.
pub fn select_dsal(
    pool: &Pool,
    probs: &ProbabilityMatrix,
    embeddings: ArrayView2<'_, f64>,
    cfg: &StrategyConfig,
) -> Result<SelectionBatch> {
    let b = batch_len(pool, cfg)?;
    let inputs = Inputs::new(pool, probs, Some(embeddings))?;
    let mut batch = SelectionBatch::default();
    if b == 0 {
        return Ok(batch);
    }
    let (hard, easy) = cfg.dsal_split(b);
    let (hard_stream, easy_stream) = rayon::join(
        || {
            if hard > 0 {
                inputs
                    .diverse_stream(Provenance::LowConfDiverse, hard, cfg)
                    .map(|(r, rep)| (r, Some(rep)))
            } else {
                Ok((Vec::new(), None))
            }
        },
        || {
            if easy > 0 {
                inputs
                    .diverse_stream(Provenance::HighConfDiverse, easy, cfg)
                    .map(|(r, rep)| (r, Some(rep)))
            } else {
                Ok((Vec::new(), None))
            }
        },
    );
    let (hard_ranked, hard_report) = hard_stream?;
    let (easy_ranked, easy_report) = easy_stream?;

    let mut taken = HashSet::with_capacity(b);
    for &id in &hard_ranked[..hard] {
        taken.insert(id);
        batch.push(id, Provenance::LowConfDiverse, inputs.score(Provenance::LowConfDiverse, id));
    }
    let backfill = rank(&inputs.ids, &inputs.max_conf)?;
    let mut easy_taken = 0;
    for id in easy_ranked.into_iter().chain(backfill) {
        if easy_taken == easy {
            break;
        }
        if taken.insert(id) {
            batch.push(id, Provenance::HighConfDiverse, inputs.score(Provenance::HighConfDiverse, id));
            easy_taken += 1;
        }
    }
    batch.streams.extend(hard_report.into_iter().chain(easy_report));
    Ok(batch)
}

/// Top `B` ids by least confidence.
pub fn select_lc_only(pool: &Pool, probs: &ProbabilityMatrix, cfg: &StrategyConfig) -> Result<SelectionBatch> {
    let b = batch_len(pool, cfg)?;
    let inputs = Inputs::new(pool, probs, None)?;
    let mut batch = SelectionBatch::default();
    if b == 0 {
        return Ok(batch);
    }
    for id in top_k(&inputs.ids, &inputs.least_conf, b)? {
        batch.push(id, Provenance::LowConf, inputs.score(Provenance::LowConf, id));
    }
    Ok(batch)
}

/// `B` unlabeled ids drawn uniformly without replacement, in draw order.
pub fn select_random(pool: &Pool, cfg: &StrategyConfig) -> Result<SelectionBatch> {
    let b = batch_len(pool, cfg)?;
    let ids = pool.unlabeled_ids();
    let mut rng = rng_from_seed(cfg.seed);
    let mut batch = SelectionBatch::default();
    for i in index::sample(&mut rng, ids.len(), b) {
        batch.push(ids[i], Provenance::Random, 0.0);
    }
    Ok(batch)
}

/// Dispatches on `cfg.kind`. `probs` and `embeddings` may be `None` for
/// strategies that do not read them.
pub fn select(
    pool: &Pool,
    probs: Option<&ProbabilityMatrix>,
    embeddings: Option<ArrayView2<'_, f64>>,
    cfg: &StrategyConfig,
) -> Result<SelectionBatch> {
    let need_probs = || {
        probs.ok_or_else(|| Error::config(format!("{} selection needs posteriors", cfg.kind)))
    };
    let need_embeddings = || {
        embeddings.ok_or_else(|| Error::config(format!("{} selection needs embeddings", cfg.kind)))
    };
    match cfg.kind {
        StrategyKind::Hcd => select_hcd(pool, need_probs()?, need_embeddings()?, cfg),
        StrategyKind::Lcd => select_lcd(pool, need_probs()?, need_embeddings()?, cfg),
        StrategyKind::Dsal => select_dsal(pool, need_probs()?, need_embeddings()?, cfg),
        StrategyKind::Lchc => select_lchc(pool, need_probs()?, cfg),
        StrategyKind::LcOnly => select_lc_only(pool, need_probs()?, cfg),
        StrategyKind::Random => select_random(pool, cfg),
    }
}
