//! The active-learning loop and the multi-run drivers built on it.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use ndarray::Axis;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::learner::{train_traced, LearnerConfig, Model};
use crate::pool::Pool;
use crate::seed::{derive_seed, rng_from_seed, Purpose};
use crate::strategies::{select, StrategyConfig, StrategyKind, StreamReport};
use crate::util::round_half_up;

pub const SOFTWARE: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub labeled_count: usize,
    pub labeled_fraction: f64,
    pub test_accuracy: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Trapezoidal area under accuracy against labeled fraction.
    pub fn auc(&self) -> f64 {
        trapezoid(
            self.points
                .iter()
                .map(|p| (p.labeled_fraction, p.test_accuracy)),
        )
    }

    /// Accuracy at `fraction`, linearly interpolated between neighbouring
    /// points; `None` outside the covered range.
    pub fn accuracy_at(&self, fraction: f64) -> Option<f64> {
        self.points.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            if fraction < a.labeled_fraction || fraction > b.labeled_fraction {
                return None;
            }
            let span = b.labeled_fraction - a.labeled_fraction;
            if span == 0.0 {
                return Some(a.test_accuracy);
            }
            let t = (fraction - a.labeled_fraction) / span;
            Some(a.test_accuracy + t * (b.test_accuracy - a.test_accuracy))
        })
    }
}

pub fn trapezoid(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points.into_iter().collect();
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    pub pool_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    pub learner_seed: u64,
    /// Seed handed to the strategy (k-means or random draw); absent for the
    /// initial model.
    pub selection_seed: Option<u64>,
    pub selected: usize,
    /// Candidate-set sizes and cluster counts of each clustered stream.
    pub streams: Vec<StreamReport>,
    pub wall_time_s: f64,
}

/// Everything needed to rerun a run and to audit what it did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    /// Resolved configuration in its flat key/value form.
    pub config: BTreeMap<String, String>,
    pub dataset: Option<DatasetSummary>,
    pub test_split_seed: u64,
    pub init_split_seed: u64,
    pub init_size: usize,
    pub batch_size: usize,
    pub budget_count: usize,
    pub kmeans_k: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub clustering_space: String,
    pub optimizer: String,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: String,
    /// Empty when the run completed.
    pub error: Option<String>,
}

impl RunManifest {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            software: SOFTWARE.to_string(),
            config: cfg.to_pairs().into_iter().collect(),
            dataset: None,
            test_split_seed: derive_seed(cfg.master_seed, 0, Purpose::TestSplit),
            init_split_seed: derive_seed(cfg.master_seed, 0, Purpose::InitSplit),
            init_size: 0,
            batch_size: 0,
            budget_count: 0,
            kmeans_k: 0,
            kmeans_max_iter: crate::clustering::KMeansConfig::DEFAULT_MAX_ITER,
            kmeans_tol: crate::clustering::KMeansConfig::DEFAULT_TOL,
            clustering_space: if cfg.learner.hidden_dim == 0 {
                "standardized-input".into()
            } else {
                "hidden-activations".into()
            },
            optimizer: "sgd (no momentum), l2 on weights, step decay".into(),
            iterations: Vec::new(),
            stop_reason: String::new(),
            error: None,
        }
    }

    /// The configuration this manifest was produced from.
    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::from_pairs(&self.config)
    }
}

/// Held-out test rows and the remaining pool, both densely re-indexed.
#[derive(Debug, Clone)]
pub struct Partition {
    pub pool: Pool,
    pub test: Pool,
    /// Dataset row of each pool id.
    pub pool_rows: Vec<usize>,
    /// External (CSV) id of each pool id.
    pub pool_external_ids: Vec<String>,
}

/// Carves `round(test_fraction * n)` rows, uniformly at random, into a test set.
pub fn split_test(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<Partition> {
    let n = ds.len();
    let n_test = round_half_up(test_fraction * n as f64);
    if n_test == 0 || n_test >= n {
        return Err(Error::config(format!(
            "test_fraction {test_fraction} of {n} samples leaves {n_test} test and {} pool sample(s)",
            n - n_test.min(n)
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut is_test = vec![false; n];
    for i in index::sample(&mut rng, n, n_test) {
        is_test[i] = true;
    }
    let test_rows: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
    let pool_rows: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    let pick = |rows: &[usize]| {
        (
            ds.features.select(Axis(0), rows),
            rows.iter().map(|&i| ds.labels[i]).collect::<Vec<_>>(),
        )
    };
    let (px, py) = pick(&pool_rows);
    let (tx, ty) = pick(&test_rows);
    Ok(Partition {
        pool: Pool::new(px, py, ds.num_classes)?,
        test: Pool::fully_labeled(tx, ty, ds.num_classes)?,
        pool_external_ids: pool_rows.iter().map(|&i| ds.external_ids[i].clone()).collect(),
        pool_rows,
    })
}

/// Outcome of a completed run, including the final state for export.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub curve: LearningCurve,
    pub manifest: RunManifest,
    pub partition: Partition,
    /// Pool after the last annotation round.
    pub pool: Pool,
    /// Model trained on the final labeled set.
    pub model: Model,
    /// Ids annotated in the last round (empty if no round ran).
    pub last_batch: Vec<usize>,
}

/// A run that stopped on an error, with whatever it recorded before.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub curve: LearningCurve,
    pub manifest: RunManifest,
}

impl From<Box<RunFailure>> for Error {
    fn from(f: Box<RunFailure>) -> Self {
        f.error
    }
}

fn learner_for(cfg: &RunConfig, iteration: usize) -> LearnerConfig {
    LearnerConfig {
        seed: derive_seed(cfg.master_seed, iteration as u64, Purpose::Learner),
        ..cfg.learner.clone()
    }
}

fn fit(pool: &Pool, lcfg: &LearnerConfig, warm: Option<&Model>) -> Result<Model> {
    let (x, y) = pool.labeled_view()?;
    train_traced(x.view(), &y, pool.num_classes(), lcfg, warm).map(|(m, _)| m)
}

fn check_batch(pool: &Pool, ids: &[usize], expected: usize) -> Result<()> {
    if ids.len() != expected {
        return Err(Error::Invariant(format!(
            "strategy returned {} id(s), expected {expected}",
            ids.len()
        )));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for &id in ids {
        if pool.is_labeled(id) || id >= pool.len() || !seen.insert(id) {
            return Err(Error::Invariant(format!(
                "strategy returned id {id}, which is not a fresh unlabeled id"
            )));
        }
    }
    Ok(())
}

/// Runs the loop on `cfg.dataset`.
pub fn run_active_learning(cfg: &RunConfig) -> std::result::Result<RunResult, Box<RunFailure>> {
    match cfg.validate().and_then(|_| cfg.dataset.load()) {
        Ok(ds) => run_on_dataset(cfg, &ds),
        Err(error) => {
            let mut manifest = RunManifest::new(cfg);
            manifest.error = Some(error.to_string());
            manifest.stop_reason = "error".into();
            Err(Box::new(RunFailure {
                error,
                curve: LearningCurve {
                    strategy: cfg.strategy.kind,
                    seed: cfg.master_seed,
                    points: Vec::new(),
                },
                manifest,
            }))
        }
    }
}

/// Runs the loop on an already loaded dataset (which must match `cfg.dataset`
/// for the manifest to be reproducible).
pub fn run_on_dataset(
    cfg: &RunConfig,
    ds: &Dataset,
) -> std::result::Result<RunResult, Box<RunFailure>> {
    let mut state = LoopState {
        curve: LearningCurve {
            strategy: cfg.strategy.kind,
            seed: cfg.master_seed,
            points: Vec::new(),
        },
        manifest: RunManifest::new(cfg),
    };
    match state.run(cfg, ds) {
        Ok((partition, pool, model, last_batch)) => Ok(RunResult {
            curve: state.curve,
            manifest: state.manifest,
            partition,
            pool,
            model,
            last_batch,
        }),
        Err(error) => {
            state.manifest.error = Some(error.to_string());
            state.manifest.stop_reason = "error".into();
            Err(Box::new(RunFailure {
                error,
                curve: state.curve,
                manifest: state.manifest,
            }))
        }
    }
}

/// Next pool, retrained model, selected ids, stream reports, accuracy and
/// learner seed of one annotation round.
type Step = (Pool, Model, Vec<usize>, Vec<StreamReport>, f64, u64);

struct LoopState {
    curve: LearningCurve,
    manifest: RunManifest,
}

impl LoopState {
    fn record(
        &mut self,
        cfg: &RunConfig,
        pool: &Pool,
        iteration: usize,
        accuracy: f64,
        started: Instant,
        extra: (u64, Option<u64>, usize, Vec<StreamReport>),
    ) {
        let wall = if cfg.record_wall_time {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        self.curve.points.push(CurvePoint {
            iteration,
            labeled_count: pool.num_labeled(),
            labeled_fraction: pool.num_labeled() as f64 / pool.len() as f64,
            test_accuracy: accuracy,
            wall_time_s: wall,
        });
        let (learner_seed, selection_seed, selected, streams) = extra;
        self.manifest.iterations.push(IterationRecord {
            iteration,
            labeled_count: pool.num_labeled(),
            test_accuracy: accuracy,
            learner_seed,
            selection_seed,
            selected,
            streams,
            wall_time_s: wall,
        });
    }

    fn run(&mut self, cfg: &RunConfig, ds: &Dataset) -> Result<(Partition, Pool, Model, Vec<usize>)> {
        let partition = split_test(ds, cfg.test_fraction, self.manifest.test_split_seed)?;
        let n_pool = partition.pool.len();
        self.manifest.dataset = Some(DatasetSummary {
            samples: ds.len(),
            features: ds.num_features(),
            classes: ds.num_classes,
            pool_size: n_pool,
            test_size: partition.test.len(),
        });
        let (test_x, test_y) = partition.test.labeled_view()?;

        let started = Instant::now();
        let mut pool = if cfg.stratified_init {
            partition
                .pool
                .split_initial_stratified(cfg.init_fraction, self.manifest.init_split_seed)?
        } else {
            partition.pool.split_initial(cfg.init_fraction, self.manifest.init_split_seed)?
        };
        let init_size = pool.num_labeled();
        let batch_size = round_half_up(cfg.batch_fraction * n_pool as f64).max(1);
        let budget = round_half_up(cfg.label_budget_fraction * n_pool as f64).max(init_size);
        let k = cfg.resolved_k(ds.num_classes);
        self.manifest.init_size = init_size;
        self.manifest.batch_size = batch_size;
        self.manifest.budget_count = budget;
        self.manifest.kmeans_k = k;

        let lcfg = learner_for(cfg, 0);
        let mut model = fit(&pool, &lcfg, None).map_err(|e| e.at_iteration(0))?;
        let acc = model
            .evaluate(test_x.view(), &test_y)
            .map_err(|e| e.at_iteration(0))?;
        self.record(cfg, &pool, 0, acc, started, (lcfg.seed, None, 0, Vec::new()));

        let mut last_batch = Vec::new();
        let mut annotated = init_size;
        let mut iteration = 0;
        self.manifest.stop_reason = loop {
            if cfg.max_iterations.is_some_and(|m| iteration >= m) {
                break "max_iterations";
            }
            if pool.num_unlabeled() == 0 {
                break "pool_exhausted";
            }
            let room = budget.saturating_sub(pool.num_labeled());
            if room == 0 {
                break "label_budget";
            }
            iteration += 1;
            let started = Instant::now();
            let b = batch_size.min(room);
            let purpose = if cfg.strategy.kind == StrategyKind::Random {
                Purpose::RandomBaseline
            } else {
                Purpose::KMeans
            };
            let scfg = StrategyConfig {
                kind: cfg.strategy.kind,
                batch_size: b,
                candidate_multiplier: cfg.strategy.candidate_multiplier,
                dsal_ratio: cfg.strategy.dsal_ratio,
                k,
                seed: derive_seed(cfg.master_seed, iteration as u64, purpose),
            };
            let step = || -> Result<Step> {
                let (_, ux) = pool.unlabeled_view();
                let probs = if scfg.kind.needs_posteriors() {
                    Some(model.predict_proba(ux.view())?)
                } else {
                    None
                };
                let emb = if scfg.kind.needs_embeddings() {
                    Some(model.embed(ux.view())?)
                } else {
                    None
                };
                let batch = select(&pool, probs.as_ref(), emb.as_ref().map(|e| e.view()), &scfg)?;
                check_batch(&pool, &batch.ids, b.min(pool.num_unlabeled()))?;
                let next = pool.move_to_labeled(&batch.ids)?;
                let lcfg = learner_for(cfg, iteration);
                let warm = cfg.learner.warm_start.then_some(&model);
                let next_model = fit(&next, &lcfg, warm)?;
                let acc = next_model.evaluate(test_x.view(), &test_y)?;
                Ok((next, next_model, batch.ids, batch.streams, acc, lcfg.seed))
            };
            let (next, next_model, ids, streams, acc, learner_seed) =
                step().map_err(|e| e.at_iteration(iteration))?;

            annotated += ids.len();
            if next.num_labeled() != annotated
                || next.num_labeled() + next.num_unlabeled() != n_pool
                || next.labeled_ids().iter().any(|&id| next.unlabeled_ids().binary_search(&id).is_ok())
            {
                return Err(Error::Invariant(format!(
                    "partition broken after iteration {iteration}"
                )));
            }
            pool = next;
            model = next_model;
            self.record(
                cfg,
                &pool,
                iteration,
                acc,
                started,
                (learner_seed, Some(scfg.seed), ids.len(), streams),
            );
            last_batch = ids;
        }
        .to_string();
        Ok((partition, pool, model, last_batch))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub iteration: usize,
    pub labeled_count: usize,
    pub labeled_fraction: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub points: Vec<AggregatePoint>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub curves: Vec<LearningCurve>,
    pub manifests: Vec<RunManifest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate(label: String, config: RunConfig, seeds: Vec<u64>, runs: Vec<RunResult>) -> ComparisonRow {
    let len = runs.iter().map(|r| r.curve.points.len()).min().unwrap_or(0);
    let points = (0..len)
        .map(|i| {
            let accs: Vec<f64> = runs.iter().map(|r| r.curve.points[i].test_accuracy).collect();
            let fracs: Vec<f64> = runs.iter().map(|r| r.curve.points[i].labeled_fraction).collect();
            let first = &runs[0].curve.points[i];
            let (mean_accuracy, std_accuracy) = mean_std(&accs);
            AggregatePoint {
                iteration: first.iteration,
                labeled_count: first.labeled_count,
                labeled_fraction: mean_std(&fracs).0,
                mean_accuracy,
                std_accuracy,
            }
        })
        .collect();
    let aucs: Vec<f64> = runs.iter().map(|r| r.curve.auc()).collect();
    let (auc_mean, auc_std) = mean_std(&aucs);
    let (curves, manifests) = runs.into_iter().map(|r| (r.curve, r.manifest)).unzip();
    ComparisonRow {
        label,
        config,
        seeds,
        points,
        auc_mean,
        auc_std,
        curves,
        manifests,
    }
}

fn with_jobs<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker(s): {e}")))?;
    Ok(pool.install(work))
}

/// Runs every labelled configuration under every seed (`master_seed` is
/// replaced by each seed) and aggregates per label. `jobs` bounds the worker
/// count; 0 uses the default pool. Rows follow the input order.
pub fn compare_labeled(
    cfgs: &[(String, RunConfig)],
    seeds: &[u64],
    jobs: usize,
) -> Result<ComparisonTable> {
    if cfgs.is_empty() || seeds.is_empty() {
        return Err(Error::config("comparison needs at least one configuration and one seed"));
    }
    let spec: &DatasetSpec = &cfgs[0].1.dataset;
    if let Some((label, _)) = cfgs.iter().find(|(_, c)| &c.dataset != spec) {
        return Err(Error::config(format!(
            "configuration '{label}' uses a different dataset from '{}'",
            cfgs[0].0
        )));
    }
    for (_, c) in cfgs {
        c.validate()?;
    }
    let ds = spec.load()?;
    let tasks: Vec<(usize, RunConfig)> = cfgs
        .iter()
        .enumerate()
        .flat_map(|(i, (_, c))| {
            seeds.iter().map(move |&s| {
                let mut c = c.clone();
                c.master_seed = s;
                (i, c)
            })
        })
        .collect();
    let results: Vec<std::result::Result<RunResult, Box<RunFailure>>> = with_jobs(jobs, || {
        tasks
            .par_iter()
            .map(|(_, c)| run_on_dataset(c, &ds))
            .collect()
    })?;
    let mut grouped: Vec<Vec<RunResult>> = (0..cfgs.len()).map(|_| Vec::new()).collect();
    for ((i, _), r) in tasks.iter().zip(results) {
        grouped[*i].push(r?);
    }
    let rows = cfgs
        .iter()
        .zip(grouped)
        .map(|((label, c), runs)| aggregate(label.clone(), c.clone(), seeds.to_vec(), runs))
        .collect();
    Ok(ComparisonTable { rows })
}

/// One row per configuration, labelled by its strategy name.
pub fn compare(cfgs: &[RunConfig], seeds: &[u64], jobs: usize) -> Result<ComparisonTable> {
    let labeled: Vec<(String, RunConfig)> = cfgs
        .iter()
        .map(|c| (c.strategy.kind.to_string(), c.clone()))
        .collect();
    compare_labeled(&labeled, seeds, jobs)
}

/// DSAL under each hard-stream ratio, one row per ratio labelled `dsal@<ratio>`.
pub fn ablate_dsal(base: &RunConfig, ratios: &[f64], seeds: &[u64], jobs: usize) -> Result<ComparisonTable> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::config(format!("DSAL ratio {r} outside [0, 1]")));
    }
    let cfgs: Vec<(String, RunConfig)> = ratios
        .iter()
        .map(|&r| {
            let mut c = base.clone();
            c.strategy.kind = StrategyKind::Dsal;
            c.strategy.dsal_ratio = r;
            (format!("dsal@{r}"), c)
        })
        .collect();
    compare_labeled(&cfgs, seeds, jobs)
}
