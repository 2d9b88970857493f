//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use ::hybrid_al as al;
use al::output;
use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(hybrid_al, HybridAlError, PyException, "Base class for toolkit errors.");
create_exception!(hybrid_al, ConfigError, HybridAlError, "Invalid configuration (CLI exit code 1).");
create_exception!(hybrid_al, DataError, HybridAlError, "Malformed or inconsistent data (CLI exit code 2).");
create_exception!(hybrid_al, DivergenceError, HybridAlError, "Training diverged (CLI exit code 3).");

fn to_py(e: al::Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        1 => ConfigError::new_err(msg),
        3 => DivergenceError::new_err(msg),
        _ => DataError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(DataError::new_err(format!("row {i} has {} value(s), expected {d}", rows[i].len())));
    }
    Array2::from_shape_vec((n, d), rows.concat()).map_err(|e| DataError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn kind(name: &str) -> PyResult<al::StrategyKind> {
    name.parse().map_err(to_py)
}

/// Run configuration in the toolkit's `key = value` format.
#[pyclass(module = "hybrid_al", from_py_object)]
#[derive(Clone)]
struct RunConfig {
    inner: al::RunConfig,
}

#[pymethods]
impl RunConfig {
    /// Parses `text`; an empty or missing text gives the defaults.
    #[new]
    #[pyo3(signature = (text=None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => al::RunConfig::parse(t).map_err(to_py)?,
            None => al::RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: al::RunConfig::from_file(&path).map_err(to_py)? })
    }

    /// Configuration recorded in a run manifest.
    #[staticmethod]
    fn from_manifest(path: PathBuf) -> PyResult<Self> {
        let manifest = output::read_manifest(&path).map_err(to_py)?;
        Ok(Self { inner: manifest.run_config().map_err(to_py)? })
    }

    /// Returns a copy with `key` set to `value` (same syntax as the file).
    fn with_value(&self, key: &str, value: &str) -> PyResult<Self> {
        let mut pairs: std::collections::BTreeMap<String, String> = self.inner.to_pairs().into_iter().collect();
        pairs.insert(key.to_string(), value.to_string());
        Ok(Self { inner: al::RunConfig::from_pairs(&pairs).map_err(to_py)? })
    }

    fn to_dict(&self) -> Vec<(String, String)> {
        self.inner.to_pairs()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }

    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy.kind.to_string()
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(strategy={}, master_seed={})", self.inner.strategy.kind, self.inner.master_seed)
    }
}

/// A finished active-learning run.
#[pyclass(module = "hybrid_al")]
struct RunResult {
    inner: al::RunResult,
}

#[pymethods]
impl RunResult {
    /// `(iteration, labeled_count, labeled_fraction, test_accuracy, wall_time_s)` per point.
    #[getter]
    fn curve(&self) -> Vec<(usize, usize, f64, f64, f64)> {
        self.inner
            .curve
            .points
            .iter()
            .map(|p| (p.iteration, p.labeled_count, p.labeled_fraction, p.test_accuracy, p.wall_time_s))
            .collect()
    }

    fn auc(&self) -> f64 {
        self.inner.curve.auc()
    }

    fn accuracy_at(&self, fraction: f64) -> Option<f64> {
        self.inner.curve.accuracy_at(fraction)
    }

    #[getter]
    fn labeled_ids(&self) -> Vec<usize> {
        self.inner.pool.labeled_ids().to_vec()
    }

    #[getter]
    fn last_batch(&self) -> Vec<usize> {
        self.inner.last_batch.clone()
    }

    fn curve_csv(&self) -> String {
        output::curve_csv(&self.inner.curve)
    }

    fn manifest_json(&self) -> String {
        output::manifest_json(&self.inner.manifest)
    }

    fn embeddings_csv(&self) -> PyResult<String> {
        output::embeddings_csv(&self.inner).map_err(to_py)
    }

    /// Writes curve.csv and manifest.json into `out_dir`.
    fn write(&self, out_dir: PathBuf) -> PyResult<()> {
        output::write_run(&self.inner.curve, &self.inner.manifest, &out_dir).map_err(to_py)
    }
}

#[pyfunction]
fn run(py: Python<'_>, config: &RunConfig) -> PyResult<RunResult> {
    let cfg = config.inner.clone();
    let result = py.detach(move || al::run_active_learning(&cfg));
    result.map(|inner| RunResult { inner }).map_err(|f| to_py(f.error))
}

type TableRow = (String, f64, f64, Vec<(usize, f64, f64, f64)>);

fn table_rows(table: al::ComparisonTable) -> Vec<TableRow> {
    table
        .rows
        .into_iter()
        .map(|r| {
            let pts = r
                .points
                .iter()
                .map(|p| (p.iteration, p.labeled_fraction, p.mean_accuracy, p.std_accuracy))
                .collect();
            (r.label, r.auc_mean, r.auc_std, pts)
        })
        .collect()
}

/// Runs each configuration under each seed. Returns
/// `(label, auc_mean, auc_std, [(iteration, fraction, mean_acc, std_acc)])` rows.
#[pyfunction]
#[pyo3(signature = (configs, seeds, jobs=0))]
fn compare(py: Python<'_>, configs: Vec<RunConfig>, seeds: Vec<u64>, jobs: usize) -> PyResult<Vec<TableRow>> {
    let cfgs: Vec<al::RunConfig> = configs.into_iter().map(|c| c.inner).collect();
    let table = py.detach(move || al::compare(&cfgs, &seeds, jobs)).map_err(to_py)?;
    Ok(table_rows(table))
}

/// DSAL ratio sweep; rows as in `compare`, labelled `dsal@<ratio>`.
#[pyfunction]
#[pyo3(signature = (config, ratios, seeds, jobs=0))]
fn ablate(py: Python<'_>, config: &RunConfig, ratios: Vec<f64>, seeds: Vec<u64>, jobs: usize) -> PyResult<Vec<TableRow>> {
    let base = config.inner.clone();
    let table = py.detach(move || al::ablate_dsal(&base, &ratios, &seeds, jobs)).map_err(to_py)?;
    Ok(table_rows(table))
}

/// Labeled/unlabeled partition of a sample pool.
#[pyclass(module = "hybrid_al", from_py_object)]
#[derive(Clone)]
struct Pool {
    inner: al::Pool,
}

#[pymethods]
impl Pool {
    #[new]
    fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> PyResult<Self> {
        Ok(Self { inner: al::Pool::new(matrix(features)?, labels, num_classes).map_err(to_py)? })
    }

    fn split_initial(&self, fraction: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.split_initial(fraction, seed).map_err(to_py)? })
    }

    fn move_to_labeled(&self, ids: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.move_to_labeled(&ids).map_err(to_py)? })
    }

    #[getter]
    fn labeled_ids(&self) -> Vec<usize> {
        self.inner.labeled_ids().to_vec()
    }

    #[getter]
    fn unlabeled_ids(&self) -> Vec<usize> {
        self.inner.unlabeled_ids()
    }

    /// Features of the unlabeled ids, in `unlabeled_ids` order.
    fn unlabeled_features(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.unlabeled_view().1)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Picks a batch from `pool`'s unlabeled ids. `probs` and `embeddings` are
/// aligned with `pool.unlabeled_ids`.
#[pyfunction]
#[pyo3(signature = (pool, strategy, batch_size, k, seed, probs=None, embeddings=None, candidate_multiplier=2.0, dsal_ratio=0.5))]
#[allow(clippy::too_many_arguments)]
fn select(
    pool: &Pool,
    strategy: &str,
    batch_size: usize,
    k: usize,
    seed: u64,
    probs: Option<Vec<Vec<f64>>>,
    embeddings: Option<Vec<Vec<f64>>>,
    candidate_multiplier: f64,
    dsal_ratio: f64,
) -> PyResult<Vec<usize>> {
    let cfg = al::StrategyConfig {
        kind: kind(strategy)?,
        batch_size,
        candidate_multiplier,
        dsal_ratio,
        k,
        seed,
    };
    let probs = probs
        .map(|p| al::ProbabilityMatrix::new(matrix(p)?).map_err(to_py))
        .transpose()?;
    let emb = embeddings.map(matrix).transpose()?;
    let batch = al::select(&pool.inner, probs.as_ref(), emb.as_ref().map(|e| e.view()), &cfg).map_err(to_py)?;
    Ok(batch.ids)
}

#[pyfunction]
fn max_confidence(probs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let p = al::ProbabilityMatrix::new(matrix(probs)?).map_err(to_py)?;
    Ok(al::max_confidence(&p).scores().to_vec())
}

#[pyfunction]
fn least_confidence(probs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let p = al::ProbabilityMatrix::new(matrix(probs)?).map_err(to_py)?;
    Ok(al::least_confidence(&p).scores().to_vec())
}

/// Returns `(assignments, inertia)`.
#[pyfunction]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<(Vec<usize>, f64)> {
    let c = al::kmeans_fit(matrix(points)?.view(), &al::KMeansConfig::new(k, seed)).map_err(to_py)?;
    Ok((c.assignments, c.inertia))
}

/// Returns `(features, labels)`.
#[pyfunction]
#[pyo3(signature = (n, d, classes, spread, seed, weights=None))]
fn make_blobs(n: usize, d: usize, classes: usize, spread: f64, seed: u64, weights: Option<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let ds = al::make_blobs(&al::BlobSpec { n, d, classes, spread, weights, seed }).map_err(to_py)?;
    Ok((rows(&ds.features), ds.labels))
}

/// Trained classifier.
#[pyclass(module = "hybrid_al")]
struct Model {
    inner: al::Model,
}

#[pymethods]
impl Model {
    fn predict_proba(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let p = self.inner.predict_proba(matrix(features)?.view()).map_err(to_py)?;
        Ok(rows(p.values()))
    }

    fn embed(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.embed(matrix(features)?.view()).map_err(to_py)?))
    }

    fn evaluate(&self, features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        self.inner.evaluate(matrix(features)?.view(), &labels).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (features, labels, num_classes, epochs=50, lr0=0.01, hidden_dim=0, l2=1e-4, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    epochs: usize,
    lr0: f64,
    hidden_dim: usize,
    l2: f64,
    seed: u64,
) -> PyResult<Model> {
    let cfg = al::LearnerConfig { epochs, lr0, hidden_dim, l2, seed, ..Default::default() };
    let inner = al::train(matrix(features)?.view(), &labels, num_classes, &cfg).map_err(to_py)?;
    Ok(Model { inner })
}

#[pymodule]
fn hybrid_al(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("STRATEGIES", al::StrategyKind::ALL.map(|k| k.as_str()).to_vec())?;
    m.add("HybridAlError", py.get_type::<HybridAlError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("DivergenceError", py.get_type::<DivergenceError>())?;
    m.add_class::<RunConfig>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<Pool>()?;
    m.add_class::<Model>()?;
    for f in [
        wrap_pyfunction!(run, m)?,
        wrap_pyfunction!(compare, m)?,
        wrap_pyfunction!(ablate, m)?,
        wrap_pyfunction!(select, m)?,
        wrap_pyfunction!(max_confidence, m)?,
        wrap_pyfunction!(least_confidence, m)?,
        wrap_pyfunction!(kmeans, m)?,
        wrap_pyfunction!(make_blobs, m)?,
        wrap_pyfunction!(train, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
