//! Dataset sources: strict feature-CSV ingestion and seeded Gaussian blobs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// A labeled feature matrix. Row `i` is the sample with dense id `i`;
/// `external_ids[i]` is the identifier it carried in its source.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub external_ids: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    /// Standard deviation of every cluster along every axis.
    pub spread: f64,
    /// Class proportions; uniform when absent.
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n: 5000,
            d: 16,
            classes: 10,
            spread: 0.6,
            weights: None,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::config(format!("blob spread must be positive, got {}", self.spread)));
        }
        if self.classes < 2 {
            return Err(Error::config("blobs need at least 2 classes"));
        }
        if self.d == 0 {
            return Err(Error::config("blobs need at least one feature"));
        }
        if self.n < self.classes {
            return Err(Error::config(format!(
                "blob sample count {} is below the class count {}",
                self.n, self.classes
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.classes {
                return Err(Error::config(format!(
                    "{} class weight(s) given for {} classes",
                    w.len(),
                    self.classes
                )));
            }
            if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(Error::config("class weights must be finite and non-negative"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("class weights sum to {sum}, not 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    Csv(PathBuf),
    Blobs(BlobSpec),
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Csv(path) => load_csv(path),
            DatasetSpec::Blobs(spec) => make_blobs(spec),
        }
    }
}

/// Isotropic Gaussian clusters.
///
/// Class means are drawn uniformly from the hypercube `[-1, 1]^d`; each
/// sample draws its class from the class weights, then its features from
/// `N(mean, spread^2 I)`. Everything comes from one stream seeded by
/// `spec.seed`.
pub fn make_blobs(spec: &BlobSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let means = Array2::from_shape_simple_fn((spec.classes, spec.d), || rng.random_range(-1.0..=1.0));
    let weights = spec
        .weights
        .clone()
        .unwrap_or_else(|| vec![1.0 / spec.classes as f64; spec.classes]);
    let picker = WeightedIndex::new(&weights)
        .map_err(|e| Error::config(format!("invalid class weights: {e}")))?;

    let mut features = Array2::zeros((spec.n, spec.d));
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let c = picker.sample(&mut rng);
        labels.push(c);
        for j in 0..spec.d {
            let z: f64 = rng.sample(StandardNormal);
            features[[i, j]] = means[[c, j]] + spec.spread * z;
        }
    }
    Ok(Dataset {
        features,
        labels,
        num_classes: spec.classes,
        external_ids: (0..spec.n).map(|i| i.to_string()).collect(),
    })
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads `id,label,f0,...,f{d-1}`.
///
/// Ids may be any non-empty strings and are remapped to dense row indices in
/// file order. The class count is one more than the largest label.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv(reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, format!("unreadable header: {e}")))?
        .clone();
    if header.len() < 3 {
        return Err(parse_err(1, "header must be id,label,f0[,f1,...]"));
    }
    for (i, name) in header.iter().enumerate() {
        let want = match i {
            0 => "id".to_string(),
            1 => "label".to_string(),
            _ => format!("f{}", i - 2),
        };
        if name.trim() != want {
            return Err(parse_err(1, format!("column {} is '{name}', expected '{want}'", i + 1)));
        }
    }
    let d = header.len() - 2;

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} field(s), found {}", header.len(), record.len()),
            ));
        }
        let id = record[0].trim();
        if id.is_empty() {
            return Err(parse_err(line, "missing id"));
        }
        if let Some(first) = seen.insert(id.to_string(), line) {
            return Err(parse_err(line, format!("duplicate id '{id}' (first seen on line {first})")));
        }
        let raw_label = record[1].trim();
        if raw_label.is_empty() {
            return Err(parse_err(line, "missing label"));
        }
        let label: usize = raw_label.parse().map_err(|_| {
            parse_err(line, format!("label '{raw_label}' is not a non-negative integer"))
        })?;
        labels.push(label);
        for (j, field) in record.iter().skip(2).enumerate() {
            let field = field.trim();
            if field.is_empty() {
                return Err(parse_err(line, format!("missing value for f{j}")));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("f{j} value '{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("f{j} value '{field}' is not finite")));
            }
            flat.push(v);
        }
        ids.push(id.to_string());
    }
    if labels.is_empty() {
        return Err(Error::data("dataset has no rows"));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    if num_classes < 2 {
        return Err(Error::data("dataset needs at least two classes (largest label must be >= 1)"));
    }
    let features = Array2::from_shape_vec((labels.len(), d), flat).expect("row widths checked");
    Ok(Dataset {
        features,
        labels,
        num_classes,
        external_ids: ids,
    })
}

/// Writes a dataset in the format [`load_csv`] reads, floats in shortest
/// round-trip form.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_csv_to(dataset, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_csv_to(dataset: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "id,label")?;
    for j in 0..dataset.num_features() {
        write!(out, ",f{j}")?;
    }
    writeln!(out)?;
    for (i, row) in dataset.features.outer_iter().enumerate() {
        write!(out, "{},{}", dataset.external_ids[i], dataset.labels[i])?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
