//! Writers for curves, manifests, comparison tables and embeddings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{ComparisonTable, LearningCurve, RunManifest, RunResult};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub const CURVE_HEADER: &str = "iteration,labeled_count,labeled_fraction,test_accuracy,wall_time_s";

pub fn curve_csv(curve: &LearningCurve) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in &curve.points {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            p.iteration, p.labeled_count, p.labeled_fraction, p.test_accuracy, p.wall_time_s
        ));
    }
    s
}

pub fn write_curve(curve: &LearningCurve, path: &Path) -> Result<()> {
    write_with(path, |out| out.write_all(curve_csv(curve).as_bytes()))
}

/// Pretty JSON with object keys in sorted order.
pub fn manifest_json(manifest: &RunManifest) -> String {
    // Going through Value sorts keys (its map is ordered by key).
    let value = serde_json::to_value(manifest).expect("manifest is plain data");
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    write_with(path, |out| out.write_all(manifest_json(manifest).as_bytes()))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: not a run manifest: {e}", path.display())))
}

/// Writes `curve.csv` and `manifest.json` into `dir`.
pub fn write_run(curve: &LearningCurve, manifest: &RunManifest, dir: &Path) -> Result<()> {
    write_curve(curve, &dir.join("curve.csv"))?;
    write_manifest(manifest, &dir.join("manifest.json"))
}

/// One row per pool sample: its external id, whether it is labeled, whether
/// it was picked in the last round, then the learner's embedding of it.
pub fn embeddings_csv(run: &RunResult) -> Result<String> {
    let emb = run.model.embed(run.pool.features().view())?;
    let last: std::collections::HashSet<usize> = run.last_batch.iter().copied().collect();
    let mut s = String::from("id,labeled_flag,selected_last_iter_flag");
    for j in 0..emb.ncols() {
        s.push_str(&format!(",e{j}"));
    }
    s.push('\n');
    for (id, row) in emb.outer_iter().enumerate() {
        s.push_str(&format!(
            "{},{},{}",
            run.partition.pool_external_ids[id],
            u8::from(run.pool.is_labeled(id)),
            u8::from(last.contains(&id))
        ));
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_embeddings(run: &RunResult, path: &Path) -> Result<()> {
    let text = embeddings_csv(run)?;
    write_with(path, |out| out.write_all(text.as_bytes()))
}

/// Per-iteration mean and std for every row, long format.
pub fn comparison_csv(table: &ComparisonTable) -> String {
    let mut s = String::from("label,iteration,labeled_count,labeled_fraction,mean_accuracy,std_accuracy,runs\n");
    for row in &table.rows {
        for p in &row.points {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.label,
                p.iteration,
                p.labeled_count,
                p.labeled_fraction,
                p.mean_accuracy,
                p.std_accuracy,
                row.curves.len()
            ));
        }
    }
    s
}

pub fn summary_csv(table: &ComparisonTable) -> String {
    let mut s = String::from("label,runs,auc_mean,auc_std,final_mean_accuracy,final_std_accuracy\n");
    for row in &table.rows {
        let (fm, fs) = row
            .points
            .last()
            .map_or((f64::NAN, f64::NAN), |p| (p.mean_accuracy, p.std_accuracy));
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.label,
            row.curves.len(),
            row.auc_mean,
            row.auc_std,
            fm,
            fs
        ));
    }
    s
}

/// Writes `comparison.csv`, `summary.csv` and, for each run,
/// `<label>/seed-<seed>/{curve.csv,manifest.json}` under `dir`.
pub fn write_comparison(table: &ComparisonTable, dir: &Path) -> Result<()> {
    write_with(&dir.join("comparison.csv"), |o| o.write_all(comparison_csv(table).as_bytes()))?;
    write_with(&dir.join("summary.csv"), |o| o.write_all(summary_csv(table).as_bytes()))?;
    for row in &table.rows {
        for (curve, manifest) in row.curves.iter().zip(&row.manifests) {
            let sub = dir.join(&row.label).join(format!("seed-{}", curve.seed));
            write_run(curve, manifest, &sub)?;
        }
    }
    Ok(())
}
