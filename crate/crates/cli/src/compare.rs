//! Side-by-side metric tables and boxplot data across run directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use inctpv::metrics::{batch_stats, BATCH_STATS_HEADER};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{read_csv, MetricRow, CONFIG_FILE, DATASET_HASH_FILE, METRICS_FILE};

pub const COMPARISON_FILE: &str = "comparison.csv";

/// A finished run as read back from disk.
#[derive(Clone, Debug)]
pub struct RunData {
    pub dir: PathBuf,
    pub label: String,
    pub dataset_hash: String,
    pub metrics: Vec<MetricRow>,
}

pub fn load_run(dir: &Path) -> CliResult<RunData> {
    let hash_path = dir.join(DATASET_HASH_FILE);
    let dataset_hash = fs::read_to_string(&hash_path)
        .map_err(|e| CliError::io(&hash_path, e))?
        .trim()
        .to_string();
    let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    Ok(RunData {
        dir: dir.to_path_buf(),
        label: cfg.label(),
        dataset_hash,
        metrics: read_csv(&dir.join(METRICS_FILE))?,
    })
}

/// Distinct column labels: repeated labels get `_2`, `_3`, … suffixes.
fn unique_labels(runs: &[RunData]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    runs.iter()
        .map(|r| {
            let n = seen.entry(&r.label).or_insert(0);
            *n += 1;
            if *n == 1 {
                r.label.clone()
            } else {
                format!("{}_{}", r.label, n)
            }
        })
        .collect()
}

/// Writes `comparison.csv` (one row per image index, `<label>_re` and
/// `<label>_ssim` columns; empty cells where a run skipped the image) and
/// `boxplot/<label>_<metric>.csv` quartile files. Returns the labels used.
pub fn compare_runs(dirs: &[PathBuf], out: &Path) -> CliResult<Vec<String>> {
    if dirs.is_empty() {
        return Err(CliError::Config {
            field: "runs".into(),
            reason: "no run directories given".into(),
        });
    }
    let runs = dirs.iter().map(|d| load_run(d)).collect::<CliResult<Vec<_>>>()?;
    if let Some(bad) = runs.iter().find(|r| r.dataset_hash != runs[0].dataset_hash) {
        return Err(CliError::Dataset(format!(
            "dataset hash mismatch: {} has {} but {} has {}",
            runs[0].dir.display(),
            runs[0].dataset_hash,
            bad.dir.display(),
            bad.dataset_hash
        )));
    }
    let labels = unique_labels(&runs);
    let boxplot = out.join("boxplot");
    fs::create_dir_all(&boxplot).map_err(|e| CliError::io(&boxplot, e))?;

    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    let mut indices = BTreeSet::new();
    let by_index: Vec<BTreeMap<usize, &MetricRow>> = runs
        .iter()
        .map(|r| {
            r.metrics
                .iter()
                .map(|m| {
                    indices.insert(m.index);
                    names.entry(m.index).or_insert_with(|| m.name.clone());
                    (m.index, m)
                })
                .collect()
        })
        .collect();

    let path = out.join(COMPARISON_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
    let mut header = vec!["index".to_string(), "name".to_string()];
    for l in &labels {
        header.push(format!("{l}_re"));
        header.push(format!("{l}_ssim"));
    }
    w.write_record(&header).map_err(|e| CliError::io(&path, e))?;
    for &i in &indices {
        let mut row = vec![i.to_string(), names[&i].clone()];
        for run in &by_index {
            match run.get(&i) {
                Some(m) => {
                    row.push(m.re.to_string());
                    row.push(m.ssim.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row).map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    for (run, label) in runs.iter().zip(&labels) {
        let columns: [(&str, Vec<f64>); 2] = [
            ("re", run.metrics.iter().map(|m| m.re).collect()),
            ("ssim", run.metrics.iter().map(|m| m.ssim).collect()),
        ];
        for (metric, values) in columns {
            let file = boxplot.join(format!("{label}_{metric}.csv"));
            let body = match batch_stats(&values) {
                Ok(s) => format!("{BATCH_STATS_HEADER}\n{}\n", s.csv_row()),
                Err(_) => format!("{BATCH_STATS_HEADER}\n"),
            };
            fs::write(&file, body).map_err(|e| CliError::io(&file, e))?;
        }
    }
    Ok(labels)
}
