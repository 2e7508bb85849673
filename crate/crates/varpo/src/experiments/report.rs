//! Report records and deterministic emission.
//!
//! The main report is CSV with header `experiment,metric,value,std_error,n,seed`
//! (a `# config_hash=...` comment line precedes it) or a JSON mirror of the
//! same records. Rows either carry a standard error or the literal `exact`.
//! Histograms go to sibling files named `<stem>_hist_<label>.csv` with header
//! `bin_left,bin_right,count`. All numbers are written with the shortest
//! round-trip float representation, so identical configs produce
//! byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::experiments::config::ReportFormat;

/// One metric row. `std_error: None` marks an exact (non-sampled) value.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub n: u64,
}

impl MetricRow {
    pub fn exact(metric: impl Into<String>, value: f64) -> Self {
        Self { metric: metric.into(), value, std_error: None, n: 0 }
    }

    pub fn sampled(metric: impl Into<String>, value: f64, std_error: f64, n: u64) -> Self {
        Self { metric: metric.into(), value, std_error: Some(std_error), n }
    }
}

/// Histogram counts over contiguous bins.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub label: String,
    pub bin_left: Vec<f64>,
    pub bin_right: Vec<f64>,
    pub count: Vec<u64>,
}

impl Histogram {
    /// Equal-width binning over the sample range. The range degenerates to a
    /// unit-width bin when all samples coincide.
    pub fn from_samples(label: impl Into<String>, samples: &[f64], bins: usize) -> Self {
        let label = label.into();
        assert!(bins >= 1, "need at least one bin");
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in samples {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if samples.is_empty() {
            lo = 0.0;
            hi = 1.0;
        }
        if lo == hi {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let mut count = vec![0u64; bins];
        for &s in samples {
            let idx = (((s - lo) / width) as usize).min(bins - 1);
            count[idx] += 1;
        }
        let bin_left: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
        let bin_right: Vec<f64> = (0..bins).map(|i| lo + (i + 1) as f64 * width).collect();
        Self { label, bin_left, bin_right, count }
    }
}

/// A full experiment report.
#[derive(Debug, Clone)]
pub struct ReportRecord {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub histograms: Vec<Histogram>,
}

impl ReportRecord {
    pub fn new(experiment: impl Into<String>, config_hash: String, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash,
            seed,
            rows: Vec::new(),
            histograms: Vec::new(),
        }
    }

    pub fn row(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn value(&self, metric: &str) -> Option<f64> {
        self.row(metric).map(|r| r.value)
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={}\n", self.config_hash));
        out.push_str("experiment,metric,value,std_error,n,seed\n");
        for r in &self.rows {
            let se = match r.std_error {
                Some(se) => format!("{se}"),
                None => "exact".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.experiment, r.metric, r.value, se, r.n, self.seed
            ));
        }
        out
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let se = match r.std_error {
                    Some(se) => json!(se),
                    None => json!("exact"),
                };
                json!({
                    "experiment": self.experiment,
                    "metric": r.metric,
                    "value": r.value,
                    "std_error": se,
                    "n": r.n,
                    "seed": self.seed,
                })
            })
            .collect();
        json!({
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "rows": rows,
        })
    }

    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => format!("{:#}\n", self.to_json()),
        }
    }

    /// Writes the report (and histogram side files) under `out`, or prints
    /// the report to stdout when no path is given.
    pub fn write(&self, out: Option<&Path>, format: ReportFormat) -> Result<Vec<PathBuf>> {
        let body = self.render(format);
        let mut written = Vec::new();
        match out {
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(body.as_bytes())
                    .map_err(|e| Error::invalid(format!("cannot write report: {e}")))?;
            }
            Some(path) => {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        fs::create_dir_all(parent).map_err(|e| {
                            Error::invalid(format!("cannot create {}: {e}", parent.display()))
                        })?;
                    }
                }
                fs::write(path, &body)
                    .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))?;
                written.push(path.to_path_buf());
                for h in &self.histograms {
                    let side = sibling_path(path, &format!("hist_{}", h.label), "csv");
                    let mut text = String::from("bin_left,bin_right,count\n");
                    for i in 0..h.count.len() {
                        text.push_str(&format!(
                            "{},{},{}\n",
                            h.bin_left[i], h.bin_right[i], h.count[i]
                        ));
                    }
                    fs::write(&side, text).map_err(|e| {
                        Error::invalid(format!("cannot write {}: {e}", side.display()))
                    })?;
                    written.push(side);
                }
            }
        }
        Ok(written)
    }
}

/// `report.csv` + label `hist_x` -> `report_hist_x.csv`.
pub fn sibling_path(main: &Path, label: &str, ext: &str) -> PathBuf {
    let stem = main.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    main.with_file_name(format!("{stem}_{label}.{ext}"))
}

/// FNV-1a 64-bit hash of the canonical JSON serialization of a resolved
/// config. The struct field order fixes the canonical form, so key order in
/// the config file cannot change the hash.
pub fn config_hash<T: Serialize>(resolved: &T) -> String {
    let canonical = serde_json::to_string(resolved).expect("config serializes");
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}
