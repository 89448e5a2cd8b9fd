use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::RunConfig;

/// Version string embedded in every row.
pub const VERSION: &str = concat!("torus-rds ", env!("CARGO_PKG_VERSION"));

/// One named metric with its standard error (`NaN` when not applicable).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    #[serde(with = "nan_as_null")]
    pub value: f64,
    #[serde(with = "nan_as_null")]
    pub stderr: f64,
}

/// JSON has no NaN; non-finite values travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64, stderr: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr,
        }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, value, f64::NAN)
    }
}

/// One output row: the config echo, the metrics and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub row: usize,
    /// What distinguishes this row within the run (trial index, L value, …).
    pub label: String,
    pub family: String,
    pub noise: String,
    pub n_steps: u64,
    pub trials: u64,
    pub beta: f64,
    pub seed: u64,
    pub burn_in: u64,
    pub threads: usize,
    pub metrics: Vec<Metric>,
    pub wall_time_s: f64,
    pub version: String,
}

/// CSV header; columns follow the [`ResultRow`] field order with the metric
/// list split into three semicolon-joined columns.
pub const CSV_HEADER: [&str; 16] = [
    "experiment",
    "row",
    "label",
    "family",
    "noise",
    "n_steps",
    "trials",
    "beta",
    "seed",
    "burn_in",
    "threads",
    "metric_names",
    "metric_values",
    "metric_stderrs",
    "wall_time_s",
    "version",
];

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

impl ResultRow {
    fn csv_record(&self) -> Vec<String> {
        let join = |f: &dyn Fn(&Metric) -> String| {
            self.metrics.iter().map(f).collect::<Vec<_>>().join(";")
        };
        vec![
            self.experiment.clone(),
            self.row.to_string(),
            self.label.clone(),
            self.family.clone(),
            self.noise.clone(),
            self.n_steps.to_string(),
            self.trials.to_string(),
            fmt_f64(self.beta),
            self.seed.to_string(),
            self.burn_in.to_string(),
            self.threads.to_string(),
            join(&|m| m.name.clone()),
            join(&|m| fmt_f64(m.value)),
            join(&|m| fmt_f64(m.stderr)),
            fmt_f64(self.wall_time_s),
            self.version.clone(),
        ]
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// The JSON summary document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub version: String,
    pub experiment: String,
    /// Echo of the config with the realized seed.
    pub config: RunConfig,
    pub rows: Vec<ResultRow>,
    pub summary: BTreeMap<String, f64>,
}

/// Render rows as CSV text.
pub fn to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.csv_record()).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Serialize the summary; non-finite floats become `null`.
pub fn to_json(summary: &RunSummary) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)?)
}

/// Parse a summary produced by [`to_json`].
pub fn parse_summary(text: &str) -> Result<RunSummary> {
    Ok(serde_json::from_str(text)?)
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Write `<prefix>.csv` and `<prefix>.json` through temporary files renamed
/// into place; on any failure neither final file is left behind.
pub fn write_outputs(prefix: &Path, csv_text: &str, json_text: &str) -> Result<(PathBuf, PathBuf)> {
    let csv_path = with_ext(prefix, "csv");
    let json_path = with_ext(prefix, "json");
    let csv_tmp = with_ext(prefix, "csv.partial");
    let json_tmp = with_ext(prefix, "json.partial");
    let attempt = || -> Result<()> {
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&csv_tmp, csv_text)?;
        fs::write(&json_tmp, json_text)?;
        fs::rename(&csv_tmp, &csv_path)?;
        fs::rename(&json_tmp, &json_path)?;
        Ok(())
    };
    attempt().inspect_err(|_| {
        for p in [&csv_tmp, &json_tmp, &csv_path, &json_path] {
            let _ = fs::remove_file(p);
        }
    })?;
    Ok((csv_path, json_path))
}

/// Remove `<prefix>.csv`, `<prefix>.json` and their partial files if present.
pub fn remove_outputs(prefix: &Path) {
    for ext in ["csv", "json", "csv.partial", "json.partial"] {
        let _ = fs::remove_file(with_ext(prefix, ext));
    }
}
