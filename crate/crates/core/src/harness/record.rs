use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Result of one experiment run, stored as one JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    /// Unix time in milliseconds.
    pub started_ms: u64,
    pub finished_ms: u64,
    #[serde(serialize_with = "ser_metrics", deserialize_with = "de_metrics")]
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
}

/// Non-finite values have no JSON number form; they are written as the
/// strings `"inf"`, `"-inf"` and `"nan"`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Finite(f64),
    Text(String),
}

fn ser_metrics<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let out: BTreeMap<&String, Num> = m
        .iter()
        .map(|(k, v)| {
            let n = if v.is_finite() {
                Num::Finite(*v)
            } else if v.is_nan() {
                Num::Text("nan".into())
            } else if *v > 0.0 {
                Num::Text("inf".into())
            } else {
                Num::Text("-inf".into())
            };
            (k, n)
        })
        .collect();
    out.serialize(s)
}

fn de_metrics<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, f64>, D::Error> {
    let raw = BTreeMap::<String, Num>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, n)| {
            let v = match n {
                Num::Finite(v) => v,
                Num::Text(t) => match t.as_str() {
                    "inf" => f64::INFINITY,
                    "-inf" => f64::NEG_INFINITY,
                    "nan" => f64::NAN,
                    other => return Err(serde::de::Error::custom(format!("metric {k}: bad number {other:?}"))),
                },
            };
            Ok((k, v))
        })
        .collect()
}

impl ExperimentRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    /// Metric names whose values differ bit for bit, plus names present on
    /// only one side.
    pub fn metric_diff(&self, other: &BTreeMap<String, f64>) -> Vec<String> {
        let mut out = Vec::new();
        for (k, v) in &self.metrics {
            match other.get(k) {
                Some(w) if w.to_bits() == v.to_bits() => {}
                Some(w) => out.push(format!("{k}: recorded {v:?}, replayed {w:?}")),
                None => out.push(format!("{k}: missing from replay")),
            }
        }
        for k in other.keys().filter(|k| !self.metrics.contains_key(*k)) {
            out.push(format!("{k}: not in record"));
        }
        out
    }
}

/// Appends one record as a line.
pub fn write_record(path: &Path, record: &ExperimentRecord) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", record.to_line()).map_err(|e| Error::io(path, e))
}

pub fn parse_records(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::RecordParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let found = value.get("schema_version").and_then(|v| v.as_u64());
        match found {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(Error::SchemaVersion {
                    found: u32::try_from(v).unwrap_or(u32::MAX),
                    expected: SCHEMA_VERSION,
                })
            }
            None => {
                return Err(Error::RecordParse {
                    line: i + 1,
                    message: "missing schema_version".into(),
                })
            }
        }
        out.push(serde_json::from_value(value).map_err(|e| Error::RecordParse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentRecord {
        let cfg = ExperimentConfig::parse(
            "kind = \"tweedie\"\nseed = 3\n[tweedie]\nn_priors = 1\nn_components = 2\nnoise_var = 0.5\n",
        )
        .unwrap();
        ExperimentRecord {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.content_hash(),
            config: cfg,
            started_ms: 1,
            finished_ms: 2,
            metrics: BTreeMap::from([
                ("a".to_string(), 0.1),
                ("b".to_string(), f64::INFINITY),
                ("c".to_string(), -1.0 / 3.0),
            ]),
            artifacts: vec!["x.csv".into()],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let r = sample();
        let back = parse_records(&format!("{}\n", r.to_line())).unwrap();
        assert_eq!(back, vec![r.clone()]);
        assert_eq!(back[0].metrics["a"].to_bits(), 0.1f64.to_bits());
        assert!(r.metric_diff(&back[0].metrics).is_empty());
    }

    #[test]
    fn bad_lines_name_their_number() {
        let good = sample().to_line();
        let text = format!("{good}\n{{\"schema_version\": 1, \"config\": 5}}\n");
        assert!(matches!(parse_records(&text), Err(Error::RecordParse { line: 2, .. })));
        assert!(matches!(parse_records("not json"), Err(Error::RecordParse { line: 1, .. })));
        let future = good.replacen("\"schema_version\":1", "\"schema_version\":9", 1);
        assert!(matches!(
            parse_records(&future),
            Err(Error::SchemaVersion { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn append_keeps_earlier_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("records.jsonl");
        write_record(&path, &sample()).unwrap();
        write_record(&path, &sample()).unwrap();
        assert_eq!(read_records(&path).unwrap().len(), 2);
    }

    #[test]
    fn diff_reports_changes() {
        let r = sample();
        let mut m = r.metrics.clone();
        m.insert("a".into(), 0.1 + 1e-17 + 2e-17);
        m.remove("c");
        m.insert("d".into(), 1.0);
        assert_eq!(r.metric_diff(&m).len(), 3);
    }
}
