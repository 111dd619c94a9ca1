//! Append-only ndjson collections, one record per metric value.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RAW_METRICS: &str = "raw_metrics";
pub const AGGREGATED_METRICS: &str = "aggregated_metrics";
pub const CONTEXTUAL_METRICS: &str = "contextual_metrics";
pub const ANALYZED_METRICS: &str = "analyzed_metrics";
pub const BASELINES: &str = "baselines";
pub const PHQ9_RESPONSES: &str = "phq9_responses";
pub const TRACES: &str = "traces";

pub const COLLECTIONS: [&str; 7] = [
    RAW_METRICS,
    AGGREGATED_METRICS,
    CONTEXTUAL_METRICS,
    ANALYZED_METRICS,
    BASELINES,
    PHQ9_RESPONSES,
    TRACES,
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("'{caller}' is not the registered writer of {collection}")]
    WriterViolation { collection: String, caller: String },
    #[error("duplicate record {collection}/{subject_id}/{metric_name}@{window_start}")]
    DuplicateRecord {
        collection: String,
        subject_id: String,
        metric_name: String,
        window_start: f64,
    },
    #[error("unknown collection '{0}'")]
    NotFound(String),
    #[error("invalid record: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One value of one metric for one subject and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub collection: String,
    pub subject_id: String,
    pub metric_name: String,
    /// `None` is the explicit absent marker.
    pub value: Option<f64>,
    pub window_start: f64,
    /// ISO 8601, derived from the stream origin and `window_start`.
    pub timestamp: String,
    pub quality_ok: bool,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl MetricRecord {
    fn key(&self) -> (String, String, u64) {
        (
            self.subject_id.clone(),
            self.metric_name.clone(),
            self.window_start.to_bits(),
        )
    }

    fn validate(&self) -> Result<(), StoreError> {
        if !COLLECTIONS.contains(&self.collection.as_str()) {
            return Err(StoreError::NotFound(self.collection.clone()));
        }
        if self.subject_id.is_empty() || self.metric_name.is_empty() {
            return Err(StoreError::Validation("empty subject or metric name".into()));
        }
        if !self.window_start.is_finite() || self.value.is_some_and(|v| !v.is_finite()) {
            return Err(StoreError::Validation(format!(
                "non-finite value in {}/{}",
                self.collection, self.metric_name
            )));
        }
        Ok(())
    }
}

/// Parse one stored line.
pub fn parse_record(line: &str) -> Result<MetricRecord, StoreError> {
    let r: MetricRecord =
        serde_json::from_str(line).map_err(|e| StoreError::Validation(e.to_string()))?;
    r.validate()?;
    Ok(r)
}

/// Maps stream seconds onto wall-clock timestamps from a fixed origin, so
/// stored timestamps never depend on when the pipeline ran.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timeline {
    pub origin: DateTime<Utc>,
}

impl Default for Timeline {
    fn default() -> Self {
        Self {
            origin: DateTime::UNIX_EPOCH,
        }
    }
}

impl Timeline {
    pub fn parse(origin: &str) -> Result<Self, StoreError> {
        DateTime::parse_from_rfc3339(origin)
            .map(|t| Self {
                origin: t.with_timezone(&Utc),
            })
            .map_err(|e| StoreError::Validation(format!("origin '{origin}': {e}")))
    }

    pub fn iso(&self, secs: f64) -> String {
        let t = self.origin + Duration::microseconds((secs * 1e6).round() as i64);
        t.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[derive(Default)]
struct Collection {
    records: Vec<MetricRecord>,
    keys: HashSet<(String, String, u64)>,
    writer: Option<String>,
    file: Option<BufWriter<File>>,
    corrupt_lines: usize,
}

/// All collections under one data directory.
pub struct Store {
    dir: PathBuf,
    collections: RwLock<BTreeMap<&'static str, Collection>>,
}

impl Store {
    /// Open (creating if needed) and index every collection on disk.
    /// Unparseable or duplicate lines are skipped and counted.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut collections = BTreeMap::new();
        for name in COLLECTIONS {
            let mut c = Collection::default();
            let path = dir.join(format!("{name}.ndjson"));
            if path.exists() {
                for line in BufReader::new(File::open(&path)?).lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match parse_record(&line) {
                        Ok(r) if r.collection == name && c.keys.insert(r.key()) => c.records.push(r),
                        _ => c.corrupt_lines += 1,
                    }
                }
                if c.corrupt_lines > 0 {
                    log::warn!("{name}: skipped {} unreadable lines", c.corrupt_lines);
                }
            }
            collections.insert(name, c);
        }
        Ok(Self {
            dir,
            collections: RwLock::new(collections),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Create an empty log for every collection that has none yet.
    pub fn ensure_files(&self) -> Result<(), StoreError> {
        for name in COLLECTIONS {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.dir.join(format!("{name}.ndjson")))?;
        }
        Ok(())
    }

    fn canonical(collection: &str) -> Result<&'static str, StoreError> {
        COLLECTIONS
            .iter()
            .copied()
            .find(|c| *c == collection)
            .ok_or_else(|| StoreError::NotFound(collection.to_string()))
    }

    /// Claim the single writer slot of a collection. Re-registering the same
    /// writer is allowed.
    pub fn register_writer(&self, collection: &str, writer_id: &str) -> Result<(), StoreError> {
        let name = Self::canonical(collection)?;
        let mut guard = self.collections.write();
        let c = guard.get_mut(name).expect("known collection");
        match &c.writer {
            Some(w) if w != writer_id => Err(StoreError::WriterViolation {
                collection: name.to_string(),
                caller: writer_id.to_string(),
            }),
            _ => {
                c.writer = Some(writer_id.to_string());
                Ok(())
            }
        }
    }

    pub fn append(&self, writer_id: &str, record: MetricRecord) -> Result<(), StoreError> {
        self.append_all(writer_id, vec![record])
    }

    /// Append a batch atomically: either every record is written or none.
    pub fn append_all(&self, writer_id: &str, records: Vec<MetricRecord>) -> Result<(), StoreError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut guard = self.collections.write();
        let mut fresh: BTreeMap<&'static str, HashSet<(String, String, u64)>> = BTreeMap::new();
        for r in &records {
            r.validate()?;
            let name = Self::canonical(&r.collection)?;
            let c = &guard[name];
            if c.writer.as_deref() != Some(writer_id) {
                return Err(StoreError::WriterViolation {
                    collection: name.to_string(),
                    caller: writer_id.to_string(),
                });
            }
            let key = r.key();
            if c.keys.contains(&key) || !fresh.entry(name).or_default().insert(key) {
                return Err(StoreError::DuplicateRecord {
                    collection: r.collection.clone(),
                    subject_id: r.subject_id.clone(),
                    metric_name: r.metric_name.clone(),
                    window_start: r.window_start,
                });
            }
        }

        let mut lines: BTreeMap<&'static str, String> = BTreeMap::new();
        for r in &records {
            let line = lines.entry(Self::canonical(&r.collection)?).or_default();
            line.push_str(&serde_json::to_string(r).map_err(|e| StoreError::Validation(e.to_string()))?);
            line.push('\n');
        }
        for (name, text) in &lines {
            let c = guard.get_mut(name).expect("known collection");
            if c.file.is_none() {
                let path = self.dir.join(format!("{name}.ndjson"));
                c.file = Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?));
            }
            let file = c.file.as_mut().expect("opened above");
            file.write_all(text.as_bytes())?;
            file.flush()?;
        }
        for r in records {
            let c = guard.get_mut(Self::canonical(&r.collection)?).expect("known collection");
            c.keys.insert(r.key());
            c.records.push(r);
        }
        Ok(())
    }

    /// Records of one subject ordered by window start (ties keep insertion
    /// order). `range` is half-open.
    pub fn query(
        &self,
        collection: &str,
        subject_id: &str,
        metric_name: Option<&str>,
        range: Option<(f64, f64)>,
    ) -> Result<Vec<MetricRecord>, StoreError> {
        let name = Self::canonical(collection)?;
        let guard = self.collections.read();
        let mut out: Vec<MetricRecord> = guard[name]
            .records
            .iter()
            .filter(|r| r.subject_id == subject_id)
            .filter(|r| metric_name.is_none_or(|m| r.metric_name == m))
            .filter(|r| range.is_none_or(|(lo, hi)| r.window_start >= lo && r.window_start < hi))
            .cloned()
            .collect();
        out.sort_by(|a, b| a.window_start.total_cmp(&b.window_start));
        Ok(out)
    }

    /// Subjects with at least one record anywhere.
    pub fn subjects(&self) -> BTreeSet<String> {
        self.collections
            .read()
            .values()
            .flat_map(|c| c.records.iter().map(|r| r.subject_id.clone()))
            .collect()
    }

    pub fn len(&self, collection: &str) -> Result<usize, StoreError> {
        let name = Self::canonical(collection)?;
        Ok(self.collections.read()[name].records.len())
    }

    pub fn is_empty(&self) -> bool {
        self.collections.read().values().all(|c| c.records.is_empty())
    }

    /// Lines skipped while opening the collection.
    pub fn corrupt_lines(&self, collection: &str) -> Result<usize, StoreError> {
        let name = Self::canonical(collection)?;
        Ok(self.collections.read()[name].corrupt_lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(collection: &str, metric: &str, start: f64, value: Option<f64>) -> MetricRecord {
        MetricRecord {
            collection: collection.into(),
            subject_id: "s1".into(),
            metric_name: metric.into(),
            value,
            window_start: start,
            timestamp: Timeline::default().iso(start),
            quality_ok: true,
            provenance: "test".into(),
            detail: None,
        }
    }

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.register_writer(RAW_METRICS, "ingest").unwrap();
        let r = rec(RAW_METRICS, "f0", 0.0, Some(120.5));
        store.append("ingest", r.clone()).unwrap();
        assert_eq!(store.query(RAW_METRICS, "s1", Some("f0"), None).unwrap(), vec![r]);
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.register_writer(RAW_METRICS, "w").unwrap();
        store.append("w", rec(RAW_METRICS, "f0", 0.0, Some(1.0))).unwrap();
        let again = store.append("w", rec(RAW_METRICS, "f0", 0.0, Some(2.0)));
        assert!(matches!(again, Err(StoreError::DuplicateRecord { .. })));
        let batch = vec![rec(RAW_METRICS, "f0", 1.0, None), rec(RAW_METRICS, "f0", 1.0, None)];
        assert!(matches!(store.append_all("w", batch), Err(StoreError::DuplicateRecord { .. })));
        assert_eq!(store.len(RAW_METRICS).unwrap(), 1);
    }

    #[test]
    fn only_the_registered_writer_appends() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.register_writer(AGGREGATED_METRICS, "aggregator").unwrap();
        let r = rec(AGGREGATED_METRICS, "f0_avg", 0.0, Some(1.0));
        assert!(matches!(store.append("dashboard", r.clone()), Err(StoreError::WriterViolation { .. })));
        assert!(matches!(
            store.register_writer(AGGREGATED_METRICS, "other"),
            Err(StoreError::WriterViolation { .. })
        ));
        assert!(matches!(store.append("x", rec(RAW_METRICS, "f0", 0.0, None)), Err(StoreError::WriterViolation { .. })));
        store.append("aggregator", r).unwrap();
    }

    #[test]
    fn unknown_collection() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.query("nope", "s1", None, None), Err(StoreError::NotFound(_))));
        assert!(matches!(store.register_writer("nope", "w"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn filters_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.register_writer(CONTEXTUAL_METRICS, "ctx").unwrap();
        for (i, start) in [30.0, 10.0, 20.0, 0.0].into_iter().enumerate() {
            store.append("ctx", rec(CONTEXTUAL_METRICS, "a", start, Some(i as f64))).unwrap();
            store.append("ctx", rec(CONTEXTUAL_METRICS, "b", start, None)).unwrap();
        }
        let a = store.query(CONTEXTUAL_METRICS, "s1", Some("a"), None).unwrap();
        let starts: Vec<f64> = a.iter().map(|r| r.window_start).collect();
        assert_eq!(starts, [0.0, 10.0, 20.0, 30.0]);
        assert!(a.iter().all(|r| r.metric_name == "a"));
        let ranged = store.query(CONTEXTUAL_METRICS, "s1", None, Some((10.0, 30.0))).unwrap();
        assert_eq!(ranged.len(), 4);
        assert!(store.query(CONTEXTUAL_METRICS, "s1", None, Some((500.0, 600.0))).unwrap().is_empty());
        assert!(store.query(CONTEXTUAL_METRICS, "s2", None, None).unwrap().is_empty());
    }

    #[test]
    fn reopen_restores_and_counts_corruption() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path()).unwrap();
            store.register_writer(PHQ9_RESPONSES, "api").unwrap();
            let mut r = rec(PHQ9_RESPONSES, "phq9", 40.0, Some(0.0));
            r.detail = Some(serde_json::json!({"items": {"Q1": 0}}));
            store.append("api", r).unwrap();
        }
        let path = dir.path().join("phq9_responses.ndjson");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"collection\": \"phq9_responses\", truncated\n");
        fs::write(&path, text).unwrap();
        let store = Store::open(dir.path()).unwrap();
        let rows = store.query(PHQ9_RESPONSES, "s1", None, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].detail.as_ref().unwrap()["items"]["Q1"], 0);
        assert_eq!(store.corrupt_lines(PHQ9_RESPONSES).unwrap(), 1);
    }

    #[test]
    fn corrupt_payload_is_a_validation_error() {
        assert!(matches!(parse_record("{not json"), Err(StoreError::Validation(_))));
        let mut r = rec(RAW_METRICS, "f0", 0.0, None);
        r.collection = "elsewhere".into();
        assert!(parse_record(&serde_json::to_string(&r).unwrap()).is_err());
    }

    #[test]
    fn floats_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let values = [0.1 + 0.2, 1.0 / 3.0, -2.718281828459045, 1e-300, 123456.789e10];
        {
            let store = Store::open(dir.path()).unwrap();
            store.register_writer(RAW_METRICS, "w").unwrap();
            for (i, v) in values.iter().enumerate() {
                store.append("w", rec(RAW_METRICS, "x", i as f64, Some(*v))).unwrap();
            }
        }
        let store = Store::open(dir.path()).unwrap();
        let back: Vec<f64> = store
            .query(RAW_METRICS, "s1", None, None)
            .unwrap()
            .iter()
            .map(|r| r.value.unwrap())
            .collect();
        assert_eq!(back, values);
    }

    #[test]
    fn timestamps_follow_origin() {
        let t = Timeline::parse("2024-03-01T08:00:00Z").unwrap();
        assert_eq!(t.iso(0.0), "2024-03-01T08:00:00.000Z");
        assert_eq!(t.iso(90.5), "2024-03-01T08:01:30.500Z");
        assert_eq!(Timeline::default().iso(10.0), "1970-01-01T00:00:10.000Z");
    }
}
