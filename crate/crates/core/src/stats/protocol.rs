//! Manifest-driven hypothesis testing and heatmap exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{bh_fdr, cohens_d, correlate, stratify, CorrelationMethod, StatsError, StratumPlan};
use crate::aggregate::{metric, HldWindow};
use crate::linkage::{indicator_for_item, PHQ_ITEMS};
use crate::par::{map_collect, Parallelism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Other,
}

impl Gender {
    fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Self::Male,
            "f" | "female" => Self::Female,
            _ => Self::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Pooled,
    Male,
    Female,
}

impl Stratum {
    fn as_str(self) -> &'static str {
        match self {
            Self::Pooled => "pooled",
            Self::Male => "male",
            Self::Female => "female",
        }
    }

    fn admits(self, g: Gender) -> bool {
        match self {
            Self::Pooled => true,
            Self::Male => g == Gender::Male,
            Self::Female => g == Gender::Female,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

/// One participant: session-level feature values and questionnaire items.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRow {
    pub subject_id: String,
    pub gender: Gender,
    pub features: BTreeMap<String, f64>,
    /// Q1..Q9; Q9 is usually missing (eight-item form).
    pub items: [Option<u8>; 9],
}

impl SubjectRow {
    /// Ground-truth score for an indicator via the item linkage.
    pub fn indicator_score(&self, indicator: u8) -> Option<f64> {
        PHQ_ITEMS
            .iter()
            .position(|k| indicator_for_item(k) == Some(indicator))
            .and_then(|i| self.items[i])
            .map(f64::from)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub features: Vec<String>,
    pub rows: Vec<SubjectRow>,
}

const MISSING: [&str; 4] = ["", "na", "nan", "null"];

impl Manifest {
    /// Tab-separated: `subject_id`, `gender`, feature columns, `phq_q1`..`phq_q8`
    /// (optionally `phq_q9`).
    pub fn from_tsv<R: Read>(reader: R) -> Result<Self, StatsError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .trim(csv::Trim::All)
            .from_reader(reader);
        let err = |m: String| StatsError::Manifest(m);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
        let id_col = col("subject_id").ok_or_else(|| err("missing subject_id column".into()))?;
        let gender_col = col("gender").ok_or_else(|| err("missing gender column".into()))?;
        let item_cols: Vec<Option<usize>> = (1..=9).map(|k| col(&format!("phq_q{k}"))).collect();
        if let Some(k) = item_cols[..8].iter().position(Option::is_none) {
            return Err(err(format!("missing phq_q{} column", k + 1)));
        }
        let feature_cols: Vec<(usize, String)> = header
            .iter()
            .enumerate()
            .filter(|(i, h)| {
                *i != id_col && *i != gender_col && !h.to_ascii_lowercase().starts_with("phq_q")
            })
            .map(|(i, h)| (i, h.clone()))
            .collect();

        let mut rows = Vec::new();
        let mut ids = BTreeSet::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let at = |i: usize| rec.get(i).unwrap_or("");
            let subject_id = at(id_col).to_string();
            if subject_id.is_empty() || !ids.insert(subject_id.clone()) {
                return Err(err(format!("row {}: empty or duplicate subject_id", line + 2)));
            }
            let mut features = BTreeMap::new();
            for (i, name) in &feature_cols {
                let cell = at(*i);
                if MISSING.contains(&cell.to_ascii_lowercase().as_str()) {
                    continue;
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| err(format!("row {}: '{cell}' in {name} is not a number", line + 2)))?;
                if !v.is_finite() {
                    return Err(err(format!("row {}: non-finite {name}", line + 2)));
                }
                features.insert(name.clone(), v);
            }
            let mut items = [None; 9];
            for (k, c) in item_cols.iter().enumerate() {
                let Some(c) = c else { continue };
                let cell = at(*c);
                if MISSING.contains(&cell.to_ascii_lowercase().as_str()) {
                    continue;
                }
                match cell.parse::<u8>() {
                    Ok(v) if v <= 3 => items[k] = Some(v),
                    _ => return Err(err(format!("row {}: phq_q{} = '{cell}' outside 0..=3", line + 2, k + 1))),
                }
            }
            rows.push(SubjectRow {
                subject_id,
                gender: Gender::parse(at(gender_col)),
                features,
                items,
            });
        }
        Ok(Self {
            features: feature_cols.into_iter().map(|(_, n)| n).collect(),
            rows,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, StatsError> {
        Self::from_tsv(fs::File::open(path)?)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("subject_id\tgender");
        for f in &self.features {
            out.push('\t');
            out.push_str(f);
        }
        for k in 1..=8 {
            out.push_str(&format!("\tphq_q{k}"));
        }
        out.push('\n');
        for r in &self.rows {
            let g = match r.gender {
                Gender::Male => "male",
                Gender::Female => "female",
                Gender::Other => "other",
            };
            out.push_str(&format!("{}\t{g}", r.subject_id));
            for f in &self.features {
                out.push('\t');
                if let Some(v) = r.features.get(f) {
                    out.push_str(&v.to_string());
                }
            }
            for item in &r.items[..8] {
                out.push('\t');
                if let Some(v) = item {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Session-level feature values: the mean of each metric over good windows.
pub fn session_features(windows: &[HldWindow]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for w in windows.iter().filter(|w| w.quality_ok) {
        for (k, v) in &w.metrics {
            let e = sums.entry(k).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k.to_string(), s / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub features: Vec<String>,
    pub indicators: Vec<u8>,
    pub direction: Sign,
}

/// Pitch variability, pausing, energy dynamics and tempo against
/// psychomotor change (5) and concentration (8).
pub fn default_hypotheses() -> Vec<Hypothesis> {
    let h = |id: &str, features: [&str; 2], direction| Hypothesis {
        id: id.into(),
        features: features.iter().map(|s| s.to_string()).collect(),
        indicators: vec![5, 8],
        direction,
    };
    vec![
        h("H1", [metric::F0_STD, metric::F0_RANGE], Sign::Negative),
        h("H2", [metric::PAUSE_DURATION, metric::PAUSE_FREQUENCY], Sign::Positive),
        h("H3", [metric::INTENSITY_STD, metric::INTENSITY_RANGE], Sign::Negative),
        h("H4", [metric::SPEECH_RATE, metric::ARTICULATION_RATE], Sign::Negative),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub alpha: f64,
    pub d_threshold: f64,
    pub method: CorrelationMethod,
    pub hypotheses: Vec<Hypothesis>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            d_threshold: 0.2,
            method: CorrelationMethod::Pearson,
            hypotheses: default_hypotheses(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub hypothesis: String,
    pub feature: String,
    pub indicator: u8,
    pub stratum: Stratum,
    pub n: usize,
    pub r: f64,
    pub p: f64,
    pub q: f64,
    pub significant: bool,
    pub hypothesized_direction: Sign,
    pub direction_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub results: Vec<AssociationResult>,
    /// Male minus female, per tested feature; absent when a group is too small.
    pub cohens_d: BTreeMap<String, Option<f64>>,
    pub plan: BTreeMap<String, StratumPlan>,
    /// Tests that could not be run, with the reason.
    pub skipped: Vec<String>,
}

struct TestSpec<'a> {
    hypothesis: &'a Hypothesis,
    feature: &'a str,
    indicator: u8,
    stratum: Stratum,
}

/// Correlate every hypothesized (feature, indicator) pair in its strata and
/// control the false discovery rate over the whole run.
pub fn run_protocol(
    manifest: &Manifest,
    config: &ProtocolConfig,
    mode: Parallelism,
) -> Result<ProtocolReport, StatsError> {
    for h in &config.hypotheses {
        for f in &h.features {
            if !manifest.features.contains(f) {
                return Err(StatsError::Manifest(format!("{}: missing feature column '{f}'", h.id)));
            }
        }
        if let Some(i) = h.indicators.iter().find(|i| !(1..=8).contains(*i)) {
            return Err(StatsError::Manifest(format!("{}: indicator {i} has no ground truth", h.id)));
        }
    }

    let mut cohens = BTreeMap::new();
    let mut plan = BTreeMap::new();
    for f in config.hypotheses.iter().flat_map(|h| &h.features) {
        if plan.contains_key(f) {
            continue;
        }
        let group = |g: Gender| -> Vec<f64> {
            manifest
                .rows
                .iter()
                .filter(|r| r.gender == g)
                .filter_map(|r| r.features.get(f).copied())
                .collect()
        };
        let d = cohens_d(&group(Gender::Male), &group(Gender::Female)).ok();
        plan.insert(f.clone(), d.map_or(StratumPlan::Pooled, |d| stratify(d, config.d_threshold)));
        cohens.insert(f.clone(), d);
    }

    let mut specs = Vec::new();
    for h in &config.hypotheses {
        for f in &h.features {
            let strata: &[Stratum] = match plan[f] {
                StratumPlan::Pooled => &[Stratum::Pooled],
                StratumPlan::ByGender => &[Stratum::Male, Stratum::Female],
            };
            for &indicator in &h.indicators {
                for &stratum in strata {
                    specs.push(TestSpec {
                        hypothesis: h,
                        feature: f,
                        indicator,
                        stratum,
                    });
                }
            }
        }
    }
    specs.sort_by(|a, b| {
        (a.feature, a.indicator, a.stratum, &a.hypothesis.id).cmp(&(b.feature, b.indicator, b.stratum, &b.hypothesis.id))
    });

    let outcomes = map_collect(mode, &specs, |t| {
        let (x, y): (Vec<f64>, Vec<f64>) = manifest
            .rows
            .iter()
            .filter(|r| t.stratum.admits(r.gender))
            .filter_map(|r| Some((*r.features.get(t.feature)?, r.indicator_score(t.indicator)?)))
            .unzip();
        correlate(config.method, &x, &y)
    });

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (t, o) in specs.iter().zip(outcomes) {
        match o {
            Ok(c) => results.push(AssociationResult {
                hypothesis: t.hypothesis.id.clone(),
                feature: t.feature.to_string(),
                indicator: t.indicator,
                stratum: t.stratum,
                n: c.n,
                r: c.r,
                p: c.p,
                q: c.p,
                significant: false,
                hypothesized_direction: t.hypothesis.direction,
                direction_consistent: match t.hypothesis.direction {
                    Sign::Positive => c.r > 0.0,
                    Sign::Negative => c.r < 0.0,
                },
            }),
            Err(e) => skipped.push(format!(
                "{} ~ ({}) [{}]: {e}",
                t.feature,
                t.indicator,
                t.stratum.as_str()
            )),
        }
    }
    let pvals: Vec<f64> = results.iter().map(|r| r.p).collect();
    let fdr = bh_fdr(&pvals, config.alpha)?;
    for ((r, q), rej) in results.iter_mut().zip(fdr.q).zip(fdr.rejected) {
        r.q = q;
        r.significant = rej;
    }
    Ok(ProtocolReport {
        results,
        cohens_d: cohens,
        plan,
        skipped,
    })
}

fn matrix(report: &ProtocolReport, value: impl Fn(&AssociationResult) -> f64) -> String {
    let indicators: BTreeSet<u8> = report.results.iter().map(|r| r.indicator).collect();
    let mut rows: BTreeMap<(&str, Stratum), BTreeMap<u8, f64>> = BTreeMap::new();
    for r in &report.results {
        rows.entry((&r.feature, r.stratum)).or_default().insert(r.indicator, value(r));
    }
    let mut out = String::from("feature\tstratum");
    for i in &indicators {
        out.push_str(&format!("\tindicator_{i}"));
    }
    out.push('\n');
    for ((feature, stratum), cells) in rows {
        out.push_str(&format!("{feature}\t{}", stratum.as_str()));
        for i in &indicators {
            out.push('\t');
            if let Some(v) = cells.get(i) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Write `r_matrix.tsv`, `p_matrix.tsv`, `q_matrix.tsv`, `results.tsv` and
/// `cohens_d.tsv` into `dir`.
pub fn write_exports(report: &ProtocolReport, dir: &Path) -> Result<(), StatsError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("r_matrix.tsv"), matrix(report, |r| r.r))?;
    fs::write(dir.join("p_matrix.tsv"), matrix(report, |r| r.p))?;
    fs::write(dir.join("q_matrix.tsv"), matrix(report, |r| r.q))?;

    let mut results = String::from(
        "hypothesis\tfeature\tindicator\tstratum\tn\tr\tp\tq\tsignificant\thypothesized_direction\tdirection_consistent\n",
    );
    for r in &report.results {
        let dir = match r.hypothesized_direction {
            Sign::Positive => "positive",
            Sign::Negative => "negative",
        };
        results.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{dir}\t{}\n",
            r.hypothesis,
            r.feature,
            r.indicator,
            r.stratum.as_str(),
            r.n,
            r.r,
            r.p,
            r.q,
            r.significant,
            r.direction_consistent
        ));
    }
    fs::write(dir.join("results.tsv"), results)?;

    let mut d = String::from("feature\tcohens_d\tplan\n");
    for (f, v) in &report.cohens_d {
        let plan = match report.plan[f] {
            StratumPlan::Pooled => "pooled",
            StratumPlan::ByGender => "by_gender",
        };
        let v = v.map(|v| v.to_string()).unwrap_or_default();
        d.push_str(&format!("{f}\t{v}\t{plan}\n"));
    }
    fs::write(dir.join("cohens_d.tsv"), d)?;
    Ok(())
}
