//! Scoring of binary predictions against a curated sample manifest.
//!
//! Missing or malformed predictions count as abstentions. An abstention is
//! scored as the wrong option: a false negative for the gold class and a
//! false positive for the other one.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::PairSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no prediction overlaps the gold samples")]
    EmptyOverlap,
    #[error("prediction for unknown sample {0:?}")]
    UnknownSample(String),
    #[error("prediction sets cover different samples ({only_original} only in the first, {only_swapped} only in the second)")]
    CoverageMismatch { only_original: usize, only_swapped: usize },
    #[error("duplicate prediction for sample {0:?}")]
    Duplicate(String),
    #[error("prediction file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("report: {0}")]
    Report(String),
}

/// Sample id to predicted option index; `None` marks an abstention.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    labels: BTreeMap<String, Option<u8>>,
}

impl PredictionSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Predictions equal to the samples' own labels.
    pub fn from_gold(gold: &[PairSample]) -> Self {
        gold.iter().map(|s| (s.id(), Some(s.label_index))).collect()
    }

    pub fn insert(&mut self, id: impl Into<String>, label: Option<u8>) -> Option<Option<u8>> {
        self.labels.insert(id.into(), label.filter(|l| *l <= 1))
    }

    /// `Some(None)` for a recorded abstention, `None` if the id is absent.
    pub fn get(&self, id: &str) -> Option<Option<u8>> {
        self.labels.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Option<u8>)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Every answer replaced by the opposite option. Abstentions stay.
    pub fn complement(&self) -> Self {
        self.iter().map(|(k, v)| (k.to_string(), v.map(|l| 1 - l))).collect()
    }

    /// Parses `sample_id,label_index` CSV. A blank or non-{0,1} label is an abstention.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| EvalError::Parse { line: 1, reason: e.to_string() })?;
        if headers.iter().collect::<Vec<_>>() != ["sample_id", "label_index"] {
            return Err(EvalError::Parse { line: 1, reason: "expected header sample_id,label_index".into() });
        }
        let mut out = PredictionSet::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = n + 2;
            let rec = rec.map_err(|e| EvalError::Parse { line, reason: e.to_string() })?;
            let id = rec
                .get(0)
                .filter(|s| !s.is_empty())
                .ok_or(EvalError::Parse { line, reason: "missing sample_id".into() })?;
            let label = match rec.get(1).unwrap_or("") {
                "0" => Some(0),
                "1" => Some(1),
                _ => None,
            };
            if out.insert(id, label).is_some() {
                return Err(EvalError::Duplicate(id.to_string()));
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,label_index\n");
        for (id, label) in self.iter() {
            let field =
                if id.contains([',', '"', '\n']) { format!("\"{}\"", id.replace('"', "\"\"")) } else { id.to_string() };
            match label {
                Some(l) => writeln!(out, "{field},{l}"),
                None => writeln!(out, "{field},"),
            }
            .expect("writing to a string");
        }
        out
    }
}

impl FromIterator<(String, Option<u8>)> for PredictionSet {
    fn from_iter<I: IntoIterator<Item = (String, Option<u8>)>>(iter: I) -> Self {
        let mut s = PredictionSet::new();
        for (k, v) in iter {
            s.insert(k, v);
        }
        s
    }
}

/// One-vs-rest confusion counts for a single option.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassCounts {
    /// `2TP / (2TP + FP + FN)`, or 0 when the class never occurs on either side.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts for both options over a set of gold samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub classes: [ClassCounts; 2],
    pub abstentions: usize,
}

impl Confusion {
    fn add(&mut self, gold: u8, predicted: Option<u8>) {
        // An abstention behaves like a prediction of the other option.
        let predicted = predicted.unwrap_or_else(|| {
            self.abstentions += 1;
            1 - gold
        });
        for (c, counts) in self.classes.iter_mut().enumerate() {
            let c = c as u8;
            match (gold == c, predicted == c) {
                (true, true) => counts.tp += 1,
                (false, true) => counts.fp += 1,
                (true, false) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
    }

    pub fn macro_f1(&self) -> f64 {
        (self.classes[0].f1() + self.classes[1].f1()) / 2.0
    }

    pub fn samples(&self) -> usize {
        self.classes[0].total()
    }
}

fn check_coverage(preds: &PredictionSet, gold: &[PairSample]) -> Result<(), EvalError> {
    let ids: std::collections::HashSet<String> = gold.iter().map(PairSample::id).collect();
    if let Some((unknown, _)) = preds.iter().find(|(id, _)| !ids.contains(*id)) {
        return Err(EvalError::UnknownSample(unknown.to_string()));
    }
    if !gold.iter().any(|s| preds.get(&s.id()).is_some()) {
        return Err(EvalError::EmptyOverlap);
    }
    Ok(())
}

fn confusion_of<'a>(preds: &PredictionSet, gold: impl IntoIterator<Item = &'a PairSample>) -> Confusion {
    let mut c = Confusion::default();
    for s in gold {
        c.add(s.label_index, preds.get(&s.id()).flatten());
    }
    c
}

pub fn confusion(preds: &PredictionSet, gold: &[PairSample]) -> Result<Confusion, EvalError> {
    check_coverage(preds, gold)?;
    Ok(confusion_of(preds, gold))
}

/// Unweighted mean of the two per-option F1 scores.
pub fn macro_f1(preds: &PredictionSet, gold: &[PairSample]) -> Result<f64, EvalError> {
    Ok(confusion(preds, gold)?.macro_f1())
}

/// Percentage of samples whose swapped-order answer is the opposite of the
/// original answer. Abstentions on either side count as inconsistent.
pub fn consistency_rate(original: &PredictionSet, swapped: &PredictionSet) -> Result<f64, EvalError> {
    let only_original = original.iter().filter(|(id, _)| swapped.get(id).is_none()).count();
    let only_swapped = swapped.iter().filter(|(id, _)| original.get(id).is_none()).count();
    if only_original + only_swapped > 0 {
        return Err(EvalError::CoverageMismatch { only_original, only_swapped });
    }
    if original.is_empty() {
        return Err(EvalError::EmptyOverlap);
    }
    let consistent = original
        .iter()
        .filter(|(id, a)| matches!((a, swapped.get(id).flatten()), (Some(a), Some(b)) if *a + b == 1))
        .count();
    Ok(100.0 * consistent as f64 / original.len() as f64)
}

/// Uniform coin-flip predictions for every gold sample.
pub fn random_predictions(gold: &[PairSample], seed: u64) -> PredictionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gold.iter().map(|s| (s.id(), Some(rng.random_range(0..=1u8)))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupReport {
    /// Bin lower edge in degrees or DoF name.
    pub group: String,
    pub samples: usize,
    pub macro_f1: f64,
    pub abstentions: usize,
    pub classes: [ClassCounts; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub groups: Vec<GroupReport>,
    /// Mean of the per-group macro-F1 scores.
    pub average: f64,
    /// Macro-F1 over all samples pooled together.
    pub overall_macro_f1: f64,
    pub samples: usize,
    pub abstentions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<f64>,
}

/// Sort key so that numeric bins order numerically and DoF names keep
/// pitch, yaw, roll, tx, ty, tz order.
fn group_order(name: &str) -> (u8, f64, usize) {
    if let Ok(v) = name.parse::<f64>() {
        return (0, v, 0);
    }
    let pos = crate::curation::Dof::parse(name).map_or(usize::MAX, |d| d.position());
    (1, 0.0, pos)
}

pub fn evaluate_run(
    gold: &[PairSample],
    preds: &PredictionSet,
    swapped: Option<&PredictionSet>,
) -> Result<EvalReport, EvalError> {
    check_coverage(preds, gold)?;
    let mut grouped: BTreeMap<String, Vec<&PairSample>> = BTreeMap::new();
    for s in gold {
        grouped.entry(s.group()).or_default().push(s);
    }
    let mut groups: Vec<GroupReport> = grouped
        .into_iter()
        .map(|(group, members)| {
            let c = confusion_of(preds, members.iter().copied());
            GroupReport {
                group,
                samples: c.samples(),
                macro_f1: c.macro_f1(),
                abstentions: c.abstentions,
                classes: c.classes,
            }
        })
        .collect();
    groups.sort_by(|a, b| {
        let (ka, kb) = (group_order(&a.group), group_order(&b.group));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2)).then(a.group.cmp(&b.group))
    });
    let overall = confusion_of(preds, gold);
    let consistency = swapped.map(|s| consistency_rate(preds, s)).transpose()?;
    Ok(EvalReport {
        average: groups.iter().map(|g| g.macro_f1).sum::<f64>() / groups.len().max(1) as f64,
        overall_macro_f1: overall.macro_f1(),
        samples: overall.samples(),
        abstentions: overall.abstentions,
        consistency,
        groups,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
    }

    /// Aligned plain-text table: one column per group plus the average.
    pub fn to_table(&self) -> String {
        let mut header = vec!["".to_string()];
        let mut scores = vec!["macro-F1".to_string()];
        let mut counts = vec!["samples".to_string()];
        for g in &self.groups {
            header.push(g.group.clone());
            scores.push(format!("{:.2}", g.macro_f1));
            counts.push(g.samples.to_string());
        }
        header.push("avg".into());
        scores.push(format!("{:.2}", self.average));
        counts.push(self.samples.to_string());
        let widths: Vec<usize> = (0..header.len())
            .map(|i| [&header, &scores, &counts].iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in [&header, &scores, &counts] {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        if self.abstentions > 0 {
            writeln!(out, "abstentions: {}", self.abstentions).expect("writing to a string");
        }
        if let Some(c) = self.consistency {
            writeln!(out, "consistency: {c:.1}%").expect("writing to a string");
        }
        out
    }
}
