//! Segment-level evaluation of assessments against ground-truth tags.
//!
//! For a (metric, polarity) pair, a provider segment is a positive when its
//! truth tag has that polarity and is predicted positive when the engine's
//! label does. Untagged segments, and segments tagged with the opposite
//! polarity, are negatives. Counts are summed over conversations before any
//! statistic is computed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{Assessment, Metric, Polarity};
use crate::transcript::Role;

pub mod synth;

pub use synth::{gen_corpus, gen_synthetic, CorpusSpec, GenError, GenSpec, Synthetic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptClass {
    GoodScript,
    BadScript,
}

impl ScriptClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ScriptClass::GoodScript => "good_script",
            ScriptClass::BadScript => "bad_script",
        }
    }

    /// The polarity each script class is built to exhibit.
    pub fn target(self) -> Polarity {
        match self {
            ScriptClass::GoodScript => Polarity::Good,
            ScriptClass::BadScript => Polarity::Bad,
        }
    }
}

impl fmt::Display for ScriptClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub segment: usize,
    pub metric: Metric,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTags {
    pub conversation_id: String,
    pub script_class: ScriptClass,
    pub tags: Vec<Tag>,
}

impl TruthTags {
    pub fn tag(&self, segment: usize, metric: Metric) -> Option<Polarity> {
        self.tags
            .iter()
            .find(|t| t.segment == segment && t.metric == metric)
            .map(|t| t.polarity)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TruthError {
    #[error("malformed truth file: {0}")]
    Malformed(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("segment index {0} is out of range")]
    OutOfRange(i64),
    #[error("duplicate tag for segment {segment}, metric {metric}")]
    Duplicate { segment: usize, metric: Metric },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    conversation_id: String,
    script_class: ScriptClass,
    tags: Vec<RawTag>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTag {
    segment: i64,
    metric: String,
    polarity: Polarity,
}

pub fn load_truth(bytes: &[u8]) -> Result<TruthTags, TruthError> {
    let raw: RawTruth = serde_json::from_slice(bytes).map_err(|e| TruthError::Malformed(e.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut tags = Vec::with_capacity(raw.tags.len());
    for t in raw.tags {
        let metric: Metric = t.metric.parse().map_err(|_| TruthError::UnknownMetric(t.metric.clone()))?;
        let segment = usize::try_from(t.segment).map_err(|_| TruthError::OutOfRange(t.segment))?;
        if !seen.insert((segment, metric)) {
            return Err(TruthError::Duplicate { segment, metric });
        }
        tags.push(Tag {
            segment,
            metric,
            polarity: t.polarity,
        });
    }
    Ok(TruthTags {
        conversation_id: raw.conversation_id,
        script_class: raw.script_class,
        tags,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub metric: Metric,
    pub polarity: Polarity,
    #[serde(flatten)]
    pub counts: Counts,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Mean of the true-positive and true-negative rates. `None` when either
/// class is absent.
pub fn balanced_accuracy(c: &Counts) -> Option<f64> {
    let tpr = ratio(c.tp, c.tp + c.fn_)?;
    let tnr = ratio(c.tn, c.tn + c.fp)?;
    Some(0.5 * (tpr + tnr))
}

pub fn precision(c: &Counts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &Counts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fn_)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("assessment is for `{assessment}` but truth is for `{truth}`")]
    IdMismatch { assessment: String, truth: String },
    #[error("truth tag on segment {0}, which the assessment does not contain")]
    TagOutOfRange(usize),
    #[error("truth tag on segment {0}, which is a patient segment")]
    TagOnPatient(usize),
    #[error("empty corpus")]
    EmptyCorpus,
}

fn check_tags(assessment: &Assessment, truth: &TruthTags) -> Result<(), EvalError> {
    if assessment.conversation_id != truth.conversation_id {
        return Err(EvalError::IdMismatch {
            assessment: assessment.conversation_id.clone(),
            truth: truth.conversation_id.clone(),
        });
    }
    for t in &truth.tags {
        match assessment.label(t.segment, t.metric) {
            None => return Err(EvalError::TagOutOfRange(t.segment)),
            Some(l) if l.role != Role::Provider => return Err(EvalError::TagOnPatient(t.segment)),
            Some(_) => {}
        }
    }
    Ok(())
}

pub fn confusion(
    assessment: &Assessment,
    truth: &TruthTags,
    metric: Metric,
    polarity: Polarity,
) -> Result<ConfusionCounts, EvalError> {
    check_tags(assessment, truth)?;
    let mut counts = Counts::default();
    let wanted = polarity.label();
    for l in assessment
        .labels
        .iter()
        .filter(|l| l.metric == metric && l.role == Role::Provider)
    {
        let actual = truth.tag(l.segment, metric) == Some(polarity);
        let predicted = l.label == wanted;
        match (actual, predicted) {
            (true, true) => counts.tp += 1,
            (false, true) => counts.fp += 1,
            (true, false) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(ConfusionCounts {
        metric,
        polarity,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub metric: Metric,
    pub polarity: Polarity,
    /// Absent for the corpus-wide roll-up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_class: Option<ScriptClass>,
    pub counts: Counts,
    pub balanced_accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Names of statistics whose denominator was zero.
    pub undefined: Vec<String>,
}

impl EvalCell {
    fn new(metric: Metric, polarity: Polarity, script_class: Option<ScriptClass>, counts: Counts) -> EvalCell {
        let balanced_accuracy = balanced_accuracy(&counts);
        let precision = precision(&counts);
        let recall = recall(&counts);
        let undefined = [
            ("balanced_accuracy", balanced_accuracy),
            ("precision", precision),
            ("recall", recall),
        ]
        .into_iter()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k.to_string())
        .collect();
        EvalCell {
            metric,
            polarity,
            script_class,
            counts,
            balanced_accuracy,
            precision,
            recall,
            undefined,
        }
    }
}

/// Published reference figures, carried for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub metric: Metric,
    pub script_class: ScriptClass,
    pub polarity: Polarity,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn reference_results() -> Vec<ReferenceRow> {
    use Metric::*;
    use ScriptClass::*;
    let row = |metric, script_class: ScriptClass, a, p, r| ReferenceRow {
        metric,
        script_class,
        polarity: script_class.target(),
        accuracy: a,
        precision: p,
        recall: r,
    };
    vec![
        row(Understanding, GoodScript, 0.755, 0.733, 0.792),
        row(Empathy, GoodScript, 0.660, 0.679, 0.663),
        row(Emotion, GoodScript, 0.861, 0.733, 0.846),
        row(Presence, GoodScript, 0.862, 0.723, 0.703),
        row(Clarity, GoodScript, 0.776, 0.614, 0.567),
        row(Emotion, BadScript, 0.729, 0.721, 0.678),
        row(Presence, BadScript, 0.797, 0.835, 0.558),
        row(Clarity, BadScript, 0.795, 0.664, 0.813),
    ]
}

pub const UNTAGGED_AS_NEGATIVE: &str =
    "untagged provider segments count as negatives for every (metric, polarity) evaluation";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub conversations: usize,
    pub conversation_ids: Vec<String>,
    pub cells: Vec<EvalCell>,
    pub corpus: Vec<EvalCell>,
    pub assumptions: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, serde_json::Value>,
    /// Published per-cell figures, carried for side-by-side display only.
    #[serde(rename = "paper_reference_table3")]
    pub reference: Vec<ReferenceRow>,
}

impl EvalReport {
    pub fn cell(&self, metric: Metric, polarity: Polarity, class: ScriptClass) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.metric == metric && c.polarity == polarity && c.script_class == Some(class))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Micro-averaged evaluation: confusion counts are summed per
/// (metric, polarity, script class) in conversation-id order, then turned
/// into statistics.
pub fn evaluate_corpus(pairs: &[(Assessment, TruthTags)]) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut order: Vec<&(Assessment, TruthTags)> = pairs.iter().collect();
    order.sort_by(|a, b| a.0.conversation_id.cmp(&b.0.conversation_id));

    let mut per_class: BTreeMap<(Metric, Polarity, ScriptClass), Counts> = BTreeMap::new();
    let mut overall: BTreeMap<(Metric, Polarity), Counts> = BTreeMap::new();
    for (assessment, truth) in &order {
        for metric in Metric::ALL {
            for polarity in [Polarity::Good, Polarity::Bad] {
                let c = confusion(assessment, truth, metric, polarity)?;
                per_class
                    .entry((metric, polarity, truth.script_class))
                    .or_default()
                    .add(&c.counts);
                overall.entry((metric, polarity)).or_default().add(&c.counts);
            }
        }
    }

    Ok(EvalReport {
        conversations: order.len(),
        conversation_ids: order.iter().map(|p| p.0.conversation_id.clone()).collect(),
        cells: per_class
            .into_iter()
            .map(|((m, p, s), c)| EvalCell::new(m, p, Some(s), c))
            .collect(),
        corpus: overall
            .into_iter()
            .map(|((m, p), c)| EvalCell::new(m, p, None, c))
            .collect(),
        assumptions: vec![UNTAGGED_AS_NEGATIVE.to_string()],
        config: BTreeMap::new(),
        reference: reference_results(),
    })
}
