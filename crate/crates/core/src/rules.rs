//! The assessment engine: turns per-segment features into Good/Bad/None
//! labels for the five communication metrics, plus conversation flags.
//!
//! Every metric is provider-directed; patient segments are always `none`.
//! When good and bad rules both fire for one segment and metric the label is
//! `bad`, and the evidence keeps both.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::PauseMeasure;
use crate::classify::{OPEN, PROVIDING};
use crate::features::{ConversationFeatures, SegmentFeatures};
use crate::transcript::{Conversation, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Understanding,
    Empathy,
    Emotion,
    Presence,
    Clarity,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Understanding,
        Metric::Empathy,
        Metric::Emotion,
        Metric::Presence,
        Metric::Clarity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Understanding => "understanding",
            Metric::Empathy => "empathy",
            Metric::Emotion => "emotion",
            Metric::Presence => "presence",
            Metric::Clarity => "clarity",
        }
    }

    /// Understanding and Empathy have no rule that can label a segment bad.
    pub fn has_rule(self, polarity: Polarity) -> bool {
        polarity == Polarity::Good || !matches!(self, Metric::Understanding | Metric::Empathy)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Good,
    Bad,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Good => "good",
            Polarity::Bad => "bad",
        }
    }

    pub fn label(self) -> Label {
        match self {
            Polarity::Good => Label::Good,
            Polarity::Bad => Label::Bad,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Good,
    Bad,
    None,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Good => "good",
            Label::Bad => "bad",
            Label::None => "none",
        }
    }
}

/// Rule identifiers, as they appear in evidence lists.
pub mod rule {
    pub const OPEN_QUESTION: &str = "understanding.open_question";
    pub const EMPATHY_PROVIDING: &str = "empathy.providing";
    pub const EMOTION_ALIGNMENT: &str = "emotion.alignment";
    pub const EMOTION_PAUSE: &str = "emotion.pause_after_negative";
    pub const EMOTION_INTELLECTUALIZING: &str = "emotion.intellectualizing";
    pub const EMOTION_NO_PAUSE: &str = "emotion.no_pause_after_negative";
    pub const PRESENCE_PARAPHRASE: &str = "presence.paraphrase";
    pub const PRESENCE_INTERRUPTION: &str = "presence.interruption";
    pub const CLARITY_SECOND_PERSON: &str = "clarity.second_person";
    pub const CLARITY_EXPLAINED_JARGON: &str = "clarity.explained_jargon";
    pub const CLARITY_LONG_SENTENCES: &str = "clarity.long_sentences";
    pub const CLARITY_JARGON_OVERUSE: &str = "clarity.jargon_overuse";
}

pub fn rule_polarity(rule_id: &str) -> Option<Polarity> {
    use rule::*;
    match rule_id {
        OPEN_QUESTION | EMPATHY_PROVIDING | EMOTION_ALIGNMENT | EMOTION_PAUSE | PRESENCE_PARAPHRASE
        | CLARITY_SECOND_PERSON | CLARITY_EXPLAINED_JARGON => Some(Polarity::Good),
        EMOTION_INTELLECTUALIZING | EMOTION_NO_PAUSE | PRESENCE_INTERRUPTION | CLARITY_LONG_SENTENCES
        | CLARITY_JARGON_OVERUSE => Some(Polarity::Bad),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvidenceValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub rule: String,
    pub value: EvidenceValue,
}

impl Evidence {
    fn num(rule: &str, v: f64) -> Evidence {
        Evidence {
            rule: rule.to_string(),
            value: EvidenceValue::Number(v),
        }
    }

    fn text(rule: &str, v: impl Into<String>) -> Evidence {
        Evidence {
            rule: rule.to_string(),
            value: EvidenceValue::Text(v.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLabel {
    pub segment: usize,
    pub role: Role,
    pub metric: Metric,
    pub label: Label,
    pub evidence: Vec<Evidence>,
}

impl MetricLabel {
    fn from_evidence(seg: &SegmentFeatures, metric: Metric, evidence: Vec<Evidence>) -> MetricLabel {
        let polarity_of = |e: &Evidence| rule_polarity(&e.rule);
        let label = if evidence.iter().any(|e| polarity_of(e) == Some(Polarity::Bad)) {
            Label::Bad
        } else if evidence.is_empty() {
            Label::None
        } else {
            Label::Good
        };
        MetricLabel {
            segment: seg.index,
            role: seg.role,
            metric,
            label,
            evidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub pause_good_ms: u64,
    pub words_per_sentence_max: f64,
    pub speech_ratio_max: f64,
    pub similarity_threshold: f64,
    pub high_emotion_rate: f64,
    pub high_neg_rate: f64,
    pub polarity_dead_zone: f64,
    pub high_cog_rate: f64,
    pub jargon_overuse_rate: f64,
    pub second_over_first_margin: f64,
    /// Share of the conversation that confident pauses must exceed, on top of
    /// at least one pause of `pause_good_ms`, for silence to count as
    /// encouraged.
    pub silence_encouragement_fraction: f64,
    /// Upper bound for the "silence under half the conversation" flag.
    pub silence_ratio_max: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            pause_good_ms: 10_000,
            words_per_sentence_max: 15.0,
            speech_ratio_max: 0.5,
            similarity_threshold: 0.6,
            high_emotion_rate: 5.0,
            high_neg_rate: 3.0,
            polarity_dead_zone: 0.5,
            high_cog_rate: 8.0,
            jargon_overuse_rate: 2.0,
            second_over_first_margin: 0.0,
            silence_encouragement_fraction: 0.0,
            silence_ratio_max: 0.5,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), AssessError> {
        let bad = |key: &str, why: &str| Err(AssessError::InvalidConfig(format!("{key} {why}")));
        let positive = [
            ("words_per_sentence_max", self.words_per_sentence_max),
            ("high_emotion_rate", self.high_emotion_rate),
            ("high_neg_rate", self.high_neg_rate),
            ("polarity_dead_zone", self.polarity_dead_zone),
            ("high_cog_rate", self.high_cog_rate),
            ("jargon_overuse_rate", self.jargon_overuse_rate),
        ];
        if self.pause_good_ms == 0 {
            return bad("pause_good_ms", "must be positive");
        }
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(k, "must be positive");
            }
        }
        for (k, v) in [
            ("speech_ratio_max", self.speech_ratio_max),
            ("similarity_threshold", self.similarity_threshold),
            ("silence_ratio_max", self.silence_ratio_max),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(k, "must be in (0, 1]");
            }
        }
        if !(0.0..1.0).contains(&self.silence_encouragement_fraction) {
            return bad("silence_encouragement_fraction", "must be in [0, 1)");
        }
        if !self.second_over_first_margin.is_finite() {
            return bad("second_over_first_margin", "must be finite");
        }
        Ok(())
    }

    pub fn snapshot(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self).expect("config serializes") {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!("struct serializes to an object"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub provider_speech_ratio: f64,
    pub ratio_pass: bool,
    pub silence_encouraged: bool,
    /// Confident inter-turn pause time over conversation duration.
    pub silence_ratio: f64,
    pub silence_ratio_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub conversation_id: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub config: BTreeMap<String, serde_json::Value>,
    pub flags: Flags,
    pub labels: Vec<MetricLabel>,
}

impl Assessment {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("assessment serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Assessment, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn label(&self, segment: usize, metric: Metric) -> Option<&MetricLabel> {
        self.labels.iter().find(|l| l.segment == segment && l.metric == metric)
    }

    pub fn segment_count(&self) -> usize {
        self.labels.iter().map(|l| l.segment + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssessError {
    #[error("no provider speech")]
    NoProviderSpeech,
    #[error("no patient speech")]
    NoPatientSpeech,
    #[error("features do not match the conversation: {0}")]
    MissingFeatures(String),
    #[error("invalid rule config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmotionPolarity {
    Positive,
    Negative,
    Neutral,
}

impl EmotionPolarity {
    fn as_str(self) -> &'static str {
        match self {
            EmotionPolarity::Positive => "positive",
            EmotionPolarity::Negative => "negative",
            EmotionPolarity::Neutral => "neutral",
        }
    }
}

pub fn emotion_polarity(seg: &SegmentFeatures, dead_zone: f64) -> EmotionPolarity {
    let d = seg.rate("pos_emotion") - seg.rate("neg_emotion");
    if d > dead_zone {
        EmotionPolarity::Positive
    } else if d < -dead_zone {
        EmotionPolarity::Negative
    } else {
        EmotionPolarity::Neutral
    }
}

fn gated(seg: &SegmentFeatures, metric: Metric, f: impl FnOnce() -> Vec<Evidence>) -> MetricLabel {
    let evidence = if seg.role == Role::Provider { f() } else { Vec::new() };
    MetricLabel::from_evidence(seg, metric, evidence)
}

pub fn assess_understanding(seg: &SegmentFeatures) -> MetricLabel {
    gated(seg, Metric::Understanding, || {
        seg.questions
            .iter()
            .zip(&seg.sentence_texts)
            .filter(|(v, _)| v.is(OPEN))
            .map(|(_, text)| Evidence::text(rule::OPEN_QUESTION, text.as_str()))
            .collect()
    })
}

pub fn assess_empathy(seg: &SegmentFeatures) -> MetricLabel {
    gated(seg, Metric::Empathy, || {
        seg.empathy
            .iter()
            .zip(&seg.sentence_texts)
            .filter(|(v, _)| v.is(PROVIDING))
            .map(|(_, text)| Evidence::text(rule::EMPATHY_PROVIDING, text.as_str()))
            .collect()
    })
}

/// `prev_patient` is the closest earlier patient segment. `pause` is the
/// pause after that patient segment, and is only passed when this provider
/// segment is the turn that directly follows it.
pub fn assess_emotion(
    seg: &SegmentFeatures,
    prev_patient: Option<&SegmentFeatures>,
    pause: Option<&PauseMeasure>,
    cfg: &RuleConfig,
) -> MetricLabel {
    gated(seg, Metric::Emotion, || {
        let mut ev = Vec::new();
        let Some(patient) = prev_patient else {
            return ev;
        };
        let mine = emotion_polarity(seg, cfg.polarity_dead_zone);
        let theirs = emotion_polarity(patient, cfg.polarity_dead_zone);
        if mine != EmotionPolarity::Neutral && mine == theirs {
            ev.push(Evidence::text(rule::EMOTION_ALIGNMENT, mine.as_str()));
        }
        if let Some(p) = pause.filter(|p| p.confident) {
            if theirs == EmotionPolarity::Negative && p.gap_ms >= cfg.pause_good_ms {
                ev.push(Evidence::num(rule::EMOTION_PAUSE, p.gap_ms as f64));
            }
        }
        let patient_emotion = patient.rate("pos_emotion") + patient.rate("neg_emotion");
        let cog = seg.rate("cog_process");
        if patient_emotion >= cfg.high_emotion_rate && cog >= cfg.high_cog_rate {
            ev.push(Evidence::num(rule::EMOTION_INTELLECTUALIZING, cog));
        }
        if let Some(p) = pause.filter(|p| p.confident) {
            if patient.rate("neg_emotion") >= cfg.high_neg_rate && p.gap_ms < cfg.pause_good_ms {
                ev.push(Evidence::num(rule::EMOTION_NO_PAUSE, p.gap_ms as f64));
            }
        }
        ev
    })
}

pub fn assess_presence(seg: &SegmentFeatures, cfg: &RuleConfig) -> MetricLabel {
    gated(seg, Metric::Presence, || {
        let mut ev = Vec::new();
        if let Some(sim) = seg.paraphrase.filter(|s| *s >= cfg.similarity_threshold) {
            ev.push(Evidence::num(rule::PRESENCE_PARAPHRASE, sim));
        }
        if seg.interrupted() {
            ev.push(Evidence::num(rule::PRESENCE_INTERRUPTION, seg.overlap_ms as f64));
        }
        ev
    })
}

pub fn assess_clarity(seg: &SegmentFeatures, cfg: &RuleConfig) -> MetricLabel {
    gated(seg, Metric::Clarity, || {
        let mut bad = Vec::new();
        let Some(scores) = seg.scores.as_ref() else {
            return bad;
        };
        let explained = seg.jargon.iter().filter(|j| j.explained).count();
        if seg.jargon_rate >= cfg.jargon_overuse_rate && explained == 0 {
            bad.push(Evidence::num(rule::CLARITY_JARGON_OVERUSE, seg.jargon_rate));
        }
        if scores.words_per_sentence > cfg.words_per_sentence_max {
            bad.push(Evidence::num(rule::CLARITY_LONG_SENTENCES, scores.words_per_sentence));
        }
        if !bad.is_empty() {
            return bad;
        }
        let mut good = Vec::new();
        let pronoun_margin = scores.rate("pron_second") - scores.rate("pron_first");
        if pronoun_margin > cfg.second_over_first_margin {
            good.push(Evidence::num(rule::CLARITY_SECOND_PERSON, pronoun_margin));
        }
        if !seg.jargon.is_empty() && explained == seg.jargon.len() {
            good.push(Evidence::num(rule::CLARITY_EXPLAINED_JARGON, explained as f64));
        }
        good
    })
}

pub fn conversation_flags(features: &ConversationFeatures, cfg: &RuleConfig) -> Flags {
    let confident: Vec<&PauseMeasure> = features
        .segments
        .iter()
        .filter_map(|s| s.pause_after.as_ref())
        .filter(|p| p.confident)
        .collect();
    let pause_ms: u64 = confident.iter().map(|p| p.gap_ms).sum();
    let silence_ratio = if features.duration_ms == 0 {
        0.0
    } else {
        pause_ms as f64 / features.duration_ms as f64
    };
    let long_pause = confident.iter().any(|p| p.gap_ms >= cfg.pause_good_ms);
    Flags {
        provider_speech_ratio: features.provider_speech_ratio,
        ratio_pass: features.provider_speech_ratio < cfg.speech_ratio_max,
        silence_encouraged: long_pause && silence_ratio > cfg.silence_encouragement_fraction,
        silence_ratio,
        silence_ratio_pass: silence_ratio < cfg.silence_ratio_max,
    }
}

pub fn assess_conversation(
    conv: &Conversation,
    features: &ConversationFeatures,
    cfg: &RuleConfig,
) -> Result<Assessment, AssessError> {
    cfg.validate()?;
    if features.conversation_id != conv.id {
        return Err(AssessError::MissingFeatures(format!(
            "features are for `{}`, conversation is `{}`",
            features.conversation_id, conv.id
        )));
    }
    if features.segments.len() != conv.segments.len()
        || features.segments.iter().zip(&conv.segments).any(|(f, s)| f.index != s.index || f.role != s.role)
    {
        return Err(AssessError::MissingFeatures(format!(
            "{} feature rows for {} segments",
            features.segments.len(),
            conv.segments.len()
        )));
    }
    if !conv.has_role(Role::Provider) {
        return Err(AssessError::NoProviderSpeech);
    }
    if !conv.has_role(Role::Patient) {
        return Err(AssessError::NoPatientSpeech);
    }

    let mut labels = Vec::with_capacity(conv.segments.len() * Metric::ALL.len());
    for seg in &features.segments {
        let prev = conv.preceding(seg.index, Role::Patient);
        let prev_patient = prev.map(|p| &features.segments[p]);
        let pause = prev
            .filter(|p| p + 1 == seg.index)
            .and_then(|p| features.segments[p].pause_after.as_ref());
        labels.push(assess_understanding(seg));
        labels.push(assess_empathy(seg));
        labels.push(assess_emotion(seg, prev_patient, pause, cfg));
        labels.push(assess_presence(seg, cfg));
        labels.push(assess_clarity(seg, cfg));
    }

    Ok(Assessment {
        conversation_id: conv.id.clone(),
        metadata: conv.metadata.clone(),
        config: cfg.snapshot(),
        flags: conversation_flags(features, cfg),
        labels,
    })
}
