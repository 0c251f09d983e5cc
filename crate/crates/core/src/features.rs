//! Per-segment feature extraction: lexicon scores, classifier verdicts,
//! jargon findings, interruptions and pauses.

use thiserror::Error;

use crate::acoustics::{self, detect_silence, map_to_segments, AcousticError, EnergySeries, IntervalSet, PauseMeasure};
use crate::classify::{ClassifierVerdict, ClassifyError, Sentence, SentenceClassifier};
use crate::lexicon::{
    explanation_cue_present, find_segment_jargon, score_sentences, CategoryScores, ExplanationCues, JargonDict,
    Lexicon,
};
use crate::transcript::{speech_ratio, Conversation, Role, ZeroDuration};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub big_word_letters: usize,
    pub silence_percentile: u8,
    /// Minimum fraction of a gap covered by detected silence for the pause to
    /// be trusted.
    pub pause_confidence: f64,
    pub authenticity_proxy: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            big_word_letters: crate::lexicon::DEFAULT_BIG_WORD_LETTERS,
            silence_percentile: acoustics::DEFAULT_SILENCE_PERCENTILE,
            pause_confidence: acoustics::DEFAULT_PAUSE_CONFIDENCE,
            authenticity_proxy: true,
        }
    }
}

/// Loaded dictionaries shared by every conversation in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub jargon: JargonDict,
    pub explanation_cues: ExplanationCues,
}

impl Resources {
    pub fn builtin() -> Resources {
        Resources {
            lexicon: Lexicon::builtin(),
            jargon: JargonDict::builtin(),
            explanation_cues: ExplanationCues::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AudioInputs {
    pub energy: Option<EnergySeries>,
    pub overlaps: Option<IntervalSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JargonFinding {
    pub term: String,
    pub sentence: usize,
    pub token: usize,
    pub explained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatures {
    pub index: usize,
    pub role: Role,
    /// Absent when the segment has no word tokens.
    pub scores: Option<CategoryScores>,
    pub authenticity: Option<f64>,
    /// One verdict per sentence; provider segments only.
    pub questions: Vec<ClassifierVerdict>,
    pub empathy: Vec<ClassifierVerdict>,
    pub jargon: Vec<JargonFinding>,
    /// Jargon matches per 100 words.
    pub jargon_rate: f64,
    pub overlap_ms: u64,
    /// Highest similarity between any of this provider segment's sentences
    /// and any sentence of the closest earlier patient segment.
    pub paraphrase: Option<f64>,
    pub pause_after: Option<PauseMeasure>,
    /// Sentence texts, kept for evidence excerpts.
    pub sentence_texts: Vec<String>,
}

impl SegmentFeatures {
    pub fn interrupted(&self) -> bool {
        self.overlap_ms > 0
    }

    pub fn rate(&self, category: &str) -> f64 {
        self.scores.as_ref().map_or(0.0, |s| s.rate(category))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversationFeatures {
    pub conversation_id: String,
    pub segments: Vec<SegmentFeatures>,
    pub provider_speech_ratio: f64,
    pub duration_ms: u64,
    pub silence: Option<IntervalSet>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error(transparent)]
    ZeroDuration(#[from] ZeroDuration),
}

pub fn extract_features(
    conv: &Conversation,
    resources: &Resources,
    cfg: &FeatureConfig,
    classifier: &mut dyn SentenceClassifier,
    audio: &AudioInputs,
) -> Result<ConversationFeatures, FeatureError> {
    let silence = match &audio.energy {
        Some(series) => Some(detect_silence(series, cfg.silence_percentile)?),
        None => None,
    };
    let overlap_map = audio.overlaps.as_ref().map(|o| map_to_segments(o, conv));

    let mut segments = Vec::with_capacity(conv.segments.len());
    for seg in &conv.segments {
        let scores = score_sentences(&seg.sentences, &resources.lexicon, cfg.big_word_letters).ok();
        let authenticity = scores
            .as_ref()
            .filter(|_| cfg.authenticity_proxy)
            .map(CategoryScores::authenticity_proxy);
        let sentences: Vec<Sentence> = seg.sentences.iter().map(|s| Sentence::of(&seg.text, s)).collect();

        let mut questions = Vec::new();
        if seg.role == Role::Provider {
            for s in &sentences {
                questions.push(classifier.open_question(*s)?);
            }
        }
        let mut empathy = Vec::with_capacity(sentences.len());
        for s in &sentences {
            empathy.push(classifier.empathy(*s, seg.role)?);
        }

        let jargon: Vec<JargonFinding> = find_segment_jargon(&seg.sentences, &resources.jargon)
            .into_iter()
            .map(|m| JargonFinding {
                explained: explanation_cue_present(&seg.text, &seg.sentences, &m, &resources.explanation_cues),
                term: m.within.term,
                sentence: m.sentence,
                token: m.segment_index,
            })
            .collect();
        let words = seg.token_count();
        let jargon_rate = if words == 0 {
            0.0
        } else {
            100.0 * jargon.len() as f64 / words as f64
        };

        let paraphrase = match (seg.role, conv.preceding(seg.index, Role::Patient)) {
            (Role::Provider, Some(p)) => {
                let patient = &conv.segments[p];
                let mut best: Option<f64> = None;
                for a in &sentences {
                    for b in patient.sentences.iter().map(|s| Sentence::of(&patient.text, s)) {
                        let v = classifier.similarity(*a, b)?;
                        best = Some(best.map_or(v.score, |m: f64| m.max(v.score)));
                    }
                }
                best
            }
            _ => None,
        };

        let pause_after = if seg.index + 1 < conv.segments.len() {
            Some(acoustics::pause_after(conv, seg.index, silence.as_ref(), cfg.pause_confidence)?)
        } else {
            None
        };

        segments.push(SegmentFeatures {
            index: seg.index,
            role: seg.role,
            scores,
            authenticity,
            questions,
            empathy,
            jargon,
            jargon_rate,
            overlap_ms: overlap_map.as_ref().map_or(0, |m| m[seg.index].intersection_ms),
            paraphrase,
            pause_after,
            sentence_texts: sentences.iter().map(|s| s.text.to_string()).collect(),
        });
    }

    Ok(ConversationFeatures {
        conversation_id: conv.id.clone(),
        segments,
        provider_speech_ratio: speech_ratio(conv, Role::Provider)?,
        duration_ms: conv.duration_ms,
        silence,
    })
}
