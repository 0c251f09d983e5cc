//! One-stop pipeline: transcript bytes in, assessment out.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::classify::{BaselineClassifier, SentenceClassifier};
use crate::features::{extract_features, AudioInputs, FeatureConfig, FeatureError, Resources};
use crate::rules::{assess_conversation, AssessError, Assessment, RuleConfig};
use crate::transcript::{parse_transcript_with, Conversation, ParseOptions, SentenceRules, TranscriptError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Assess(#[from] AssessError),
}

pub struct Engine {
    pub resources: Resources,
    pub features: FeatureConfig,
    pub rules: RuleConfig,
    pub sentence_rules: SentenceRules,
    pub parse_options: ParseOptions,
    /// Replaces the rule snapshot in every assessment when set, so outputs
    /// carry the full resolved run configuration.
    pub config_echo: Option<BTreeMap<String, serde_json::Value>>,
    classifier: Box<dyn SentenceClassifier + Send>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(Resources::builtin(), RuleConfig::default(), Box::new(BaselineClassifier::default()))
    }
}

impl Engine {
    pub fn new(resources: Resources, rules: RuleConfig, classifier: Box<dyn SentenceClassifier + Send>) -> Engine {
        Engine {
            resources,
            features: FeatureConfig::default(),
            rules,
            sentence_rules: SentenceRules::default(),
            parse_options: ParseOptions::default(),
            config_echo: None,
            classifier,
        }
    }

    pub fn set_classifier(&mut self, classifier: Box<dyn SentenceClassifier + Send>) {
        self.classifier = classifier;
    }

    pub fn parse(&self, bytes: &[u8]) -> Result<Conversation, TranscriptError> {
        parse_transcript_with(bytes, self.parse_options, &self.sentence_rules)
    }

    pub fn analyze(&mut self, conv: &Conversation, audio: &AudioInputs) -> Result<Assessment, EngineError> {
        let feats = extract_features(conv, &self.resources, &self.features, self.classifier.as_mut(), audio)?;
        let mut assessment = assess_conversation(conv, &feats, &self.rules)?;
        if let Some(echo) = &self.config_echo {
            assessment.config = echo.clone();
        }
        Ok(assessment)
    }

    pub fn analyze_bytes(&mut self, transcript: &[u8], audio: &AudioInputs) -> Result<Assessment, EngineError> {
        let conv = self.parse(transcript)?;
        self.analyze(&conv, audio)
    }
}
