//! Layered run configuration: built-in defaults, a flat `key = value` file,
//! then command-line overrides. Every resolved value remembers where it came
//! from.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::external::{Endpoint, ExternalClassifier, ExternalClassifierConfig, Fallback};
use crate::classify::{
    BaselineClassifier, QuestionRules, SentenceClassifier, StopWords, BUILTIN_PROVIDING_CUES, BUILTIN_SEEKING_CUES,
};
use crate::engine::Engine;
use crate::features::{FeatureConfig, Resources};
use crate::lexicon::{
    load_lexicon, ExplanationCues, JargonDict, BUILTIN_EXPLANATION_CUES, BUILTIN_JARGON, BUILTIN_JARGON_EXCLUSIONS,
};
use crate::rules::RuleConfig;
use crate::transcript::{ParseOptions, SentenceRules};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Default taken from published practice guidance.
    Default,
    /// Default picked for this implementation; no published value exists.
    ArtifactDefault,
    File,
    Flag,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Default => "default",
            Provenance::ArtifactDefault => "artifact_default",
            Provenance::File => "file",
            Provenance::Flag => "flag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}` ({origin})")]
    UnknownKey { key: String, origin: Provenance },
    #[error("invalid value `{value}` for `{key}`: {message}")]
    Invalid { key: String, value: String, message: String },
    #[error("config line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cannot load {key} from {path}: {message}")]
    Resource { key: String, path: String, message: String },
}

/// Paths for the editable word lists. `None` selects the bundled copy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourcePaths {
    pub lexicon: Option<PathBuf>,
    pub jargon: Option<PathBuf>,
    pub jargon_exclusions: Option<PathBuf>,
    pub explanation_cues: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub empathy_providing: Option<PathBuf>,
    pub empathy_seeking: Option<PathBuf>,
    pub open_questions: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rules: RuleConfig,
    pub features: FeatureConfig,
    pub resources: ResourcePaths,
    pub external: Option<Endpoint>,
    pub external_timeout_ms: u64,
    pub external_fallback: Fallback,
    pub strict: bool,
    pub out: Option<PathBuf>,
    provenance: BTreeMap<&'static str, Provenance>,
}

const RULE_KEYS: &[&str] = &[
    "pause_good_ms",
    "words_per_sentence_max",
    "speech_ratio_max",
    "similarity_threshold",
    "high_emotion_rate",
    "high_neg_rate",
    "polarity_dead_zone",
    "high_cog_rate",
    "jargon_overuse_rate",
    "second_over_first_margin",
    "silence_encouragement_fraction",
    "silence_ratio_max",
];

const OTHER_KEYS: &[&str] = &[
    "silence_percentile",
    "pause_confidence",
    "big_word_letters",
    "authenticity_proxy",
    "lexicon",
    "jargon",
    "jargon_exclusions",
    "explanation_cues",
    "stopwords",
    "empathy_providing",
    "empathy_seeking",
    "open_questions",
    "abbreviations",
    "external_classifier",
    "external_timeout_ms",
    "external_fallback",
    "strict",
    "out",
];

/// Defaults that come from published guidance rather than this
/// implementation's own choice.
const GROUNDED_DEFAULTS: &[&str] = &[
    "pause_good_ms",
    "words_per_sentence_max",
    "speech_ratio_max",
    "silence_ratio_max",
    "silence_percentile",
];

pub const DEFAULT_EXTERNAL_TIMEOUT_MS: u64 = 5_000;

pub fn keys() -> impl Iterator<Item = &'static str> {
    RULE_KEYS.iter().chain(OTHER_KEYS).copied()
}

fn canonical(key: &str) -> Option<&'static str> {
    keys().find(|k| *k == key)
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.to_string(),
        value: raw.to_string(),
        message: e.to_string(),
    })
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_num(key, raw)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::Invalid {
            key: key.into(),
            value: raw.into(),
            message: "must be finite".into(),
        })
    }
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Invalid {
            key: key.into(),
            value: raw.into(),
            message: "expected true or false".into(),
        }),
    }
}

fn parse_path(raw: &str) -> Option<PathBuf> {
    match raw {
        "" | "builtin" => None,
        p => Some(PathBuf::from(p)),
    }
}

fn path_value(p: &Option<PathBuf>) -> Value {
    match p {
        Some(p) => Value::String(p.display().to_string()),
        None => Value::String("builtin".into()),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let provenance = keys()
            .map(|k| {
                let p = if GROUNDED_DEFAULTS.contains(&k) {
                    Provenance::Default
                } else {
                    Provenance::ArtifactDefault
                };
                (k, p)
            })
            .collect();
        RunConfig {
            rules: RuleConfig::default(),
            features: FeatureConfig::default(),
            resources: ResourcePaths::default(),
            external: None,
            external_timeout_ms: DEFAULT_EXTERNAL_TIMEOUT_MS,
            external_fallback: Fallback::Baseline,
            strict: false,
            out: None,
            provenance,
        }
    }
}

impl RunConfig {
    pub fn provenance(&self, key: &str) -> Option<Provenance> {
        self.provenance.get(key).copied()
    }

    /// Sets one value from its text form.
    pub fn set(&mut self, key: &str, raw: &str, origin: Provenance) -> Result<(), ConfigError> {
        let Some(key) = canonical(key) else {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                origin,
            });
        };
        let raw = raw.trim();
        let r = &mut self.rules;
        let res = &mut self.resources;
        match key {
            "pause_good_ms" => r.pause_good_ms = parse_num(key, raw)?,
            "words_per_sentence_max" => r.words_per_sentence_max = parse_f64(key, raw)?,
            "speech_ratio_max" => r.speech_ratio_max = parse_f64(key, raw)?,
            "similarity_threshold" => r.similarity_threshold = parse_f64(key, raw)?,
            "high_emotion_rate" => r.high_emotion_rate = parse_f64(key, raw)?,
            "high_neg_rate" => r.high_neg_rate = parse_f64(key, raw)?,
            "polarity_dead_zone" => r.polarity_dead_zone = parse_f64(key, raw)?,
            "high_cog_rate" => r.high_cog_rate = parse_f64(key, raw)?,
            "jargon_overuse_rate" => r.jargon_overuse_rate = parse_f64(key, raw)?,
            "second_over_first_margin" => r.second_over_first_margin = parse_f64(key, raw)?,
            "silence_encouragement_fraction" => r.silence_encouragement_fraction = parse_f64(key, raw)?,
            "silence_ratio_max" => r.silence_ratio_max = parse_f64(key, raw)?,
            "silence_percentile" => self.features.silence_percentile = parse_num(key, raw)?,
            "pause_confidence" => self.features.pause_confidence = parse_f64(key, raw)?,
            "big_word_letters" => self.features.big_word_letters = parse_num(key, raw)?,
            "authenticity_proxy" => self.features.authenticity_proxy = parse_bool(key, raw)?,
            "lexicon" => res.lexicon = parse_path(raw),
            "jargon" => res.jargon = parse_path(raw),
            "jargon_exclusions" => res.jargon_exclusions = parse_path(raw),
            "explanation_cues" => res.explanation_cues = parse_path(raw),
            "stopwords" => res.stopwords = parse_path(raw),
            "empathy_providing" => res.empathy_providing = parse_path(raw),
            "empathy_seeking" => res.empathy_seeking = parse_path(raw),
            "open_questions" => res.open_questions = parse_path(raw),
            "abbreviations" => res.abbreviations = parse_path(raw),
            "external_classifier" => {
                self.external = match raw {
                    "" | "none" => None,
                    spec => Some(spec.parse().map_err(|message| ConfigError::Invalid {
                        key: key.into(),
                        value: raw.into(),
                        message,
                    })?),
                }
            }
            "external_timeout_ms" => self.external_timeout_ms = parse_num(key, raw)?,
            "external_fallback" => {
                self.external_fallback = raw.parse().map_err(|message| ConfigError::Invalid {
                    key: key.into(),
                    value: raw.into(),
                    message,
                })?
            }
            "strict" => self.strict = parse_bool(key, raw)?,
            "out" => self.out = parse_path(raw),
            _ => unreachable!("every key in the table is handled"),
        }
        self.provenance.insert(key, origin);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let r = &self.rules;
        let res = &self.resources;
        let v = match canonical(key)? {
            "pause_good_ms" => json!(r.pause_good_ms),
            "words_per_sentence_max" => json!(r.words_per_sentence_max),
            "speech_ratio_max" => json!(r.speech_ratio_max),
            "similarity_threshold" => json!(r.similarity_threshold),
            "high_emotion_rate" => json!(r.high_emotion_rate),
            "high_neg_rate" => json!(r.high_neg_rate),
            "polarity_dead_zone" => json!(r.polarity_dead_zone),
            "high_cog_rate" => json!(r.high_cog_rate),
            "jargon_overuse_rate" => json!(r.jargon_overuse_rate),
            "second_over_first_margin" => json!(r.second_over_first_margin),
            "silence_encouragement_fraction" => json!(r.silence_encouragement_fraction),
            "silence_ratio_max" => json!(r.silence_ratio_max),
            "silence_percentile" => json!(self.features.silence_percentile),
            "pause_confidence" => json!(self.features.pause_confidence),
            "big_word_letters" => json!(self.features.big_word_letters),
            "authenticity_proxy" => json!(self.features.authenticity_proxy),
            "lexicon" => path_value(&res.lexicon),
            "jargon" => path_value(&res.jargon),
            "jargon_exclusions" => path_value(&res.jargon_exclusions),
            "explanation_cues" => path_value(&res.explanation_cues),
            "stopwords" => path_value(&res.stopwords),
            "empathy_providing" => path_value(&res.empathy_providing),
            "empathy_seeking" => path_value(&res.empathy_seeking),
            "open_questions" => path_value(&res.open_questions),
            "abbreviations" => path_value(&res.abbreviations),
            "external_classifier" => match &self.external {
                Some(e) => json!(e.to_string()),
                None => json!("none"),
            },
            "external_timeout_ms" => json!(self.external_timeout_ms),
            "external_fallback" => serde_json::to_value(self.external_fallback).expect("fallback serializes"),
            "strict" => json!(self.strict),
            "out" => json!(self.out.as_ref().map_or_else(|| ".".to_string(), |p| p.display().to_string())),
            _ => unreachable!("every key in the table is handled"),
        };
        Some(v)
    }

    /// Every resolved value plus a `provenance` map. The output directory is
    /// left out so payloads do not depend on where they were written.
    pub fn snapshot(&self) -> BTreeMap<String, Value> {
        let mut out: BTreeMap<String, Value> = keys()
            .filter(|k| *k != "out")
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect();
        let prov: serde_json::Map<String, Value> = keys()
            .filter(|k| *k != "out")
            .map(|k| (k.to_string(), json!(self.provenance[k].to_string())))
            .collect();
        out.insert("provenance".into(), Value::Object(prov));
        out
    }

    /// `key = value  # provenance` lines, one per key.
    pub fn to_text(&self) -> String {
        keys()
            .map(|k| {
                let v = match self.get(k).expect("known key") {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                format!("{k} = {v}  # {}\n", self.provenance[k])
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, value: String, message: &str| ConfigError::Invalid {
            key: key.into(),
            value,
            message: message.into(),
        };
        self.rules.validate().map_err(|e| invalid("rules", String::new(), &e.to_string()))?;
        let p = self.features.silence_percentile;
        if !(1..=99).contains(&p) {
            return Err(invalid("silence_percentile", p.to_string(), "must be within 1..=99"));
        }
        let c = self.features.pause_confidence;
        if !(0.0..=1.0).contains(&c) {
            return Err(invalid("pause_confidence", c.to_string(), "must be within [0, 1]"));
        }
        if self.external_timeout_ms == 0 {
            return Err(invalid("external_timeout_ms", "0".into(), "must be positive"));
        }
        Ok(())
    }
}

/// Parses a config file into `(line, key, value)` entries.
pub fn parse_config_text(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Malformed {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Malformed {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Applies defaults, then the file, then flag overrides. Unknown keys are an
/// error in strict mode and a warning otherwise.
pub fn resolve_config(file: Option<&str>, flags: &[(String, String)], strict: bool) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let strict = strict || flags.iter().any(|(k, v)| k == "strict" && parse_bool(k, v).unwrap_or(false));
    let mut apply = |k: &str, v: &str, origin: Provenance| match cfg.set(k, v, origin) {
        Err(ConfigError::UnknownKey { key, origin }) if !strict => {
            log::warn!("ignoring unknown config key `{key}` ({origin})");
            Ok(())
        }
        other => other,
    };
    if let Some(text) = file {
        for (_, k, v) in parse_config_text(text)? {
            apply(&k, &v, Provenance::File)?;
        }
    }
    for (k, v) in flags {
        apply(k, v, Provenance::Flag)?;
    }
    if strict {
        cfg.strict = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_resource(key: &str, path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Resource {
        key: key.into(),
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn text_or(key: &str, path: &Option<PathBuf>, builtin: &str) -> Result<String, ConfigError> {
    match path {
        Some(p) => read_resource(key, p),
        None => Ok(builtin.to_string()),
    }
}

/// Loads every word list named in the config and assembles an engine.
pub fn build_engine(cfg: &RunConfig) -> Result<Engine, ConfigError> {
    let res = &cfg.resources;
    let lexicon = match &res.lexicon {
        Some(p) => {
            let text = read_resource("lexicon", p)?;
            load_lexicon(text.as_bytes()).map_err(|e| ConfigError::Resource {
                key: "lexicon".into(),
                path: p.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => crate::lexicon::Lexicon::builtin(),
    };
    let jargon = JargonDict::load(
        &text_or("jargon", &res.jargon, BUILTIN_JARGON)?,
        &text_or("jargon_exclusions", &res.jargon_exclusions, BUILTIN_JARGON_EXCLUSIONS)?,
    );
    let explanation_cues = ExplanationCues::from_list(&text_or(
        "explanation_cues",
        &res.explanation_cues,
        BUILTIN_EXPLANATION_CUES,
    )?);

    let mut baseline = BaselineClassifier::default().with_cues(
        &text_or("empathy_providing", &res.empathy_providing, BUILTIN_PROVIDING_CUES)?,
        &text_or("empathy_seeking", &res.empathy_seeking, BUILTIN_SEEKING_CUES)?,
    );
    if let Some(p) = &res.stopwords {
        baseline.stopwords = StopWords::from_list(&read_resource("stopwords", p)?);
    }
    if let Some(p) = &res.open_questions {
        baseline.questions =
            QuestionRules::parse(&read_resource("open_questions", p)?).map_err(|e| ConfigError::Resource {
                key: "open_questions".into(),
                path: p.display().to_string(),
                message: format!("line {}: {}", e.line, e.message),
            })?;
    }
    let classifier: Box<dyn SentenceClassifier + Send> = match &cfg.external {
        Some(endpoint) => Box::new(ExternalClassifier::new(
            ExternalClassifierConfig {
                endpoint: endpoint.clone(),
                timeout_ms: cfg.external_timeout_ms,
                fallback: cfg.external_fallback,
            },
            baseline,
        )),
        None => Box::new(baseline),
    };

    let resources = Resources {
        lexicon,
        jargon,
        explanation_cues,
    };
    let mut engine = Engine::new(resources, cfg.rules.clone(), classifier);
    engine.features = cfg.features.clone();
    engine.parse_options = ParseOptions { strict: cfg.strict };
    if let Some(p) = &res.abbreviations {
        engine.sentence_rules = SentenceRules::from_list(&read_resource("abbreviations", p)?);
    }
    engine.config_echo = Some(cfg.snapshot());
    Ok(engine)
}
