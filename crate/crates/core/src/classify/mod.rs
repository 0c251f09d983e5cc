//! Sentence-level classifiers: open-ended questions, empathy cues and
//! paraphrase similarity. Each has a deterministic baseline; an external
//! model can be plugged in through [`external`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::{tokenize, Role, SentenceSpan};

pub mod external;

pub use external::{Endpoint, ExternalClassifier, ExternalClassifierConfig, Fallback};

pub const BUILTIN_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
pub const BUILTIN_PROVIDING_CUES: &str = include_str!("../../data/empathy_providing.txt");
pub const BUILTIN_SEEKING_CUES: &str = include_str!("../../data/empathy_seeking.txt");
pub const BUILTIN_QUESTION_RULES: &str = include_str!("../../data/open_question.txt");

pub const OPEN: &str = "open";
pub const POLAR: &str = "polar";
pub const NO_QUESTION: &str = "none";
pub const PROVIDING: &str = "providing";
pub const SEEKING: &str = "seeking";
pub const NEUTRAL: &str = "neutral";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    OpenQuestion,
    Empathy,
    Similarity,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::OpenQuestion => "open_question",
            Task::Empathy => "empathy",
            Task::Similarity => "similarity",
        }
    }

    /// Labels a verdict for this task may carry. Similarity verdicts carry no
    /// label (or the literal "none").
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Task::OpenQuestion => &[OPEN, POLAR, NO_QUESTION],
            Task::Empathy => &[SEEKING, PROVIDING, NEUTRAL],
            Task::Similarity => &["none"],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Baseline,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierVerdict {
    pub task: Task,
    pub label: Option<String>,
    pub score: f64,
    pub source: Source,
}

impl ClassifierVerdict {
    fn baseline(task: Task, label: Option<&str>, score: f64) -> ClassifierVerdict {
        ClassifierVerdict {
            task,
            label: label.map(str::to_string),
            score,
            source: Source::Baseline,
        }
    }

    pub fn is(&self, label: &str) -> bool {
        self.label.as_deref() == Some(label)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("similarity needs two non-empty token lists")]
    EmptyInput,
    #[error("external classifier unavailable: {0}")]
    Unavailable(String),
    #[error("external classifier timed out after {0} ms")]
    Timeout(u64),
    #[error("malformed classifier response: {0}")]
    Malformed(String),
    #[error("classifier score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("label `{label}` is not valid for task {task}")]
    BadLabel { task: Task, label: String },
    #[error("response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
}

/// A sentence together with the text it was cut from.
#[derive(Debug, Clone, Copy)]
pub struct Sentence<'a> {
    pub span: &'a SentenceSpan,
    pub text: &'a str,
}

impl<'a> Sentence<'a> {
    pub fn of(segment_text: &'a str, span: &'a SentenceSpan) -> Sentence<'a> {
        Sentence {
            span,
            text: span.text(segment_text),
        }
    }
}

pub trait SentenceClassifier {
    fn open_question(&mut self, sentence: Sentence<'_>) -> Result<ClassifierVerdict, ClassifyError>;
    fn empathy(&mut self, sentence: Sentence<'_>, role: Role) -> Result<ClassifierVerdict, ClassifyError>;
    fn similarity(&mut self, a: Sentence<'_>, b: Sentence<'_>) -> Result<ClassifierVerdict, ClassifyError>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn builtin() -> StopWords {
        StopWords::from_list(BUILTIN_STOPWORDS)
    }

    pub fn from_list(text: &str) -> StopWords {
        StopWords(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .flat_map(tokenize)
                .collect(),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }
}

/// Cosine similarity of term-frequency vectors after stop-word removal.
/// Vectors that become empty yield 0.
pub fn similarity<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B], stop: &StopWords) -> Result<f64, ClassifyError> {
    if a.is_empty() || b.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    let tf = |tokens: &mut dyn Iterator<Item = &str>| {
        let mut m: BTreeMap<String, u64> = BTreeMap::new();
        for t in tokens.filter(|t| !stop.contains(t)) {
            *m.entry(t.to_string()).or_default() += 1;
        }
        m
    };
    let va = tf(&mut a.iter().map(AsRef::as_ref));
    let vb = tf(&mut b.iter().map(AsRef::as_ref));
    if va.is_empty() || vb.is_empty() {
        return Ok(0.0);
    }
    let dot: u64 = va.iter().filter_map(|(k, x)| vb.get(k).map(|y| x * y)).sum();
    let na: u64 = va.values().map(|x| x * x).sum();
    let nb: u64 = vb.values().map(|x| x * x).sum();
    Ok((dot as f64 / ((na as f64) * (nb as f64)).sqrt()).clamp(0.0, 1.0))
}

type Phrase = Vec<String>;

fn phrase_list(text: &str) -> Vec<Phrase> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .map(tokenize)
        .filter(|p| !p.is_empty())
        .collect()
}

fn contains_phrase(tokens: &[String], phrases: &[Phrase]) -> bool {
    phrases
        .iter()
        .any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed question rule at line {line}: {message}")]
pub struct QuestionRuleError {
    pub line: usize,
    pub message: String,
}

/// First-token rules for question typing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionRules {
    pub open_starters: BTreeSet<String>,
    pub polar_starters: BTreeSet<String>,
    /// Words that turn a "how ..." question into a closed one ("how many").
    pub how_exceptions: BTreeSet<String>,
    /// Phrases that mark an open prompt even without a question mark.
    pub open_phrases: Vec<Phrase>,
}

impl Default for QuestionRules {
    fn default() -> Self {
        QuestionRules::parse(BUILTIN_QUESTION_RULES).expect("bundled question rules are valid")
    }
}

impl QuestionRules {
    /// Lines of `open <word>`, `polar <word>`, `how_except <word>` or
    /// `phrase <words...>`.
    pub fn parse(text: &str) -> Result<QuestionRules, QuestionRuleError> {
        let mut rules = QuestionRules {
            open_starters: BTreeSet::new(),
            polar_starters: BTreeSet::new(),
            how_exceptions: BTreeSet::new(),
            open_phrases: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let words = tokenize(rest);
            let err = |message: &str| QuestionRuleError {
                line: i + 1,
                message: message.to_string(),
            };
            let single = || match words.as_slice() {
                [w] => Ok(w.clone()),
                _ => Err(err("expected exactly one word")),
            };
            match kind {
                "open" => {
                    rules.open_starters.insert(single()?);
                }
                "polar" => {
                    rules.polar_starters.insert(single()?);
                }
                "how_except" => {
                    rules.how_exceptions.insert(single()?);
                }
                "phrase" if !words.is_empty() => rules.open_phrases.push(words),
                _ => return Err(err(&format!("unknown rule `{kind}`"))),
            }
        }
        Ok(rules)
    }
}

/// Rule- and phrase-lexicon baselines for the three tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineClassifier {
    pub questions: QuestionRules,
    pub providing_cues: Vec<Phrase>,
    pub seeking_cues: Vec<Phrase>,
    pub stopwords: StopWords,
}

impl Default for BaselineClassifier {
    fn default() -> Self {
        BaselineClassifier {
            questions: QuestionRules::default(),
            providing_cues: phrase_list(BUILTIN_PROVIDING_CUES),
            seeking_cues: phrase_list(BUILTIN_SEEKING_CUES),
            stopwords: StopWords::builtin(),
        }
    }
}

impl BaselineClassifier {
    pub fn with_cues(mut self, providing: &str, seeking: &str) -> BaselineClassifier {
        self.providing_cues = phrase_list(providing);
        self.seeking_cues = phrase_list(seeking);
        self
    }

    pub fn detect_open_question(&self, sentence: &SentenceSpan) -> ClassifierVerdict {
        let q = &self.questions;
        let tokens = &sentence.tokens;
        let first = tokens.first().map(String::as_str).unwrap_or("");
        let how_closed = first == "how" && tokens.get(1).is_some_and(|w| q.how_exceptions.contains(w));
        let open_start = sentence.is_question && q.open_starters.contains(first) && !how_closed;
        if open_start || contains_phrase(tokens, &q.open_phrases) {
            return ClassifierVerdict::baseline(Task::OpenQuestion, Some(OPEN), 1.0);
        }
        if sentence.is_question && q.polar_starters.contains(first) {
            return ClassifierVerdict::baseline(Task::OpenQuestion, Some(POLAR), 1.0);
        }
        ClassifierVerdict::baseline(Task::OpenQuestion, Some(NO_QUESTION), 0.0)
    }

    /// Providing cues only count for providers, seeking cues only for
    /// patients.
    pub fn classify_empathy(&self, sentence: &SentenceSpan, role: Role) -> ClassifierVerdict {
        let tokens = &sentence.tokens;
        let hit = match role {
            Role::Provider if contains_phrase(tokens, &self.providing_cues) => Some(PROVIDING),
            Role::Patient if contains_phrase(tokens, &self.seeking_cues) => Some(SEEKING),
            _ => None,
        };
        match hit {
            Some(label) => ClassifierVerdict::baseline(Task::Empathy, Some(label), 1.0),
            None => ClassifierVerdict::baseline(Task::Empathy, Some(NEUTRAL), 0.0),
        }
    }

    pub fn similarity(&self, a: &[String], b: &[String]) -> Result<ClassifierVerdict, ClassifyError> {
        let score = similarity(a, b, &self.stopwords)?;
        Ok(ClassifierVerdict::baseline(Task::Similarity, None, score))
    }
}

impl SentenceClassifier for BaselineClassifier {
    fn open_question(&mut self, sentence: Sentence<'_>) -> Result<ClassifierVerdict, ClassifyError> {
        Ok(self.detect_open_question(sentence.span))
    }

    fn empathy(&mut self, sentence: Sentence<'_>, role: Role) -> Result<ClassifierVerdict, ClassifyError> {
        Ok(self.classify_empathy(sentence.span, role))
    }

    fn similarity(&mut self, a: Sentence<'_>, b: Sentence<'_>) -> Result<ClassifierVerdict, ClassifyError> {
        BaselineClassifier::similarity(self, &a.span.tokens, &b.span.tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::split_sentences;

    fn first(text: &str) -> SentenceSpan {
        split_sentences(text).remove(0)
    }

    #[test]
    fn open_and_polar_questions() {
        let c = BaselineClassifier::default();
        let v = c.detect_open_question(&first("How are you feeling about this?"));
        assert_eq!((v.label.as_deref(), v.score), (Some(OPEN), 1.0));
        let v = c.detect_open_question(&first("Are you in pain?"));
        assert_eq!((v.label.as_deref(), v.score), (Some(POLAR), 1.0));
        assert!(c.detect_open_question(&first("Tell me more about the pain at night.")).is(OPEN));
        assert!(c.detect_open_question(&first("How many pills are left?")).is(NO_QUESTION));
        let v = c.detect_open_question(&first("What time is it."));
        assert_eq!((v.label.as_deref(), v.score), (Some(NO_QUESTION), 0.0));
    }

    #[test]
    fn empathy_cues_are_role_gated() {
        let c = BaselineClassifier::default();
        let hard = first("I can see this is really hard for you.");
        assert!(c.classify_empathy(&hard, Role::Provider).is(PROVIDING));
        assert!(c.classify_empathy(&hard, Role::Patient).is(NEUTRAL));
        let scared = first("I'm scared about what comes next.");
        assert!(c.classify_empathy(&scared, Role::Patient).is(SEEKING));
        assert!(c.classify_empathy(&scared, Role::Provider).is(NEUTRAL));
        assert!(c
            .classify_empathy(&first("Your labs came back normal."), Role::Provider)
            .is(NEUTRAL));
    }

    #[test]
    fn similarity_basics() {
        let stop = StopWords::builtin();
        let a = tokenize("the pain gets worse at night");
        assert_eq!(similarity(&a, &a, &stop).unwrap(), 1.0);
        assert_eq!(similarity(&tokenize("red apple"), &tokenize("blue car"), &stop).unwrap(), 0.0);
        assert_eq!(similarity(&tokenize("the a"), &tokenize("pain"), &stop).unwrap(), 0.0);
        assert_eq!(similarity::<String, String>(&[], &a, &stop), Err(ClassifyError::EmptyInput));
    }

    #[test]
    fn paraphrase_example_by_hand() {
        // After removing {the, my, at}: {pain, gets, worse, night} vs
        // {pain, is, worse, night}; three shared terms of four each.
        let stop = StopWords::from_list("the\nmy\nat\n");
        let s = similarity(
            &tokenize("my pain gets worse at night"),
            &tokenize("the pain is worse at night"),
            &stop,
        )
        .unwrap();
        assert_eq!(s, 0.75);

        // The built-in list also drops `is`: {pain, gets, worse, night}
        // against {pain, worse, night}.
        let s = similarity(
            &tokenize("my pain gets worse at night"),
            &tokenize("the pain is worse at night"),
            &StopWords::builtin(),
        )
        .unwrap();
        assert!((s - 3.0 / 12f64.sqrt()).abs() < 1e-12, "{s}");
        assert!(s >= crate::RuleConfig::default().similarity_threshold);
    }

    #[test]
    fn question_rules_parse_errors() {
        assert!(QuestionRules::parse("open what\npolar is\n").is_ok());
        assert_eq!(QuestionRules::parse("bogus x").unwrap_err().line, 1);
        assert!(QuestionRules::parse("open two words").is_err());
    }

    #[test]
    fn task_label_sets() {
        assert!(Task::OpenQuestion.labels().contains(&"polar"));
        assert!(!Task::Empathy.labels().contains(&"open"));
        assert_eq!(serde_json::to_string(&Task::OpenQuestion).unwrap(), "\"open_question\"");
    }
}
