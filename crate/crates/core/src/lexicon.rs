//! Word-category scoring in the style of LIWC, sentence statistics and
//! medical jargon detection.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::transcript::{tokenize, SentenceSpan};

/// Categories every lexicon must define because the rule engine reads them.
pub const REQUIRED_CATEGORIES: [&str; 8] = [
    "pos_emotion",
    "neg_emotion",
    "anger",
    "anxiety",
    "sadness",
    "cog_process",
    "pron_first",
    "pron_second",
];

pub const BUILTIN_LEXICON: &str = include_str!("../data/lexicon.txt");
pub const BUILTIN_JARGON: &str = include_str!("../data/jargon.txt");
pub const BUILTIN_JARGON_EXCLUSIONS: &str = include_str!("../data/jargon_exclusions.txt");
pub const BUILTIN_EXPLANATION_CUES: &str = include_str!("../data/explanation_cues.txt");

pub const DEFAULT_BIG_WORD_LETTERS: usize = 7;
pub const MAX_JARGON_TOKENS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("lexicon is missing required category `{0}`")]
    MissingCategory(String),
    #[error("malformed lexicon line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate entry `{entry}` in category `{category}` (line {line})")]
    Duplicate {
        category: String,
        entry: String,
        line: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entry {
    Literal(String),
    /// `feel*`: matches any token starting with the stem.
    Prefix(String),
}

impl Entry {
    pub fn matches(&self, token: &str) -> bool {
        match self {
            Entry::Literal(s) => s == token,
            Entry::Prefix(s) => token.starts_with(s.as_str()),
        }
    }
}

impl std::fmt::Display for Entry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entry::Literal(s) => f.write_str(s),
            Entry::Prefix(s) => write!(f, "{s}*"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Category {
    entries: Vec<Entry>,
    literals: HashSet<String>,
    prefixes: HashSet<String>,
}

impl Category {
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// The longest entry matching `token`, if any.
    pub fn lookup(&self, token: &str) -> Option<Entry> {
        if self.literals.contains(token) {
            return Some(Entry::Literal(token.to_string()));
        }
        token
            .char_indices()
            .map(|(i, c)| &token[..i + c.len_utf8()])
            .rev()
            .find(|stem| self.prefixes.contains(*stem))
            .map(|stem| Entry::Prefix(stem.to_string()))
    }

    fn insert(&mut self, entry: Entry) -> bool {
        let fresh = match &entry {
            Entry::Literal(s) => self.literals.insert(s.clone()),
            Entry::Prefix(s) => self.prefixes.insert(s.clone()),
        };
        if fresh {
            self.entries.push(entry);
        }
        fresh
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    categories: BTreeMap<String, Category>,
}

impl Lexicon {
    pub fn builtin() -> Lexicon {
        load_lexicon(BUILTIN_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn category(&self, name: &str) -> Option<&Category> {
        self.categories.get(name)
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &Category)> {
        self.categories.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, cat) in &self.categories {
            out.push('%');
            out.push_str(name);
            out.push('\n');
            for e in &cat.entries {
                out.push_str(&e.to_string());
                out.push('\n');
            }
        }
        out
    }
}

fn valid_entry_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Parses the lexicon text format: `%name` headers, comma- or
/// newline-separated entries, `#` comments.
pub fn load_lexicon(bytes: &[u8]) -> Result<Lexicon, LexiconError> {
    let text = std::str::from_utf8(bytes).map_err(|e| LexiconError::Malformed {
        line: 1,
        message: format!("invalid UTF-8 ({e})"),
    })?;
    let mut lex = Lexicon::default();
    let mut current: Option<String> = None;
    for (n, raw_line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('%') {
            let name = name.trim().to_lowercase();
            if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(LexiconError::Malformed {
                    line: line_no,
                    message: format!("invalid category name `{name}`"),
                });
            }
            lex.categories.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some(category) = current.as_ref() else {
            return Err(LexiconError::Malformed {
                line: line_no,
                message: "entry before any `%category` header".into(),
            });
        };
        for item in line.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let item = item.to_lowercase();
            let (stem, wildcard) = match item.strip_suffix('*') {
                Some(stem) => (stem, true),
                None => (item.as_str(), false),
            };
            if stem.is_empty() || !stem.chars().all(valid_entry_char) {
                return Err(LexiconError::Malformed {
                    line: line_no,
                    message: format!("invalid entry `{item}` (wildcard is only allowed at the end)"),
                });
            }
            let entry = if wildcard {
                Entry::Prefix(stem.to_string())
            } else {
                Entry::Literal(stem.to_string())
            };
            let cat = lex.categories.get_mut(category).expect("header inserted");
            if !cat.insert(entry) {
                return Err(LexiconError::Duplicate {
                    category: category.clone(),
                    entry: item.clone(),
                    line: line_no,
                });
            }
        }
    }
    for required in REQUIRED_CATEGORIES {
        if !lex.categories.contains_key(required) {
            return Err(LexiconError::MissingCategory(required.to_string()));
        }
    }
    Ok(lex)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot score an empty token list")]
pub struct EmptyTokens;

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScores {
    /// Matches per 100 words, per category.
    pub rates: BTreeMap<String, f64>,
    pub word_count: usize,
    pub sentence_count: usize,
    pub words_per_sentence: f64,
    /// Fraction of tokens with at least the configured number of letters.
    pub big_word_rate: f64,
}

impl CategoryScores {
    pub fn rate(&self, category: &str) -> f64 {
        self.rates.get(category).copied().unwrap_or(0.0)
    }

    /// Transparent stand-in for an authenticity score:
    /// first-person + second-person rate minus cognitive-process rate,
    /// clamped to [0, 100].
    pub fn authenticity_proxy(&self) -> f64 {
        (self.rate("pron_first") + self.rate("pron_second") - self.rate("cog_process")).clamp(0.0, 100.0)
    }
}

/// Scores a token list treated as a single sentence.
pub fn score_categories<S: AsRef<str>>(tokens: &[S], lex: &Lexicon) -> Result<CategoryScores, EmptyTokens> {
    score_token_groups(std::iter::once(tokens), lex, DEFAULT_BIG_WORD_LETTERS)
}

pub fn score_sentences(
    sentences: &[SentenceSpan],
    lex: &Lexicon,
    big_word_letters: usize,
) -> Result<CategoryScores, EmptyTokens> {
    score_token_groups(sentences.iter().map(|s| s.tokens.as_slice()), lex, big_word_letters)
}

fn score_token_groups<'a, S, I>(groups: I, lex: &Lexicon, big_word_letters: usize) -> Result<CategoryScores, EmptyTokens>
where
    S: AsRef<str> + 'a,
    I: IntoIterator<Item = &'a [S]>,
{
    let mut counts: BTreeMap<&str, usize> = lex.categories.keys().map(|k| (k.as_str(), 0)).collect();
    let mut words = 0usize;
    let mut sentences = 0usize;
    let mut big = 0usize;
    for group in groups {
        sentences += 1;
        for token in group {
            let token = token.as_ref();
            words += 1;
            if token.chars().filter(|c| c.is_alphabetic()).count() >= big_word_letters {
                big += 1;
            }
            for (name, cat) in &lex.categories {
                if cat.lookup(token).is_some() {
                    *counts.get_mut(name.as_str()).expect("seeded") += 1;
                }
            }
        }
    }
    if words == 0 {
        return Err(EmptyTokens);
    }
    let rates = counts
        .into_iter()
        .map(|(k, c)| (k.to_string(), 100.0 * c as f64 / words as f64))
        .collect();
    Ok(CategoryScores {
        rates,
        word_count: words,
        sentence_count: sentences,
        words_per_sentence: words as f64 / sentences as f64,
        big_word_rate: big as f64 / words as f64,
    })
}

/// Medical terms (space-joined token sequences) minus excluded common terms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JargonDict {
    terms: HashSet<String>,
    exclusions: BTreeSet<String>,
    longest: usize,
}

fn normalize_term(line: &str) -> Option<String> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return None;
    }
    Some(tokenize(line).join(" ")).filter(|t| !t.is_empty())
}

impl JargonDict {
    pub fn builtin() -> JargonDict {
        JargonDict::load(BUILTIN_JARGON, BUILTIN_JARGON_EXCLUSIONS)
    }

    /// One term per line in both inputs. Terms longer than four tokens are
    /// skipped with a warning.
    pub fn load(terms: &str, exclusions: &str) -> JargonDict {
        let exclusions: BTreeSet<String> = exclusions.lines().filter_map(normalize_term).collect();
        let mut dict = JargonDict {
            exclusions,
            ..JargonDict::default()
        };
        for term in terms.lines().filter_map(normalize_term) {
            let n = term.split(' ').count();
            if n > MAX_JARGON_TOKENS {
                log::warn!("skipping jargon term `{term}`: longer than {MAX_JARGON_TOKENS} words");
                continue;
            }
            if dict.exclusions.contains(&term) {
                continue;
            }
            dict.longest = dict.longest.max(n);
            dict.terms.insert(term);
        }
        dict
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn is_excluded(&self, term: &str) -> bool {
        self.exclusions.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JargonMatch {
    pub term: String,
    /// Index of the first token of the match.
    pub index: usize,
    pub len: usize,
}

/// Non-overlapping dictionary matches over token n-grams (n <= 4). Longer
/// spans are claimed first; among equal lengths the earlier span wins.
/// Results are ordered by position.
pub fn find_jargon<S: AsRef<str>>(tokens: &[S], dict: &JargonDict) -> Vec<JargonMatch> {
    let mut taken = vec![false; tokens.len()];
    let mut found = Vec::new();
    for n in (1..=dict.longest.min(tokens.len())).rev() {
        let mut i = 0;
        while i + n <= tokens.len() {
            if taken[i..i + n].iter().any(|&t| t) {
                i += 1;
                continue;
            }
            let gram = tokens[i..i + n]
                .iter()
                .map(AsRef::as_ref)
                .collect::<Vec<&str>>()
                .join(" ");
            if dict.terms.contains(&gram) {
                taken[i..i + n].iter_mut().for_each(|t| *t = true);
                found.push(JargonMatch {
                    term: gram,
                    index: i,
                    len: n,
                });
                i += n;
            } else {
                i += 1;
            }
        }
    }
    found.sort_by_key(|m| m.index);
    found
}

/// A jargon match located inside a segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocatedJargon {
    pub sentence: usize,
    pub within: JargonMatch,
    /// Token index counted across the whole segment.
    pub segment_index: usize,
}

/// Jargon matching is done per sentence so terms never span a boundary.
pub fn find_segment_jargon(sentences: &[SentenceSpan], dict: &JargonDict) -> Vec<LocatedJargon> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (si, s) in sentences.iter().enumerate() {
        for m in find_jargon(&s.tokens, dict) {
            out.push(LocatedJargon {
                sentence: si,
                segment_index: offset + m.index,
                within: m,
            });
        }
        offset += s.tokens.len();
    }
    out
}

/// Phrases that signal a following plain-language explanation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationCues {
    phrases: Vec<Vec<String>>,
}

impl Default for ExplanationCues {
    fn default() -> Self {
        ExplanationCues::from_list(BUILTIN_EXPLANATION_CUES)
    }
}

impl ExplanationCues {
    pub fn from_list(text: &str) -> ExplanationCues {
        let phrases = text
            .lines()
            .filter_map(normalize_term)
            .map(|p| p.split(' ').map(str::to_string).collect())
            .collect();
        ExplanationCues { phrases }
    }

    pub fn extend<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, phrases: I) {
        for p in phrases {
            let toks = tokenize(p.as_ref());
            if !toks.is_empty() {
                self.phrases.push(toks);
            }
        }
    }

    fn found_in(&self, tokens: &[String]) -> bool {
        self.phrases
            .iter()
            .any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
    }
}

/// True when the sentence holding the match, or the sentence right after it,
/// contains an explanation cue, or when the term is directly followed by a
/// parenthetical.
pub fn explanation_cue_present(
    text: &str,
    sentences: &[SentenceSpan],
    m: &LocatedJargon,
    cues: &ExplanationCues,
) -> bool {
    let Some(sentence) = sentences.get(m.sentence) else {
        return false;
    };
    if cues.found_in(&sentence.tokens) {
        return true;
    }
    if sentences.get(m.sentence + 1).is_some_and(|next| cues.found_in(&next.tokens)) {
        return true;
    }
    let last = m.within.index + m.within.len - 1;
    match sentence.token_offsets.get(last) {
        Some(&(_, end)) => text[end..].trim_start().starts_with('('),
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::split_sentences;

    const MINI: &str = "%pos_emotion\nhappy, hope*\n%neg_emotion\nsad\n%anger\nangry\n%anxiety\nworr*\n\
%sadness\nsad\n%cog_process\nthink*\n%pron_first\ni, me\n%pron_second\nyou\n";

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn wildcard_matches_stem() {
        let lex = load_lexicon(MINI.as_bytes()).unwrap();
        let pos = lex.category("pos_emotion").unwrap();
        assert_eq!(pos.lookup("hopeful"), Some(Entry::Prefix("hope".into())));
        assert_eq!(pos.lookup("hope"), Some(Entry::Prefix("hope".into())));
        assert_eq!(pos.lookup("hop"), None);
    }

    #[test]
    fn missing_category_is_named() {
        let text = MINI.replace("%cog_process\nthink*\n", "");
        assert_eq!(
            load_lexicon(text.as_bytes()),
            Err(LexiconError::MissingCategory("cog_process".into()))
        );
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        assert!(matches!(load_lexicon(b"happy\n"), Err(LexiconError::Malformed { line: 1, .. })));
        let mid_wild = format!("{MINI}%extra\nfe*el\n");
        assert!(matches!(load_lexicon(mid_wild.as_bytes()), Err(LexiconError::Malformed { .. })));
        let dup = format!("{MINI}%extra\ncalm, Calm\n");
        assert!(matches!(load_lexicon(dup.as_bytes()), Err(LexiconError::Duplicate { .. })));
    }

    #[test]
    fn builtin_lexicon_has_required_categories() {
        let lex = Lexicon::builtin();
        for name in REQUIRED_CATEGORIES {
            assert!(!lex.category(name).unwrap().entries().is_empty(), "{name}");
        }
        assert_eq!(load_lexicon(lex.to_text().as_bytes()).unwrap(), lex);
    }

    #[test]
    fn counting_rates() {
        let lex = load_lexicon(MINI.as_bytes()).unwrap();
        let s = score_categories(&toks("I feel so sad"), &lex).unwrap();
        assert_eq!(s.rate("neg_emotion"), 25.0);
        assert_eq!(s.rate("pron_first"), 25.0);
        assert_eq!(s.word_count, 4);
        let none = score_categories(&toks("the cat sat"), &lex).unwrap();
        assert!(none.rates.values().all(|&r| r == 0.0));
        assert_eq!(score_categories::<String>(&[], &lex), Err(EmptyTokens));
    }

    #[test]
    fn sentence_stats() {
        let lex = Lexicon::builtin();
        let spans = split_sentences("One two three. Four five. Extraordinarily long words here.");
        let s = score_sentences(&spans, &lex, 7).unwrap();
        assert_eq!(s.sentence_count, 3);
        assert_eq!(s.words_per_sentence, 9.0 / 3.0);
        assert_eq!(s.big_word_rate, 1.0 / 9.0);
    }

    #[test]
    fn authenticity_proxy_clamps() {
        let lex = load_lexicon(MINI.as_bytes()).unwrap();
        let s = score_categories(&toks("I think I think"), &lex).unwrap();
        assert_eq!(s.authenticity_proxy(), 0.0);
        let s = score_categories(&toks("you and me"), &lex).unwrap();
        assert!((s.authenticity_proxy() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn jargon_exclusions_apply() {
        let dict = JargonDict::load("metastatic lesion\nscan\n", "scan\n");
        let m = find_jargon(&toks("metastatic lesion on the scan"), &dict);
        assert_eq!(
            m,
            vec![JargonMatch {
                term: "metastatic lesion".into(),
                index: 0,
                len: 2
            }]
        );
        assert!(!dict.contains("scan"));
        assert!(dict.is_excluded("scan"));
        assert!(find_jargon(&toks("anything"), &JargonDict::default()).is_empty());
    }

    #[test]
    fn longer_span_claimed_before_earlier_shorter() {
        let dict = JargonDict::load("a b\nb c d\n", "");
        let m = find_jargon(&toks("a b c d"), &dict);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].term, "b c d");
    }

    fn cue_check(text: &str, cues: &ExplanationCues) -> bool {
        let dict = JargonDict::builtin();
        let spans = split_sentences(text);
        let found = find_segment_jargon(&spans, &dict);
        assert!(!found.is_empty(), "no jargon in {text:?}");
        explanation_cue_present(text, &spans, &found[0], cues)
    }

    #[test]
    fn explanation_cues() {
        let cues = ExplanationCues::default();
        assert!(cue_check("You have edema, which means swelling.", &cues));
        assert!(!cue_check("You have edema. Take this pill.", &cues));
        assert!(cue_check("You have edema. In other words, swelling.", &cues));
        assert!(cue_check("There are signs of dyspnea (shortness of breath).", &cues));
        assert!(!cue_check("You have edema. Take this pill. That is all.", &cues));
    }

    #[test]
    fn cue_list_extension_changes_outcome() {
        let text = "You have edema, put simply swelling.";
        let mut cues = ExplanationCues::default();
        assert!(!cue_check(text, &cues));
        cues.extend(["put simply"]);
        assert!(cue_check(text, &cues));
    }
}
