//! Speaker-labeled transcripts: parsing, validation, sentence splitting and
//! tokenization, plus conversation-level speech statistics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Provider,
    Patient,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Provider => "provider",
            Role::Patient => "patient",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "provider" => Some(Role::Provider),
            "patient" => Some(Role::Patient),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sentence inside a segment. Offsets are byte offsets into the segment
/// text; `token_offsets` holds the byte range of each token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<String>,
    pub token_offsets: Vec<(usize, usize)>,
    pub is_question: bool,
}

impl SentenceSpan {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub index: usize,
    pub role: Role,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
}

impl Segment {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    /// All tokens of the segment in sentence order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub duration_ms: u64,
    pub metadata: BTreeMap<String, String>,
    pub segments: Vec<Segment>,
}

impl Conversation {
    pub fn has_role(&self, role: Role) -> bool {
        self.segments.iter().any(|s| s.role == role)
    }

    /// Index of the closest segment before `index` spoken by `role`.
    pub fn preceding(&self, index: usize, role: Role) -> Option<usize> {
        self.segments[..index]
            .iter()
            .rposition(|s| s.role == role)
    }

    pub fn to_json(&self) -> String {
        let doc = TranscriptDoc {
            id: self.id.clone(),
            duration_ms: self.duration_ms,
            metadata: self.metadata.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentDoc {
                    index: s.index,
                    role: s.role,
                    start_ms: s.start_ms,
                    end_ms: s.end_ms,
                    text: s.text.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("transcript serializes")
    }
}

#[derive(Serialize)]
struct TranscriptDoc {
    id: String,
    duration_ms: u64,
    metadata: BTreeMap<String, String>,
    segments: Vec<SegmentDoc>,
}

#[derive(Serialize)]
struct SegmentDoc {
    index: usize,
    role: Role,
    start_ms: u64,
    end_ms: u64,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("malformed transcript at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("unknown top-level key `{key}`")]
    UnknownKey { key: String },
    #[error("{message} at segment {segment} (byte {offset})")]
    Segment {
        segment: usize,
        offset: usize,
        message: String,
    },
    #[error("duration_ms {duration_ms} is shorter than the last segment end {last_end_ms}")]
    Duration { duration_ms: u64, last_end_ms: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject unknown top-level keys instead of logging a warning.
    pub strict: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    index: i64,
    role: String,
    start_ms: i64,
    end_ms: i64,
    text: String,
}

fn byte_offset(src: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = src
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(src.len())
}

fn offset_within(outer: &str, inner: &str) -> usize {
    inner.as_ptr() as usize - outer.as_ptr() as usize
}

pub fn parse_transcript(bytes: &[u8]) -> Result<Conversation, TranscriptError> {
    parse_transcript_with(bytes, ParseOptions::default(), &SentenceRules::default())
}

pub fn parse_transcript_with(
    bytes: &[u8],
    opts: ParseOptions,
    rules: &SentenceRules,
) -> Result<Conversation, TranscriptError> {
    let src = std::str::from_utf8(bytes).map_err(|e| TranscriptError::Malformed {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let top: BTreeMap<String, &RawValue> =
        serde_json::from_str(src).map_err(|e| TranscriptError::Malformed {
            offset: byte_offset(src, e.line(), e.column()),
            message: e.to_string(),
        })?;

    const KNOWN: [&str; 4] = ["id", "duration_ms", "metadata", "segments"];
    for key in top.keys().filter(|k| !KNOWN.contains(&k.as_str())) {
        if opts.strict {
            return Err(TranscriptError::UnknownKey { key: key.clone() });
        }
        log::warn!("ignoring unknown transcript key `{key}`");
    }

    let field_err = |raw: &RawValue, what: &str| TranscriptError::Malformed {
        offset: offset_within(src, raw.get()),
        message: what.to_string(),
    };
    let required = |key: &str| {
        top.get(key).copied().ok_or_else(|| TranscriptError::Malformed {
            offset: 0,
            message: format!("missing field `{key}`"),
        })
    };
    let raw_id = required("id")?;
    let id: String =
        serde_json::from_str(raw_id.get()).map_err(|_| field_err(raw_id, "`id` must be a string"))?;
    let raw_duration = required("duration_ms")?;
    let duration_ms: u64 = serde_json::from_str(raw_duration.get())
        .map_err(|_| field_err(raw_duration, "`duration_ms` must be a non-negative integer"))?;
    let metadata: BTreeMap<String, String> = match top.get("metadata") {
        Some(raw) => serde_json::from_str(raw.get())
            .map_err(|_| field_err(raw, "`metadata` must map strings to strings"))?,
        None => BTreeMap::new(),
    };
    let raw_segments = required("segments")?;
    let segment_values: Vec<&RawValue> = serde_json::from_str(raw_segments.get())
        .map_err(|_| field_err(raw_segments, "`segments` must be an array"))?;

    let mut segments: Vec<Segment> = Vec::with_capacity(segment_values.len());
    for (pos, value) in segment_values.iter().enumerate() {
        let offset = offset_within(src, value.get());
        let err = |message: String| TranscriptError::Segment {
            segment: pos,
            offset,
            message,
        };
        let seg: RawSegment =
            serde_json::from_str(value.get()).map_err(|e| err(format!("malformed segment ({e})")))?;
        if seg.index != pos as i64 {
            return Err(err(format!("segment index {} does not match position", seg.index)));
        }
        let role = Role::parse(&seg.role).ok_or_else(|| err(format!("unknown role `{}`", seg.role)))?;
        if seg.start_ms < 0 || seg.end_ms < 0 {
            return Err(err("negative timestamp".into()));
        }
        let (start_ms, end_ms) = (seg.start_ms as u64, seg.end_ms as u64);
        if end_ms < start_ms {
            return Err(err("invalid time range".into()));
        }
        if let Some(prev) = segments.last() {
            if start_ms < prev.start_ms {
                return Err(err("unordered timestamps".into()));
            }
            if start_ms < prev.end_ms {
                return Err(err("overlapping segments".into()));
            }
        }
        if seg.text.trim().is_empty() {
            return Err(err("empty segment text".into()));
        }
        let sentences = split_sentences_with(&seg.text, rules);
        segments.push(Segment {
            index: pos,
            role,
            start_ms,
            end_ms,
            text: seg.text,
            sentences,
        });
    }

    let last_end_ms = segments.last().map_or(0, |s| s.end_ms);
    if duration_ms < last_end_ms {
        return Err(TranscriptError::Duration {
            duration_ms,
            last_end_ms,
        });
    }

    Ok(Conversation {
        id,
        duration_ms,
        metadata,
        segments,
    })
}

/// Sentence splitting options. Abbreviations listed here (lowercase, without
/// the trailing period) do not end a sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceRules {
    pub abbreviations: Vec<String>,
}

impl SentenceRules {
    pub fn from_list(text: &str) -> SentenceRules {
        let abbreviations = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.trim_end_matches('.').to_lowercase())
            .collect();
        SentenceRules { abbreviations }
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Lowercase word tokens with their byte ranges. A token is a maximal run of
/// letters, digits and apostrophes with leading/trailing apostrophes removed.
pub fn tokenize_with_offsets(text: &str) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some((start, c)) = iter.next() {
        if !is_token_char(c) {
            continue;
        }
        let mut end = start + c.len_utf8();
        while let Some(&(i, c)) = iter.peek() {
            if !is_token_char(c) {
                break;
            }
            end = i + c.len_utf8();
            iter.next();
        }
        let run = &text[start..end];
        let trimmed_front = run.trim_start_matches(['\'', '\u{2019}']);
        let trimmed = trimmed_front.trim_end_matches(['\'', '\u{2019}']);
        if trimmed.is_empty() {
            continue;
        }
        let s = start + (run.len() - trimmed_front.len());
        let e = s + trimmed.len();
        let token: String = trimmed
            .chars()
            .map(|c| if c == '\u{2019}' { '\'' } else { c })
            .flat_map(char::to_lowercase)
            .collect();
        out.push((token, (s, e)));
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|(t, _)| t).collect()
}

pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    split_sentences_with(text, &SentenceRules::default())
}

/// Splits on `.`, `?` or `!` followed by whitespace or end of text. Fragments
/// without any token are folded into the neighbouring sentence, so every span
/// carries at least one token; text without tokens yields no spans.
pub fn split_sentences_with(text: &str, rules: &SentenceRules) -> Vec<SentenceSpan> {
    let mut raw_spans: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() && !c.is_whitespace() {
            start = Some(i);
        }
        if !is_terminator(c) {
            continue;
        }
        let boundary = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
        if !boundary {
            continue;
        }
        let s = start.expect("terminator is non-whitespace");
        let end = i + c.len_utf8();
        if c == '.' && ends_with_abbreviation(&text[s..i], rules) {
            continue;
        }
        raw_spans.push((s, end));
        start = None;
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        raw_spans.push((s, end));
    }

    let mut spans: Vec<SentenceSpan> = Vec::new();
    let mut pending_start: Option<usize> = None;
    for (s, e) in raw_spans {
        let s = pending_start.take().unwrap_or(s);
        let toks = tokenize_with_offsets(&text[s..e]);
        if toks.is_empty() {
            match spans.last_mut() {
                Some(prev) => {
                    prev.end = e;
                    prev.is_question = question_mark_tail(&text[prev.start..e]);
                }
                None => pending_start = Some(s),
            }
            continue;
        }
        let (tokens, token_offsets) = toks
            .into_iter()
            .map(|(t, (a, b))| (t, (a + s, b + s)))
            .unzip();
        spans.push(SentenceSpan {
            start: s,
            end: e,
            tokens,
            token_offsets,
            is_question: question_mark_tail(&text[s..e]),
        });
    }
    spans
}

fn question_mark_tail(sentence: &str) -> bool {
    sentence
        .trim_end()
        .chars()
        .rev()
        .take_while(|&c| is_terminator(c))
        .any(|c| c == '?')
}

fn ends_with_abbreviation(before_period: &str, rules: &SentenceRules) -> bool {
    if rules.abbreviations.is_empty() {
        return false;
    }
    let word: String = before_period
        .chars()
        .rev()
        .take_while(|c| !c.is_whitespace())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect::<String>()
        .to_lowercase();
    rules.abbreviations.contains(&word)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("conversation has zero duration")]
pub struct ZeroDuration;

/// Fraction of the conversation clock covered by `role`'s speech.
pub fn speech_ratio(conv: &Conversation, role: Role) -> Result<f64, ZeroDuration> {
    if conv.duration_ms == 0 {
        return Err(ZeroDuration);
    }
    let spoken: u64 = conv
        .segments
        .iter()
        .filter(|s| s.role == role)
        .map(Segment::duration_ms)
        .sum();
    Ok(spoken as f64 / conv.duration_ms as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(segments: &str) -> String {
        format!(r#"{{"id":"c1","duration_ms":10000,"metadata":{{}},"segments":[{segments}]}}"#)
    }

    #[test]
    fn parses_two_segments_with_gap() {
        let src = doc(
            r#"{"index":0,"role":"patient","start_ms":0,"end_ms":4000,"text":"I am scared."},
               {"index":1,"role":"provider","start_ms":5000,"end_ms":9000,"text":"Tell me more about that."}"#,
        );
        let conv = parse_transcript(src.as_bytes()).unwrap();
        assert_eq!(conv.segments.len(), 2);
        assert_eq!(conv.segments[0].role, Role::Patient);
        assert_eq!(conv.segments[1].start_ms - conv.segments[0].end_ms, 1000);
        assert_eq!(conv.segments[1].sentences[0].tokens, ["tell", "me", "more", "about", "that"]);
    }

    #[test]
    fn inverted_range_names_segment() {
        let src = doc(
            r#"{"index":0,"role":"patient","start_ms":0,"end_ms":4000,"text":"Hi."},
               {"index":1,"role":"provider","start_ms":6000,"end_ms":5000,"text":"Hello."}"#,
        );
        let err = parse_transcript(src.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("invalid time range at segment 1"), "{err}");
        match err {
            TranscriptError::Segment { offset, .. } => assert_eq!(&src[offset..offset + 9], r#"{"index":"#),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_role_negative_and_empty() {
        let bad_role = doc(r#"{"index":0,"role":"nurse","start_ms":0,"end_ms":1,"text":"x"}"#);
        assert!(parse_transcript(bad_role.as_bytes()).unwrap_err().to_string().contains("unknown role"));
        let neg = doc(r#"{"index":0,"role":"patient","start_ms":-5,"end_ms":1,"text":"x"}"#);
        assert!(parse_transcript(neg.as_bytes()).unwrap_err().to_string().contains("negative"));
        let empty = doc(r#"{"index":0,"role":"patient","start_ms":0,"end_ms":1,"text":"   "}"#);
        assert!(parse_transcript(empty.as_bytes()).unwrap_err().to_string().contains("empty"));
        let unordered = doc(
            r#"{"index":0,"role":"patient","start_ms":500,"end_ms":600,"text":"a"},
               {"index":1,"role":"patient","start_ms":100,"end_ms":200,"text":"b"}"#,
        );
        assert!(parse_transcript(unordered.as_bytes()).unwrap_err().to_string().contains("unordered"));
    }

    #[test]
    fn malformed_json_reports_offset() {
        let err = parse_transcript(b"{\"id\": \"x\",\n \"duration_ms\": }").unwrap_err();
        match err {
            TranscriptError::Malformed { offset, .. } => assert!(offset > 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_strict_vs_lenient() {
        let src = r#"{"id":"c","duration_ms":5,"segments":[],"extra":1}"#;
        assert!(parse_transcript(src.as_bytes()).is_ok());
        let strict = ParseOptions { strict: true };
        let err = parse_transcript_with(src.as_bytes(), strict, &SentenceRules::default()).unwrap_err();
        assert_eq!(err, TranscriptError::UnknownKey { key: "extra".into() });
    }

    #[test]
    fn duration_must_cover_segments() {
        let src = r#"{"id":"c","duration_ms":5,"segments":[{"index":0,"role":"patient","start_ms":0,"end_ms":10,"text":"a"}]}"#;
        assert!(matches!(
            parse_transcript(src.as_bytes()),
            Err(TranscriptError::Duration { .. })
        ));
    }

    #[test]
    fn sentences_and_questions() {
        let spans = split_sentences("How are you? I see.");
        assert_eq!(spans.len(), 2);
        assert_eq!(spans.iter().map(|s| s.is_question).collect::<Vec<_>>(), [true, false]);
        assert_eq!(spans[0].tokens, ["how", "are", "you"]);
        assert_eq!(spans[1].tokens, ["i", "see"]);
    }

    #[test]
    fn abbreviation_limitation_and_exception_list() {
        assert_eq!(split_sentences("Dr. Smith arrived.").len(), 2);
        let rules = SentenceRules::from_list("dr.\n# comment\nmr\n");
        assert_eq!(split_sentences_with("Dr. Smith arrived.", &rules).len(), 1);
    }

    #[test]
    fn trailing_fragment_and_whitespace_only() {
        let spans = split_sentences("Fine. and then");
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[1].tokens, ["and", "then"]);
        assert!(split_sentences("   \n ").is_empty());
    }

    #[test]
    fn tokenless_fragments_fold_into_neighbours() {
        let text = "Well... ?! okay.";
        let spans = split_sentences(text);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].text(text), "Well... ?!");
        assert!(spans[0].is_question);
        let leading = split_sentences("... yes.");
        assert_eq!(leading.len(), 1);
        assert_eq!(leading[0].start, 0);
    }

    #[test]
    fn tokens_keep_apostrophes_split_hyphens() {
        assert_eq!(tokenize("You're well-known, 'Bob'."), ["you're", "well", "known", "bob"]);
        assert_eq!(tokenize("It\u{2019}s"), ["it's"]);
    }

    #[test]
    fn speech_ratio_arithmetic() {
        let mk = |i, role, s, e| Segment {
            index: i,
            role,
            start_ms: s,
            end_ms: e,
            text: "x".into(),
            sentences: split_sentences("x"),
        };
        let conv = Conversation {
            id: "c".into(),
            duration_ms: 300_000,
            metadata: BTreeMap::new(),
            segments: vec![mk(0, Role::Patient, 0, 100_000), mk(1, Role::Provider, 100_000, 220_000)],
        };
        assert_eq!(speech_ratio(&conv, Role::Provider).unwrap(), 0.4);
        let none = Conversation { segments: vec![mk(0, Role::Patient, 0, 1)], ..conv.clone() };
        assert_eq!(speech_ratio(&none, Role::Provider).unwrap(), 0.0);
        let zero = Conversation { duration_ms: 0, segments: vec![], ..conv };
        assert_eq!(speech_ratio(&zero, Role::Patient), Err(ZeroDuration));
    }
}
