//! Random instance generators and from-scratch reference implementations
//! shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use convassess::acoustics::{EnergySeries, Interval};
use convassess::eval::Counts;
use convassess::lexicon::{Entry, JargonDict, Lexicon};
use convassess::transcript::{parse_transcript, Conversation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mix of stop words, pronouns, lexicon hits, jargon pieces and cue words.
pub const WORDS: &[&str] = &[
    "the", "a", "my", "your", "you", "i", "me", "we", "is", "at", "and", "of", "so", "what", "how", "why", "did",
    "tell", "more", "pain", "night", "worse", "sad", "happy", "hopeful", "worried", "scared", "because", "think",
    "evidence", "edema", "pleural", "effusion", "renal", "failure", "sepsis", "metastatic", "lesion", "which",
    "means", "meaning", "that", "sounds", "understand", "sorry", "dog", "garden", "schedule", "don't", "o'clock",
    "naïve", "café", "x-ray", "123",
];

pub fn random_tokens(r: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    let n = r.gen_range(1..=max);
    (0..n).map(|_| WORDS.choose(r).unwrap().to_string()).collect()
}

/// One to four sentences with assorted terminators, punctuation and case.
pub fn random_text(r: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for s in 0..r.gen_range(1..=4) {
        if s > 0 {
            out.push_str(["  ", " ", "\n", " \t"].choose(r).unwrap());
        }
        for (i, w) in random_tokens(r, 12).iter().enumerate() {
            if i > 0 {
                out.push_str([" ", " ", ", ", " - ", " ("].choose(r).unwrap());
            }
            if r.gen_bool(0.2) {
                out.push_str(&w.to_uppercase());
            } else {
                out.push_str(w);
            }
        }
        out.push_str(["." , "?", "!", "...", "?!", ""].choose(r).unwrap());
    }
    out
}

/// Valid transcript JSON and its parse.
pub fn random_transcript(r: &mut ChaCha8Rng, max_segments: usize) -> (String, Conversation) {
    let n = r.gen_range(1..=max_segments);
    let mut t = r.gen_range(0..2000u64);
    let mut segs = Vec::new();
    for i in 0..n {
        let start = t;
        let end = start + r.gen_range(0..5000u64);
        let role = if r.gen_bool(0.5) { "patient" } else { "provider" };
        segs.push(json!({"index": i, "role": role, "start_ms": start, "end_ms": end, "text": random_text(r)}));
        t = end + r.gen_range(0..3000u64);
    }
    let mut metadata = serde_json::Map::new();
    if r.gen_bool(0.5) {
        metadata.insert("session_date".into(), json!(format!("2026-0{}-1{}", r.gen_range(1..10), r.gen_range(0..10))));
    }
    let doc = json!({
        "id": format!("conv-{}", r.gen::<u32>()),
        "duration_ms": t + r.gen_range(0..1000u64),
        "metadata": metadata,
        "segments": segs,
    });
    let text = doc.to_string();
    let conv = parse_transcript(text.as_bytes()).expect("generated transcript is valid");
    (text, conv)
}

/// Lengths are log-uniform in 1..=max_len so the suite stays fast while
/// still reaching the top of the range.
pub fn random_energy(r: &mut ChaCha8Rng, max_len: usize) -> EnergySeries {
    let len = ((max_len as f64).ln() * r.gen::<f64>()).exp().round().clamp(1.0, max_len as f64) as usize;
    let values: Vec<f64> = match r.gen_range(0..4) {
        0 => vec![r.gen_range(0..100) as f64 / 4.0; len],
        1 => (0..len).map(|_| r.gen_range(0..8) as f64).collect(),
        2 => (0..len).map(|_| r.gen::<f64>()).collect(),
        _ => (0..len).map(|_| r.gen_range(0..1000) as f64 / 1000.0).collect(),
    };
    EnergySeries::new(r.gen_range(1..=200), r.gen_range(0..5000), values).unwrap()
}

pub fn random_intervals(r: &mut ChaCha8Rng, horizon: u64, max: usize) -> Vec<Interval> {
    (0..r.gen_range(0..=max))
        .map(|_| {
            let a = r.gen_range(0..horizon);
            let b = (a + r.gen_range(1..=horizon / 4 + 1)).min(horizon + 1);
            Interval { start_ms: a, end_ms: b }
        })
        .collect()
}

/// Nearest-rank threshold found by scanning: the smallest value with at
/// least `ceil(p*n/100)` values at or below it. Only candidates below the
/// best so far get a full count.
#[allow(clippy::manual_div_ceil)]
pub fn brute_threshold(values: &[f64], p: u8) -> f64 {
    let n = values.len();
    let need = ((p as usize * n) + 99) / 100;
    let need = need.max(1);
    let mut best = f64::INFINITY;
    for &v in values {
        if v >= best {
            continue;
        }
        let at_or_below = values.iter().filter(|&&x| x <= v).count();
        if at_or_below >= need {
            best = v;
        }
    }
    best
}

/// Runs of silent frames, grown one frame at a time.
pub fn brute_silence(series: &EnergySeries, p: u8) -> Vec<Interval> {
    let thr = brute_threshold(&series.values, p);
    let silent: Vec<bool> = series.values.iter().map(|&v| v <= thr).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < silent.len() {
        if !silent[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < silent.len() && silent[j] {
            j += 1;
        }
        out.push(Interval {
            start_ms: series.start_offset_ms + i as u64 * series.frame_ms,
            end_ms: series.start_offset_ms + j as u64 * series.frame_ms,
        });
        i = j;
    }
    out
}

/// Milliseconds in `[start, end)` covered by any interval, counted one by
/// one.
pub fn brute_covered(intervals: &[Interval], start: u64, end: u64) -> u64 {
    (start..end)
        .filter(|&t| intervals.iter().any(|iv| iv.start_ms <= t && t < iv.end_ms))
        .count() as u64
}

/// Every dictionary span, accepted longest first then leftmost, skipping
/// spans that overlap an accepted one.
pub fn brute_jargon(tokens: &[String], dict: &JargonDict) -> Vec<(String, usize, usize)> {
    let mut spans = Vec::new();
    for start in 0..tokens.len() {
        for len in 1..=4.min(tokens.len() - start) {
            let term = tokens[start..start + len].join(" ");
            if dict.contains(&term) {
                spans.push((term, start, len));
            }
        }
    }
    spans.sort_by(|a, b| b.2.cmp(&a.2).then(a.1.cmp(&b.1)));
    let mut taken = vec![false; tokens.len()];
    let mut out = Vec::new();
    for (term, start, len) in spans {
        if taken[start..start + len].iter().any(|&t| t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        out.push((term, start, len));
    }
    out.sort_by_key(|m| m.1);
    out
}

/// Per-category rates from checking every token against every entry.
pub fn brute_rates(tokens: &[String], lex: &Lexicon) -> BTreeMap<String, f64> {
    lex.categories()
        .map(|(name, cat)| {
            let hits = tokens
                .iter()
                .filter(|t| {
                    cat.entries().iter().any(|e| match e {
                        Entry::Literal(s) => s == *t,
                        Entry::Prefix(s) => t.as_bytes().get(..s.len()) == Some(s.as_bytes()),
                    })
                })
                .count();
            (name.to_string(), 100.0 * hits as f64 / tokens.len() as f64)
        })
        .collect()
}

/// Cosine over a dense vocabulary vector.
pub fn oracle_cosine(a: &[String], b: &[String], stop: &HashSet<String>) -> f64 {
    let keep = |v: &[String]| -> Vec<String> { v.iter().filter(|t| !stop.contains(*t)).cloned().collect() };
    let (a, b) = (keep(a), keep(b));
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let vocab: BTreeSet<&String> = a.iter().chain(&b).collect();
    let vec = |v: &[String]| -> Vec<f64> { vocab.iter().map(|w| v.iter().filter(|t| t == w).count() as f64).collect() };
    let (va, vb) = (vec(&a), vec(&b));
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Tabulates (actual, predicted) pairs.
pub fn tabulate(pairs: &[(bool, bool)]) -> Counts {
    let mut c = Counts::default();
    for &(actual, predicted) in pairs {
        match (actual, predicted) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

/// (balanced accuracy, precision, recall) written out directly.
pub fn oracle_stats(c: &Counts) -> (Option<f64>, Option<f64>, Option<f64>) {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let p = if c.tp + c.fp == 0 { None } else { Some(tp / (tp + fp)) };
    let r = if c.tp + c.fn_ == 0 { None } else { Some(tp / (tp + fn_)) };
    let ba = if c.tp + c.fn_ == 0 || c.tn + c.fp == 0 {
        None
    } else {
        Some((tp / (tp + fn_) + tn / (tn + fp)) / 2.0)
    };
    (ba, p, r)
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}
