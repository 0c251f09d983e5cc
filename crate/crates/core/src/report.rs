//! Human-readable and plot-ready renderings of assessments and evaluation
//! reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalCell, EvalReport, ScriptClass};
use crate::rules::{Assessment, EvidenceValue, Label, Metric};
use crate::transcript::Role;

const EXCERPT_CHARS: usize = 80;

fn excerpt(s: &str) -> String {
    let flat = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= EXCERPT_CHARS {
        flat
    } else {
        let cut: String = flat.chars().take(EXCERPT_CHARS - 3).collect();
        format!("{cut}...")
    }
}

fn stat(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub good: usize,
    pub bad: usize,
    pub none: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.good + self.bad + self.none
    }

    fn add(&mut self, label: Label) {
        match label {
            Label::Good => self.good += 1,
            Label::Bad => self.bad += 1,
            Label::None => self.none += 1,
        }
    }
}

/// Label counts per metric over provider segments.
pub fn provider_counts(a: &Assessment) -> BTreeMap<Metric, LabelCounts> {
    let mut out: BTreeMap<Metric, LabelCounts> = Metric::ALL.into_iter().map(|m| (m, LabelCounts::default())).collect();
    for l in a.labels.iter().filter(|l| l.role == Role::Provider) {
        out.get_mut(&l.metric).expect("all metrics present").add(l.label);
    }
    out
}

/// Post-conversation summary in markdown.
pub fn scorecard(a: &Assessment) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Scorecard: {}\n", a.conversation_id);
    for (k, v) in &a.metadata {
        let _ = writeln!(s, "- {k}: {v}");
    }
    if !a.metadata.is_empty() {
        s.push('\n');
    }

    s.push_str("## Provider labels\n\n| Metric | Good | Bad | None |\n|---|---:|---:|---:|\n");
    for (m, c) in provider_counts(a) {
        let _ = writeln!(s, "| {m} | {} | {} | {} |", c.good, c.bad, c.none);
    }

    let f = &a.flags;
    let pass = |b: bool| if b { "pass" } else { "fail" };
    s.push_str("\n## Conversation flags\n\n");
    let _ = writeln!(
        s,
        "- provider speech ratio: {:.3} ({})",
        f.provider_speech_ratio,
        pass(f.ratio_pass)
    );
    let _ = writeln!(s, "- silence encouraged: {}", if f.silence_encouraged { "yes" } else { "no" });
    let _ = writeln!(s, "- silence ratio: {:.3} ({})", f.silence_ratio, pass(f.silence_ratio_pass));

    s.push_str("\n## Evidence\n\n");
    let fired: Vec<_> = a.labels.iter().filter(|l| l.label != Label::None).collect();
    if fired.is_empty() {
        s.push_str("No rules fired.\n");
    }
    for l in fired {
        for e in &l.evidence {
            let value = match &e.value {
                EvidenceValue::Number(n) => format!("{n}"),
                EvidenceValue::Text(t) => format!("\"{}\"", excerpt(t)),
            };
            let _ = writeln!(s, "- segment {} {} {}: `{}` {}", l.segment, l.metric, l.label.as_str(), e.rule, value);
        }
    }
    s
}

fn row(s: &mut String, c: &EvalCell, reference: Option<(f64, f64, f64)>) {
    let class = c.script_class.map_or("all", ScriptClass::as_str);
    let refs = reference.map_or_else(|| "-".to_string(), |(a, p, r)| format!("{a:.3} / {p:.3} / {r:.3}"));
    let _ = writeln!(
        s,
        "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
        c.metric,
        class,
        c.polarity,
        stat(c.balanced_accuracy),
        stat(c.precision),
        stat(c.recall),
        c.counts.tp,
        c.counts.fp,
        c.counts.tn,
        c.counts.fn_,
        refs
    );
}

const TABLE_HEADER: &str = "| Metric | Script | Polarity | Balanced accuracy | Precision | Recall | TP | FP | TN | FN | Reference (acc / prec / rec) |\n|---|---|---|---:|---:|---:|---:|---:|---:|---:|---|\n";

/// Markdown table with one row per metric and script class, scored for the
/// polarity that script class exhibits. Numbers are printed exactly as
/// stored in the JSON report.
pub fn eval_table(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Evaluation over {} conversations\n", report.conversations);
    s.push_str(TABLE_HEADER);
    for class in [ScriptClass::GoodScript, ScriptClass::BadScript] {
        for m in Metric::ALL.into_iter().filter(|m| m.has_rule(class.target())) {
            let Some(c) = report.cell(m, class.target(), class) else {
                continue;
            };
            let reference = report
                .reference
                .iter()
                .find(|r| r.metric == m && r.script_class == class)
                .map(|r| (r.accuracy, r.precision, r.recall));
            row(&mut s, c, reference);
        }
    }
    s.push_str("\n## All cells\n\n");
    s.push_str(TABLE_HEADER);
    for c in report.cells.iter().chain(&report.corpus) {
        row(&mut s, c, None);
    }
    s.push_str("\n## Assumptions\n\n");
    for a in &report.assumptions {
        let _ = writeln!(s, "- {a}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub date: String,
    pub metric: Metric,
    pub good_count: usize,
    pub bad_count: usize,
    pub none_count: usize,
    pub good_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrendError {
    #[error("no assessments")]
    Empty,
    #[error("assessment `{conversation_id}` has no `{key}` in its metadata")]
    MissingKey { conversation_id: String, key: String },
    #[error("malformed trend csv: {0}")]
    Csv(String),
}

/// Provider label counts per (group value, metric), sorted by group value then
/// metric. Sessions sharing a group value are summed.
pub fn trend_rows(assessments: &[Assessment], group_by: &str) -> Result<Vec<TrendRow>, TrendError> {
    if assessments.is_empty() {
        return Err(TrendError::Empty);
    }
    let mut groups: BTreeMap<(String, Metric), LabelCounts> = BTreeMap::new();
    for a in assessments {
        let date = a.metadata.get(group_by).ok_or_else(|| TrendError::MissingKey {
            conversation_id: a.conversation_id.clone(),
            key: group_by.to_string(),
        })?;
        for (m, c) in provider_counts(a) {
            let g = groups.entry((date.clone(), m)).or_default();
            g.good += c.good;
            g.bad += c.bad;
            g.none += c.none;
        }
    }
    Ok(groups
        .into_iter()
        .map(|((date, metric), c)| TrendRow {
            date,
            metric,
            good_count: c.good,
            bad_count: c.bad,
            none_count: c.none,
            good_rate: if c.total() == 0 {
                0.0
            } else {
                c.good as f64 / c.total() as f64
            },
        })
        .collect())
}

pub fn trend_csv(rows: &[TrendRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["date", "metric", "good_count", "bad_count", "none_count", "good_rate"])
            .expect("write to memory");
    }
    for r in rows {
        w.serialize(r).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn parse_trend_csv(text: &str) -> Result<Vec<TrendRow>, TrendError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| TrendError::Csv(e.to_string()))
}
