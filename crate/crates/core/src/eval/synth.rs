//! Seeded generator of scripted conversations whose provider segments fire
//! exactly the requested rules, with matching truth tags and audio side files.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{ScriptClass, Tag, TruthTags};
use crate::acoustics::{EnergySeries, Interval, IntervalKind, IntervalSet};
use crate::features::AudioInputs;
use crate::rules::{Metric, Polarity};
use crate::transcript::{parse_transcript, tokenize, Conversation};

const FRAME_MS: u64 = 100;
const SILENCE_ENERGY: f64 = 0.001;

const PATIENT_FILLER: &[&str] = &[
    "The drive over took about an hour this morning.",
    "My daughter came along with me today.",
    "We had lunch at the cafe downstairs.",
    "The parking garage was nearly full.",
    "My appointment card says three o'clock.",
    "The nurse took my blood pressure earlier.",
    "Our neighbor has been walking the dog for us.",
    "The bus stops right outside the building.",
];

const PROVIDER_FILLER: &[&str] = &[
    "The next appointment is on Tuesday afternoon.",
    "The lab results arrived this morning.",
    "The pharmacy will have the prescription ready later.",
    "The printed schedule lists each visit.",
    "The team meets every Thursday to review charts.",
    "The clinic closes early on Fridays.",
];

const OPEN_QUESTIONS: &[&str] = &[
    "What matters most to the family right now?",
    "How has the week been at home?",
    "Tell me more about the week at home.",
    "How have the evenings been lately?",
    "Why did the last visit get moved?",
    "Where would the family like to go from here?",
];

const POLAR_QUESTIONS: &[&str] = &[
    "Did the week go smoothly at home?",
    "Are the evenings quiet lately?",
    "Has the family visited recently?",
    "Is the new schedule working?",
];

const EMPATHY: &[&str] = &[
    "I can see this has been a long road for the whole family.",
    "That sounds like a lot to carry at once.",
    "I understand how much the family has been through.",
    "It makes sense that the news feels heavy.",
    "We will get through the next steps together.",
];

/// Patient lines with a high positive-emotion rate.
const PATIENT_POSITIVE: &[&str] = &[
    "The new routine at home has been lovely and the grandkids visit often.",
    "The garden is blooming and the whole family feels hopeful.",
    "Getting outside again has been a great relief.",
];

/// Positive provider replies, index-paired with `PATIENT_POSITIVE`.
const PROVIDER_POSITIVE: &[&str] = &[
    "Such lovely news for the whole family.",
    "A hopeful turn like this is a joy to hear about.",
    "Such great relief is worth celebrating.",
];

/// One negative word each; padded with filler to keep the rate low.
const PATIENT_MILD_NEGATIVE: &[&str] = &[
    "Honestly the last few weeks have been sad.",
    "Most nights the house feels lonely.",
    "The waiting has left the whole household upset.",
];

const PATIENT_STRONG_NEGATIVE: &[&str] = &[
    "I am scared and so sad about the news.",
    "Everything feels awful and I am worried all the time.",
    "The nights are lonely and the fear keeps growing.",
];

const PROVIDER_COGNITIVE: &[&str] = &[
    "Because the evidence is mixed, the team will consider each reason carefully.",
    "The decision depends on the evidence and the likely cause.",
    "Therefore the plan will be determined by the evidence.",
];

const PARAPHRASE_PAIRS: &[(&str, &str)] = &[
    ("My pain gets worse at night.", "So the pain is worse at night."),
    (
        "The new pills make me dizzy in the morning.",
        "The new pills bring on dizzy spells in the morning.",
    ),
    (
        "Walking up the stairs leaves me out of breath.",
        "Walking up the stairs leaves the breath short.",
    ),
    (
        "I have not been sleeping much since the surgery.",
        "Sleeping has been hard since the surgery.",
    ),
];

const SECOND_PERSON: &[&str] = &[
    "You can take the tablets with food.",
    "Your next visit is on the calendar.",
    "You will get a copy of the schedule.",
];

const EXPLAINED_JARGON: &[&str] = &[
    "The edema, which means swelling, should ease soon.",
    "There is some ascites, meaning fluid in the belly.",
    "Some dyspnea, in other words shortness of breath, shows up after walking.",
];

/// (long single sentence, same content split into short sentences)
const LONG_SENTENCES: &[(&str, &str)] = &[
    (
        "The plan for the coming weeks includes regular visits from the home nurse along with weekly blood tests and a review every other Friday.",
        "The plan for the coming weeks includes regular visits from the home nurse. Weekly blood tests and a review happen every other Friday.",
    ),
    (
        "After the visit the team will update the medication list and send the new schedule to the pharmacy and the home care office by Monday.",
        "After the visit the team will update the medication list. The new schedule goes to the pharmacy and the home care office by Monday.",
    ),
];

/// (unexplained jargon, plain-language version)
const JARGON_HEAVY: &[(&str, &str)] = &[
    (
        "The lymphadenopathy and the pleural effusion suggest the neoplasm has progressed.",
        "The swollen glands and the fluid near the lungs show the growth has progressed.",
    ),
    (
        "Signs of sepsis and hypotension point to possible renal failure.",
        "Signs of infection and low blood pressure point to possible kidney trouble.",
    ),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("no {polarity} rule for {metric}")]
    NoRule { metric: Metric, polarity: Polarity },
    #[error("spec requests no constructions")]
    Empty,
    #[error("noise rate must be within [0, 1], got {0}")]
    Noise(f64),
    #[error("invalid corpus spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub metric: Metric,
    pub polarity: Polarity,
    pub count: usize,
}

/// Request for one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub script_class: ScriptClass,
    pub counts: Vec<CellCount>,
    /// Fraction of constructions per cell that are perturbed to miss their
    /// rule.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_true")]
    pub audio: bool,
}

/// Request for a corpus. Conversations alternate between good and bad
/// scripts when both count maps are non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub conversations: usize,
    #[serde(default)]
    pub good: BTreeMap<Metric, usize>,
    #[serde(default)]
    pub bad: BTreeMap<Metric, usize>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_true")]
    pub audio: bool,
}

fn default_true() -> bool {
    true
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            conversations: 24,
            good: Metric::ALL.into_iter().map(|m| (m, 1)).collect(),
            bad: Metric::ALL
                .into_iter()
                .filter(|m| m.has_rule(Polarity::Bad))
                .map(|m| (m, 1))
                .collect(),
            noise: 0.0,
            audio: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub conversation: Conversation,
    pub truth: TruthTags,
    pub energy: Option<EnergySeries>,
    pub overlaps: Option<IntervalSet>,
}

impl Synthetic {
    pub fn audio(&self) -> AudioInputs {
        AudioInputs {
            energy: self.energy.clone(),
            overlaps: self.overlaps.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Construction {
    metric: Metric,
    polarity: Polarity,
    noised: bool,
}

struct Beat {
    patient: String,
    provider: String,
    gap_ms: u64,
    overlap: bool,
    tag: Option<(Metric, Polarity)>,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("template list is non-empty")
}

fn normal_gap(rng: &mut ChaCha8Rng) -> u64 {
    rng.gen_range(6..=15) * 100
}

fn filler_beat(rng: &mut ChaCha8Rng) -> Beat {
    Beat {
        patient: pick(rng, PATIENT_FILLER).to_string(),
        provider: pick(rng, PROVIDER_FILLER).to_string(),
        gap_ms: normal_gap(rng),
        overlap: false,
        tag: None,
    }
}

/// A mildly negative patient turn: one negative word among at least 36
/// tokens.
fn mild_negative(rng: &mut ChaCha8Rng) -> String {
    let mut text = pick(rng, PATIENT_MILD_NEGATIVE).to_string();
    let mut fillers: Vec<&str> = PATIENT_FILLER.to_vec();
    fillers.shuffle(rng);
    for f in fillers {
        if tokenize(&text).len() >= 36 {
            break;
        }
        text.push(' ');
        text.push_str(f);
    }
    text
}

fn construct(rng: &mut ChaCha8Rng, c: Construction) -> Beat {
    let mut beat = filler_beat(rng);
    beat.tag = Some((c.metric, c.polarity));
    let noised = c.noised;
    match (c.metric, c.polarity) {
        (Metric::Understanding, _) => {
            beat.provider = if noised { pick(rng, POLAR_QUESTIONS) } else { pick(rng, OPEN_QUESTIONS) }.to_string();
        }
        (Metric::Empathy, _) => {
            if !noised {
                beat.provider = pick(rng, EMPATHY).to_string();
            }
        }
        (Metric::Emotion, Polarity::Good) => {
            if rng.gen_bool(0.5) {
                let i = rng.gen_range(0..PATIENT_POSITIVE.len());
                beat.patient = PATIENT_POSITIVE[i].to_string();
                if !noised {
                    beat.provider = PROVIDER_POSITIVE[i].to_string();
                }
            } else {
                beat.patient = mild_negative(rng);
                beat.gap_ms = if noised {
                    rng.gen_range(30..=50) * 100
                } else {
                    rng.gen_range(110..=140) * 100
                };
            }
        }
        (Metric::Emotion, Polarity::Bad) => {
            if rng.gen_bool(0.5) {
                beat.patient = pick(rng, PATIENT_POSITIVE).to_string();
                if !noised {
                    beat.provider = pick(rng, PROVIDER_COGNITIVE).to_string();
                }
            } else {
                if !noised {
                    beat.patient = pick(rng, PATIENT_STRONG_NEGATIVE).to_string();
                }
                beat.gap_ms = rng.gen_range(10..=30) * 100;
            }
        }
        (Metric::Presence, Polarity::Good) => {
            let (p, v) = *pick(rng, PARAPHRASE_PAIRS);
            beat.patient = p.to_string();
            if !noised {
                beat.provider = v.to_string();
            }
        }
        (Metric::Presence, Polarity::Bad) => beat.overlap = !noised,
        (Metric::Clarity, Polarity::Good) => {
            if !noised {
                let pool = if rng.gen_bool(0.5) { SECOND_PERSON } else { EXPLAINED_JARGON };
                beat.provider = pick(rng, pool).to_string();
            }
        }
        (Metric::Clarity, Polarity::Bad) => {
            let pool = if rng.gen_bool(0.5) { LONG_SENTENCES } else { JARGON_HEAVY };
            let (hit, miss) = *pick(rng, pool);
            beat.provider = if noised { miss } else { hit }.to_string();
        }
    }
    beat
}

fn turn_ms(text: &str) -> u64 {
    (tokenize(text).len() as u64 * 400).max(2000).div_ceil(100) * 100
}

struct Layout {
    class: ScriptClass,
    id: String,
    metadata: BTreeMap<String, String>,
    audio: bool,
}

fn build(seed: u64, layout: Layout, constructions: &[Construction]) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beats: Vec<Beat> = constructions.iter().map(|c| construct(&mut rng, *c)).collect();
    let fillers = (constructions.len() / 2).max(1);
    beats.extend((0..fillers).map(|_| filler_beat(&mut rng)));
    beats.shuffle(&mut rng);

    let mut segments = Vec::with_capacity(beats.len() * 2);
    let mut tags = Vec::new();
    let mut overlaps = Vec::new();
    let mut t = 500;
    for beat in &beats {
        let p_end = t + turn_ms(&beat.patient);
        segments.push(json!({
            "index": segments.len(), "role": "patient", "start_ms": t, "end_ms": p_end, "text": beat.patient,
        }));
        let v_start = p_end + beat.gap_ms;
        let v_end = v_start + turn_ms(&beat.provider);
        let index = segments.len();
        segments.push(json!({
            "index": index, "role": "provider", "start_ms": v_start, "end_ms": v_end, "text": beat.provider,
        }));
        if let Some((metric, polarity)) = beat.tag {
            tags.push(Tag {
                segment: index,
                metric,
                polarity,
            });
        }
        if beat.overlap {
            overlaps.push(Interval {
                start_ms: v_start + 300,
                end_ms: v_start + 900,
            });
        }
        t = v_end + normal_gap(&mut rng);
    }
    let duration_ms = t + 500;

    let doc = json!({
        "id": layout.id,
        "duration_ms": duration_ms,
        "metadata": layout.metadata,
        "segments": segments,
    });
    let conversation = parse_transcript(doc.to_string().as_bytes()).expect("generated transcript is valid");

    let energy = layout.audio.then(|| {
        let spans: Vec<(u64, u64)> = conversation.segments.iter().map(|s| (s.start_ms, s.end_ms)).collect();
        let values = (0..duration_ms / FRAME_MS)
            .map(|i| {
                let at = i * FRAME_MS;
                if spans.iter().any(|&(a, b)| a <= at && at < b) {
                    rng.gen_range(300..=1000) as f64 / 1000.0
                } else {
                    SILENCE_ENERGY
                }
            })
            .collect();
        EnergySeries::new(FRAME_MS, 0, values).expect("generated energy is valid")
    });

    tags.sort();
    Synthetic {
        truth: TruthTags {
            conversation_id: conversation.id.clone(),
            script_class: layout.class,
            tags,
        },
        conversation,
        energy,
        overlaps: Some(IntervalSet::normalized(IntervalKind::Overlap, overlaps)),
    }
}

fn check_cell(metric: Metric, polarity: Polarity) -> Result<(), GenError> {
    if metric.has_rule(polarity) {
        Ok(())
    } else {
        Err(GenError::NoRule { metric, polarity })
    }
}

fn check_noise(noise: f64) -> Result<(), GenError> {
    if (0.0..=1.0).contains(&noise) {
        Ok(())
    } else {
        Err(GenError::Noise(noise))
    }
}

/// Number of constructions to perturb out of `n`: the rounded share, but at
/// least one whenever noise is requested.
pub fn noised_count(noise: f64, n: usize) -> usize {
    if noise <= 0.0 || n == 0 {
        return 0;
    }
    ((noise * n as f64).round() as usize).clamp(1, n)
}

fn select_noised(rng: &mut ChaCha8Rng, noise: f64, n: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(noised_count(noise, n));
    idx.into_iter().collect()
}

pub fn gen_synthetic(seed: u64, spec: &GenSpec) -> Result<Synthetic, GenError> {
    check_noise(spec.noise)?;
    for c in &spec.counts {
        check_cell(c.metric, c.polarity)?;
    }
    if spec.counts.iter().all(|c| c.count == 0) {
        return Err(GenError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e_6f69_7365);
    let mut constructions = Vec::new();
    for c in &spec.counts {
        let noised = select_noised(&mut rng, spec.noise, c.count);
        constructions.extend((0..c.count).map(|k| Construction {
            metric: c.metric,
            polarity: c.polarity,
            noised: noised.contains(&k),
        }));
    }
    let layout = Layout {
        class: spec.script_class,
        id: format!("synth-{seed}"),
        metadata: BTreeMap::from([
            ("script_class".to_string(), spec.script_class.to_string()),
            ("session_date".to_string(), session_date(0)),
        ]),
        audio: spec.audio,
    };
    Ok(build(seed, layout, &constructions))
}

/// Deterministic calendar date for the `i`-th generated session.
fn session_date(i: usize) -> String {
    format!("2026-{:02}-{:02}", 1 + (i / 28) % 12, 1 + i % 28)
}

pub fn gen_corpus(seed: u64, spec: &CorpusSpec) -> Result<Vec<Synthetic>, GenError> {
    check_noise(spec.noise)?;
    if spec.conversations == 0 {
        return Err(GenError::Invalid("conversations must be positive".into()));
    }
    for &m in spec.good.keys() {
        check_cell(m, Polarity::Good)?;
    }
    for &m in spec.bad.keys() {
        check_cell(m, Polarity::Bad)?;
    }
    let wants = |m: &BTreeMap<Metric, usize>| m.values().any(|&n| n > 0);
    let classes: Vec<ScriptClass> = match (wants(&spec.good), wants(&spec.bad)) {
        (true, true) => vec![ScriptClass::GoodScript, ScriptClass::BadScript],
        (true, false) => vec![ScriptClass::GoodScript],
        (false, true) => vec![ScriptClass::BadScript],
        (false, false) => return Err(GenError::Empty),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan: Vec<(ScriptClass, u64)> = (0..spec.conversations)
        .map(|i| (classes[i % classes.len()], rng.gen()))
        .collect();

    // Noise is drawn per cell over the whole corpus so that small per-script
    // counts still receive their share.
    let mut per_conv: Vec<Vec<Construction>> = vec![Vec::new(); plan.len()];
    for class in &classes {
        let (polarity, counts) = match class {
            ScriptClass::GoodScript => (Polarity::Good, &spec.good),
            ScriptClass::BadScript => (Polarity::Bad, &spec.bad),
        };
        for (&metric, &count) in counts {
            let slots: Vec<usize> = plan
                .iter()
                .enumerate()
                .filter(|(_, p)| p.0 == *class)
                .flat_map(|(i, _)| std::iter::repeat_n(i, count))
                .collect();
            let noised = select_noised(&mut rng, spec.noise, slots.len());
            for (k, &conv) in slots.iter().enumerate() {
                per_conv[conv].push(Construction {
                    metric,
                    polarity,
                    noised: noised.contains(&k),
                });
            }
        }
    }

    Ok(plan
        .iter()
        .zip(per_conv)
        .enumerate()
        .map(|(i, (&(class, conv_seed), constructions))| {
            let layout = Layout {
                class,
                id: format!("synth-{seed}-{i:03}"),
                metadata: BTreeMap::from([
                    ("script_class".to_string(), class.to_string()),
                    ("session_date".to_string(), session_date(i)),
                ]),
                audio: spec.audio,
            };
            build(conv_seed, layout, &constructions)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Engine;
    use crate::rules::Label;

    fn cell(metric: Metric, polarity: Polarity, count: usize) -> CellCount {
        CellCount { metric, polarity, count }
    }

    #[test]
    fn understanding_good_twice() {
        let spec = GenSpec {
            script_class: ScriptClass::GoodScript,
            counts: vec![cell(Metric::Understanding, Polarity::Good, 2)],
            noise: 0.0,
            audio: false,
        };
        let s = gen_synthetic(7, &spec).unwrap();
        assert_eq!(s.truth.tags.len(), 2);
        let a = Engine::default().analyze(&s.conversation, &s.audio()).unwrap();
        let good: Vec<usize> = a
            .labels
            .iter()
            .filter(|l| l.metric == Metric::Understanding && l.label == Label::Good)
            .map(|l| l.segment)
            .collect();
        let tagged: Vec<usize> = s.truth.tags.iter().map(|t| t.segment).collect();
        assert_eq!(good, tagged);
    }

    #[test]
    fn bad_understanding_is_unsatisfiable() {
        let spec = GenSpec {
            script_class: ScriptClass::BadScript,
            counts: vec![cell(Metric::Understanding, Polarity::Bad, 1)],
            noise: 0.0,
            audio: true,
        };
        let err = gen_synthetic(1, &spec).unwrap_err();
        assert_eq!(err.to_string(), "no bad rule for understanding");
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_corpus(42, &CorpusSpec::default()).unwrap();
        let b = gen_corpus(42, &CorpusSpec::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.conversation.to_json(), y.conversation.to_json());
            assert_eq!(x.truth.to_json(), y.truth.to_json());
            assert_eq!(x.energy.as_ref().map(|e| e.to_text()), y.energy.as_ref().map(|e| e.to_text()));
        }
        let c = gen_corpus(43, &CorpusSpec::default()).unwrap();
        assert_ne!(a[0].conversation.to_json(), c[0].conversation.to_json());
    }

    #[test]
    fn every_construction_fires_exactly() {
        let spec = CorpusSpec {
            conversations: 40,
            good: Metric::ALL.into_iter().map(|m| (m, 3)).collect(),
            bad: [Metric::Emotion, Metric::Presence, Metric::Clarity]
                .into_iter()
                .map(|m| (m, 3))
                .collect(),
            ..CorpusSpec::default()
        };
        let mut engine = Engine::default();
        for s in gen_corpus(5, &spec).unwrap() {
            let a = engine.analyze(&s.conversation, &s.audio()).unwrap();
            for l in a.labels.iter().filter(|l| l.role == crate::Role::Provider) {
                let want = s.truth.tag(l.segment, l.metric).map_or(Label::None, Polarity::label);
                // Good scripts may only be scored for good labels and vice versa.
                let got = if l.label == s.truth.script_class.target().label() { l.label } else { Label::None };
                assert_eq!(got, want, "{} segment {} {}: {:?}", s.conversation.id, l.segment, l.metric, l.evidence);
            }
        }
    }

    #[test]
    fn noise_counts() {
        assert_eq!(noised_count(0.0, 12), 0);
        assert_eq!(noised_count(0.3, 12), 4);
        assert_eq!(noised_count(0.3, 1), 1);
        assert_eq!(noised_count(1.0, 5), 5);
        assert!(matches!(
            gen_corpus(1, &CorpusSpec { noise: 1.5, ..CorpusSpec::default() }),
            Err(GenError::Noise(_))
        ));
    }
}
