mod common;

use common::*;
use convassess::acoustics::{EnergySeries, Interval, IntervalKind, IntervalSet};
use convassess::features::AudioInputs;
use convassess::rules::rule_polarity;
use convassess::{Assessment, Engine, Label, Metric, Polarity, Role};
use proptest::prelude::*;
use rand::Rng;

fn random_audio(r: &mut rand_chacha::ChaCha8Rng, duration_ms: u64) -> AudioInputs {
    let frames = (duration_ms / 100).max(1) as usize;
    let energy = r.gen_bool(0.7).then(|| {
        EnergySeries::new(100, 0, (0..frames).map(|_| r.gen_range(0..20) as f64 / 10.0).collect()).unwrap()
    });
    let overlaps = r
        .gen_bool(0.7)
        .then(|| IntervalSet::normalized(IntervalKind::Overlap, random_intervals(r, duration_ms.max(1), 4)));
    AudioInputs { energy, overlaps }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn labels_respect_gating_and_precedence(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (_, conv) = random_transcript(&mut r, 12);
        prop_assume!(conv.has_role(Role::Provider) && conv.has_role(Role::Patient) && conv.duration_ms > 0);
        let audio = random_audio(&mut r, conv.duration_ms);
        let mut engine = Engine::default();
        let Ok(a) = engine.analyze(&conv, &audio) else {
            // Only zero provider speech time can fail here.
            prop_assert!(conv.segments.iter().filter(|s| s.role == Role::Provider).all(|s| s.end_ms == s.start_ms));
            return Ok(());
        };
        prop_assert_eq!(a.labels.len(), conv.segments.len() * 5);
        for (i, chunk) in a.labels.chunks(5).enumerate() {
            prop_assert!(chunk.iter().map(|l| l.metric).eq(Metric::ALL));
            prop_assert!(chunk.iter().all(|l| l.segment == i));
        }
        for l in &a.labels {
            prop_assert_eq!(l.label == Label::None, l.evidence.is_empty());
            if l.role == Role::Patient {
                prop_assert_eq!(l.label, Label::None);
            }
            let pols: Vec<Polarity> = l.evidence.iter().map(|e| rule_polarity(&e.rule).unwrap()).collect();
            if pols.contains(&Polarity::Bad) {
                prop_assert_eq!(l.label, Label::Bad);
            } else if !pols.is_empty() {
                prop_assert_eq!(l.label, Label::Good);
            }
        }
        let again = Engine::default().analyze(&conv, &audio).unwrap();
        prop_assert_eq!(again.to_json(), a.to_json());
        prop_assert_eq!(Assessment::from_json(a.to_json().as_bytes()).unwrap(), a);
    }

    #[test]
    fn added_overlap_only_pushes_toward_bad(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (_, conv) = random_transcript(&mut r, 10);
        let providers: Vec<usize> = conv
            .segments
            .iter()
            .filter(|s| s.role == Role::Provider && s.end_ms > s.start_ms)
            .map(|s| s.index)
            .collect();
        prop_assume!(!providers.is_empty() && conv.has_role(Role::Patient));
        let mut audio = random_audio(&mut r, conv.duration_ms);
        let mut engine = Engine::default();
        let before = engine.analyze(&conv, &audio).unwrap();

        let target = &conv.segments[providers[r.gen_range(0..providers.len())]];
        let at = r.gen_range(target.start_ms..target.end_ms);
        let mut raw: Vec<Interval> = audio.overlaps.as_ref().map_or(vec![], |o| o.intervals().to_vec());
        raw.push(Interval { start_ms: at, end_ms: at + 1 });
        audio.overlaps = Some(IntervalSet::normalized(IntervalKind::Overlap, raw));
        let after = engine.analyze(&conv, &audio).unwrap();

        prop_assert_eq!(after.label(target.index, Metric::Presence).unwrap().label, Label::Bad);
        for (b, a) in before.labels.iter().zip(&after.labels) {
            if b.metric == Metric::Presence && b.label == Label::Bad {
                prop_assert_eq!(a.label, Label::Bad);
            }
        }
    }
}
