use std::path::{Path, PathBuf};

use convassess::classify::BaselineClassifier;
use convassess::eval::{evaluate_corpus, load_truth};
use convassess::features::AudioInputs;
use convassess::transcript::{split_sentences, Role};
use convassess::acoustics::{load_overlaps, EnergySeries};
use convassess::{Engine, Label, Metric, Polarity};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn read(name: &str) -> Vec<u8> {
    std::fs::read(fixture(name)).unwrap()
}

#[test]
fn baseline_agrees_with_labeled_sentences() {
    let text = String::from_utf8(read("labeled_sentences.tsv")).unwrap();
    let c = BaselineClassifier::default();
    let mut checked = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let [task, role, want, sentence] = cols[..] else {
            panic!("bad fixture line {line:?}");
        };
        let spans = split_sentences(sentence);
        assert_eq!(spans.len(), 1, "{sentence}");
        let role = Role::parse(role).unwrap();
        let verdict = match task {
            "open_question" => c.detect_open_question(&spans[0]),
            "empathy" => c.classify_empathy(&spans[0], role),
            other => panic!("unknown task {other}"),
        };
        assert_eq!(verdict.label.as_deref(), Some(want), "{sentence}");
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn intellectualizing_reply_is_bad_emotion() {
    let mut engine = Engine::default();
    let a = engine.analyze_bytes(&read("intellectualize.transcript.json"), &AudioInputs::default()).unwrap();
    let l = a.label(1, Metric::Emotion).unwrap();
    assert_eq!(l.label, Label::Bad);
    assert_eq!(l.evidence[0].rule, "emotion.intellectualizing");
    let truth = load_truth(&read("intellectualize.truth.json")).unwrap();
    let report = evaluate_corpus(&[(a, truth)]).unwrap();
    let cell = report.cell(Metric::Emotion, Polarity::Bad, convassess::eval::ScriptClass::BadScript).unwrap();
    assert_eq!((cell.counts.tp, cell.counts.fp, cell.counts.fn_), (1, 0, 0));
}

#[test]
fn good_script_labels_equal_its_tags() {
    let dir = "good_script/synth-7-000";
    let audio = AudioInputs {
        energy: Some(EnergySeries::parse(&read(&format!("{dir}.energy.csv"))).unwrap()),
        overlaps: Some(load_overlaps(&read(&format!("{dir}.overlaps.csv"))).unwrap()),
    };
    let a = Engine::default().analyze_bytes(&read(&format!("{dir}.transcript.json")), &audio).unwrap();
    let truth = load_truth(&read(&format!("{dir}.truth.json"))).unwrap();
    let fired: Vec<(usize, Metric)> =
        a.labels.iter().filter(|l| l.label == Label::Good).map(|l| (l.segment, l.metric)).collect();
    let mut tagged: Vec<(usize, Metric)> = truth.tags.iter().map(|t| (t.segment, t.metric)).collect();
    tagged.sort();
    assert_eq!(fired, tagged);
    assert!(a.labels.iter().all(|l| l.label != Label::Bad));
}
