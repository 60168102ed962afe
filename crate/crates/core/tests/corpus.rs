use proptest::prelude::*;

use tqa_core::corpus::{
    format_teacher_only, ingest_corpus, segment_session, write_corpus, SegmentPolicy, Session, Source, Utterance,
};
use tqa_core::synth::{emit, generate, SynthConfig};

fn utterance() -> impl Strategy<Value = Utterance> {
    (any::<bool>(), "[a-z]{1,6}( [a-z]{1,6}){0,4}[.?!]( [a-z]{1,6}[.])?").prop_map(|(teacher, text)| {
        if teacher {
            Utterance::teacher(format!("T{text}"))
        } else {
            Utterance::student(Some("s1"), format!("S{text}"))
        }
    })
}

fn session() -> impl Strategy<Value = Session> {
    prop::collection::vec(utterance(), 1..15).prop_map(|utts| {
        let timed = utts
            .into_iter()
            .enumerate()
            .map(|(i, u)| u.with_times(i as f64 * 37.0, i as f64 * 37.0 + 30.0))
            .collect();
        Session::new("p", Source::Classroom, timed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn teacher_only_text_excludes_students(s in session()) {
        let text = format_teacher_only(&s);
        prop_assert!(!text.contains('S'));
        let teacher_chars: usize = s.utterances.iter().filter(|u| u.speaker.is_teacher()).map(|u| u.text.len()).sum();
        prop_assert!(text.len() >= teacher_chars);
    }

    #[test]
    fn segments_concatenate_to_the_session(s in session(), count in 1usize..6, seconds in 30.0f64..400.0) {
        for policy in [SegmentPolicy::ByUtteranceCount(count), SegmentPolicy::ByTime(seconds)] {
            let segments = segment_session(&s, policy).unwrap();
            let rejoined: Vec<Utterance> = segments.iter().flat_map(|g| g.utterances.clone()).collect();
            prop_assert_eq!(&rejoined, &s.utterances);
            prop_assert!(segments.windows(2).all(|w| w[0].segment_index < w[1].segment_index));
        }
    }

    #[test]
    fn emit_then_ingest_is_identity(seed in 0u64..1000, classroom in any::<bool>(), raters in 1usize..4) {
        let config = SynthConfig {
            n_sessions: 12,
            seed,
            source: if classroom { Source::Classroom } else { Source::Simulation },
            student_fraction: if classroom { 0.3 } else { 0.0 },
            rater_count: raters,
            rater_noise: 0.3,
            variables: vec!["objective".into(), "ending".into()],
            ..SynthConfig::default()
        };
        let corpus = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        emit(&corpus, &path).unwrap();
        let back = ingest_corpus(&path, config.source).unwrap();
        prop_assert_eq!(&back, &corpus);
        let again = dir.path().join("d.jsonl");
        write_corpus(&back, &again).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn schema_mismatch_is_rejected_on_ingest() {
    let corpus = generate(&SynthConfig {
        n_sessions: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    emit(&corpus, &path).unwrap();
    assert!(ingest_corpus(&path, Source::Classroom).is_err());
}
