use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tqa_core::annotate::unit_label;
use tqa_core::corpus::{InputFormat, SentenceRef, Session};
use tqa_core::harness::{ExperimentConfig, Fold};
use tqa_core::metrics::macro_f1;
use tqa_core::scorer::{ClassWeights, FeatureVocab, Hyper, LinearScorer, VocabConfig};
use tqa_core::synth::{generate, SynthConfig};
use tqa_core::twostage::{EmptyPolicy, RelevanceProvider, SpanMap, TwoStagePipeline};

const QS: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

fn gold(s: &Session) -> Vec<SentenceRef> {
    s.annotations["objective"].relevance.clone().unwrap_or_default()
}

/// Gold spans of each unit with `round(q * k)` of its `k` relevant sentences
/// removed. Removals are nested: a larger `q` removes a superset.
fn degraded(units: &[&Session], q: f64, seed: u64) -> SpanMap {
    let mut map = SpanMap::default();
    for (i, s) in units.iter().enumerate() {
        let mut refs = gold(s);
        refs.sort();
        refs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ (i as u64) << 16));
        let drop = (q * refs.len() as f64).round() as usize;
        map.spans.insert(s.session_id.clone(), refs[drop..].to_vec());
    }
    map
}

#[test]
fn removing_relevant_sentences_never_helps() {
    let mut means = [0.0; 4];
    for seed in 0..5 {
        let corpus = generate(&SynthConfig {
            n_sessions: 400,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let config = ExperimentConfig::default();
        let fold = Fold::build(&corpus, "objective", &config, seed).unwrap();
        let gold_provider = RelevanceProvider::Gold("objective".into());
        let evidence = |provider, s: &Session, scorer| {
            TwoStagePipeline {
                relevance: provider,
                scorer,
                empty_policy: EmptyPolicy::EmptyInput,
                format: InputFormat::TeacherOnly,
            }
            .stage2_text(s)
            .unwrap()
            .unwrap()
        };
        let placeholder = placeholder_scorer();
        let texts: Vec<String> = fold
            .train
            .iter()
            .map(|s| evidence(&gold_provider, s, &placeholder))
            .collect();
        let labels: Vec<usize> = fold.train_labels.iter().map(|l| l.index()).collect();
        let scorer = LinearScorer::fit(&texts, &labels, 3, &ClassWeights::uniform(3), &Hyper::default()).unwrap();
        let golds: Vec<usize> = fold
            .test
            .iter()
            .map(|s| unit_label(*s, "objective").unwrap().index())
            .collect();
        for (k, q) in QS.iter().enumerate() {
            let provider = RelevanceProvider::Spans(degraded(&fold.test, *q, seed));
            let pipeline = TwoStagePipeline {
                relevance: &provider,
                scorer: &scorer,
                empty_policy: EmptyPolicy::EmptyInput,
                format: InputFormat::TeacherOnly,
            };
            let preds: Vec<usize> = pipeline
                .predict_many(&fold.test)
                .unwrap()
                .into_iter()
                .map(|(p, _)| p)
                .collect();
            means[k] += macro_f1(&preds, &golds, &[0, 1, 2]).unwrap().macro_f1 / 5.0;
        }
    }
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "macro-F1 rose as relevance degraded: {means:?}");
    }
    assert!(means[0] > means[3], "{means:?}");
}

#[test]
fn full_removal_gives_empty_stage2_input() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let units: Vec<&Session> = corpus.sessions.iter().collect();
    let provider = RelevanceProvider::Spans(degraded(&units, 1.0, 0));
    let placeholder = placeholder_scorer();
    for policy in [
        EmptyPolicy::EmptyInput,
        EmptyPolicy::FullText,
        EmptyPolicy::PredictLowest,
    ] {
        let pipeline = TwoStagePipeline {
            relevance: &provider,
            scorer: &placeholder,
            empty_policy: policy,
            format: InputFormat::TeacherOnly,
        };
        for s in &units {
            let text = pipeline.stage2_text(*s).unwrap();
            match policy {
                EmptyPolicy::EmptyInput => assert_eq!(text.as_deref(), Some("")),
                EmptyPolicy::FullText => assert_eq!(text, Some(tqa_core::corpus::format_teacher_only(*s))),
                EmptyPolicy::PredictLowest => {
                    assert_eq!(text, None);
                    assert_eq!(pipeline.predict(*s).unwrap().0, 0);
                }
            }
        }
    }
}

#[test]
fn pipeline_is_deterministic() {
    let corpus = generate(&SynthConfig {
        n_sessions: 120,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let fold = Fold::build(&corpus, "objective", &ExperimentConfig::default(), 0).unwrap();
    let run = || {
        let model = tqa_core::twostage::fit_relevance(&fold.train, "objective", &Default::default()).unwrap();
        let provider = RelevanceProvider::Model(model);
        let texts: Vec<String> = fold
            .train
            .iter()
            .map(|s| tqa_core::corpus::format_teacher_only(*s))
            .collect();
        let labels: Vec<usize> = fold.train_labels.iter().map(|l| l.index()).collect();
        let scorer = LinearScorer::fit(&texts, &labels, 3, &ClassWeights::uniform(3), &Hyper::default()).unwrap();
        let pipeline = TwoStagePipeline {
            relevance: &provider,
            scorer: &scorer,
            empty_policy: EmptyPolicy::FullText,
            format: InputFormat::TeacherOnly,
        };
        pipeline.predict_many(&fold.test).unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a
        .iter()
        .zip(&b)
        .all(|(x, y)| x.0 == y.0 && x.1.iter().zip(&y.1).all(|(p, q)| p.to_bits() == q.to_bits())));
}

/// Stands in where only stage-2 text assembly is exercised.
fn placeholder_scorer() -> LinearScorer {
    LinearScorer::zeroed(FeatureVocab::build::<&str>(&[], VocabConfig::default()), 3)
}

fn is_subsequence(part: &[String], whole: &[String]) -> bool {
    let mut it = whole.iter();
    part.iter().all(|p| it.any(|w| w == p))
}

proptest::proptest! {
    #[test]
    fn assembly_is_a_subsequence_of_the_unit(seed in 0u64..500, picks in proptest::collection::vec((0usize..40, 0usize..6), 0..12)) {
        let corpus = generate(&SynthConfig {
            n_sessions: 1,
            seed,
            source: tqa_core::corpus::Source::Classroom,
            student_fraction: 0.4,
            ..SynthConfig::default()
        })
        .unwrap();
        let s = &corpus.sessions[0];
        let sentences = s.sentences();
        let refs: Vec<SentenceRef> = picks
            .into_iter()
            .filter(|&(u, k)| u < sentences.len() && k < sentences[u].len())
            .map(|(u, k)| SentenceRef::new(u, k))
            .collect();
        let flat: Vec<String> = sentences.iter().flatten().cloned().collect();
        let teacher: Vec<String> = s
            .utterances
            .iter()
            .zip(&sentences)
            .filter(|(u, _)| u.speaker.is_teacher())
            .flat_map(|(_, ss)| ss.clone())
            .collect();
        let text = tqa_core::twostage::assemble_relevant(s, &refs, InputFormat::TeacherOnly).unwrap();
        proptest::prop_assert!(is_subsequence(&tqa_core::corpus::sentence_split(&text), &teacher));
        let styled = tqa_core::twostage::assemble_relevant(s, &refs, InputFormat::TranscriptStyle).unwrap();
        let mut got = Vec::new();
        for line in styled.lines() {
            let (_, body) = line.split_once(": ").unwrap();
            got.extend(tqa_core::corpus::sentence_split(body));
        }
        proptest::prop_assert!(is_subsequence(&got, &flat));
    }
}
