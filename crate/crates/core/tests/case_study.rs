mod common;

use common::fixtures::{self, mock_tokenize};
use corver_core::grading::{GoldAnswers, Label};
use corver_core::query::StopWordList;
use corver_core::reward::{FixedCounter, RewardMap, SentenceScorer, Stage, Variant};
use corver_core::segment::{split_sentences, Block, Completion};
use corver_core::triplet::StubExtractor;
use corver_core::{Engine, Settings};

fn engine_for(case: &fixtures::TraceCase) -> Engine {
    Engine::from_parts(Box::new(case.counter()), 0, Box::new(case.extractor()), StopWordList::default(), Settings::default())
        .unwrap()
}

#[test]
fn replayed_traces_match_recorded_rewards() {
    for case in fixtures::case_study() {
        let engine = engine_for(&case);
        let completion = Completion::unpadded(case.text.clone(), mock_tokenize(&case.text));
        let gold = GoldAnswers::new(case.gold.clone());
        let score = engine.score_completion::<f64>(&completion, Some(&gold)).unwrap();

        assert_eq!(score.sentence_scores.len(), case.sentences.len(), "{}", case.name);
        let spans = split_sentences(&case.text);
        for (i, (got, want)) in score.sentence_scores.iter().zip(&case.sentences).enumerate() {
            let ctx = format!("{} sentence {}", case.name, i + 1);
            assert_eq!(spans[i].text(&case.text), want.text, "{ctx}");
            let block = if want.block == "think" { Block::Think } else { Block::Answer };
            assert_eq!(got.block, block, "{ctx}");
            assert_eq!(got.query.as_ref().unwrap().words, want.query, "{ctx}");
            assert_eq!(got.count.unwrap().count, want.count, "{ctx}");
            assert_eq!(got.reward, want.reward, "{ctx}");
            assert_eq!(got.stage, Stage::Counted, "{ctx}");
        }
        assert_eq!(score.judge.unwrap().label, Label::Good, "{}", case.name);
        assert!(score.format.ok, "{}", case.name);
        assert!(score.alignment.rate >= 0.99, "{}: {}", case.name, score.alignment.rate);
    }
}

#[test]
fn sentence_counts_per_case() {
    let cases = fixtures::case_study();
    let counts: Vec<usize> = cases.iter().map(|c| split_sentences(&c.text).len()).collect();
    assert_eq!(counts, [5, 6]);
}

const FILM: &str = "Mario Camerini directed Il Seduttore.";

fn film_scorer<'a>(
    extractor: &'a StubExtractor,
    counter: &'a FixedCounter,
    stops: &'a StopWordList,
    variant: Variant,
) -> SentenceScorer<'a, f64> {
    SentenceScorer {
        extractor,
        counter,
        stops,
        map: RewardMap::default(),
        variant,
        window: 1000,
        relcheck_demotion: -0.05,
    }
}

#[test]
fn aggregation_worked_example() {
    let stops = StopWordList::default();
    let extractor = StubExtractor::new().with(
        FILM,
        r#"[["Mario Camerini", "directed", "Il Seduttore"], ["Il Seduttore", "starred", "Sophia Loren"]]"#,
    );
    let counter = FixedCounter::new()
        .with(&["Mario", "Camerini", "Il", "Seduttore"], 50)
        .with(&["Il", "Seduttore", "Sophia", "Loren"], 0)
        .with(&["Mario", "Camerini", "Il", "Seduttore", "directed"], 7);

    let first = film_scorer(&extractor, &counter, &stops, Variant::First).score_sentence_first(FILM).unwrap();
    assert_eq!((first.count.unwrap().count, first.reward), (50, 0.1));

    let min = film_scorer(&extractor, &counter, &stops, Variant::Min).score_sentence_min(FILM).unwrap();
    assert_eq!((min.count.unwrap().count, min.reward, min.triplets_counted), (0, -0.3, 2));

    let rel = film_scorer(&extractor, &counter, &stops, Variant::RelCheck).score_sentence_relcheck(FILM).unwrap();
    assert_eq!((rel.reward, rel.stage, rel.relcheck_demoted), (0.1, Stage::RelationChecked, false));
}

#[test]
fn relcheck_demotes_swapped_director() {
    let sentence = "Sophia Loren directed Il Seduttore.";
    let stops = StopWordList::default();
    let extractor = StubExtractor::new().with(sentence, r#"[["Sophia Loren", "directed", "Il Seduttore"]]"#);
    // incidental co-occurrence of the entities, none with the relation word
    let counter = FixedCounter::new().with(&["Sophia", "Loren", "Il", "Seduttore"], 40);
    let s = film_scorer(&extractor, &counter, &stops, Variant::RelCheck).score_sentence_relcheck(sentence).unwrap();
    assert_eq!(s.count.unwrap().count, 40);
    assert_eq!(s.relation_query.as_ref().unwrap().words, ["Sophia", "Loren", "Il", "Seduttore", "directed"]);
    assert_eq!(s.relation_count.unwrap().count, 0);
    assert_eq!(s.reward, -0.05);
    assert!(s.relcheck_demoted);

    let first = film_scorer(&extractor, &counter, &stops, Variant::First).score_sentence_first(sentence).unwrap();
    assert_eq!(first.reward, 0.1);
}
