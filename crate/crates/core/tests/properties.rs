use proptest::prelude::*;

use surgbench::arena::{arena_score, ArenaVector};
use surgbench::datamodel::{BoundingBox, Label, TaskKind, TaskVocabularies};
use surgbench::harness::synthetic_records;
use surgbench::kernel::{mrope_rotate, KernelConfig, PositionTriple};
use surgbench::metrics::{classification_report, detection_map, DetectionSet, ImageDetections, ScoredBox};
use surgbench::parser::{match_keyword, parse_label, KeywordVerdict, ParseConfig};
use surgbench::pipeline::{build_dataset, PipelineConfig, Resources};

const CLASS_TASKS: [TaskKind; 3] =
    [TaskKind::PhaseRecognition, TaskKind::ActionRecognition, TaskKind::InstrumentRecognition];

fn filler() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof!["the", "image", "shows", "a", "frame", "of", "surgery"], 0..6)
        .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parsing_a_rendered_label_is_idempotent(t in 0usize..3, i in 0usize..16, pre in filler(), post in filler()) {
        let cfg = ParseConfig::default();
        let task = CLASS_TASKS[t];
        let terms = cfg.vocab.for_task(task).to_vec();
        let term = &terms[i % terms.len()];
        let first = parse_label(task, &format!("{pre} {term} {post}"), &cfg);
        if let Some(label) = first.value() {
            let again = parse_label(task, &label.render(), &cfg);
            prop_assert_eq!(again.value(), Some(label));
        }
    }

    #[test]
    fn embedded_keyword_is_always_found(i in 0usize..8, pre in filler(), post in filler()) {
        let cfg = ParseConfig::default();
        let terms = cfg.vocab.for_task(TaskKind::ActionRecognition).to_vec();
        let term = terms[i % terms.len()].clone();
        let response = format!("{pre} {} {post}", term.to_uppercase());
        prop_assert_eq!(match_keyword(&response, &[term], &cfg), KeywordVerdict::Correct);
    }

    #[test]
    fn classification_is_bounded_and_order_free(
        pairs in proptest::collection::vec((0usize..4, proptest::option::of(0usize..4)), 1..40),
        rot in 0usize..40,
    ) {
        let classes: Vec<String> = (0..4).map(|c| format!("c{c}")).collect();
        let gt: Vec<String> = pairs.iter().map(|(g, _)| classes[*g].clone()).collect();
        let pred: Vec<Option<String>> = pairs.iter().map(|(_, p)| p.map(|p| classes[p].clone())).collect();
        let a = classification_report(&gt, &pred, &classes).unwrap();
        for v in a.metrics.values() {
            prop_assert!((0.0..=100.0).contains(v));
        }
        let k = rot % gt.len();
        let (mut gt2, mut pred2) = (gt.clone(), pred.clone());
        gt2.rotate_left(k);
        pred2.rotate_left(k);
        let b = classification_report(&gt2, &pred2, &classes).unwrap();
        for (key, v) in &a.metrics {
            prop_assert!((v - b.metrics[key]).abs() < 1e-9, "{key}");
        }
    }

    #[test]
    fn detection_metrics_are_bounded(
        boxes in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0, 1.0f64..30.0, 1.0f64..30.0, 0.0f64..1.0), 1..6),
        shift in -10.0f64..10.0,
    ) {
        let gt: Vec<BoundingBox> = boxes.iter().map(|(x, y, w, h, _)| BoundingBox::new(*x, *y, x + w, y + h)).collect();
        let pred = boxes
            .iter()
            .map(|(x, y, w, h, c)| ScoredBox { bbox: BoundingBox::new(x + shift, *y, x + shift + w, y + h), confidence: *c })
            .collect();
        let r = detection_map(&DetectionSet { images: vec![ImageDetections { gt, pred, failed: false }] }).unwrap();
        for v in r.metrics.values() {
            prop_assert!((0.0..=100.0 + 1e-9).contains(v));
        }
        prop_assert!(r.get("map75").unwrap() <= r.get("map50").unwrap() + 1e-9);
    }

    #[test]
    fn arena_score_is_the_component_sum(v in proptest::array::uniform6(0.0f64..=100.0)) {
        let score = arena_score(&ArenaVector::new(v).unwrap()).unwrap();
        prop_assert!((score - v.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn mrope_preserves_norm(t in 0.0f64..100.0, u in 0u32..64, w in 0u32..64, seed in 0u64..1000) {
        let cfg = KernelConfig::default();
        let x: Vec<f64> = (0..cfg.head_dim).map(|i| ((i as u64 * 31 + seed) as f64).sin()).collect();
        let y = mrope_rotate(&x, PositionTriple::new(t, u as f64, w as f64), &cfg).unwrap();
        let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!((n(&x) - n(&y)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn builds_are_order_free_and_keep_keywords(seed in 0u64..1000, rot in 0usize..30) {
        let vocab = TaskVocabularies::builtin();
        let mut records = synthetic_records("cholec80", 15, seed, &vocab).unwrap();
        records.extend(synthetic_records("cholect50", 15, seed, &vocab).unwrap());
        let mut cfg = PipelineConfig::new("unused.jsonl");
        cfg.seed = seed;
        let res = Resources::builtin();
        let a = build_dataset(records.clone(), &cfg, &res).unwrap();
        records.rotate_left(rot);
        let b = build_dataset(records, &cfg, &res).unwrap();
        prop_assert_eq!(&a.conversations, &b.conversations);
        for turn in a.conversations.iter().flat_map(|c| &c.turns).filter(|t| t.options.is_none()) {
            let answer = turn.answer.to_lowercase();
            prop_assert!(!turn.keywords.is_empty());
            for k in &turn.keywords {
                prop_assert!(answer.contains(&k.to_lowercase()), "{} lacks {}", turn.answer, k);
            }
        }
    }

    #[test]
    fn boxes_parse_back_from_their_rendering(x in 0u32..500, y in 0u32..500, w in 1u32..300, h in 1u32..300) {
        let cfg = ParseConfig::default();
        let b = BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64);
        let label = Label::Boxes(vec![b]);
        let parsed = parse_label(TaskKind::InstrumentLocalizationBox, &label.render(), &cfg);
        prop_assert_eq!(parsed.value(), Some(&label));
    }
}
