use emoclass::corpus::{class_distribution, read_split, write_split, Dataset, Sample, Split};
use emoclass::encode::{encode_dataset, WordHashTokenizer};
use emoclass::infer::Predictor;
use emoclass::labelspace::{reduce_dataset, NeutralPolicy};
use emoclass::metrics::{report, AveragingMode};
use emoclass::textnorm::preprocess_dataset;
use emoclass::trainer::ReferenceClassifier;
use emoclass::LabelVector;
use proptest::prelude::*;

fn dataset_strategy(labeled: bool) -> impl Strategy<Value = Dataset> {
    let text = "[a-zA-Z ƙƘɗƊɓƁ,\"'\r\n\t\u{a0}]{0,24}";
    proptest::collection::vec((text, 0u8..64), 0..20).prop_map(move |rows| {
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (text, mask))| Sample {
                id: format!("hau_{i:03}"),
                text,
                labels: labeled.then(|| LabelVector::from_mask(mask)),
            })
            .collect();
        Dataset::new(Split::Train, samples, labeled).unwrap()
    })
}

fn pairs_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    proptest::collection::vec((0usize..6, 0usize..6), 1..50).prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #[test]
    fn csv_round_trip_is_identity(ds in dataset_strategy(true)) {
        let mut buf = Vec::new();
        write_split(&ds, &mut buf).unwrap();
        let back = read_split(buf.as_slice(), "rt", Split::Train, true).unwrap();
        prop_assert_eq!(back.len(), ds.len());
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn unlabeled_round_trip(ds in dataset_strategy(false)) {
        let mut buf = Vec::new();
        write_split(&ds, &mut buf).unwrap();
        prop_assert_eq!(read_split(buf.as_slice(), "rt", Split::Train, false).unwrap(), ds);
    }

    #[test]
    fn distribution_ignores_sample_order(ds in dataset_strategy(true), seed in any::<u64>()) {
        let mut samples = ds.samples().to_vec();
        let n = samples.len();
        if n > 1 {
            for i in 0..n {
                samples.swap(i, (seed as usize).wrapping_add(i * 7) % n);
            }
        }
        let shuffled = Dataset::new(Split::Train, samples, true).unwrap();
        prop_assert_eq!(class_distribution(&ds).unwrap(), class_distribution(&shuffled).unwrap());
    }

    #[test]
    fn preprocessing_keeps_ids_labels_and_order(ds in dataset_strategy(true)) {
        let clean = preprocess_dataset(&ds);
        prop_assert_eq!(clean.len(), ds.len());
        for (a, b) in clean.samples().iter().zip(ds.samples()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.labels, b.labels);
            prop_assert!(a.text.chars().count() <= b.text.chars().count());
        }
    }

    #[test]
    fn metrics_are_permutation_invariant((gold, pred) in pairs_strategy(), rot in 0usize..50) {
        let n = gold.len();
        let k = rot % n;
        let g2: Vec<usize> = gold[k..].iter().chain(&gold[..k]).copied().collect();
        let p2: Vec<usize> = pred[k..].iter().chain(&pred[..k]).copied().collect();
        for mode in AveragingMode::ALL {
            prop_assert_eq!(report(&gold, &pred, mode).unwrap(), report(&g2, &p2, mode).unwrap());
        }
    }

    #[test]
    fn relabeling_permutes_per_class_scores((gold, pred) in pairs_strategy(), perm in Just([0usize, 1, 2, 3, 4, 5]).prop_shuffle()) {
        let a = report(&gold, &pred, AveragingMode::MacroAll).unwrap();
        let g2: Vec<usize> = gold.iter().map(|&c| perm[c]).collect();
        let p2: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
        let b = report(&g2, &p2, AveragingMode::MacroAll).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        for (c, &pc) in perm.iter().enumerate() {
            prop_assert_eq!(a.per_class[c], b.per_class[pc]);
            prop_assert_eq!(a.support[c], b.support[pc]);
        }
        for (x, y) in [(a.macro_precision, b.macro_precision), (a.macro_recall, b.macro_recall), (a.macro_f1, b.macro_f1)] {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn inference_featurizes_like_training(ds in dataset_strategy(true), budget in 2usize..40) {
        let tok = WordHashTokenizer::new(512, true).unwrap();
        let reduced = reduce_dataset(&preprocess_dataset(&ds), NeutralPolicy::Drop).unwrap();
        let set = encode_dataset(&reduced.reduced, &tok, budget).unwrap();
        let model = ReferenceClassifier::new(512, 4, 1).unwrap();
        let predictor = Predictor::new(Box::new(model), Box::new(tok), budget);
        let raw: std::collections::HashMap<&str, &str> =
            ds.samples().iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();
        for ((sample, _), rec) in reduced.reduced.iter().zip(set.records()) {
            let at_inference = predictor.featurize(raw[sample.id.as_str()]).unwrap();
            prop_assert_eq!(&at_inference.token_ids, &rec.token_ids);
            prop_assert_eq!(&at_inference.attention_mask, &rec.attention_mask);
        }
    }
}

#[test]
fn perfect_predictions_score_one() {
    let gold: Vec<usize> = (0..30).map(|i| i % 6).collect();
    for mode in AveragingMode::ALL {
        let r = report(&gold, &gold, mode).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.weighted_f1, 1.0);
    }
}
