use std::fs::{self, File};

use emoclass::corpus::{load_split, write_split, Split};
use emoclass::encode::{encode_dataset, FeatureSet, WordHashTokenizer};
use emoclass::infer::{write_submission, Predictor};
use emoclass::kv::KvRecord;
use emoclass::labelspace::{reduce_dataset, NeutralPolicy, TieBreak};
use emoclass::metrics::AveragingMode;
use emoclass::synthetic::{multi_hot_corpus, separable_corpus, unlabeled_corpus};
use emoclass::textnorm::preprocess_dataset;
use emoclass::trainer::checkpoint::{load_checkpoint, save_checkpoint, MODEL_FILE};
use emoclass::trainer::{evaluate, history_to_csv, train, ClassifierBackend, ReferenceClassifier, TrainConfig};
use emoclass::Error;

fn config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        epochs: 4,
        warmup_steps: 5,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn features(tok: &WordHashTokenizer, split: Split, per_class: usize, seed: u64) -> FeatureSet {
    let reduced = reduce_dataset(&preprocess_dataset(&separable_corpus(per_class, seed, split)), NeutralPolicy::Drop).unwrap();
    encode_dataset(&reduced.reduced, tok, 64).unwrap()
}

#[test]
fn files_to_submission() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_split(&separable_corpus(6, 10, Split::Train), File::create(d.join("train.csv")).unwrap()).unwrap();
    write_split(&separable_corpus(3, 11, Split::Validation), File::create(d.join("val.csv")).unwrap()).unwrap();
    write_split(&unlabeled_corpus(50, 12), File::create(d.join("test.csv")).unwrap()).unwrap();

    let tok = WordHashTokenizer::new(2048, true).unwrap();
    let cfg = TrainConfig { sequence_budget: 64, ..config() };
    let load = |name: &str, split| {
        let ds = preprocess_dataset(&load_split(d.join(name), split, true).unwrap());
        encode_dataset(&reduce_dataset(&ds, NeutralPolicy::Drop).unwrap().reduced, &tok, 64).unwrap()
    };
    let train_set = load("train.csv", Split::Train);
    let val_set = load("val.csv", Split::Validation);

    let mut model = ReferenceClassifier::new(2048, 16, cfg.seed).unwrap();
    let result = train(&cfg, &train_set, &val_set, &mut model, AveragingMode::MacroPresent).unwrap();
    assert_eq!(result.history.len(), 4);
    assert_eq!(result.total_steps, 4 * 36usize.div_ceil(8) as u64);

    // The restored model reproduces the best epoch's validation accuracy.
    let eval = evaluate(&model, &val_set, 8, AveragingMode::MacroPresent).unwrap();
    assert_eq!(eval.report.accuracy, result.best().val_accuracy);

    let mut extra = KvRecord::new();
    extra.set("tokenizer_fingerprint", emoclass::encode::TokenizerBackend::fingerprint(&tok));
    let ckpt = d.join("ckpt");
    save_checkpoint(&ckpt, &result, &cfg, &extra).unwrap();
    let loaded = load_checkpoint(&ckpt, Some(64)).unwrap();
    assert!(loaded.warnings.is_empty());
    assert_eq!(loaded.history, result.history);
    assert_eq!(loaded.best_epoch, result.best_epoch);
    assert!(loaded.reduced_precision);

    let predictor = Predictor::from_checkpoint(
        &loaded,
        Box::new(ReferenceClassifier::new(2048, 16, 999).unwrap()),
        Box::new(tok),
        64,
    )
    .unwrap();
    let restored_eval = evaluate(predictor.backend(), &val_set, 8, AveragingMode::MacroPresent).unwrap();
    assert_eq!(restored_eval.report, eval.report);

    let test = load_split(d.join("test.csv"), Split::Test, false).unwrap();
    let preds = predictor.predict_batch(&test, 8).unwrap();
    let mut first = Vec::new();
    write_submission(&preds, &test, &mut first, true).unwrap();
    let mut second = Vec::new();
    write_submission(&predictor.predict_batch(&test, 3).unwrap(), &test, &mut second, true).unwrap();
    assert_eq!(first, second);
    let back = emoclass::corpus::read_split(first.as_slice(), "sub", Split::Test, true).unwrap();
    assert_eq!(back.len(), 50);
    assert!(back.samples().iter().all(|s| s.labels.unwrap().count() == 1));
}

#[test]
fn training_is_reproducible_in_both_precisions() {
    let tok = WordHashTokenizer::new(1024, true).unwrap();
    let train_set = features(&tok, Split::Train, 5, 1);
    let val_set = features(&tok, Split::Validation, 2, 2);
    for mixed in [false, true] {
        let cfg = TrainConfig { mixed_precision: mixed, sequence_budget: 64, ..config() };
        let run = || {
            let mut model = ReferenceClassifier::new(1024, 8, cfg.seed).unwrap();
            let r = train(&cfg, &train_set, &val_set, &mut model, AveragingMode::MacroAll).unwrap();
            (history_to_csv(&r.history), model.snapshot().unwrap())
        };
        let (h1, s1) = run();
        let (h2, s2) = run();
        assert_eq!(h1, h2, "mixed_precision={mixed}");
        assert_eq!(s1, s2);
    }
}

#[test]
fn mismatched_sets_are_rejected() {
    let tok = WordHashTokenizer::new(1024, true).unwrap();
    let other = WordHashTokenizer::new(1000, true).unwrap();
    let train_set = features(&tok, Split::Train, 2, 1);
    let cfg = TrainConfig { sequence_budget: 64, ..config() };
    let mut model = ReferenceClassifier::new(1024, 4, 1).unwrap();
    assert!(train(&cfg, &train_set, &features(&other, Split::Validation, 1, 2), &mut model, AveragingMode::MacroAll).is_err());
    let wrong_budget = TrainConfig { sequence_budget: 32, ..cfg.clone() };
    assert!(train(&wrong_budget, &train_set, &train_set, &mut model, AveragingMode::MacroAll).is_err());
    let empty = FeatureSet::new(64, train_set.tokenizer_fingerprint(), Vec::new()).unwrap();
    assert!(train(&cfg, &empty, &train_set, &mut model, AveragingMode::MacroAll).is_err());
}

#[test]
fn tampered_checkpoint_fails_with_diff() {
    let tok = WordHashTokenizer::new(256, true).unwrap();
    let set = features(&tok, Split::Train, 2, 1);
    let cfg = TrainConfig { epochs: 1, sequence_budget: 64, ..config() };
    let mut model = ReferenceClassifier::new(256, 4, 1).unwrap();
    let result = train(&cfg, &set, &set, &mut model, AveragingMode::MacroAll).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &result, &cfg, &KvRecord::new()).unwrap();

    let model_path = dir.path().join(MODEL_FILE);
    let mut bytes = fs::read(&model_path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(&model_path, bytes).unwrap();
    match load_checkpoint(dir.path(), None) {
        Err(Error::CheckpointLoad { diff, .. }) => assert!(diff.iter().any(|(k, _, _)| k == "model_sha256")),
        other => panic!("expected a checkpoint load error, got {other:?}"),
    }
}

#[test]
fn multi_hot_rows_are_reduced_and_counted() {
    let ds = multi_hot_corpus(300, 5, Split::Train);
    let reduction = reduce_dataset(&ds, NeutralPolicy::Drop).unwrap();
    let multi = ds.samples().iter().filter(|s| s.labels.unwrap().count() > 1).count();
    let neutral = ds.samples().iter().filter(|s| s.labels.unwrap().is_neutral()).count();
    assert_eq!(reduction.multi_hot_rows, multi);
    assert_eq!(reduction.dropped.len(), neutral);
    assert_eq!(reduction.reduced.len() + neutral, 300);
    let entries = reduction.manifest_entries(TieBreak::LowestOrdinal, NeutralPolicy::Drop);
    assert!(entries.contains(&("discarded_secondary_labels".to_string(), multi.to_string())));
    assert!(reduce_dataset(&ds, NeutralPolicy::Error).is_err() || neutral == 0);
}
