//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits non-zero if any failed.
//!
//! cargo test -p emoclass-cli --test acceptance
//!
//! The full-scale criterion runs only when `EMOCLASS_FULL_RUN_CONFIG`
//! names a config file for the real encoder and task data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use emoclass::corpus::{load_split, read_split, write_split, Split};
use emoclass::emotion::{Emotion, LabelVector};
use emoclass::encode::{encode_dataset, encode_text, TokenizerBackend, WordHashTokenizer, DEFAULT_SEQUENCE_BUDGET};
use emoclass::kv::KvRecord;
use emoclass::labelspace::{reduce_dataset, to_dominant, to_one_hot, NeutralPolicy};
use emoclass::metrics::{report, AveragingMode};
use emoclass::synthetic::{separable_corpus, unlabeled_corpus};
use emoclass::textnorm::{normalize_text, preprocess_dataset};
use emoclass::trainer::{
    evaluate, history_to_csv, select_best, train, warmup_lr, EpochLog, ReferenceClassifier, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn label_algebra() -> Check {
    for e in Emotion::ALL {
        let v = to_one_hot(e);
        ensure!(v.count() == 1, "one-hot of {e} has {} active bits", v.count());
        ensure!(to_dominant(&v).ok() == Some(e), "round trip failed for {e}");
    }

    let table = "id,text,anger,disgust,fear,joy,sadness,surprise\n\
1,\"Kotu Ta Yi Hukunci Kan Shari'ar Zaben Dan Majalisar PDP, Ta Yi Hukuncin Bazata\",0,0,0,0,0,1\n";
    let ds = read_split(table.as_bytes(), "table", Split::Train, true).map_err(|e| e.to_string())?;
    let row = to_dominant(&ds.samples()[0].labels.unwrap()).map_err(|e| e.to_string())?;
    ensure!(row == Emotion::Surprise, "table row 1 reduced to {row}");

    for mask in 1u8..64 {
        let v = LabelVector::from_mask(mask);
        let expected = Emotion::from_ordinal(mask.trailing_zeros() as usize).unwrap();
        let got = to_dominant(&v).map_err(|e| e.to_string())?;
        ensure!(got == expected, "mask {mask:06b}: got {got}, expected {expected}");
    }
    ensure!(to_dominant(&LabelVector::from_mask(0)).is_err(), "neutral vector has a dominant label");
    Ok("63 vectors".into())
}

/// Counts straight from the pairs, without a confusion matrix.
struct Oracle {
    accuracy: f64,
    precision: [f64; 6],
    recall: [f64; 6],
    f1: [f64; 6],
    support: [usize; 6],
    macro_: [[f64; 3]; 2],
    weighted: [f64; 3],
    present: Vec<usize>,
}

fn oracle(gold: &[usize], pred: &[usize]) -> Oracle {
    let n = gold.len();
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    let mut o = Oracle {
        accuracy: correct as f64 / n as f64,
        precision: [0.0; 6],
        recall: [0.0; 6],
        f1: [0.0; 6],
        support: [0; 6],
        macro_: [[0.0; 3]; 2],
        weighted: [0.0; 3],
        present: Vec::new(),
    };
    for c in 0..6 {
        let tp = (0..n).filter(|&i| gold[i] == c && pred[i] == c).count();
        let fp = (0..n).filter(|&i| gold[i] != c && pred[i] == c).count();
        let fn_ = (0..n).filter(|&i| gold[i] == c && pred[i] != c).count();
        o.support[c] = tp + fn_;
        o.precision[c] = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        o.recall[c] = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        // Count form of the harmonic mean.
        o.f1[c] = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        if tp + fp + fn_ > 0 {
            o.present.push(c);
        }
    }
    let all: Vec<usize> = (0..6).collect();
    for (slot, classes) in [&all, &o.present].into_iter().enumerate() {
        let k = classes.len() as f64;
        o.macro_[slot] = [
            classes.iter().map(|&c| o.precision[c]).sum::<f64>() / k,
            classes.iter().map(|&c| o.recall[c]).sum::<f64>() / k,
            classes.iter().map(|&c| o.f1[c]).sum::<f64>() / k,
        ];
    }
    let w = |xs: &[f64; 6]| (0..6).map(|c| xs[c] * o.support[c] as f64).sum::<f64>() / n as f64;
    o.weighted = [w(&o.precision), w(&o.recall), w(&o.f1)];
    o
}

fn metrics_oracle() -> Check {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let close = |a: f64, b: f64| (a - b).abs() <= TOL;
    for case in 0..1000 {
        let n = rng.gen_range(1..=50);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..6)).collect();
        // Bias predictions toward gold so every regime shows up.
        let pred: Vec<usize> = gold
            .iter()
            .map(|&g| if rng.gen_bool(0.5) { g } else { rng.gen_range(0..6) })
            .collect();
        let o = oracle(&gold, &pred);
        for (slot, mode) in [AveragingMode::MacroAll, AveragingMode::MacroPresent].into_iter().enumerate() {
            let r = report(&gold, &pred, mode).map_err(|e| e.to_string())?;
            let mut fields = vec![
                ("accuracy", r.accuracy, o.accuracy),
                ("macro_precision", r.macro_precision, o.macro_[slot][0]),
                ("macro_recall", r.macro_recall, o.macro_[slot][1]),
                ("macro_f1", r.macro_f1, o.macro_[slot][2]),
                ("weighted_precision", r.weighted_precision, o.weighted[0]),
                ("weighted_recall", r.weighted_recall, o.weighted[1]),
                ("weighted_f1", r.weighted_f1, o.weighted[2]),
            ];
            for c in 0..6 {
                fields.push(("precision", r.per_class[c].precision, o.precision[c]));
                fields.push(("recall", r.per_class[c].recall, o.recall[c]));
                fields.push(("f1", r.per_class[c].f1, o.f1[c]));
            }
            for (name, got, want) in fields {
                ensure!(close(got, want), "case {case} {mode}: {name} = {got}, oracle {want}");
            }
            ensure!(r.support == o.support, "case {case}: support {:?} vs {:?}", r.support, o.support);
            let classes: Vec<usize> = r.averaged_classes.iter().map(|e| e.ordinal()).collect();
            let expected = if slot == 0 { (0..6).collect() } else { o.present.clone() };
            ensure!(classes == expected, "case {case} {mode}: averaged classes {classes:?}");
            for g in 0..6 {
                for p in 0..6 {
                    let count = gold.iter().zip(&pred).filter(|&(&a, &b)| a == g && b == p).count();
                    ensure!(r.confusion.count(g, p) == count, "case {case}: confusion[{g}][{p}]");
                }
            }
        }
    }
    Ok("1000 cases x 2 modes".into())
}

const HAUSA: &[char] = &[
    'Ɓ', 'ɓ', 'Ɗ', 'ɗ', 'Ƙ', 'ƙ', 'Ƴ', 'ƴ', 'ʼ', 'A', 'b', 'C', 'd', 'E', 'f', 'G', 'h', 'I', 'k', 'M', 'n',
    'O', 's', 'T', 'u', 'W', 'y', 'Z', 'İ', 'Ä', 'é', '0', '7', '\'', ',', '.',
];
const SPACES: &[char] = &[' ', '\t', '\n', '\r', '\u{A0}', '\u{2003}', '\u{3000}', '\u{85}'];

fn normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for case in 0..500 {
        let len = rng.gen_range(0..60);
        let raw: String = (0..len)
            .map(|_| {
                if rng.gen_bool(0.25) {
                    SPACES[rng.gen_range(0..SPACES.len())]
                } else {
                    HAUSA[rng.gen_range(0..HAUSA.len())]
                }
            })
            .collect();
        let clean = normalize_text(&raw);
        let s = clean.as_str();
        ensure!(normalize_text(s).as_str() == s, "case {case}: not idempotent on {raw:?}");
        ensure!(s.trim() == s, "case {case}: untrimmed {s:?}");
        ensure!(!s.contains("  "), "case {case}: double space in {s:?}");
        ensure!(
            s.chars().all(|c| c == ' ' || !c.is_whitespace()),
            "case {case}: stray whitespace in {s:?}"
        );
        ensure!(
            s.chars().all(|c| c.to_lowercase().eq(std::iter::once(c))),
            "case {case}: {s:?} is not lowercase-stable"
        );
        let visible = |t: &str| t.chars().filter(|c| !c.is_whitespace()).count();
        ensure!(visible(s) == visible(&raw), "case {case}: visible characters lost");
    }
    Ok("500 cases".into())
}

fn encoding() -> Check {
    let tok = WordHashTokenizer::default();
    let budget = DEFAULT_SEQUENCE_BUDGET;
    ensure!(budget == 128, "default budget is {budget}");
    let mut rng = ChaCha8Rng::seed_from_u64(128);
    for case in 0..300 {
        let words = rng.gen_range(0..300);
        let text: Vec<String> = (0..words).map(|i| format!("kalma{}", i % 37)).collect();
        let clean = normalize_text(&text.join(" "));
        let count = tok.tokenize(clean.as_str()).map_err(|e| e.to_string())?.len();
        let rec = encode_text(&clean, &tok, budget).map_err(|e| e.to_string())?;
        ensure!(rec.token_ids.len() == 128 && rec.attention_mask.len() == 128, "case {case}: length");
        let mask_sum: usize = rec.attention_mask.iter().map(|&m| m as usize).sum();
        ensure!(mask_sum == count.min(128), "case {case}: mask sum {mask_sum}, tokens {count}");
    }

    // 198 words plus the two special tokens.
    let words: Vec<String> = (0..198).map(|i| format!("w{i}")).collect();
    let clean = normalize_text(&words.join(" "));
    let ids = tok.tokenize(clean.as_str()).map_err(|e| e.to_string())?;
    ensure!(ids.len() == 200, "fixture has {} tokens", ids.len());
    let rec = encode_text(&clean, &tok, budget).map_err(|e| e.to_string())?;
    ensure!(rec.real_tokens() == 128, "fixture kept {} tokens", rec.real_tokens());
    ensure!(rec.token_ids[..] == ids[..128], "truncation did not keep the head");
    Ok("300 random + 200-token fixture".into())
}

fn trainer_run() -> Result<(String, Vec<EpochLog>, f64), String> {
    let tok = WordHashTokenizer::default();
    let encode = |split, per_class, seed| {
        let ds = preprocess_dataset(&separable_corpus(per_class, seed, split));
        let reduced = reduce_dataset(&ds, NeutralPolicy::Drop).map_err(|e| e.to_string())?;
        encode_dataset(&reduced.reduced, &tok, 128).map_err(|e| e.to_string())
    };
    let train_set = encode(Split::Train, 10, 1)?;
    let val_set = encode(Split::Validation, 5, 2)?;
    let config = TrainConfig {
        learning_rate: 0.01,
        epochs: 20,
        warmup_steps: 10,
        mixed_precision: false,
        seed: 7,
        ..TrainConfig::default()
    };
    let mut model = ReferenceClassifier::new(tok.vocab_size() as usize, 32, config.seed).map_err(|e| e.to_string())?;
    let result = train(&config, &train_set, &val_set, &mut model, AveragingMode::MacroPresent)
        .map_err(|e| e.to_string())?;
    let acc = evaluate(&model, &train_set, 8, AveragingMode::MacroPresent)
        .map_err(|e| e.to_string())?
        .report
        .accuracy;
    Ok((history_to_csv(&result.history), result.history, acc))
}

fn trainer() -> Check {
    let (csv_a, history, accuracy) = trainer_run()?;
    let (csv_b, _, _) = trainer_run()?;
    ensure!(csv_a == csv_b, "history CSVs differ between identical runs");
    ensure!(accuracy >= 0.95, "train accuracy {accuracy} < 0.95");
    let first = history.first().unwrap().train_loss;
    let last = history.last().unwrap().train_loss;
    ensure!(last < first, "train loss did not fall: {first} -> {last}");
    Ok(format!("train_acc={accuracy:.4} loss {first:.4} -> {last:.4}"))
}

fn log_with(val_accuracy: f64, epoch: usize) -> EpochLog {
    EpochLog {
        epoch,
        train_loss: 1.0,
        val_loss: 1.0,
        val_accuracy,
        val_precision: 0.0,
        val_recall: 0.0,
        val_f1: 0.0,
    }
}

fn selection() -> Check {
    let seq = |accs: &[f64]| -> Vec<EpochLog> { accs.iter().enumerate().map(|(i, &a)| log_with(a, i + 1)).collect() };
    let best = select_best(&seq(&[0.5, 0.7, 0.6])).map_err(|e| e.to_string())?;
    ensure!(best == 2, "[0.5, 0.7, 0.6] selected epoch {best}");
    let tie = select_best(&seq(&[0.6, 0.7, 0.7, 0.5])).map_err(|e| e.to_string())?;
    ensure!(tie == 2, "tie resolved to epoch {tie}");
    let flat = select_best(&seq(&[0.4, 0.4, 0.4])).map_err(|e| e.to_string())?;
    ensure!(flat == 1, "flat sequence resolved to epoch {flat}");
    Ok("best_epoch=2, ties earliest".into())
}

fn warmup() -> Check {
    let lr = |s| warmup_lr(s, 2e-5, 500).map_err(|e| e.to_string());
    let mid = lr(250)?;
    ensure!((mid - 1e-5).abs() < 1e-18, "warmup_lr(250) = {mid}");
    let mut prev = f64::NEG_INFINITY;
    for step in 0..=1000 {
        let v = lr(step)?;
        ensure!(v >= prev, "decreased at step {step}");
        if step >= 500 {
            ensure!(v == 2e-5, "step {step}: {v} != 2e-5");
        }
        prev = v;
    }
    Ok("0..=1000".into())
}

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_emoclass"))
        .current_dir(dir)
        .env_remove("EMOCLASS_CACHE_DIR")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn submission() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let write = |name: &str, ds| -> Result<(), String> {
        let file = File::create(d.join(name)).map_err(|e| e.to_string())?;
        write_split(&ds, file).map_err(|e| e.to_string())
    };
    write("train.csv", separable_corpus(10, 1, Split::Train))?;
    write("validation.csv", separable_corpus(5, 2, Split::Validation))?;
    write("test.csv", unlabeled_corpus(1080, 3))?;
    fs::write(
        d.join("run.conf"),
        "train_csv = train.csv\nvalidation_csv = validation.csv\ntest_csv = test.csv\n\
learning_rate = 0.01\nepochs = 3\nwarmup_steps = 10\nmixed_precision = false\n",
    )
    .map_err(|e| e.to_string())?;

    let cfg = ["--config", "run.conf"];
    let with = |extra: &[&'static str]| cfg.iter().chain(extra).copied().collect::<Vec<_>>();
    cli(d, &with(&["prepare"]))?;
    cli(d, &with(&["train"]))?;
    cli(d, &with(&["predict", "--out", "a.csv"]))?;
    cli(d, &with(&["predict", "--out", "b.csv"]))?;

    let a = fs::read(d.join("a.csv")).map_err(|e| e.to_string())?;
    let b = fs::read(d.join("b.csv")).map_err(|e| e.to_string())?;
    ensure!(a == b, "submission differs between reruns");
    let back = load_split(d.join("a.csv"), Split::Test, true).map_err(|e| e.to_string())?;
    ensure!(back.len() == 1080, "{} rows", back.len());
    ensure!(
        back.samples().iter().all(|s| s.labels.is_some_and(|l| l.count() == 1)),
        "a row does not have exactly one active label"
    );
    let source = load_split(d.join("test.csv"), Split::Test, false).map_err(|e| e.to_string())?;
    ensure!(
        back.samples().iter().zip(source.samples()).all(|(x, y)| x.id == y.id),
        "submission ids are not in test order"
    );
    Ok("1080 rows".into())
}

fn full_scale(config: &Path) -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_dir = tmp.path().to_str().unwrap().to_string();
    let conf = config.to_str().unwrap().to_string();
    let args = |cmd: &'static str| -> Vec<String> {
        vec!["--config".into(), conf.clone(), "--output-dir".into(), out_dir.clone(), cmd.into()]
    };
    let run = |cmd| {
        let a = args(cmd);
        cli(Path::new("."), &a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    run("prepare")?;
    run("train")?;
    run("evaluate")?;
    let reports = tmp.path().join("reports");
    let kv = fs::read_dir(&reports)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().contains("macro_present") && p.extension().is_some_and(|x| x == "kv"))
        .ok_or("no macro_present report written")?;
    let rec = KvRecord::parse(&fs::read_to_string(&kv).map_err(|e| e.to_string())?, "report").map_err(|e| e.to_string())?;
    let get = |k: &str| -> Result<f64, String> {
        rec.get_parsed::<f64>(k).map_err(|e| e.to_string())?.ok_or(format!("missing {k}"))
    };
    let acc = get("accuracy")?;
    let f1s = [get("macro_f1")?, get("weighted_f1")?];
    ensure!((acc - 0.74).abs() <= 0.04, "validation accuracy {acc} outside 0.74 ± 0.04");
    ensure!(
        f1s.iter().any(|f| (f - 0.735).abs() <= 0.04),
        "macro/weighted F1 {f1s:?} outside 0.735 ± 0.04"
    );
    Ok(format!("accuracy={acc:.4} macro_f1={:.4} weighted_f1={:.4}", f1s[0], f1s[1]))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, Box<dyn Fn() -> Check>);
    let criteria: Vec<Criterion> = vec![
        ("label algebra", Duration::from_secs(1), Box::new(label_algebra)),
        ("metrics oracle", Duration::from_secs(5), Box::new(metrics_oracle)),
        ("normalization", Duration::from_secs(1), Box::new(normalization)),
        ("encoding", Duration::from_secs(1), Box::new(encoding)),
        ("trainer determinism and learning", Duration::from_secs(120), Box::new(trainer)),
        ("checkpoint selection", Duration::from_secs(1), Box::new(selection)),
        ("warmup schedule", Duration::from_secs(1), Box::new(warmup)),
        ("submission integrity", Duration::from_secs(120), Box::new(submission)),
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut line = |name: &str, limit: Duration, f: &dyn Fn() -> Check| {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name:<34} {elapsed:>10.2?}  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<34} {elapsed:>10.2?}  {why}");
            }
        }
    };
    for (name, limit, f) in &criteria {
        line(name, *limit, &**f);
    }
    match std::env::var_os("EMOCLASS_FULL_RUN_CONFIG") {
        Some(path) => {
            let path = std::path::PathBuf::from(path);
            line("full-scale validation (optional)", Duration::from_secs(86_400), &|| full_scale(&path));
        }
        None => println!("SKIP  {:<34} {:>10}  set EMOCLASS_FULL_RUN_CONFIG to run", "full-scale validation (optional)", "-"),
    }
    let _ = panic::take_hook();

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
