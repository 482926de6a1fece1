//! Seeded fixture corpora for offline runs and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Sample, Split};
use crate::emotion::{Emotion, LabelVector};
use crate::labelspace::to_one_hot;

/// One cue word per emotion, in ordinal order.
pub const KEYWORDS: [&str; 6] = ["fushi", "ƙyama", "tsoro", "murna", "baƙinciki", "mamaki"];

const FILLER: [&str; 16] = [
    "yau", "gobe", "mutane", "gari", "kasuwa", "labari", "gwamnati", "yara", "ruwa", "hanya",
    "Kano", "Abuja", "ɗan", "ƙasa", "ɓangare", "sabon",
];

fn sentence(rng: &mut ChaCha8Rng, keyword: Option<&str>) -> String {
    let n = rng.gen_range(3..8);
    let mut words: Vec<&str> = (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect();
    if let Some(k) = keyword {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, k);
    }
    // Vary case and spacing so normalization has work to do.
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push_str(if rng.gen_bool(0.2) { "  " } else { " " });
        }
        if rng.gen_bool(0.3) {
            text.push_str(&w.to_uppercase());
        } else {
            text.push_str(w);
        }
    }
    text
}

/// `per_class` samples for each emotion; every text contains its class
/// keyword, so the set is separable. Samples are grouped by class.
pub fn separable_corpus(per_class: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(per_class * KEYWORDS.len());
    for emotion in Emotion::ALL {
        for i in 0..per_class {
            samples.push(Sample {
                id: format!("{}_{}_{i:03}", split.name(), emotion.name()),
                text: sentence(&mut rng, Some(KEYWORDS[emotion.ordinal()])),
                labels: Some(to_one_hot(emotion)),
            });
        }
    }
    Dataset::new(split, samples, true).expect("generated ids are unique")
}

/// Labeled corpus with random multi-hot and neutral rows, for ingestion
/// and reduction tests.
pub fn multi_hot_corpus(rows: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..rows)
        .map(|i| {
            let mask: u8 = rng.gen_range(0..64);
            let labels = LabelVector::from_mask(mask);
            let keyword = labels.active().next().map(|e| KEYWORDS[e.ordinal()]);
            Sample {
                id: format!("{}_{i:05}", split.name()),
                text: sentence(&mut rng, keyword),
                labels: Some(labels),
            }
        })
        .collect();
    Dataset::new(split, samples, true).expect("generated ids are unique")
}

/// Unlabeled test split of `rows` samples.
pub fn unlabeled_corpus(rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..rows)
        .map(|i| {
            let keyword = rng.gen_bool(0.8).then(|| *KEYWORDS.choose(&mut rng).expect("non-empty"));
            Sample {
                id: format!("hau_test_{i:05}"),
                text: sentence(&mut rng, keyword),
                labels: None,
            }
        })
        .collect();
    Dataset::new(Split::Test, samples, false).expect("generated ids are unique")
}
