//! Writes a small synthetic train/validation/test corpus to a directory.
//!
//! cargo run -p emoclass --example synthetic_data -- DIR [PER_CLASS] [TEST_ROWS]

use std::fs::File;
use std::path::PathBuf;

use emoclass::corpus::{write_split, Split};
use emoclass::synthetic::{separable_corpus, unlabeled_corpus};

fn main() -> emoclass::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let per_class: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let test_rows: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(60);
    std::fs::create_dir_all(&dir).map_err(|e| emoclass::Error::Config(format!("{}: {e}", dir.display())))?;

    let splits = [
        ("train.csv", separable_corpus(per_class, 1, Split::Train)),
        ("validation.csv", separable_corpus(per_class.div_ceil(2), 2, Split::Validation)),
        ("test.csv", unlabeled_corpus(test_rows, 3)),
    ];
    for (name, dataset) in splits {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| emoclass::Error::Config(format!("{}: {e}", path.display())))?;
        write_split(&dataset, file)?;
        println!("{} ({} rows)", path.display(), dataset.len());
    }
    Ok(())
}
