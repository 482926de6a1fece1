#![no_main]

use emoclass_cli::aggregate::{parse_run, summarize};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((_, pairs)) = parse_run(text, "fuzz") {
        let runs = vec![("a".to_string(), pairs.clone()), ("b".to_string(), pairs)];
        let _ = summarize(&runs);
    }
});
