#![no_main]

use emoclass::trainer::{history_from_csv, history_to_csv, select_best};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(history) = history_from_csv(text, "fuzz") {
        if !history.is_empty() {
            let best = select_best(&history).expect("non-empty history has a best epoch");
            assert!(best >= 1 && best <= history.len());
        }
        let back = history_from_csv(&history_to_csv(&history), "fuzz").expect("rendered history parses");
        assert_eq!(back, history);
    }
});
