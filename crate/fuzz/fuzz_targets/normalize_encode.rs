#![no_main]

use emoclass::encode::{encode_text, WordHashTokenizer};
use emoclass::textnorm::normalize_text;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let clean = normalize_text(text);
    assert_eq!(normalize_text(clean.as_str()), clean);
    let tok = WordHashTokenizer::new(512, true).unwrap();
    let rec = encode_text(&clean, &tok, 16).expect("hash tokenizer never fails");
    assert_eq!(rec.token_ids.len(), 16);
});
