#![no_main]

use emoclass::trainer::reference::decode_blob;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((vocab, dim, params)) = decode_blob(data) {
        assert!(vocab > 0 && dim > 0);
        assert!(params.iter().all(|p| p.is_finite()));
    }
});
