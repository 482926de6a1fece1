#![no_main]

use emoclass::encode::FeatureSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = FeatureSet::from_bytes(data) {
        assert_eq!(set.to_bytes(), data);
    }
});
