#![no_main]

use emoclass::config::RunConfig;
use emoclass::kv::KvRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(record) = KvRecord::parse(text, "fuzz") {
        let again = KvRecord::parse(&record.render(), "fuzz").expect("rendered record parses");
        assert_eq!(again.content_hash(), record.content_hash());
    }
    if let Ok(config) = RunConfig::parse(text, "fuzz") {
        if let Ok(back) = RunConfig::parse(&config.to_record().render(), "fuzz") {
            assert_eq!(back.hash(), config.hash());
        }
    }
});
