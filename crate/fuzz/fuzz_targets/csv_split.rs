#![no_main]

use emoclass::corpus::{read_split, write_split, Split};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for labeled in [true, false] {
        if let Ok(ds) = read_split(data, "fuzz", Split::Train, labeled) {
            let mut buf = Vec::new();
            write_split(&ds, &mut buf).expect("a loaded dataset serializes");
            let back = read_split(buf.as_slice(), "fuzz", Split::Train, labeled).expect("round trip parses");
            assert_eq!(back, ds);
        }
    }
});
