#![no_main]

use libfuzzer_sys::fuzz_target;
use mipt_xeb::dataset::RecordSet;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(set) = RecordSet::deserialize(s) {
            assert_eq!(RecordSet::deserialize(&set.serialize()).unwrap(), set);
        }
    }
});
