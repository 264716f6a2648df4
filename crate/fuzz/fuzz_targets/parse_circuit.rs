#![no_main]

use libfuzzer_sys::fuzz_target;
use mipt_xeb::CircuitDescriptor;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = CircuitDescriptor::deserialize(s) {
            let text = c.serialize();
            assert_eq!(CircuitDescriptor::deserialize(&text).unwrap(), c);
        }
    }
});
