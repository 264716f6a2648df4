#![no_main]

use libfuzzer_sys::fuzz_target;
use mipt_xeb::rnn::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(ck) = Checkpoint::deserialize(s) {
            // small models only; enumeration is exponential in the record length
            if ck.model.record_len <= 8 {
                if let Ok(probs) = ck.model.enumerate_probabilities() {
                    let total: f64 = probs.iter().sum();
                    assert!((total - 1.0).abs() < 1e-6 || !total.is_finite());
                }
            }
            assert_eq!(Checkpoint::deserialize(&ck.serialize()).unwrap(), ck);
        }
    }
});
