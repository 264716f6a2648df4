#![no_main]

use libfuzzer_sys::fuzz_target;
use mipt_xeb::rnn::SampleCount;
use mipt_xeb::trajectory::{InitialState, MeasurementRecord};
use mipt_xeb::xeb::EstimatorKind;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = s.parse::<MeasurementRecord>() {
            assert_eq!(r.to_string().parse::<MeasurementRecord>().unwrap(), r);
        }
        let _ = s.parse::<InitialState>();
        let _ = s.parse::<EstimatorKind>();
        let _ = s.parse::<SampleCount>();
    }
});
