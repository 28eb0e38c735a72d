#![no_main]

use hcsim_core::MeasurementRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rec) = MeasurementRecord::from_json(text) {
        let again = rec.to_json().expect("valid record serializes");
        assert_eq!(
            MeasurementRecord::from_json(&again).expect("round trip"),
            rec
        );
    }
});
