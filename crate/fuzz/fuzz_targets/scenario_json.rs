#![no_main]

use hcsim_core::measurement::MeasurementScenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = serde_json::from_slice::<MeasurementScenario>(data) else {
        return;
    };
    if let Ok(p) = s.default_params(1.0) {
        let _ = s.validate(&p);
    }
});
