#![no_main]

use hcsim_core::io::{decode_hcf1, encode_hcf1};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((field, alpha)) = decode_hcf1(data) {
        // anything accepted must re-encode to the same bytes
        assert_eq!(encode_hcf1(&field, alpha), data);
    }
});
