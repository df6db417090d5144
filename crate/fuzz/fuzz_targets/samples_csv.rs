#![no_main]

use djscc_core::ofdm::decode_samples_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = decode_samples_csv(text);
});
