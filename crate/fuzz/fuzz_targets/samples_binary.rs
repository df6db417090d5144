#![no_main]

use djscc_core::ofdm::decode_samples_binary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_samples_binary(data);
});
