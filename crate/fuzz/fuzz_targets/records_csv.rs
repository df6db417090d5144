#![no_main]

use djscc_core::harness::{parse_csv, TrialRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = parse_csv::<TrialRecord>(text);
});
