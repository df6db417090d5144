#![no_main]

use djscc_core::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        // anything accepted must survive a round trip
        let text = cfg.to_toml();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(again.to_toml(), text);
    }
});
