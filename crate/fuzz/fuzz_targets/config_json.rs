#![no_main]
use kamred::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(s) {
        let text = cfg.to_json().expect("valid config serializes");
        let back = ExperimentConfig::from_json(&text).expect("canonical text parses");
        assert_eq!(back, cfg);
    }
});
