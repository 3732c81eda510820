#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = cloudup::config::PipelineConfig::parse(text) {
        // Accepted configs are valid and round-trip through serialize.
        config.validate().unwrap();
        let reparsed = cloudup::config::PipelineConfig::parse(&config.serialize()).unwrap();
        assert_eq!(reparsed, config);
    }
});
