#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(set) = cloudup::dataprep::TrainingSet::parse(text) {
        let reparsed = cloudup::dataprep::TrainingSet::parse(&set.serialize()).unwrap();
        assert_eq!(reparsed, set);
    }
});
