#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(params) = cloudup::nn::parse_params(text) {
        let reparsed = cloudup::nn::parse_params(&cloudup::nn::serialize_params(&params)).unwrap();
        assert_eq!(reparsed, params);
    }
});
