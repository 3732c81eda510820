#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cloud) = cloudup::io::parse_ply(text) {
        let reparsed = cloudup::io::parse_ply(&cloudup::io::serialize_ply(&cloud)).unwrap();
        assert_eq!(reparsed.points(), cloud.points());
    }
});
