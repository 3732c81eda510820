#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mesh) = cloudup::io::parse_obj(text) {
        // Accepted meshes expose finite areas and answer nearest-point
        // queries without panicking.
        assert!(mesh.total_area().is_finite());
        let q = cloudup::geom::Point3::new(0.1, -0.2, 0.3);
        let _ = mesh.nearest_surface_point(q);
    }
});
