#![no_main]

use libfuzzer_sys::fuzz_target;
use mist_core::engine::{validate_scribbles, ScribbleDocument};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(doc) = ScribbleDocument::from_json(text) {
        if validate_scribbles(&doc.strokes, 64, 64).is_ok() {
            for s in &doc.strokes {
                let _ = s.rasterize(64, 64);
            }
        }
        assert_eq!(ScribbleDocument::from_json(&doc.to_json()).unwrap(), doc);
    }
});
