#![no_main]

use libfuzzer_sys::fuzz_target;
use mist_core::engine::SessionDocument;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(doc) = SessionDocument::from_json(text) {
        let _ = doc.to_json();
    }
});
