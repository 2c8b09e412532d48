#![no_main]

use libfuzzer_sys::fuzz_target;
use mist_cli::manifest::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match Manifest::parse(text) {
        Ok(m) => {
            let _ = m.resolve(std::path::Path::new("/corpus"));
        }
        Err(e) => assert!(!e.issues.is_empty()),
    }
});
