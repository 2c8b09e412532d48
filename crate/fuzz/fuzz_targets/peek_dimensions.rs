#![no_main]

use libfuzzer_sys::fuzz_target;
use mist_core::raster::{decode_raster, peek_dimensions};

fuzz_target!(|data: &[u8]| {
    let peeked = peek_dimensions(data);
    if let Ok(img) = decode_raster(data) {
        assert_eq!(peeked.unwrap(), (img.width(), img.height()));
    }
});
