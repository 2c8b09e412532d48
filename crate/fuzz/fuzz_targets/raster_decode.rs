#![no_main]

use libfuzzer_sys::fuzz_target;
use mist_core::raster::{decode_raster, encode_raster, RasterFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_raster(data) {
        assert_eq!(img.data().len(), img.pixel_count() * img.channels());
        // anything we decode must survive a round trip
        let png = encode_raster(&img, RasterFormat::Png).unwrap();
        assert_eq!(decode_raster(&png).unwrap(), img);
    }
});
