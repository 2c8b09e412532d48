#![no_main]

use libfuzzer_sys::fuzz_target;
use mist_core::raster::rle::{MaskRle, TrimapRle};

fuzz_target!(|data: &[u8]| {
    if let Ok(rle) = serde_json::from_slice::<MaskRle>(data) {
        if let Ok(mask) = rle.decode() {
            assert_eq!(MaskRle::encode(&mask).decode().unwrap(), mask);
        }
    }
    if let Ok(rle) = serde_json::from_slice::<TrimapRle>(data) {
        if let Ok(trimap) = rle.decode() {
            assert_eq!(TrimapRle::encode(&trimap).decode().unwrap(), trimap);
        }
    }
});
