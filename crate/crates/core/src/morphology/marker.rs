use serde::{Deserialize, Serialize};

use super::{
    binary_close, binary_erode, closing_by_reconstruction_with, opening_by_reconstruction_with, regional_maxima,
    remove_small_components, GeodesicStep,
};
use crate::raster::{BinaryMask, Raster, StructuringElement};

/// Components smaller than this are dropped from the cleaned marker.
pub const MIN_COMPONENT_PIXELS: usize = 20;

/// Knobs of the marker pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerParams {
    /// Radius of the disk used for opening/closing by reconstruction.
    pub radius: usize,
    pub min_component: usize,
    pub step: GeodesicStep,
}

impl Default for MarkerParams {
    fn default() -> Self {
        Self {
            radius: 45,
            min_component: MIN_COMPONENT_PIXELS,
            step: GeodesicStep::Elementary,
        }
    }
}

/// Every intermediate of the marker pipeline.
#[derive(Debug, Clone)]
pub struct MarkerStages {
    /// Opening by reconstruction of the input.
    pub opened: Raster,
    /// Closing by reconstruction of `opened`.
    pub closed: Raster,
    /// Regional maxima of `closed`.
    pub maxima: BinaryMask,
    /// Cleaned marker.
    pub marker: BinaryMask,
}

/// Automatic marker with the given disk radius and default cleanup.
pub fn generate_marker(img: &Raster, radius: usize) -> BinaryMask {
    generate_marker_with(
        img,
        &MarkerParams {
            radius,
            ..MarkerParams::default()
        },
    )
    .marker
}

/// Smooths with opening then closing by reconstruction (disk of
/// `params.radius`), takes regional maxima, closes and erodes them with a 5x5
/// box and drops components below `params.min_component` pixels.
pub fn generate_marker_with(img: &Raster, params: &MarkerParams) -> MarkerStages {
    let gray = img.to_grayscale();
    let disk = StructuringElement::disk(params.radius);
    let opened = opening_by_reconstruction_with(&gray, &disk, params.step);
    let closed = closing_by_reconstruction_with(&opened, &disk, params.step);
    let maxima = regional_maxima(&closed);
    let cleanup = StructuringElement::rect(5, 5);
    let shrunk = binary_erode(&binary_close(&maxima, &cleanup), &cleanup);
    let marker = remove_small_components(&shrunk, params.min_component);
    MarkerStages {
        opened,
        closed,
        maxima,
        marker,
    }
}
