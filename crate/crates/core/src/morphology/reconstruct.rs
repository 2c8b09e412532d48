use serde::{Deserialize, Serialize};

use super::{dilate, erode, MorphologyError};
use crate::raster::{Raster, StructuringElement};

/// Neighborhood used for each geodesic step of a reconstruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeodesicStep {
    /// 3x3 box: the elementary 8-connected step.
    #[default]
    Elementary,
    /// The same element used for the erosion/dilation (e.g. `Disk(r)`).
    Element,
}

/// Reconstructed image and the number of geodesic steps performed, including
/// the final step that changed nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconstructionResult {
    pub image: Raster,
    pub iterations: usize,
}

fn check_pair(marker: &Raster, mask: &Raster) -> Result<(), MorphologyError> {
    if marker.channels() != 1 || mask.channels() != 1 {
        return Err(MorphologyError::NotGrayscale);
    }
    if marker.width() != mask.width() || marker.height() != mask.height() {
        return Err(MorphologyError::DimensionMismatch);
    }
    if let Some(i) = marker.data().iter().zip(mask.data()).position(|(m, k)| m > k) {
        return Err(MorphologyError::MarkerExceedsMask {
            x: i % marker.width(),
            y: i / marker.width(),
        });
    }
    Ok(())
}

/// One geodesic dilation: `min(dilate(marker, se), mask)`.
pub fn geodesic_dilate_step(
    marker: &Raster,
    mask: &Raster,
    se: &StructuringElement,
) -> Result<Raster, MorphologyError> {
    check_pair(marker, mask)?;
    let d = dilate(marker, se);
    let data = d.data().iter().zip(mask.data()).map(|(&a, &b)| a.min(b)).collect();
    Ok(mask.with_plane(data))
}

/// Iterates geodesic dilation of `marker` under `mask` until stable.
///
/// Steps are synchronous, exactly as repeated [`geodesic_dilate_step`] calls,
/// but each step only revisits pixels whose neighborhood changed in the
/// previous one (a FIFO work list), so cost tracks the moving front.
pub fn reconstruct_by_dilation(
    marker: &Raster,
    mask: &Raster,
    se: &StructuringElement,
) -> Result<ReconstructionResult, MorphologyError> {
    check_pair(marker, mask)?;
    let (w, h) = (mask.width(), mask.height());
    let limit = mask.data();
    let mut cur = marker.data().to_vec();
    let offsets = se.offsets();
    // pixels whose value at the next step depends on pixel q are q + o
    let dependents: Vec<(isize, isize)> = offsets.to_vec();

    let value_at = |cur: &[u16], p: usize| -> u16 {
        let (x, y) = ((p % w) as isize, (p / w) as isize);
        let mut m = 0u16;
        for &(dx, dy) in offsets {
            let (sx, sy) = (x - dx, y - dy);
            if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                m = m.max(cur[sy as usize * w + sx as usize]);
            }
        }
        m.min(limit[p])
    };

    let mut stamp = vec![0usize; cur.len()];
    let mut candidates: Vec<usize> = (0..cur.len()).collect();
    let mut changes: Vec<(usize, u16)> = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        changes.clear();
        for &p in &candidates {
            let v = value_at(&cur, p);
            if v != cur[p] {
                changes.push((p, v));
            }
        }
        if changes.is_empty() {
            break;
        }
        for &(p, v) in &changes {
            cur[p] = v;
        }
        candidates.clear();
        for &(q, _) in &changes {
            let (x, y) = ((q % w) as isize, (q / w) as isize);
            for &(dx, dy) in &dependents {
                let (px, py) = (x + dx, y + dy);
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    let p = py as usize * w + px as usize;
                    if stamp[p] != iterations {
                        stamp[p] = iterations;
                        candidates.push(p);
                    }
                }
            }
        }
    }
    Ok(ReconstructionResult {
        image: mask.with_plane(cur),
        iterations,
    })
}

/// Reconstruction by erosion of `marker` over `mask` (marker ≥ mask),
/// computed on complements.
pub fn reconstruct_by_erosion(
    marker: &Raster,
    mask: &Raster,
    se: &StructuringElement,
) -> Result<ReconstructionResult, MorphologyError> {
    let r = reconstruct_by_dilation(&marker.complement(), &mask.complement(), se)?;
    Ok(ReconstructionResult {
        image: r.image.complement(),
        iterations: r.iterations,
    })
}

fn step_element(se: &StructuringElement, step: GeodesicStep) -> StructuringElement {
    match step {
        GeodesicStep::Elementary => StructuringElement::box3(),
        GeodesicStep::Element => se.clone(),
    }
}

/// Erosion by `se` followed by reconstruction by dilation under the input,
/// with elementary geodesic steps.
pub fn opening_by_reconstruction(img: &Raster, se: &StructuringElement) -> Raster {
    opening_by_reconstruction_with(img, se, GeodesicStep::Elementary)
}

pub fn opening_by_reconstruction_with(img: &Raster, se: &StructuringElement, step: GeodesicStep) -> Raster {
    let gray = img.to_grayscale();
    let eroded = erode(&gray, se);
    reconstruct_by_dilation(&eroded, &gray, &step_element(se, step))
        .expect("erosion never exceeds its input")
        .image
}

/// Dilation by `se` followed by reconstruction by erosion, carried out on
/// complements: the dilated image's complement is reconstructed under the
/// input's complement and the result complemented back.
pub fn closing_by_reconstruction(img: &Raster, se: &StructuringElement) -> Raster {
    closing_by_reconstruction_with(img, se, GeodesicStep::Elementary)
}

pub fn closing_by_reconstruction_with(img: &Raster, se: &StructuringElement, step: GeodesicStep) -> Raster {
    let gray = img.to_grayscale();
    let dilated = dilate(&gray, se);
    let complement_input = gray.complement();
    let complement_dilated = dilated.complement();
    reconstruct_by_dilation(&complement_dilated, &complement_input, &step_element(se, step))
        .expect("dilation never falls below its input")
        .image
        .complement()
}
