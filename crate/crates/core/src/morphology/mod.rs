//! Flat grayscale and binary morphology, geodesic reconstruction and the
//! automatic marker pipeline.
//!
//! All neighborhoods are 8-connected. Samples outside the image take the
//! identity of the operator (maximum for erosion, minimum for dilation) so the
//! border never creates extrema of its own.

mod marker;
mod reconstruct;

pub use marker::{generate_marker, generate_marker_with, MarkerParams, MarkerStages, MIN_COMPONENT_PIXELS};
pub use reconstruct::{
    closing_by_reconstruction, closing_by_reconstruction_with, geodesic_dilate_step, opening_by_reconstruction,
    opening_by_reconstruction_with, reconstruct_by_dilation, reconstruct_by_erosion, GeodesicStep,
    ReconstructionResult,
};

use std::collections::VecDeque;

use thiserror::Error;

use crate::raster::{BinaryMask, Raster, StructuringElement};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MorphologyError {
    #[error("operation requires a single-channel raster")]
    NotGrayscale,
    #[error("marker and mask dimensions differ")]
    DimensionMismatch,
    #[error("marker exceeds mask at ({x}, {y})")]
    MarkerExceedsMask { x: usize, y: usize },
}

/// Pointwise minimum over `se` (offsets added to each pixel).
pub fn erode(img: &Raster, se: &StructuringElement) -> Raster {
    per_channel(img, |plane| {
        flat_filter(plane, img.width(), img.height(), se, img.depth().max_value(), Ord::min)
    })
}

/// Pointwise maximum over the reflected `se`; the dual of [`erode`].
pub fn dilate(img: &Raster, se: &StructuringElement) -> Raster {
    let reflected = se.reflect();
    per_channel(img, |plane| {
        flat_filter(plane, img.width(), img.height(), &reflected, 0, Ord::max)
    })
}

pub fn binary_erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let bits = flat_filter(mask.bits(), mask.width(), mask.height(), se, true, Ord::min);
    BinaryMask::from_bits(mask.width(), mask.height(), bits)
}

pub fn binary_dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let bits = flat_filter(mask.bits(), mask.width(), mask.height(), &se.reflect(), false, Ord::max);
    BinaryMask::from_bits(mask.width(), mask.height(), bits)
}

/// Closing: dilation followed by erosion with the same element.
pub fn binary_close(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    binary_erode(&binary_dilate(mask, se), se)
}

fn per_channel(img: &Raster, f: impl Fn(&[u16]) -> Vec<u16>) -> Raster {
    let c = img.channels();
    if c == 1 {
        return img.with_plane(f(img.data()));
    }
    let planes: Vec<Vec<u16>> = (0..c)
        .map(|k| f(&img.data().iter().skip(k).step_by(c).copied().collect::<Vec<_>>()))
        .collect();
    let data = (0..img.pixel_count())
        .flat_map(|i| planes.iter().map(move |p| p[i]))
        .collect();
    Raster::new(img.width(), img.height(), c, img.depth(), data).expect("same geometry")
}

/// Flat min/max filter. For every output pixel `p` the result is
/// `op`-reduced over `plane[p + o]` for each offset `o` of `se`, with
/// out-of-image samples replaced by `pad`. Each horizontal run of the element
/// is evaluated with the van Herk/Gil-Werman running reduction.
pub(crate) fn flat_filter<T: Copy + Ord>(
    plane: &[T],
    width: usize,
    height: usize,
    se: &StructuringElement,
    pad: T,
    op: fn(T, T) -> T,
) -> Vec<T> {
    debug_assert_eq!(plane.len(), width * height);
    let mut out = vec![pad; plane.len()];
    let mut padded = Vec::new();
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    for y in 0..height {
        let dst = &mut out[y * width..(y + 1) * width];
        for run in se.runs() {
            let sy = y as isize + run.dy;
            if sy < 0 || sy >= height as isize {
                continue;
            }
            let src = &plane[sy as usize * width..(sy as usize + 1) * width];
            let len = (run.dx_end - run.dx_start + 1) as usize;
            // padded[k] = src[k + dx_start]
            padded.clear();
            padded.extend((0..width + len - 1).map(|k| {
                let sx = k as isize + run.dx_start;
                if sx < 0 || sx >= width as isize {
                    pad
                } else {
                    src[sx as usize]
                }
            }));
            running_reduce(&padded, len, op, &mut forward, &mut backward);
            for (x, d) in dst.iter_mut().enumerate() {
                let w = if len == 1 {
                    padded[x]
                } else {
                    op(backward[x], forward[x + len - 1])
                };
                *d = op(*d, w);
            }
        }
    }
    out
}

/// Fills block-wise prefix (`forward`) and suffix (`backward`) reductions with
/// block size `len`; the window `[i, i + len)` reduces to
/// `op(backward[i], forward[i + len - 1])`.
fn running_reduce<T: Copy>(a: &[T], len: usize, op: fn(T, T) -> T, forward: &mut Vec<T>, backward: &mut Vec<T>) {
    let n = a.len();
    forward.clear();
    forward.extend_from_slice(a);
    backward.clear();
    backward.extend_from_slice(a);
    for i in 1..n {
        if i % len != 0 {
            forward[i] = op(forward[i - 1], a[i]);
        }
    }
    for i in (0..n.saturating_sub(1)).rev() {
        if (i + 1) % len != 0 {
            backward[i] = op(backward[i + 1], a[i]);
        }
    }
}

/// 8-connected neighbors of `i` in a `width` x `height` grid.
pub(crate) fn neighbors8(i: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((i % width) as isize, (i / width) as isize);
    const D: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
    D.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x + dx, y + dy);
        (nx >= 0 && ny >= 0 && nx < width as isize && ny < height as isize).then(|| ny as usize * width + nx as usize)
    })
}

/// Pixels whose 8-connected plateau of equal value has no strictly greater
/// 8-neighbor.
pub fn regional_maxima(img: &Raster) -> BinaryMask {
    let gray = img.to_grayscale();
    let (w, h) = (gray.width(), gray.height());
    let data = gray.data();
    let mut visited = vec![false; data.len()];
    let mut out = vec![false; data.len()];
    let mut plateau = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..data.len() {
        if visited[start] {
            continue;
        }
        let v = data[start];
        let mut is_max = true;
        plateau.clear();
        visited[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            plateau.push(p);
            for q in neighbors8(p, w, h) {
                let u = data[q];
                if u > v {
                    is_max = false;
                } else if u == v && !visited[q] {
                    visited[q] = true;
                    queue.push_back(q);
                }
            }
        }
        if is_max {
            for &p in &plateau {
                out[p] = true;
            }
        }
    }
    BinaryMask::from_bits(w, h, out)
}

/// Labels 8-connected components of set pixels. Returns per-pixel labels
/// (`0` = unset, components numbered from 1) and each component's area.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut labels = vec![0u32; bits.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut area = 0;
        labels[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            area += 1;
            for q in neighbors8(p, w, h) {
                if bits[q] && labels[q] == 0 {
                    labels[q] = id;
                    stack.push(q);
                }
            }
        }
        sizes.push(area);
    }
    (labels, sizes)
}

/// Clears 8-connected components with fewer than `min_pixels` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_pixels: usize) -> BinaryMask {
    if min_pixels == 0 {
        return mask.clone();
    }
    let (labels, sizes) = label_components(mask);
    let bits = labels
        .iter()
        .map(|&l| l != 0 && sizes[l as usize - 1] >= min_pixels)
        .collect();
    BinaryMask::from_bits(mask.width(), mask.height(), bits)
}
