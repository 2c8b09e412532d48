//! Overlap and boundary-distance scores against a reference mask, the
//! intensity k-means baseline, and the evaluation harness.

mod eval;
mod kmeans;

use thiserror::Error;

use crate::raster::BinaryMask;

pub use eval::{evaluate, Aggregate, CorpusItem, EvalConfig, EvalReport, EvalRow, Method, Scores};
pub use kmeans::{kmeans_segment, KMEANS_MAX_ITERATIONS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("mask sizes differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("distance to an empty mask is undefined")]
    EmptyMask,
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
}

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<(), MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

/// `2|A ∩ B| / (|A| + |B|)`; 1 when both masks are empty.
pub fn dice(seg: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    check_dims(seg, gt)?;
    let both = seg.bits().iter().zip(gt.bits()).filter(|(a, b)| **a && **b).count();
    let total = seg.count() + gt.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / total as f64)
}

/// Mask pixels on the image border or with a 4-neighbor outside the mask.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y)
            && (x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1))
    })
}

/// Symmetric Hausdorff distance between the boundaries of two masks, in
/// pixels.
pub fn hausdorff(seg: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    check_dims(seg, gt)?;
    if seg.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyMask);
    }
    let (a, b) = (boundary(seg), boundary(gt));
    Ok(directed(&a, &b).max(directed(&b, &a)))
}

/// Largest distance from a pixel of `from` to the nearest pixel of `to`.
fn directed(from: &BinaryMask, to: &BinaryMask) -> f64 {
    let dt = squared_distance_transform(to);
    let worst = from
        .bits()
        .iter()
        .zip(&dt)
        .filter(|(f, _)| **f)
        .map(|(_, &d)| d)
        .max()
        .unwrap_or(0);
    (worst as f64).sqrt()
}

/// Exact squared Euclidean distance from every pixel to the nearest set pixel
/// (separable lower-envelope method). Unreachable entries stay `u64::MAX`
/// only when the mask is empty.
pub fn squared_distance_transform(mask: &BinaryMask) -> Vec<u64> {
    let (w, h) = (mask.width(), mask.height());
    const FAR: u64 = u64::MAX / 4;
    let mut grid: Vec<u64> = mask.bits().iter().map(|&b| if b { 0 } else { FAR }).collect();
    let mut column = vec![0u64; h];
    let mut out = vec![0u64; h.max(w)];
    for x in 0..w {
        for y in 0..h {
            column[y] = grid[y * w + x];
        }
        lower_envelope(&column, &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    let mut row = vec![0u64; w];
    for y in 0..h {
        row.copy_from_slice(&grid[y * w..(y + 1) * w]);
        lower_envelope(&row, &mut out[..w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    if mask.is_empty() {
        grid.fill(u64::MAX);
    }
    grid
}

/// `out[q] = min_p (f[p] + (q - p)²)` in linear time.
fn lower_envelope(f: &[u64], out: &mut [u64]) {
    let n = f.len();
    const FAR: u64 = u64::MAX / 4;
    let finite: Vec<usize> = (0..n).filter(|&p| f[p] < FAR).collect();
    if finite.is_empty() {
        out.fill(FAR);
        return;
    }
    // parabola vertices and the boundaries between them, as exact rationals
    // compared by cross-multiplication
    let mut v: Vec<usize> = Vec::with_capacity(finite.len());
    let mut z: Vec<(i128, i128)> = Vec::with_capacity(finite.len());
    let intersect = |p: usize, q: usize| -> (i128, i128) {
        let (fp, fq) = (f[p] as i128, f[q] as i128);
        let (p, q) = (p as i128, q as i128);
        ((fq + q * q) - (fp + p * p), 2 * (q - p))
    };
    let le = |a: (i128, i128), b: (i128, i128)| a.0 * b.1 <= b.0 * a.1;
    for &q in &finite {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push((i128::MIN / 4, 1));
                    break;
                }
                Some(&p) => {
                    let s = intersect(p, q);
                    if v.len() > 1 && le(s, *z.last().unwrap()) {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && le(z[k + 1], (q as i128, 1)) {
            k += 1;
        }
        let d = q.abs_diff(v[k]) as u64;
        *o = f[v[k]] + d * d;
    }
}
