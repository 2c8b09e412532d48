//! Intensity k-means segmentation baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MetricsError;
use crate::raster::{BinaryMask, Raster};

pub const KMEANS_MAX_ITERATIONS: usize = 100;

/// Clusters grayscale intensities into `classes` groups with seeded
/// k-means++ and Lloyd iterations (until the assignment stops changing or
/// [`KMEANS_MAX_ITERATIONS`]); the class with the highest mean is foreground.
pub fn kmeans_segment(img: &Raster, classes: usize, seed: u64) -> Result<BinaryMask, MetricsError> {
    if classes < 2 {
        return Err(MetricsError::TooFewClasses(classes));
    }
    let gray = img.to_grayscale();
    let values: Vec<f64> = gray.data().iter().map(|&v| v as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(&values, classes, &mut rng);
    let mut assignment: Vec<usize> = values.iter().map(|&v| nearest(&centers, v)).collect();
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut sums = vec![0.0; classes];
        let mut counts = vec![0usize; classes];
        for (&v, &a) in values.iter().zip(&assignment) {
            sums[a] += v;
            counts[a] += 1;
        }
        for k in 0..classes {
            if counts[k] > 0 {
                centers[k] = sums[k] / counts[k] as f64;
            }
        }
        let next: Vec<usize> = values.iter().map(|&v| nearest(&centers, v)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let mut counts = vec![0usize; classes];
    for &a in &assignment {
        counts[a] += 1;
    }
    let foreground = (0..classes)
        .filter(|&k| counts[k] > 0)
        .max_by(|&a, &b| centers[a].total_cmp(&centers[b]).then(b.cmp(&a)))
        .expect("at least one pixel");
    Ok(BinaryMask::from_bits(
        img.width(),
        img.height(),
        assignment.iter().map(|&a| a == foreground).collect(),
    ))
}

fn nearest(centers: &[f64], v: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, &c) in centers.iter().enumerate() {
        let d = (v - c).abs();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

fn seed_centers(values: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = vec![values[rng.random_range(0..values.len())]];
    let mut d2: Vec<f64> = values.iter().map(|v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = values.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..values.len())
        };
        let c = values[pick];
        for (d, v) in d2.iter_mut().zip(values) {
            *d = d.min((v - c).powi(2));
        }
        centers.push(c);
    }
    centers
}
