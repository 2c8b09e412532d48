//! Synthetic test images with known ground truth: a bright square on a dark
//! background with Gaussian noise and small salt/pepper specks, optionally
//! with a dimmer blob attached to one side of the square.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::{BinaryMask, BoundingBox, Depth, Raster};

/// Axis-aligned rectangle `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Inclusive box around the rectangle grown by `margin`, clipped to the
    /// image.
    pub fn bbox(&self, margin: usize, width: usize, height: usize) -> BoundingBox {
        BoundingBox {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x0 + self.w - 1 + margin).min(width - 1),
            y1: (self.y0 + self.h - 1 + margin).min(height - 1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhantomSpec {
    pub size: usize,
    pub square: Rect,
    pub foreground: f64,
    pub background: f64,
    pub noise_sigma: f64,
    /// Total number of specks.
    pub specks: usize,
    /// How many of them land inside the square (as dark pits); the rest are
    /// bright specks on the background.
    pub specks_in_square: usize,
    pub speck_size: usize,
    /// Dimmer blob touching the square.
    pub distractor: Option<(Rect, f64)>,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 256,
            square: Rect {
                x0: 98,
                y0: 98,
                w: 60,
                h: 60,
            },
            foreground: 200.0,
            background: 40.0,
            noise_sigma: 8.0,
            specks: 30,
            specks_in_square: 10,
            speck_size: 3,
            distractor: None,
            seed: 1,
        }
    }
}

impl PhantomSpec {
    /// Default phantom with a 20x20 blob at 130 attached to the right edge of
    /// the square.
    pub fn with_distractor() -> Self {
        let base = Self::default();
        let sq = base.square;
        Self {
            distractor: Some((
                Rect {
                    x0: sq.x0 + sq.w,
                    y0: sq.y0 + 20,
                    w: 20,
                    h: 20,
                },
                130.0,
            )),
            ..base
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: Raster,
    /// The square.
    pub truth: BinaryMask,
    pub distractor: Option<BinaryMask>,
    pub spec: PhantomSpec,
}

impl Phantom {
    pub fn generate(spec: &PhantomSpec) -> Self {
        let n = spec.size;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut level = vec![spec.background; n * n];
        for y in 0..n {
            for x in 0..n {
                if spec.square.contains(x, y) {
                    level[y * n + x] = spec.foreground;
                } else if let Some((blob, v)) = spec.distractor {
                    if blob.contains(x, y) {
                        level[y * n + x] = v;
                    }
                }
            }
        }

        let s = spec.speck_size;
        let sq = spec.square;
        for i in 0..spec.specks {
            let inside = i < spec.specks_in_square;
            let (x0, y0) = loop {
                let (x, y) = if inside {
                    (
                        rng.random_range(sq.x0 + 2..sq.x0 + sq.w - s - 2),
                        rng.random_range(sq.y0 + 2..sq.y0 + sq.h - s - 2),
                    )
                } else {
                    (rng.random_range(0..n - s), rng.random_range(0..n - s))
                };
                let clear = |px: usize, py: usize| {
                    // keep background specks well away from the objects
                    let near_object =
                        |r: &Rect| px + 4 >= r.x0 && px < r.x0 + r.w + 4 && py + 4 >= r.y0 && py < r.y0 + r.h + 4;
                    inside || !(near_object(&sq) || spec.distractor.is_some_and(|(b, _)| near_object(&b)))
                };
                if (0..s).all(|dy| (0..s).all(|dx| clear(x + dx, y + dy))) {
                    break (x, y);
                }
            };
            let v = if inside { spec.background } else { spec.foreground };
            for dy in 0..s {
                for dx in 0..s {
                    level[(y0 + dy) * n + x0 + dx] = v;
                }
            }
        }

        let noise = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
        let data = level
            .iter()
            .map(|&v| (v + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u16)
            .collect();
        let image = Raster::new(n, n, 1, Depth::Eight, data).expect("valid phantom");
        let truth = BinaryMask::from_fn(n, n, |x, y| sq.contains(x, y));
        let distractor = spec
            .distractor
            .map(|(b, _)| BinaryMask::from_fn(n, n, |x, y| b.contains(x, y)));
        Self {
            image,
            truth,
            distractor,
            spec: spec.clone(),
        }
    }

    /// Bounding box around the square (and the distractor, if any) with the
    /// given margin.
    pub fn bbox(&self, margin: usize) -> BoundingBox {
        let n = self.spec.size;
        let mut b = self.spec.square.bbox(margin, n, n);
        if let Some((blob, _)) = self.spec.distractor {
            let d = blob.bbox(margin, n, n);
            b = BoundingBox {
                x0: b.x0.min(d.x0),
                y0: b.y0.min(d.y0),
                x1: b.x1.max(d.x1),
                y1: b.y1.max(d.y1),
            };
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = Phantom::generate(&PhantomSpec::default());
        let b = Phantom::generate(&PhantomSpec::default());
        assert_eq!(a.image, b.image);
        assert_eq!(a.truth.count(), 3600);
    }

    #[test]
    fn distractor_touches_square() {
        let p = Phantom::generate(&PhantomSpec::with_distractor());
        let d = p.distractor.unwrap();
        assert_eq!(d.count(), 400);
        assert!(d.get(158, 120) && p.truth.get(157, 120));
    }
}
