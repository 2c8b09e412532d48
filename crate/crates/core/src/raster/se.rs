use serde::{Deserialize, Serialize};

/// Shape tag of a flat structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    /// Offsets with Euclidean norm at most `radius`.
    Disk(usize),
    /// `height` x `width` block of ones, anchored at its center
    /// (`(n - 1) / 2` for even sizes).
    Rect(usize, usize),
}

/// Flat binary neighborhood centered on its anchor.
///
/// Stored as the list of offsets plus, per row offset, the horizontal runs the
/// offsets form; erosion and dilation work run by run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    shape: Shape,
    offsets: Vec<(isize, isize)>,
    runs: Vec<Run>,
}

/// Horizontal run `dx_start..=dx_end` at row offset `dy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Run {
    pub dy: isize,
    pub dx_start: isize,
    pub dx_end: isize,
}

impl StructuringElement {
    /// Disk of radius `r`: (dx, dy) is included iff dx² + dy² ≤ r².
    pub fn disk(r: usize) -> Self {
        let r = r as isize;
        let r2 = r * r;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r2 {
                    offsets.push((dx, dy));
                }
            }
        }
        Self::from_offsets(Shape::Disk(r as usize), offsets)
    }

    /// `height` x `width` rectangle of ones.
    pub fn rect(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "empty rectangle");
        let (ay, ax) = (((height - 1) / 2) as isize, ((width - 1) / 2) as isize);
        let mut offsets = Vec::with_capacity(height * width);
        for row in 0..height as isize {
            for col in 0..width as isize {
                offsets.push((col - ax, row - ay));
            }
        }
        Self::from_offsets(Shape::Rect(height, width), offsets)
    }

    /// The 3x3 box, i.e. the elementary 8-connected step.
    pub fn box3() -> Self {
        Self::rect(3, 3)
    }

    pub fn from_shape(shape: Shape) -> Self {
        match shape {
            Shape::Disk(r) => Self::disk(r),
            Shape::Rect(h, w) => Self::rect(h, w),
        }
    }

    fn from_offsets(shape: Shape, mut offsets: Vec<(isize, isize)>) -> Self {
        offsets.sort_by_key(|&(dx, dy)| (dy, dx));
        debug_assert!(offsets.contains(&(0, 0)));
        let mut runs: Vec<Run> = Vec::new();
        for &(dx, dy) in &offsets {
            match runs.last_mut() {
                Some(run) if run.dy == dy && run.dx_end + 1 == dx => run.dx_end = dx,
                _ => runs.push(Run {
                    dy,
                    dx_start: dx,
                    dx_end: dx,
                }),
            }
        }
        Self { shape, offsets, runs }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Offsets sorted by (dy, dx).
    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn contains(&self, dx: isize, dy: isize) -> bool {
        self.offsets.binary_search_by_key(&(dy, dx), |&(x, y)| (y, x)).is_ok()
    }

    /// Point reflection through the anchor.
    pub fn reflect(&self) -> Self {
        Self::from_offsets(self.shape, self.offsets.iter().map(|&(dx, dy)| (-dx, -dy)).collect())
    }

    pub(crate) fn runs(&self) -> &[Run] {
        &self.runs
    }
}
