//! User strokes: polylines drawn with a round brush.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gmm::Side;
use crate::raster::BinaryMask;

/// Version tag of the stroke-list wire format.
pub const SCRIBBLES_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ScribbleError {
    #[error("stroke {stroke} has no points")]
    NoPoints { stroke: usize },
    #[error("stroke {stroke} point ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        stroke: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("stroke {stroke} has invalid brush radius {radius}")]
    InvalidRadius { stroke: usize, radius: f64 },
    #[error("unsupported scribble format version {0}")]
    Version(u32),
    #[error("malformed scribble document: {0}")]
    Json(String),
}

/// One stroke. Points are pixel-center coordinates; a single point is a dot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scribble {
    pub side: Side,
    pub brush_radius: f64,
    pub points: Vec<[f64; 2]>,
}

impl Scribble {
    pub fn new(side: Side, brush_radius: f64, points: Vec<[f64; 2]>) -> Self {
        Self {
            side,
            brush_radius,
            points,
        }
    }

    /// Straight stroke between two pixels.
    pub fn line(side: Side, brush_radius: f64, from: (usize, usize), to: (usize, usize)) -> Self {
        Self::new(
            side,
            brush_radius,
            vec![[from.0 as f64, from.1 as f64], [to.0 as f64, to.1 as f64]],
        )
    }

    fn validate(&self, index: usize, width: usize, height: usize) -> Result<(), ScribbleError> {
        if !(self.brush_radius.is_finite() && self.brush_radius >= 0.0) {
            return Err(ScribbleError::InvalidRadius {
                stroke: index,
                radius: self.brush_radius,
            });
        }
        if self.points.is_empty() {
            return Err(ScribbleError::NoPoints { stroke: index });
        }
        for &[x, y] in &self.points {
            let inside = x.is_finite()
                && y.is_finite()
                && x >= 0.0
                && y >= 0.0
                && x <= (width - 1) as f64
                && y <= (height - 1) as f64;
            if !inside {
                return Err(ScribbleError::OutOfBounds {
                    stroke: index,
                    x,
                    y,
                    width,
                    height,
                });
            }
        }
        Ok(())
    }

    /// Pixels whose centers lie within the brush radius of the polyline,
    /// clipped to the image.
    pub fn rasterize(&self, width: usize, height: usize) -> BinaryMask {
        let mut mask = BinaryMask::new(width, height);
        let r = self.brush_radius;
        let segments: Vec<([f64; 2], [f64; 2])> = if self.points.len() == 1 {
            vec![(self.points[0], self.points[0])]
        } else {
            self.points.windows(2).map(|w| (w[0], w[1])).collect()
        };
        for (p, q) in segments {
            let clamp_x = |v: f64| v.clamp(0.0, (width - 1) as f64) as usize;
            let clamp_y = |v: f64| v.clamp(0.0, (height - 1) as f64) as usize;
            let (x0, x1) = (
                clamp_x((p[0].min(q[0]) - r).floor()),
                clamp_x((p[0].max(q[0]) + r).ceil()),
            );
            let (y0, y1) = (
                clamp_y((p[1].min(q[1]) - r).floor()),
                clamp_y((p[1].max(q[1]) + r).ceil()),
            );
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if segment_distance2([x as f64, y as f64], p, q) <= r * r {
                        mask.set(x, y, true);
                    }
                }
            }
        }
        mask
    }
}

fn segment_distance2(c: [f64; 2], p: [f64; 2], q: [f64; 2]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((c[0] - p[0]) * d[0] + (c[1] - p[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let e = [p[0] + t * d[0] - c[0], p[1] + t * d[1] - c[1]];
    e[0] * e[0] + e[1] * e[1]
}

/// Checks every stroke against the image bounds.
pub fn validate_scribbles(scribbles: &[Scribble], width: usize, height: usize) -> Result<(), ScribbleError> {
    scribbles
        .iter()
        .enumerate()
        .try_for_each(|(i, s)| s.validate(i, width, height))
}

/// Stroke list as exchanged with clients: `{"v": 1, "strokes": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScribbleDocument {
    pub v: u32,
    pub strokes: Vec<Scribble>,
}

impl ScribbleDocument {
    pub fn new(strokes: Vec<Scribble>) -> Self {
        Self {
            v: SCRIBBLES_VERSION,
            strokes,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScribbleError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| ScribbleError::Json(e.to_string()))?;
        if doc.v != SCRIBBLES_VERSION {
            return Err(ScribbleError::Version(doc.v));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("strokes are serializable")
    }
}
