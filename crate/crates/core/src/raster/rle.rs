//! Run-length encodings used on the wire and in persisted sessions.
//!
//! Both encodings walk pixels in row-major order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BinaryMask, Label, Trimap};

/// Largest decoded grid accepted, in pixels.
const MAX_PIXELS: u64 = 1 << 28;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("runs cover {covered} pixels but the grid has {expected}")]
    LengthMismatch { covered: u64, expected: u64 },
    #[error("invalid label value {0}")]
    InvalidLabel(u8),
    #[error("zero-length run at index {0}")]
    EmptyRun(usize),
    #[error("grid of {0}x{1} is too large")]
    TooLarge(usize, usize),
}

/// Binary mask as alternating run lengths, starting with unset pixels (the
/// first count may be zero).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
}

impl MaskRle {
    pub fn encode(mask: &BinaryMask) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for &b in mask.bits() {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        counts.push(run);
        Self {
            width: mask.width(),
            height: mask.height(),
            counts,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask, RleError> {
        let expected = grid_len(self.width, self.height)?;
        let covered = self
            .counts
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .unwrap_or(u64::MAX);
        if covered != expected {
            return Err(RleError::LengthMismatch { covered, expected });
        }
        if let Some(i) = self.counts.iter().skip(1).position(|&c| c == 0) {
            return Err(RleError::EmptyRun(i + 1));
        }
        let mut bits = Vec::with_capacity(expected as usize);
        for (i, &c) in self.counts.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
        }
        Ok(BinaryMask::from_bits(self.width, self.height, bits))
    }
}

/// Trimap as `[label, length]` runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimapRle {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<(u8, u64)>,
}

impl TrimapRle {
    pub fn encode(trimap: &Trimap) -> Self {
        let mut runs: Vec<(u8, u64)> = Vec::new();
        for &l in trimap.labels() {
            match runs.last_mut() {
                Some((label, len)) if *label == l as u8 => *len += 1,
                _ => runs.push((l as u8, 1)),
            }
        }
        Self {
            width: trimap.width(),
            height: trimap.height(),
            runs,
        }
    }

    pub fn decode(&self) -> Result<Trimap, RleError> {
        let expected = grid_len(self.width, self.height)?;
        let mut covered = 0u64;
        for (i, &(label, len)) in self.runs.iter().enumerate() {
            if len == 0 {
                return Err(RleError::EmptyRun(i));
            }
            Label::from_u8(label).ok_or(RleError::InvalidLabel(label))?;
            covered = covered.saturating_add(len);
        }
        if covered != expected {
            return Err(RleError::LengthMismatch { covered, expected });
        }
        let mut labels = Vec::with_capacity(expected as usize);
        for &(label, len) in &self.runs {
            let l = Label::from_u8(label).expect("validated above");
            labels.extend(std::iter::repeat_n(l, len as usize));
        }
        Ok(Trimap::from_labels(self.width, self.height, labels))
    }
}

fn grid_len(width: usize, height: usize) -> Result<u64, RleError> {
    (width as u64)
        .checked_mul(height as u64)
        .filter(|&n| n <= MAX_PIXELS)
        .ok_or(RleError::TooLarge(width, height))
}
