//! Evaluation corpus manifest.
//!
//! ```json
//! {"v": 1, "entries": [
//!   {"image": "a.png", "gt": "a_gt.png", "id": "a", "bbox": [10, 10, 90, 90],
//!    "masks": {"meanshift": "ms/a.png"}}
//! ]}
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub v: u32,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub gt: PathBuf,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub bbox: Option<[usize; 4]>,
    #[serde(default)]
    pub masks: BTreeMap<String, PathBuf>,
}

impl ManifestEntry {
    /// Explicit id, else the image file stem.
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}

/// One schema problem, with the location it was found at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestIssue {
    pub line: usize,
    pub column: usize,
    pub message: String,
    /// The offending source line.
    pub context: String,
}

impl fmt::Display for ManifestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)?;
        if !self.context.is_empty() {
            write!(f, "\n    {}", self.context.trim())?;
        }
        Ok(())
    }
}

/// Every schema problem found in a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestError {
    pub issues: Vec<ManifestIssue>,
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} problem(s) in manifest:", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ManifestError {}

fn source_line(text: &str, line: usize) -> String {
    text.lines().nth(line.saturating_sub(1)).unwrap_or("").to_string()
}

/// Line (1-based) where the `index`-th element of the `entries` array
/// starts, found by scanning the text; falls back to 1.
fn entry_line(text: &str, index: usize) -> usize {
    let Some(start) = text.find("\"entries\"") else {
        return 1;
    };
    let Some(open) = text[start..].find('[').map(|o| start + o) else {
        return 1;
    };
    let mut depth = 0usize;
    let mut seen = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, c) in text[open + 1..].char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' | '[' => {
                if depth == 0 {
                    if seen == index {
                        let at = open + 1 + offset;
                        return text[..at].matches('\n').count() + 1;
                    }
                    seen += 1;
                }
                depth += 1;
            }
            '}' | ']' => {
                if depth == 0 {
                    break;
                }
                depth -= 1;
            }
            _ => {}
        }
    }
    1
}

impl Manifest {
    /// Parses and validates; reports all semantic problems at once.
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let manifest: Manifest = serde_json::from_str(text).map_err(|e| ManifestError {
            issues: vec![ManifestIssue {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
                context: source_line(text, e.line()),
            }],
        })?;
        let mut issues = Vec::new();
        let mut issue = |line: usize, message: String| {
            issues.push(ManifestIssue {
                line,
                column: 1,
                message,
                context: source_line(text, line),
            })
        };
        if manifest.v != MANIFEST_VERSION {
            let line = text.lines().position(|l| l.contains("\"v\"")).map_or(1, |i| i + 1);
            issue(line, format!("unsupported manifest version {}", manifest.v));
        }
        let mut ids = BTreeSet::new();
        for (i, entry) in manifest.entries.iter().enumerate() {
            let line = entry_line(text, i);
            if entry.image.as_os_str().is_empty() {
                issue(line, format!("entry {i}: empty image path"));
            }
            if entry.gt.as_os_str().is_empty() {
                issue(line, format!("entry {i}: empty gt path"));
            }
            let id = entry.id();
            if id.is_empty() {
                issue(line, format!("entry {i}: cannot derive an id"));
            } else if !ids.insert(id.clone()) {
                issue(line, format!("entry {i}: duplicate id {id:?}"));
            }
            if let Some([x0, y0, x1, y1]) = entry.bbox {
                if x0 > x1 || y0 > y1 {
                    issue(line, format!("entry {i}: bbox corners out of order"));
                }
            }
            for name in entry.masks.keys() {
                if matches!(name.as_str(), "mist" | "grabcut" | "kmeans") {
                    issue(line, format!("entry {i}: mask name {name:?} shadows a built-in method"));
                }
            }
        }
        if issues.is_empty() {
            Ok(manifest)
        } else {
            Err(ManifestError { issues })
        }
    }

    /// Resolves relative paths against `base`.
    pub fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for e in &mut self.entries {
            fix(&mut e.image);
            fix(&mut e.gt);
            e.masks.values_mut().for_each(fix);
        }
        self
    }
}
