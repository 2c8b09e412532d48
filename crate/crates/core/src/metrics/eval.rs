//! Scores segmentation methods over a corpus and renders the report.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{dice, hausdorff, kmeans_segment};
use crate::engine::{segment, EngineConfig, MarkerMode};
use crate::raster::{BinaryMask, BoundingBox, Raster};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Automatic marker followed by the iterative cut.
    Mist,
    /// The iterative cut initialized from the box alone.
    GrabCut,
    /// Two-class intensity k-means.
    Kmeans,
    /// A precomputed mask supplied with the corpus item under this name.
    External(String),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mist => f.write_str("mist"),
            Method::GrabCut => f.write_str("grabcut"),
            Method::Kmeans => f.write_str("kmeans"),
            Method::External(name) => f.write_str(name),
        }
    }
}

impl FromStr for Method {
    type Err = std::convert::Infallible;

    /// Unknown names refer to external masks.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mist" => Method::Mist,
            "grabcut" => Method::GrabCut,
            "kmeans" => Method::Kmeans,
            other => Method::External(other.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub image: Raster,
    pub truth: BinaryMask,
    /// Box for the cut-based methods; the whole image when absent.
    pub bbox: Option<BoundingBox>,
    pub external: BTreeMap<String, BinaryMask>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalConfig {
    pub engine: EngineConfig,
    pub kmeans_classes: usize,
}

impl EvalConfig {
    pub fn new(engine: EngineConfig) -> Self {
        Self {
            engine,
            kmeans_classes: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub dice: f64,
    pub hausdorff: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub image_id: String,
    pub method: String,
    pub scores: Option<Scores>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub rows: usize,
    pub errors: usize,
    pub mean_dice: Option<f64>,
    pub mean_hausdorff: Option<f64>,
    pub mean_runtime_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn run_method(item: &CorpusItem, method: &Method, cfg: &EvalConfig) -> Result<(BinaryMask, f64), String> {
    let (w, h) = (item.image.width(), item.image.height());
    let bbox = item.bbox.unwrap_or_else(|| BoundingBox::full(w, h));
    let start = Instant::now();
    let mask = match method {
        Method::Mist | Method::GrabCut => {
            let mut engine = cfg.engine.clone();
            if *method == Method::GrabCut {
                engine.marker_mode = MarkerMode::Disabled;
            }
            let session = segment(item.image.clone(), bbox, engine, &[]).map_err(|e| e.to_string())?;
            session.extract_mask().map_err(|e| e.to_string())?
        }
        Method::Kmeans => {
            kmeans_segment(&item.image, cfg.kmeans_classes.max(2), cfg.engine.seed).map_err(|e| e.to_string())?
        }
        Method::External(name) => item
            .external
            .get(name)
            .cloned()
            .ok_or_else(|| format!("no {name} mask for this image"))?,
    };
    Ok((mask, start.elapsed().as_secs_f64()))
}

fn score(item: &CorpusItem, method: &Method, cfg: &EvalConfig) -> Result<Scores, String> {
    let (mask, runtime_s) = run_method(item, method, cfg)?;
    let dice = dice(&mask, &item.truth).map_err(|e| e.to_string())?;
    let hausdorff = hausdorff(&mask, &item.truth).map_err(|e| e.to_string())?;
    Ok(Scores {
        dice,
        hausdorff,
        runtime_s,
    })
}

/// Runs every method on every item. Failures become row-level errors.
pub fn evaluate(corpus: &[CorpusItem], methods: &[Method], cfg: &EvalConfig) -> EvalReport {
    let mut report = EvalReport::default();
    for item in corpus {
        for method in methods {
            match score(item, method, cfg) {
                Ok(s) => report.push_scores(&item.id, &method.to_string(), s),
                Err(e) => report.push_error(&item.id, &method.to_string(), e),
            }
        }
    }
    report.sort();
    report
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    v.map(|v| format!("{v:.precision$}")).unwrap_or_default()
}

impl EvalReport {
    pub fn push_scores(&mut self, image_id: &str, method: &str, scores: Scores) {
        self.rows.push(EvalRow {
            image_id: image_id.to_string(),
            method: method.to_string(),
            scores: Some(scores),
            error: None,
        });
    }

    pub fn push_error(&mut self, image_id: &str, method: &str, error: impl Into<String>) {
        self.rows.push(EvalRow {
            image_id: image_id.to_string(),
            method: method.to_string(),
            scores: None,
            error: Some(error.into()),
        });
    }

    /// Orders rows by image id, then method; stable otherwise.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Means per method over the rows without errors, in order of first
    /// appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut order: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !order.contains(&r.method.as_str()) {
                order.push(&r.method);
            }
        }
        order
            .into_iter()
            .map(|m| {
                let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.method == m).collect();
                let ok: Vec<Scores> = rows.iter().filter_map(|r| r.scores).collect();
                Aggregate {
                    method: m.to_string(),
                    rows: rows.len(),
                    errors: rows.len() - ok.len(),
                    mean_dice: mean(ok.iter().map(|s| s.dice)),
                    mean_hausdorff: mean(ok.iter().map(|s| s.hausdorff)),
                    mean_runtime_s: mean(ok.iter().map(|s| s.runtime_s)),
                }
            })
            .collect()
    }

    pub fn aggregate(&self, method: &str) -> Option<Aggregate> {
        self.aggregates().into_iter().find(|a| a.method == method)
    }

    /// One line per row, then one `mean` line per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,method,dice,hausdorff,runtime_s,error\n");
        for r in &self.rows {
            let s = r.scores;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.image_id),
                csv_field(&r.method),
                fmt_opt(s.map(|s| s.dice), 6),
                fmt_opt(s.map(|s| s.hausdorff), 6),
                fmt_opt(s.map(|s| s.runtime_s), 6),
                csv_field(r.error.as_deref().unwrap_or(""))
            );
        }
        for a in self.aggregates() {
            let _ = writeln!(
                out,
                "mean,{},{},{},{},{}",
                csv_field(&a.method),
                fmt_opt(a.mean_dice, 6),
                fmt_opt(a.mean_hausdorff, 6),
                fmt_opt(a.mean_runtime_s, 6),
                if a.errors > 0 {
                    format!("{} errors", a.errors)
                } else {
                    String::new()
                }
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out =
            String::from("| image | method | dice | hausdorff | runtime (s) | error |\n|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let s = r.scores;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                md_cell(&r.image_id),
                md_cell(&r.method),
                fmt_opt(s.map(|s| s.dice), 4),
                fmt_opt(s.map(|s| s.hausdorff), 3),
                fmt_opt(s.map(|s| s.runtime_s), 3),
                md_cell(r.error.as_deref().unwrap_or(""))
            );
        }
        out.push_str(
            "\n| method | rows | errors | mean dice | mean hausdorff | mean runtime (s) |\n|---|---|---|---|---|---|\n",
        );
        for a in self.aggregates() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                md_cell(&a.method),
                a.rows,
                a.errors,
                fmt_opt(a.mean_dice, 4),
                fmt_opt(a.mean_hausdorff, 3),
                fmt_opt(a.mean_runtime_s, 3)
            );
        }
        let _ = writeln!(out, "\nerrors: {}", self.error_count());
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Depth;

    fn item(id: &str) -> CorpusItem {
        let truth = BinaryMask::from_fn(12, 12, |x, y| (3..9).contains(&x) && (3..9).contains(&y));
        let image = Raster::from_fn(12, 12, Depth::Eight, |x, y| if truth.get(x, y) { 220 } else { 20 });
        CorpusItem {
            id: id.into(),
            image,
            truth: truth.clone(),
            bbox: None,
            external: BTreeMap::from([("perfect".to_string(), truth)]),
        }
    }

    #[test]
    fn perfect_method_scores_one() {
        let r = evaluate(
            &[item("a")],
            &[Method::Kmeans, "perfect".parse().unwrap()],
            &EvalConfig::new(EngineConfig::default()),
        );
        for row in &r.rows {
            let s = row.scores.unwrap();
            assert_eq!((s.dice, s.hausdorff), (1.0, 0.0));
        }
        assert_eq!(r.aggregates().len(), 2);
    }

    #[test]
    fn means_skip_errors() {
        let mut r = EvalReport::default();
        let s = |d| Scores {
            dice: d,
            hausdorff: 1.0,
            runtime_s: 0.0,
        };
        r.push_scores("a", "m", s(0.8));
        r.push_scores("b", "m", s(0.9));
        r.push_error("c", "m", "missing ground truth");
        let a = r.aggregate("m").unwrap();
        assert!((a.mean_dice.unwrap() - 0.85).abs() < 1e-15);
        assert_eq!((a.rows, a.errors), (3, 1));
        assert_eq!(r.error_count(), 1);
    }

    #[test]
    fn missing_external_mask_is_a_row_error() {
        let r = evaluate(
            &[item("z"), item("a")],
            &["other".parse().unwrap()],
            &EvalConfig::default(),
        );
        assert_eq!(r.error_count(), 2);
        assert_eq!(r.rows[0].image_id, "a");
    }

    #[test]
    fn renderings() {
        let mut r = EvalReport::default();
        r.push_scores(
            "img,1",
            "kmeans",
            Scores {
                dice: 0.5,
                hausdorff: 2.0,
                runtime_s: 0.25,
            },
        );
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "\"img,1\",kmeans,0.500000,2.000000,0.250000,");
        assert_eq!(lines[2], "mean,kmeans,0.500000,2.000000,0.250000,");
        assert!(r.to_markdown().contains("| kmeans | 1 | 0 | 0.5000 | 2.000 | 0.250 |"));
    }
}
