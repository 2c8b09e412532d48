//! Batch subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use thiserror::Error;

use mist_core::engine::{segment, EngineConfig, EngineError, MarkerMode, ScribbleDocument, ScribbleError, Session};
use mist_core::graphcut::{build_network, EnergyBreakdown};
use mist_core::metrics::{evaluate, CorpusItem, EvalConfig, EvalReport, Method};
use mist_core::morphology::{generate_marker_with, GeodesicStep, MarkerParams};
use mist_core::raster::{load_raster, save_raster, BinaryMask, BoundingBox, RasterError};

use crate::manifest::{Manifest, ManifestError};

/// Exit status for unreadable or malformed inputs and unwritable outputs.
pub const EXIT_IO: i32 = 2;
/// Exit status when the trimap has no foreground side.
pub const EXIT_EMPTY_FOREGROUND: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: RasterError },
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: RasterError },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Manifest(#[from] ManifestError),
    #[error("{0}")]
    Scribbles(#[from] ScribbleError),
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(EngineError::EmptyForeground) => EXIT_EMPTY_FOREGROUND,
            CliError::Input { .. }
            | CliError::Output { .. }
            | CliError::File { .. }
            | CliError::Manifest(_)
            | CliError::Scribbles(_) => EXIT_IO,
            CliError::Engine(_) | CliError::Usage(_) => 1,
        }
    }
}

fn load(path: &Path) -> Result<mist_core::raster::Raster, CliError> {
    load_raster(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn save(raster: &mist_core::raster::Raster, path: &Path) -> Result<(), CliError> {
    save_raster(raster, path).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `dir/stem_suffix.ext` next to `path`.
fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

/// Engine knobs shared by `segment`, `eval` and the service defaults.
#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Repetitions of assign/refit/cut.
    #[arg(long = "iterations", short = 'k', default_value_t = 5)]
    pub iterations: usize,
    /// Smoothness weight.
    #[arg(long, default_value_t = 50.0)]
    pub gamma: f64,
    /// Gaussian components per color model.
    #[arg(long, default_value_t = 5)]
    pub components: usize,
    /// Disk radius of the marker smoothing, in pixels.
    #[arg(long, short = 'r', default_value_t = 45)]
    pub radius: usize,
    /// Marker components below this many pixels are dropped.
    #[arg(long, default_value_t = 20)]
    pub min_component: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Marker pixels become probable instead of hard foreground.
    #[arg(long, conflicts_with = "no_marker")]
    pub marker_soft: bool,
    /// Skip the marker; the box alone initializes the trimap.
    #[arg(long)]
    pub no_marker: bool,
    /// Geodesic steps dilate with the disk itself instead of the 3x3 square.
    #[arg(long)]
    pub element_steps: bool,
}

impl Default for EngineArgs {
    fn default() -> Self {
        let c = EngineConfig::default();
        Self {
            iterations: c.k_iterations,
            gamma: c.gamma,
            components: c.components,
            radius: c.marker_radius,
            min_component: c.min_component,
            seed: c.seed,
            marker_soft: false,
            no_marker: false,
            element_steps: false,
        }
    }
}

impl EngineArgs {
    pub fn config(&self) -> EngineConfig {
        EngineConfig {
            k_iterations: self.iterations,
            gamma: self.gamma,
            components: self.components,
            marker_radius: self.radius,
            min_component: self.min_component,
            seed: self.seed,
            marker_mode: if self.no_marker {
                MarkerMode::Disabled
            } else if self.marker_soft {
                MarkerMode::Soft
            } else {
                MarkerMode::Hard
            },
            geodesic_step: if self.element_steps {
                GeodesicStep::Element
            } else {
                GeodesicStep::Elementary
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MarkerArgs {
    pub input: PathBuf,
    #[arg(long, short = 'r', default_value_t = 45)]
    pub radius: usize,
    #[arg(long, default_value_t = 20)]
    pub min_component: usize,
    #[arg(long)]
    pub element_steps: bool,
    /// Marker output (.pgm or .png).
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Also write the opened, closed and regional-maxima images next to the
    /// output.
    #[arg(long)]
    pub debug: bool,
}

/// Files written by `marker`.
pub fn run_marker(args: &MarkerArgs) -> Result<Vec<PathBuf>, CliError> {
    let img = load(&args.input)?;
    let params = MarkerParams {
        radius: args.radius,
        min_component: args.min_component,
        step: if args.element_steps {
            GeodesicStep::Element
        } else {
            GeodesicStep::Elementary
        },
    };
    let stages = generate_marker_with(&img, &params);
    let mut written = Vec::new();
    if args.debug {
        let ext = args
            .output
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("pgm")
            .to_string();
        for (suffix, raster) in [
            ("_opened", stages.opened.clone()),
            ("_closed", stages.closed.clone()),
            ("_maxima", stages.maxima.to_raster()),
        ] {
            let path = sibling(&args.output, suffix, &ext);
            save(&raster, &path)?;
            written.push(path);
        }
    }
    save(&stages.marker.to_raster(), &args.output)?;
    written.push(args.output.clone());
    Ok(written)
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    pub input: PathBuf,
    /// Inclusive box x0 y0 x1 y1; the whole image when omitted.
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"])]
    pub bbox: Option<Vec<usize>>,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Stroke list (JSON) painted before iterating.
    #[arg(long)]
    pub scribbles: Option<PathBuf>,
    /// Mask output (.pgm or .png).
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Energy log output; defaults to `<output stem>.energy.json`.
    #[arg(long)]
    pub energy_log: Option<PathBuf>,
    /// Also write the session document (the image is referenced by the input
    /// path).
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Also write the final terminal capacities as little-endian f32
    /// (source plane then sink plane).
    #[arg(long)]
    pub dump_weights: Option<PathBuf>,
}

/// Energy log as written by `segment`.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct EnergyLog {
    pub v: u32,
    pub beta: f64,
    pub iterations_run: usize,
    pub energies: Vec<EnergyBreakdown>,
}

impl EnergyLog {
    pub fn of(session: &Session) -> Self {
        Self {
            v: 1,
            beta: session.beta(),
            iterations_run: session.iterations_run(),
            energies: session.iteration_log().to_vec(),
        }
    }
}

pub fn parse_bbox(values: &[usize], width: usize, height: usize) -> Result<BoundingBox, CliError> {
    match values {
        [x0, y0, x1, y1] => {
            BoundingBox::new(*x0, *y0, *x1, *y1, width, height).map_err(|e| CliError::Usage(e.to_string()))
        }
        _ => Err(CliError::Usage("--bbox takes four integers".into())),
    }
}

/// Runs the session and returns the final mask. With zero iterations the
/// mask is the foreground side of the initial trimap.
pub fn run_segment(args: &SegmentArgs) -> Result<(Session, BinaryMask), CliError> {
    let img = load(&args.input)?;
    let bbox = match &args.bbox {
        Some(v) => parse_bbox(v, img.width(), img.height())?,
        None => BoundingBox::full(img.width(), img.height()),
    };
    let strokes = match &args.scribbles {
        Some(path) => ScribbleDocument::from_json(&read_text(path)?)?.strokes,
        None => Vec::new(),
    };
    let session = segment(img, bbox, args.engine.config(), &strokes)?;
    let mask = session.trimap().foreground();
    save(&mask.to_raster(), &args.output)?;
    let log_path = args
        .energy_log
        .clone()
        .unwrap_or_else(|| sibling(&args.output, ".energy", "json"));
    write_text(
        &log_path,
        &serde_json::to_string_pretty(&EnergyLog::of(&session)).expect("log is serializable"),
    )?;
    if let Some(path) = &args.session {
        let input = std::path::absolute(&args.input).unwrap_or_else(|_| args.input.clone());
        write_text(path, &session.to_document(input).to_json())?;
    }
    if let Some(path) = &args.dump_weights {
        let net = build_network(
            session.image(),
            session.trimap(),
            session.fg_model(),
            session.bg_model(),
            session.beta(),
            session.config().gamma,
        );
        std::fs::write(path, net.terminal_weights_dump()).map_err(|e| CliError::File {
            path: path.clone(),
            message: e.to_string(),
        })?;
    }
    Ok((session, mask))
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub manifest: PathBuf,
    /// Comma-separated methods: mist, grabcut, kmeans, or the name of an
    /// external mask set.
    #[arg(long, value_delimiter = ',', default_value = "mist,kmeans")]
    pub methods: Vec<String>,
    /// Directory of precomputed masks matched by image file stem; scored as
    /// method `external`.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Report prefix: writes `<out>.csv` and `<out>.md`.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

fn load_mask(path: &Path) -> Result<BinaryMask, String> {
    let raster = load_raster(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(BinaryMask::from_raster(&raster))
}

fn find_by_stem(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "pgm", "pnm", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
}

/// Loads the corpus and scores it; returns the report and the written paths.
pub fn run_eval(args: &EvalArgs) -> Result<(EvalReport, [PathBuf; 2]), CliError> {
    let text = read_text(&args.manifest)?;
    let base = args.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = Manifest::parse(&text)?.resolve(&base);
    let methods: Vec<Method> = args.methods.iter().map(|m| m.parse().expect("infallible")).collect();
    let cfg = EvalConfig::new(args.engine.config());

    let mut corpus = Vec::new();
    let mut load_errors: Vec<(String, String)> = Vec::new();
    for entry in &manifest.entries {
        let id = entry.id();
        let loaded = (|| -> Result<CorpusItem, String> {
            let image = load_raster(&entry.image).map_err(|e| format!("{}: {e}", entry.image.display()))?;
            let truth = load_mask(&entry.gt)?;
            if truth.width() != image.width() || truth.height() != image.height() {
                return Err("ground truth size differs from the image".into());
            }
            let bbox = match entry.bbox {
                Some([x0, y0, x1, y1]) => {
                    Some(BoundingBox::new(x0, y0, x1, y1, image.width(), image.height()).map_err(|e| e.to_string())?)
                }
                None => None,
            };
            let mut external = BTreeMap::new();
            for (name, path) in &entry.masks {
                if let Ok(mask) = load_mask(path) {
                    external.insert(name.clone(), mask);
                }
            }
            if let Some(dir) = &args.mask_dir {
                let stem = entry
                    .image
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                if let Some(mask) = find_by_stem(dir, &stem).and_then(|p| load_mask(&p).ok()) {
                    external.insert("external".into(), mask);
                }
            }
            Ok(CorpusItem {
                id: id.clone(),
                image,
                truth,
                bbox,
                external,
            })
        })();
        match loaded {
            Ok(item) => corpus.push(item),
            Err(e) => load_errors.push((id, e)),
        }
    }

    let mut report = evaluate(&corpus, &methods, &cfg);
    for (id, e) in load_errors {
        for m in &methods {
            report.push_error(&id, &m.to_string(), e.clone());
        }
    }
    report.sort();
    let csv = args.out.with_extension("csv");
    let md = args.out.with_extension("md");
    write_text(&csv, &report.to_csv())?;
    write_text(&md, &report.to_markdown())?;
    Ok((report, [csv, md]))
}
