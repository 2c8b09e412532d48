//! Interactive segmentation session: automatic marker, trimap, and the
//! alternation of color-model fitting and min-cut.

mod persist;
mod scribble;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gmm::{assign_components, init_from_pixels, refit, Color, GmmError, GmmModel, Side};
use crate::graphcut::{build_network_from_colors, energy_of_colors, estimate_beta_colors, min_cut, EnergyBreakdown};
use crate::morphology::{generate_marker_with, GeodesicStep, MarkerParams, MIN_COMPONENT_PIXELS};
use crate::raster::{BinaryMask, BoundingBox, Label, Raster, RasterError, Trimap};

pub use persist::{image_hash, PersistError, SessionDocument, SESSION_VERSION};
pub use scribble::{validate_scribbles, Scribble, ScribbleDocument, ScribbleError, SCRIBBLES_VERSION};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    BoundingBox(#[from] RasterError),
    #[error("no pixel is on the foreground side of the trimap")]
    EmptyForeground,
    #[error("no iteration has been run yet")]
    NotIterated,
    #[error(transparent)]
    Scribble(#[from] ScribbleError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// How marker pixels enter the trimap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerMode {
    /// Marker pixels are hard foreground.
    #[default]
    Hard,
    /// Marker pixels are only probable foreground.
    Soft,
    /// No marker is computed; the box alone initializes the trimap.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub k_iterations: usize,
    pub gamma: f64,
    pub components: usize,
    pub marker_radius: usize,
    pub min_component: usize,
    pub seed: u64,
    pub marker_mode: MarkerMode,
    pub geodesic_step: GeodesicStep,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k_iterations: 5,
            gamma: 50.0,
            components: 5,
            marker_radius: 45,
            min_component: MIN_COMPONENT_PIXELS,
            seed: 0,
            marker_mode: MarkerMode::Hard,
            geodesic_step: GeodesicStep::Elementary,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.components == 0 {
            return Err(EngineError::Config("components must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(EngineError::Config(format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    fn marker_params(&self) -> MarkerParams {
        MarkerParams {
            radius: self.marker_radius,
            min_component: self.min_component,
            step: self.geodesic_step,
        }
    }
}

/// One segmentation in progress.
#[derive(Debug, Clone)]
pub struct Session {
    image: Raster,
    colors: Vec<Color>,
    bbox: BoundingBox,
    marker: BinaryMask,
    trimap: Trimap,
    fg_model: GmmModel,
    bg_model: GmmModel,
    beta: f64,
    iteration_log: Vec<EnergyBreakdown>,
    iterations_run: usize,
    config: EngineConfig,
}

/// Marker of `img` (computed on the whole image) restricted to `bbox`; empty
/// when the marker is disabled.
pub fn session_marker(img: &Raster, bbox: &BoundingBox, cfg: &EngineConfig) -> BinaryMask {
    match cfg.marker_mode {
        MarkerMode::Disabled => BinaryMask::new(img.width(), img.height()),
        _ => generate_marker_with(img, &cfg.marker_params()).marker.within(bbox),
    }
}

/// Starting trimap: hard background outside the box, marker pixels hard (or
/// probable) foreground, probable foreground elsewhere in the box. A box
/// covering the whole image leaves no background sample, so the outermost
/// pixel ring is then forced to hard background.
pub fn initial_trimap(marker: &BinaryMask, bbox: &BoundingBox, mode: MarkerMode) -> Trimap {
    let (w, h) = (marker.width(), marker.height());
    let mut trimap = Trimap::filled(w, h, Label::HardBackground);
    for y in bbox.y0..=bbox.y1 {
        for x in bbox.x0..=bbox.x1 {
            let label = if marker.get(x, y) && mode == MarkerMode::Hard {
                Label::HardForeground
            } else {
                Label::ProbForeground
            };
            trimap.set(x, y, label);
        }
    }
    if trimap.labels().iter().all(|l| l.is_foreground()) {
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                    trimap.set(x, y, Label::HardBackground);
                }
            }
        }
    }
    trimap
}

fn split_by_side(trimap: &Trimap, colors: &[Color]) -> (Vec<Color>, Vec<Color>) {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (l, z) in trimap.labels().iter().zip(colors) {
        if l.is_foreground() {
            fg.push(*z);
        } else {
            bg.push(*z);
        }
    }
    (fg, bg)
}

fn initial_model(pixels: &[Color], k: usize, seed: u64) -> Result<GmmModel, EngineError> {
    Ok(init_from_pixels(pixels, k.min(pixels.len()), seed)?)
}

/// Refits `model` to the pixels of one side; an empty side keeps the model.
fn refit_side(model: &GmmModel, pixels: &[Color]) -> Result<GmmModel, EngineError> {
    if pixels.is_empty() {
        return Ok(model.clone());
    }
    let assignments = assign_components(model, pixels);
    Ok(refit(pixels, &assignments, model.k())?)
}

impl Session {
    /// Computes the marker, builds the trimap and fits the initial color
    /// models.
    pub fn start(img: Raster, bbox: BoundingBox, cfg: EngineConfig) -> Result<Self, EngineError> {
        let marker = session_marker(&img, &bbox, &cfg);
        Self::start_with_marker(img, bbox, marker, cfg)
    }

    /// Like [`Session::start`] with a precomputed marker.
    pub fn start_with_marker(
        img: Raster,
        bbox: BoundingBox,
        marker: BinaryMask,
        cfg: EngineConfig,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let (w, h) = (img.width(), img.height());
        if !bbox.fits(w, h) {
            return Err(RasterError::InvalidBoundingBox {
                bbox: [bbox.x0, bbox.y0, bbox.x1, bbox.y1],
                width: w,
                height: h,
            }
            .into());
        }
        assert!(
            marker.width() == w && marker.height() == h,
            "marker and image dimensions differ"
        );
        let marker = marker.within(&bbox);
        let trimap = initial_trimap(&marker, &bbox, cfg.marker_mode);
        let colors = img.colors();
        let (fg, bg) = split_by_side(&trimap, &colors);
        if fg.is_empty() {
            return Err(EngineError::EmptyForeground);
        }
        let fg_model = initial_model(&fg, cfg.components, cfg.seed)?;
        let bg_model = initial_model(&bg, cfg.components, cfg.seed.wrapping_add(1))?;
        let beta = estimate_beta_colors(&colors, w, h);
        Ok(Self {
            image: img,
            colors,
            bbox,
            marker,
            trimap,
            fg_model,
            bg_model,
            beta,
            iteration_log: Vec::new(),
            iterations_run: 0,
            config: cfg,
        })
    }

    /// Runs up to `k` rounds of component assignment, model refit and
    /// min-cut, appending the energy of every round. Stops early once a cut
    /// leaves the labeling unchanged. Hard labels are never touched.
    pub fn iterate(&mut self, k: usize) -> Result<(), EngineError> {
        for _ in 0..k {
            let (fg, bg) = split_by_side(&self.trimap, &self.colors);
            self.fg_model = refit_side(&self.fg_model, &fg)?;
            self.bg_model = refit_side(&self.bg_model, &bg)?;
            let net = build_network_from_colors(
                &self.colors,
                &self.trimap,
                &self.fg_model,
                &self.bg_model,
                self.beta,
                self.config.gamma,
            );
            let (labels, _) = min_cut(&net);
            let mut changed = false;
            for (l, &f) in self.trimap.labels_mut().iter_mut().zip(labels.bits()) {
                if l.is_hard() {
                    continue;
                }
                let next = if f {
                    Label::ProbForeground
                } else {
                    Label::ProbBackground
                };
                changed |= *l != next;
                *l = next;
            }
            self.iteration_log.push(self.energy());
            self.iterations_run += 1;
            if !changed {
                break;
            }
        }
        Ok(())
    }

    /// Runs the configured number of iterations.
    pub fn run(&mut self) -> Result<(), EngineError> {
        self.iterate(self.config.k_iterations)
    }

    /// Paints the strokes into the trimap as hard labels (later strokes
    /// win; foreground is clipped to the box) and re-runs the configured
    /// number of iterations.
    pub fn apply_scribbles(&mut self, scribbles: &[Scribble]) -> Result<(), EngineError> {
        self.paint_scribbles(scribbles)?;
        self.run()
    }

    /// Paints the strokes without iterating.
    pub fn paint_scribbles(&mut self, scribbles: &[Scribble]) -> Result<(), EngineError> {
        let (w, h) = (self.width(), self.height());
        validate_scribbles(scribbles, w, h)?;
        for s in scribbles {
            let painted = s.rasterize(w, h);
            let label = match s.side {
                Side::Foreground => Label::HardForeground,
                Side::Background => Label::HardBackground,
            };
            for y in 0..h {
                for x in 0..w {
                    if painted.get(x, y) && self.bbox.contains(x, y) {
                        self.trimap.set(x, y, label);
                    }
                }
            }
        }
        Ok(())
    }

    /// Foreground projection of the trimap.
    pub fn extract_mask(&self) -> Result<BinaryMask, EngineError> {
        if self.iterations_run == 0 {
            return Err(EngineError::NotIterated);
        }
        Ok(self.trimap.foreground())
    }

    /// Energy of the current labeling under the current models.
    pub fn energy(&self) -> EnergyBreakdown {
        energy_of_colors(
            &self.colors,
            &self.trimap.foreground(),
            &self.fg_model,
            &self.bg_model,
            self.beta,
            self.config.gamma,
        )
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn image(&self) -> &Raster {
        &self.image
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn marker(&self) -> &BinaryMask {
        &self.marker
    }

    pub fn trimap(&self) -> &Trimap {
        &self.trimap
    }

    pub fn fg_model(&self) -> &GmmModel {
        &self.fg_model
    }

    pub fn bg_model(&self) -> &GmmModel {
        &self.bg_model
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn iteration_log(&self) -> &[EnergyBreakdown] {
        &self.iteration_log
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }
}

/// Starts a session and runs the configured iterations, optionally after
/// painting scribbles.
pub fn segment(
    img: Raster,
    bbox: BoundingBox,
    cfg: EngineConfig,
    scribbles: &[Scribble],
) -> Result<Session, EngineError> {
    let mut session = Session::start(img, bbox, cfg)?;
    if scribbles.is_empty() {
        session.run()?;
    } else {
        session.apply_scribbles(scribbles)?;
    }
    Ok(session)
}
