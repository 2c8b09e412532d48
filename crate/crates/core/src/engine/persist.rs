//! JSON form of a session. The image is stored by path plus a content hash;
//! masks and the trimap are run-length encoded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EngineConfig, Session};
use crate::gmm::GmmModel;
use crate::graphcut::EnergyBreakdown;
use crate::raster::rle::{MaskRle, RleError, TrimapRle};
use crate::raster::{load_raster, BoundingBox, Raster, RasterError};

pub const SESSION_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("malformed session document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported session format version {0}")]
    Version(u32),
    #[error(transparent)]
    Rle(#[from] RleError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("image content hash {actual} does not match recorded {expected}")]
    HashMismatch { expected: String, actual: String },
    #[error("inconsistent session document: {0}")]
    Inconsistent(String),
}

/// SHA-256 over the raster's geometry and samples, hex encoded.
pub fn image_hash(img: &Raster) -> String {
    let mut h = Sha256::new();
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    h.update((img.channels() as u64).to_le_bytes());
    h.update(img.depth().bits().to_le_bytes());
    for &s in img.data() {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDocument {
    pub v: u32,
    pub image: ImageRef,
    pub bbox: BoundingBox,
    pub config: EngineConfig,
    pub marker: MaskRle,
    pub trimap: TrimapRle,
    pub fg_model: GmmModel,
    pub bg_model: GmmModel,
    pub beta: f64,
    pub iteration_log: Vec<EnergyBreakdown>,
    pub iterations_run: usize,
}

impl SessionDocument {
    /// Parses and checks the version and internal consistency, without
    /// touching the referenced image.
    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.v != SESSION_VERSION {
            return Err(PersistError::Version(doc.v));
        }
        let dims = (doc.trimap.width, doc.trimap.height);
        if (doc.marker.width, doc.marker.height) != dims {
            return Err(PersistError::Inconsistent("marker and trimap sizes differ".into()));
        }
        if !doc.bbox.fits(dims.0, dims.1) {
            return Err(PersistError::Inconsistent("bounding box outside the image".into()));
        }
        if !(doc.beta.is_finite() && doc.beta >= 0.0) {
            return Err(PersistError::Inconsistent(format!("beta {}", doc.beta)));
        }
        doc.config
            .validate()
            .map_err(|e| PersistError::Inconsistent(e.to_string()))?;
        doc.marker.decode()?;
        doc.trimap.decode()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session is serializable")
    }
}

impl Session {
    /// Snapshot referring to the image at `image_path`.
    pub fn to_document(&self, image_path: impl Into<PathBuf>) -> SessionDocument {
        SessionDocument {
            v: SESSION_VERSION,
            image: ImageRef {
                path: image_path.into(),
                sha256: image_hash(&self.image),
            },
            bbox: self.bbox,
            config: self.config.clone(),
            marker: MaskRle::encode(&self.marker),
            trimap: TrimapRle::encode(&self.trimap),
            fg_model: self.fg_model.clone(),
            bg_model: self.bg_model.clone(),
            beta: self.beta,
            iteration_log: self.iteration_log.clone(),
            iterations_run: self.iterations_run,
        }
    }

    /// Rebuilds a session from a document and the image it refers to.
    pub fn from_document(doc: &SessionDocument, image: Raster) -> Result<Self, PersistError> {
        let actual = image_hash(&image);
        if actual != doc.image.sha256 {
            return Err(PersistError::HashMismatch {
                expected: doc.image.sha256.clone(),
                actual,
            });
        }
        let trimap = doc.trimap.decode()?;
        let marker = doc.marker.decode()?;
        if trimap.width() != image.width() || trimap.height() != image.height() {
            return Err(PersistError::Inconsistent("trimap and image sizes differ".into()));
        }
        Ok(Self {
            colors: image.colors(),
            image,
            bbox: doc.bbox,
            marker,
            trimap,
            fg_model: doc.fg_model.clone(),
            bg_model: doc.bg_model.clone(),
            beta: doc.beta,
            iteration_log: doc.iteration_log.clone(),
            iterations_run: doc.iterations_run,
            config: doc.config.clone(),
        })
    }

    /// Loads the referenced image and rebuilds the session.
    pub fn load_document(doc: &SessionDocument) -> Result<Self, PersistError> {
        let image = load_raster(&doc.image.path)?;
        Self::from_document(doc, image)
    }

    /// Writes the session document next to nothing else; the image must
    /// already exist at `image_path`.
    pub fn save(&self, path: &Path, image_path: impl Into<PathBuf>) -> Result<(), PersistError> {
        std::fs::write(path, self.to_document(image_path).to_json()).map_err(RasterError::from)?;
        Ok(())
    }
}
