pub mod engine;
pub mod gmm;
pub mod graphcut;
pub mod metrics;
pub mod morphology;
pub mod phantom;
pub mod raster;
