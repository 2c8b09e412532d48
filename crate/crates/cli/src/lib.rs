//! Command line and HTTP front ends for the MIST segmentation engine.

pub mod commands;
pub mod manifest;
pub mod server;
