//! Preprocessing for pixel-based table-to-text models.
//!
//! * [`table`]: ToTTo-style tables, span resolution, related-cell queries.
//! * [`synth`]: synthetic tables drawn from measured structure distributions.
//! * [`ssl`]: pseudo-HTML structure targets and the cell-masking objective.
//! * [`render`]: deterministic rasterization for the three generation settings.
//! * [`patch`]: patch-budget fitting, γ truncation and patch extraction.
//! * [`stats`]: size buckets and coverage measurements.
//! * [`dataset`]: reproducible end-to-end corpus builds.

pub mod dataset;
pub mod font;
pub mod image;
pub mod patch;
pub mod render;
pub mod rng;
pub mod ssl;
pub mod stats;
pub mod synth;
pub mod table;

pub use image::Image;
pub use patch::{FitConfig, PatchSeq};
pub use render::{RenderConfig, Setting};
pub use rng::SplitMix64;
pub use synth::{StructDist, SplitSizes};
pub use table::{Cell, CellId, Grid, Table};
