//! Box-supervised instance segmentation by level-set evolution.
//!
//! Every annotated box gets its own level-set function φ, evolved by
//! gradient descent on a sigmoid-relaxed Chan-Vese energy restricted to the
//! box. Two data terms drive the fit: the normalized image and a 9-channel
//! structural feature stack smoothed by a minimum-spanning-tree filter. A
//! 1-D dice loss on the axis projections of `σ(φ)` ties the mask to the box
//! extent. The final mask is `φ > 0`.
//!
//! ```no_run
//! use levelbox::{io, pipeline, EvolutionConfig};
//!
//! let image = io::load_image("scene.png")?;
//! let boxes = io::load_boxes("boxes.txt")?;
//! let result = pipeline::segment_image(&image, &boxes, &EvolutionConfig::default())?;
//! io::save_masks(&result, "out")?;
//! # Ok::<(), levelbox::Error>(())
//! ```

pub mod boxproj;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod features;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod selftest;
pub mod synth;
pub mod treefilter;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    crop, make_grid, BoxAnnotation, EvolutionConfig, InitMode, InstanceMask, LevelSetField,
    PixelGrid,
};
