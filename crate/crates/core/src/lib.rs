//! Multi-object tracking with objects represented as pixel-wise
//! distributions: a center heatmap plus a size map per object.
//!
//! The pipeline runs flow-guided feature [`propagation`], a masked-attention
//! object [`decoder`], and online heatmap-based association in [`tracker`].
//! [`targets`] builds training-style targets and losses, [`simulator`]
//! produces synthetic scenes with exact ground truth, and [`metrics`] scores
//! tracker output with CLEAR-MOT and identity measures.
//!
//! ```
//! use pixtrack::pipeline::evaluate_scene;
//! use pixtrack::simulator::{generate, SceneConfig};
//! use pixtrack::tracker::TrackerConfig;
//!
//! let truth = generate(&SceneConfig { num_objects: 3, frames: 20, ..SceneConfig::default() })?;
//! let summary = evaluate_scene(&truth, &TrackerConfig::default(), 0.5)?;
//! assert_eq!(summary.mota, 1.0);
//! # Ok::<(), pixtrack::Error>(())
//! ```

pub mod assignment;
pub mod decoder;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod propagation;
pub mod simulator;
pub mod targets;
pub mod tracker;

pub use error::{Error, Result};
