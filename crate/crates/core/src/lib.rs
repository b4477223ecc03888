//! Self-supervised low-light image enhancement.
//!
//! The pipeline decomposes a single low-light photograph into reflectance,
//! illumination, and noise by minimizing a five-term loss over the image and
//! its histogram-equalized twin, then brightens the illumination map with a
//! nonlinear saturation curve and recombines. No training data is involved;
//! every image is its own optimization problem.
//!
//! Module map:
//! - [`img`]: pixel containers, PNG I/O, histogram equalization, hue,
//!   finite differences.
//! - [`autodiff`]: the reverse-mode tape engine and Adam optimizer that power
//!   the per-image optimization.
//! - [`decompose`]: loss terms and the decomposition loop.
//! - [`nism`]: illumination curves (saturation mapping and gamma), exponent
//!   estimation, recomposition.
//! - [`metrics`]: no-reference and full-reference quality metrics.
//! - [`synth`]: seeded synthetic scenes used by tests, demos, and self-checks.

pub mod autodiff;
pub mod decompose;
pub mod img;
pub mod metrics;
pub mod nism;
pub mod synth;

pub use decompose::{decompose, DecomposeConfig, DecompositionResult, Mode};
pub use img::{Field, ImageError, ImageTensor};
pub use metrics::MetricsReport;
pub use nism::NismParams;
