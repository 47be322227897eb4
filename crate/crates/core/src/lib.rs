//! Hyperspectral unmixing by fusing the outputs of several endmember
//! extraction algorithms with attention networks.
//!
//! The numeric core (`diffcore`, `geometry`, `objectives`) is generic over the
//! scalar type through [`scalar::Scalar`]; the pipeline modules run on `f64`.
//! Concrete `f64` aliases for the generic types live at the crate root.

pub mod assign;
pub mod config;
pub mod diffcore;
pub mod eea;
pub mod error;
pub mod fsnet;
pub mod geometry;
pub mod metrics;
pub mod neighborhood;
pub mod objectives;
pub mod render;
pub mod scalar;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision autodiff graph.
pub type Graph = diffcore::Graph<f64>;
/// Default-precision parameter tensor.
pub type Param = diffcore::Param<f64>;
/// Default-precision Adam optimizer state.
pub type AdamState = diffcore::AdamState<f64>;
/// Default-precision multi-head attention parameters.
pub type MhaParams = diffcore::MhaParams<f64>;
/// Default-precision PCA projection.
pub type PcaProjection = geometry::PcaProjection<f64>;
