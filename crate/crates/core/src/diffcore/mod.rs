//! Minimal reverse-mode differentiation engine and Adam optimizer.

pub mod adam;
pub mod attention;
pub mod graph;
pub mod params;

pub use adam::AdamState;
pub use attention::{multi_head_attention, scaled_dot_attention, MhaIds, MhaParams};
pub use graph::{Graph, TensorId};
pub use params::Param;
