//! Grid crowd-flow forecasting with spatial auto-correlation gating, temporal
//! attention gating and a multi-scale residual block, on top of a small
//! reverse-mode tensor engine.

pub mod error;
pub mod eval;
pub mod grid;
pub mod grid_data;
pub mod io;
pub mod model;
pub mod spatial_stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use grid::Grid;
pub use tensor::Tensor;
