use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Min-max scaler onto `[-1, 1]`, the range of the tanh output head.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub data_min: f64,
    pub data_max: f64,
}

impl Scaler {
    pub fn new(data_min: f64, data_max: f64) -> Result<Self> {
        if !(data_min.is_finite() && data_max.is_finite()) || data_max <= data_min {
            return Err(Error::InvalidArgument(format!(
                "scaler needs min < max, got [{data_min}, {data_max}]"
            )));
        }
        Ok(Scaler { data_min, data_max })
    }

    /// Fits on the given (training) frames only.
    pub fn fit<'a>(frames: impl IntoIterator<Item = &'a Grid>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in frames.into_iter().flat_map(|g| g.data()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if lo > hi {
            return Err(Error::Empty("no frames to fit the scaler on".into()));
        }
        Self::new(lo, hi)
    }

    pub fn apply(&self, x: f64) -> f64 {
        2.0 * (x - self.data_min) / (self.data_max - self.data_min) - 1.0
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y + 1.0) * (self.data_max - self.data_min) / 2.0 + self.data_min
    }

    pub fn apply_grid(&self, g: &Grid) -> Grid {
        g.map(|v| self.apply(v))
    }

    pub fn invert_grid(&self, g: &Grid) -> Grid {
        g.map(|v| self.invert(v))
    }
}
