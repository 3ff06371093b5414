use crate::error::{shape_err, Error, Result};

/// A row-major `n × m` field of values (one map snapshot).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Empty(format!("grid extents {n}x{m}")));
        }
        if data.len() != n * m {
            return shape_err(format!(
                "grid {n}x{m} needs {} values, got {}",
                n * m,
                data.len()
            ));
        }
        Ok(Grid { n, m, data })
    }

    pub fn filled(n: usize, m: usize, value: f64) -> Result<Self> {
        Self::new(n, m, vec![value; n * m])
    }

    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..n * m).map(|idx| f(idx / m, idx % m)).collect();
        Self::new(n, m, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            n: self.n,
            m: self.m,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
