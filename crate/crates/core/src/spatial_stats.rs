//! Local Moran's I and LISA quadrant labels on rectangular grids with queen
//! adjacency (every cell sharing an edge or a corner, clipped at the border).

use std::fmt;

use crate::error::Result;
use crate::grid::Grid;

/// Per-cell local Moran's I for one map snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct MoranField {
    pub n: usize,
    pub m: usize,
    pub stats: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over all cells (`NM - 1` denominator).
    pub sd: f64,
}

impl MoranField {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.stats[i * self.m + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    HH,
    HL,
    LH,
    LL,
    None,
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quadrant::HH => "HH",
            Quadrant::HL => "HL",
            Quadrant::LH => "LH",
            Quadrant::LL => "LL",
            Quadrant::None => "NONE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadrantMap {
    pub n: usize,
    pub m: usize,
    pub labels: Vec<Quadrant>,
}

impl QuadrantMap {
    pub fn get(&self, i: usize, j: usize) -> Quadrant {
        self.labels[i * self.m + j]
    }

    pub fn count(&self, q: Quadrant) -> usize {
        self.labels.iter().filter(|&&l| l == q).count()
    }
}

/// Queen neighbours of `(i, j)` inside an `n × m` grid, row-major.
pub fn queen_neighbors(
    n: usize,
    m: usize,
    i: usize,
    j: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let rows = i.saturating_sub(1)..=(i + 1).min(n - 1);
    rows.flat_map(move |r| {
        let cols = j.saturating_sub(1)..=(j + 1).min(m - 1);
        cols.map(move |c| (r, c))
    })
    .filter(move |&(r, c)| (r, c) != (i, j))
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    // Rounding in the mean would otherwise leave a constant grid with a
    // tiny spurious spread.
    if count < 2 || values.iter().all(|&v| v == values[0]) {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (count - 1) as f64).sqrt())
}

/// Local Moran's I of every cell:
/// `s_ij = z_ij · Σ_{queen neighbours} z`, with `z = (x - mean) / sd`.
///
/// A constant grid (`sd == 0`) yields all zeros.
pub fn local_morans_i(grid: &Grid) -> Result<MoranField> {
    let (n, m) = (grid.n(), grid.m());
    let (mean, sd) = mean_and_sd(grid.data());
    let stats = if sd == 0.0 {
        vec![0.0; n * m]
    } else {
        let z: Vec<f64> = grid.data().iter().map(|v| (v - mean) / sd).collect();
        (0..n * m)
            .map(|idx| {
                let (i, j) = (idx / m, idx % m);
                let lag: f64 = queen_neighbors(n, m, i, j).map(|(r, c)| z[r * m + c]).sum();
                z[idx] * lag
            })
            .collect()
    };
    Ok(MoranField {
        n,
        m,
        stats,
        mean,
        sd,
    })
}

/// LISA quadrant of every cell from the signs of its own deviation and the
/// mean deviation of its queen neighbours. Exact zeros map to `None`.
pub fn quadrants(grid: &Grid) -> Result<QuadrantMap> {
    let (n, m) = (grid.n(), grid.m());
    let (mean, sd) = mean_and_sd(grid.data());
    let labels = if sd == 0.0 {
        vec![Quadrant::None; n * m]
    } else {
        (0..n * m)
            .map(|idx| {
                let (i, j) = (idx / m, idx % m);
                let own = grid.data()[idx] - mean;
                let (sum, count) = queen_neighbors(n, m, i, j)
                    .fold((0.0, 0usize), |(s, k), (r, c)| {
                        (s + grid.get(r, c) - mean, k + 1)
                    });
                if count == 0 {
                    return Quadrant::None;
                }
                match (sign(own), sign(sum / count as f64)) {
                    (1, 1) => Quadrant::HH,
                    (1, -1) => Quadrant::HL,
                    (-1, 1) => Quadrant::LH,
                    (-1, -1) => Quadrant::LL,
                    _ => Quadrant::None,
                }
            })
            .collect()
    };
    Ok(QuadrantMap { n, m, labels })
}
