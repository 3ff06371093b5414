//! Independent reference implementations used as test oracles. Nothing in
//! here calls the library's kernels.
#![allow(dead_code)]

use pasta_core::{Grid, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), random_vec(rng, len, scale)).unwrap()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// Central finite differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Local Moran's I written straight from its definition, one cell at a time.
pub fn brute_force_moran(grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = grid.len();
    let m = grid[0].len();
    let count = (n * m) as f64;
    let mut total = 0.0;
    for row in grid {
        for v in row {
            total += v;
        }
    }
    let mean = total / count;
    let mut ss = 0.0;
    for row in grid {
        for v in row {
            ss += (v - mean).powi(2);
        }
    }
    let p = (ss / (count - 1.0)).sqrt();
    let mut out = vec![vec![0.0; m]; n];
    let constant = grid.iter().flatten().all(|&v| v == grid[0][0]);
    if constant || p == 0.0 {
        return out;
    }
    for i in 0..n as isize {
        for j in 0..m as isize {
            let mut neighbour_sum = 0.0;
            for di in -1..=1isize {
                for dj in -1..=1isize {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (r, c) = (i + di, j + dj);
                    if r < 0 || c < 0 || r >= n as isize || c >= m as isize {
                        continue;
                    }
                    neighbour_sum += (grid[r as usize][c as usize] - mean) / p;
                }
            }
            out[i as usize][j as usize] = (grid[i as usize][j as usize] - mean) / p * neighbour_sum;
        }
    }
    out
}

pub fn grid_rows(g: &Grid) -> Vec<Vec<f64>> {
    (0..g.n())
        .map(|i| (0..g.m()).map(|j| g.get(i, j)).collect())
        .collect()
}

/// Zero-padded same-size convolution by direct summation over indices.
/// `kernel` is `[k][k][cin][cout]`, input `[b][h][w][cin]` flattened row-major.
pub fn naive_conv_dense(
    input: &[f64],
    dims: [usize; 4],
    kernel: &[f64],
    k: usize,
    cout: usize,
    bias: &[f64],
) -> Vec<f64> {
    let [b, h, w, cin] = dims;
    let p = (k / 2) as isize;
    let at = |bb: usize, i: isize, j: isize, c: usize| -> f64 {
        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
            0.0
        } else {
            input[((bb * h + i as usize) * w + j as usize) * cin + c]
        }
    };
    let mut out = vec![0.0; b * h * w * cout];
    for bb in 0..b {
        for i in 0..h {
            for j in 0..w {
                for co in 0..cout {
                    let mut acc = bias[co];
                    for di in 0..k {
                        for dj in 0..k {
                            for ci in 0..cin {
                                let x = at(
                                    bb,
                                    i as isize + di as isize - p,
                                    j as isize + dj as isize - p,
                                    ci,
                                );
                                acc += x * kernel[((di * k + dj) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out[((bb * h + i) * w + j) * cout + co] = acc;
                }
            }
        }
    }
    out
}

/// Depthwise variant: `kernel` is `[k][k][c]`.
pub fn naive_conv_depthwise(
    input: &[f64],
    dims: [usize; 4],
    kernel: &[f64],
    k: usize,
    bias: &[f64],
) -> Vec<f64> {
    let c = dims[3];
    // A depthwise conv is a dense conv with a diagonal channel matrix.
    let mut dense = vec![0.0; k * k * c * c];
    for tap in 0..k * k {
        for ch in 0..c {
            dense[(tap * c + ch) * c + ch] = kernel[tap * c + ch];
        }
    }
    naive_conv_dense(input, dims, &dense, k, c, bias)
}

pub fn naive_fc(
    input: &[f64],
    rows: usize,
    din: usize,
    weight: &[f64],
    dout: usize,
    bias: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut acc = bias[o];
            for d in 0..din {
                acc += input[r * din + d] * weight[d * dout + o];
            }
            out[r * dout + o] = acc;
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}
pub mod criteria;
pub mod gradcheck;
pub mod models;

/// A small hotspot dataset that trains in well under a second per epoch.
pub fn tiny_split(seed: u64) -> pasta_core::grid_data::SplitDataset {
    use pasta_core::grid_data::*;
    let cfg = SynthConfig {
        n: 8,
        m: 8,
        days: 10,
        hotspots: default_hotspots(8, 8),
        seed,
        ..SynthConfig::default()
    };
    let seq = generate_synthetic(&cfg).unwrap();
    let spec = FragmentSpec::with_counts(60, 2, 2, 1).unwrap();
    SplitDataset::prepare(&seq, spec, &HolidayCalendar::default(), 1, 0.1).unwrap()
}

pub fn tiny_model_config(
    data: &pasta_core::grid_data::SplitDataset,
) -> pasta_core::model::ModelConfig {
    let dext = data.train[0].external.len();
    pasta_core::model::ModelConfig::new(8, 8, data.spec.total(), dext).unwrap()
}
