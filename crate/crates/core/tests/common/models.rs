//! Hand-assembled network pieces built only from the oracles in `common`.

use super::{brute_force_moran, naive_conv_dense, naive_conv_depthwise, naive_fc, relu, sigmoid};
use pasta_core::model::ParameterSet;

pub fn p<'a>(params: &'a ParameterSet, name: &str) -> &'a [f64] {
    params
        .get(name)
        .unwrap_or_else(|| panic!("no parameter {name}"))
        .data()
}

/// Row-major `[n][m][d]` positional code.
pub fn spe_oracle(n: usize, m: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m * d];
    for i in 0..n {
        for j in 0..m {
            for l in 0..d {
                let denom = f64::powf(10000.0, (2 * l) as f64 / d as f64);
                out[(i * m + j) * d + l] = if l % 2 == 1 {
                    (j as f64 / denom).cos()
                } else {
                    (i as f64 / denom).sin()
                };
            }
        }
    }
    out
}

/// Per-channel Moran statistics of a `[b][n][m][t]` array.
pub fn moran_oracle(x: &[f64], dims: [usize; 4]) -> Vec<f64> {
    let [b, n, m, t] = dims;
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for c in 0..t {
            let at = |i: usize, j: usize| ((bi * n + i) * m + j) * t + c;
            let grid: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..m).map(|j| x[at(i, j)]).collect())
                .collect();
            let s = brute_force_moran(&grid);
            for i in 0..n {
                for j in 0..m {
                    out[at(i, j)] = s[i][j];
                }
            }
        }
    }
    out
}

pub fn sag_oracle(
    x_raw: &[f64],
    x_spe: &[f64],
    dims: [usize; 4],
    params: &ParameterSet,
    k: usize,
) -> Vec<f64> {
    let s = moran_oracle(x_raw, dims);
    let gate = naive_conv_depthwise(
        &s,
        dims,
        p(params, "sag.gate.weight"),
        k,
        p(params, "sag.gate.bias"),
    );
    let feat = naive_conv_depthwise(
        x_spe,
        dims,
        p(params, "sag.feat.weight"),
        k,
        p(params, "sag.feat.bias"),
    );
    gate.iter()
        .zip(&feat)
        .map(|(g, f)| sigmoid(*g) * f)
        .collect()
}

/// Returns the gated tensor and the `[b][t]` attention weights.
pub fn tag_oracle(f: &[f64], dims: [usize; 4], params: &ParameterSet) -> (Vec<f64>, Vec<f64>) {
    let [b, n, m, t] = dims;
    let cells = n * m;
    let mut avg = vec![0.0; b * t];
    let mut max = vec![f64::NEG_INFINITY; b * t];
    for bi in 0..b {
        for cell in 0..cells {
            for c in 0..t {
                let v = f[(bi * cells + cell) * t + c];
                avg[bi * t + c] += v / cells as f64;
                max[bi * t + c] = max[bi * t + c].max(v);
            }
        }
    }
    let h = p(params, "tag.b0").len();
    let stack = |pooled: &[f64], w_in: &str, b_in: &str, w_out: &str, b_out: &str| {
        let hidden = naive_fc(pooled, b, t, p(params, w_in), h, p(params, b_in));
        naive_fc(&hidden, b, h, p(params, w_out), t, p(params, b_out))
    };
    let a = stack(&avg, "tag.w0", "tag.b0", "tag.w1", "tag.b1");
    let mx = stack(&max, "tag.w2", "tag.b2", "tag.w3", "tag.b3");
    let weights: Vec<f64> = a.iter().zip(&mx).map(|(x, y)| sigmoid(x + y)).collect();
    let mut out = f.to_vec();
    for bi in 0..b {
        for cell in 0..cells {
            for c in 0..t {
                out[(bi * cells + cell) * t + c] *= weights[bi * t + c];
            }
        }
    }
    (out, weights)
}

pub fn msr_oracle(
    f: &[f64],
    dims: [usize; 4],
    params: &ParameterSet,
    branches: &[usize],
) -> Vec<f64> {
    let [b, n, m, t] = dims;
    let mut total = vec![0.0; b * n * m];
    for &l in branches {
        let w = |part: &str| p(params, &format!("msr.{l}.{part}.weight"));
        let bias = |part: &str| p(params, &format!("msr.{l}.{part}.bias"));
        let inner = naive_conv_dense(f, dims, w("inner"), l, t, bias("inner"));
        let skip = naive_conv_dense(f, dims, w("skip"), l, t, bias("skip"));
        let residual: Vec<f64> = inner.iter().zip(&skip).map(|(a, s)| relu(*a) + s).collect();
        let outer = naive_conv_dense(&residual, dims, w("outer"), l, 1, bias("outer"));
        for (acc, v) in total.iter_mut().zip(&outer) {
            *acc += relu(*v);
        }
    }
    total
}

pub fn external_oracle(e: &[f64], params: &ParameterSet) -> Vec<f64> {
    let demb = p(params, "ext.fc1.bias").len();
    let nm = p(params, "ext.fc2.bias").len();
    let hidden: Vec<f64> = naive_fc(
        e,
        1,
        e.len(),
        p(params, "ext.fc1.weight"),
        demb,
        p(params, "ext.fc1.bias"),
    )
    .into_iter()
    .map(relu)
    .collect();
    naive_fc(
        &hidden,
        1,
        demb,
        p(params, "ext.fc2.weight"),
        nm,
        p(params, "ext.fc2.bias"),
    )
}
