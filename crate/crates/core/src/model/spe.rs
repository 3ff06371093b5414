use crate::tensor::Tensor;

/// Sinusoidal position code of every cell, `[n, m, d]`.
///
/// Even dimensions encode the row, odd dimensions the column:
/// `sin(i / 10000^(2l/d))` for even `l`, `cos(j / 10000^(2l/d))` for odd `l`,
/// with zero-based `i`, `j`, `l`.
pub fn spatial_positional_encoding(n: usize, m: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * m * d);
    for i in 0..n {
        for j in 0..m {
            for l in 0..d {
                let scale = 10000f64.powf(2.0 * l as f64 / d as f64);
                data.push(if l % 2 == 0 {
                    (i as f64 / scale).sin()
                } else {
                    (j as f64 / scale).cos()
                });
            }
        }
    }
    Tensor::new(vec![n, m, d], data).expect("sinusoids are finite")
}
