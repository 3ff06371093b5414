//! Property checks shared by the focused test files and the acceptance gate.
//! Each returns a short description of the first violation found.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use pasta_core::grid_data::Sample;
use pasta_core::model::{
    forward, sag_forward, spatial_positional_encoding, tag_forward, ModelConfig, ModuleFlags,
    ParameterSet,
};
use pasta_core::spatial_stats::{local_morans_i, queen_neighbors};
use pasta_core::tensor::{conv2d, ConvMode};
use pasta_core::{Grid, Tensor};
use rand::Rng;

use super::gradcheck::jittered_params;
use super::models::spe_oracle;
use super::{brute_force_moran, grid_rows, random_tensor, rng};

pub type Check = Result<(), String>;

fn random_grid(seed: u64, n: usize, m: usize) -> Grid {
    let mut r = rng(seed);
    Grid::from_fn(n, m, |_, _| r.random_range(-50.0..150.0)).unwrap()
}

fn integer_grid(seed: u64, n: usize, m: usize) -> Grid {
    let mut r = rng(seed);
    Grid::from_fn(n, m, |_, _| r.random_range(0..200) as f64).unwrap()
}

pub fn moran_matches_brute_force() -> Check {
    for seed in 0..100 {
        let grid = random_grid(seed, 8, 8);
        let field = local_morans_i(&grid).map_err(|e| e.to_string())?;
        let expected = brute_force_moran(&grid_rows(&grid));
        for (i, row) in expected.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                let got = field.get(i, j);
                if (got - want).abs() > 1e-12 {
                    return Err(format!("grid {seed} cell ({i},{j}): {got} vs {want}"));
                }
            }
        }
    }
    Ok(())
}

/// Power-of-two scales and integer shifts on integer grids are exact in
/// floating point, so the statistics must agree bit for bit.
pub fn moran_exact_invariance() -> Check {
    for seed in 0..50 {
        let grid = integer_grid(seed, 8, 8);
        let base = local_morans_i(&grid).map_err(|e| e.to_string())?;
        for (a, b) in [
            (2.0, 0.0),
            (0.25, 3.0),
            (8.0, -17.0),
            (1.0, 1000.0),
            (0.5, -0.5),
        ] {
            let moved = local_morans_i(&grid.map(|v| a * v + b)).map_err(|e| e.to_string())?;
            if moved.stats != base.stats {
                return Err(format!("grid {seed}: a={a}, b={b} changed the statistics"));
            }
        }
    }
    Ok(())
}

/// Arbitrary positive scales and shifts, up to rounding.
pub fn moran_general_invariance() -> Check {
    let mut r = rng(99);
    for seed in 0..50 {
        let grid = random_grid(seed, 8, 8);
        let base = local_morans_i(&grid).map_err(|e| e.to_string())?;
        let a: f64 = r.random_range(0.01..100.0);
        let b: f64 = r.random_range(-1000.0..1000.0);
        let moved = local_morans_i(&grid.map(|v| a * v + b)).map_err(|e| e.to_string())?;
        for (x, y) in base.stats.iter().zip(&moved.stats) {
            if (x - y).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(format!("grid {seed}: a={a}, b={b}: {x} vs {y}"));
            }
        }
    }
    Ok(())
}

pub fn border_neighbour_counts() -> Check {
    let (n, m) = (4usize, 4usize);
    for i in 0..n {
        for j in 0..m {
            let got: BTreeSet<(usize, usize)> = queen_neighbors(n, m, i, j).collect();
            let mut want = BTreeSet::new();
            for r in 0..n {
                for c in 0..m {
                    let (dr, dc) = (r.abs_diff(i), c.abs_diff(j));
                    if (dr, dc) != (0, 0) && dr <= 1 && dc <= 1 {
                        want.insert((r, c));
                    }
                }
            }
            let border_rows = usize::from(i == 0 || i == n - 1);
            let border_cols = usize::from(j == 0 || j == m - 1);
            let expected_count = match border_rows + border_cols {
                0 => 8,
                1 => 5,
                _ => 3,
            };
            if got != want || got.len() != expected_count {
                return Err(format!("cell ({i},{j}): {got:?}"));
            }
        }
    }
    Ok(())
}

pub fn spe_matches_oracle() -> Check {
    for (n, m, d) in [(16, 16, 15), (7, 5, 14), (3, 9, 4), (1, 1, 1)] {
        let spe = spatial_positional_encoding(n, m, d);
        if spe.shape() != [n, m, d] {
            return Err(format!("shape {:?}", spe.shape()));
        }
        let at = |i: usize, j: usize, l: usize| spe.data()[(i * m + j) * d + l];
        for i in 0..n {
            for j in 0..m {
                if at(0, j, 0) != 0.0 {
                    return Err(format!("SPE[0,{j},0] = {}", at(0, j, 0)));
                }
                if d > 1 && at(i, 0, 1) != 1.0 {
                    return Err(format!("SPE[{i},0,1] = {}", at(i, 0, 1)));
                }
            }
        }
        for (idx, (got, want)) in spe.data().iter().zip(spe_oracle(n, m, d)).enumerate() {
            if (got - want).abs() > 1e-15 {
                return Err(format!("{n}x{m}x{d} entry {idx}: {got} vs {want}"));
            }
        }
    }
    let spot = spatial_positional_encoding(2, 1, 15).data()[15 + 2];
    let want = (1.0 / 10000f64.powf(4.0 / 15.0)).sin();
    if (spot - want).abs() > 1e-15 {
        return Err(format!("SPE[1,0,2] = {spot}, want {want}"));
    }
    Ok(())
}

fn with_zeroed(params: &ParameterSet, prefix: &str) -> ParameterSet {
    let mut out = params.clone();
    let names: Vec<String> = params
        .names()
        .filter(|n| n.starts_with(prefix))
        .map(String::from)
        .collect();
    for name in names {
        let shape = params.get(&name).unwrap().shape().to_vec();
        out.insert(name, Tensor::zeros(&shape));
    }
    out
}

fn neutral_config() -> ModelConfig {
    ModelConfig::new(5, 6, 4, 8).unwrap()
}

pub fn zero_sag_gate_halves_features() -> Check {
    let cfg = neutral_config();
    let params = with_zeroed(&jittered_params(&cfg, 3), "sag.gate.");
    let mut r = rng(3);
    let x_raw = random_tensor(&mut r, &[2, cfg.n, cfg.m, cfg.t], 1.0);
    let x_spe = random_tensor(&mut r, &[2, cfg.n, cfg.m, cfg.t], 1.0);
    let gated = sag_forward(&x_raw, &x_spe, &params).map_err(|e| e.to_string())?;
    let bias = params.get("sag.feat.bias").unwrap().data();
    let features = conv2d(
        &x_spe,
        params.get("sag.feat.weight").unwrap(),
        bias,
        ConvMode::Depthwise,
    )
    .map_err(|e| e.to_string())?;
    for (g, f) in gated.data().iter().zip(features.data()) {
        if *g != 0.5 * f {
            return Err(format!("F' = {g}, 0.5 F = {}", 0.5 * f));
        }
    }
    Ok(())
}

pub fn zero_tag_gives_half_attention() -> Check {
    let cfg = neutral_config();
    let params = with_zeroed(&jittered_params(&cfg, 4), "tag.");
    let f = random_tensor(&mut rng(4), &[3, cfg.n, cfg.m, cfg.t], 2.0);
    let (out, maps) = tag_forward(&f, &params).map_err(|e| e.to_string())?;
    if maps.len() != 3
        || maps
            .iter()
            .any(|w| w.weights.len() != cfg.t || w.weights.iter().any(|&x| x != 0.5))
    {
        return Err(format!("attention {maps:?}"));
    }
    if out.data().iter().zip(f.data()).any(|(o, x)| *o != 0.5 * x) {
        return Err("F^TAG differs from 0.5 F'".into());
    }
    Ok(())
}

/// A large output bias saturates the sigmoid to exactly 1.
pub fn saturated_tag_is_identity() -> Check {
    let cfg = neutral_config();
    let mut params = with_zeroed(&jittered_params(&cfg, 5), "tag.");
    params.insert("tag.b1", Tensor::full(&[cfg.t], 40.0));
    let f = random_tensor(&mut rng(5), &[2, cfg.n, cfg.m, cfg.t], 2.0);
    let (out, maps) = tag_forward(&f, &params).map_err(|e| e.to_string())?;
    if maps.iter().flat_map(|w| &w.weights).any(|&x| x != 1.0) {
        return Err(format!("attention not saturated: {maps:?}"));
    }
    if out != f {
        return Err("tag_forward is not the identity".into());
    }
    Ok(())
}

pub fn zero_model_predicts_zero() -> Check {
    let cfg = neutral_config();
    let params = ParameterSet::zeros(&cfg);
    let mut r = rng(6);
    let sample = Sample {
        target_index: 0,
        timestamp: NaiveDate::from_ymd_opt(2024, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap(),
        input: random_tensor(&mut r, &[cfg.n, cfg.m, cfg.t], 1.0),
        external: random_tensor(&mut r, &[cfg.dext], 1.0).into_data(),
        target: Grid::filled(cfg.n, cfg.m, 0.0).unwrap(),
        raw_target: Grid::filled(cfg.n, cfg.m, 0.0).unwrap(),
    };
    for flags in [ModuleFlags::FULL, ModuleFlags::NONE] {
        let pred = forward(&sample, &params, &cfg, flags).map_err(|e| e.to_string())?;
        if pred.grid.data().iter().any(|&v| v != 0.0) {
            return Err(format!("{flags:?}: nonzero prediction"));
        }
    }
    Ok(())
}
