use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sequence::FlowSequence;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spatial_stats::queen_neighbors;

/// Hours of day at which hotspot cells spike.
pub const DEFAULT_PEAK_HOURS: [u32; 4] = [8, 9, 18, 19];

const QUIET_RING: f64 = 0.75;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub m: usize,
    pub days: usize,
    pub interval_minutes: u32,
    /// `(row, column)` cells that spike during peak hours.
    pub hotspots: Vec<(usize, usize)>,
    /// Standard deviation of additive Gaussian noise, in flow units.
    pub noise: f64,
    pub seed: u64,
    pub start: NaiveDateTime,
    /// Mean flow of an average cell at an average hour.
    pub level: f64,
    /// Multiplier applied to hotspot cells during peak hours.
    pub spike: f64,
    pub peak_hours: Vec<u32>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let (n, m) = (16, 16);
        SynthConfig {
            n,
            m,
            days: 35,
            interval_minutes: 60,
            hotspots: default_hotspots(n, m),
            noise: 2.0,
            seed: 42,
            // a Monday
            start: NaiveDate::from_ymd_opt(2024, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            level: 40.0,
            spike: 5.0,
            peak_hours: DEFAULT_PEAK_HOURS.to_vec(),
        }
    }
}

/// Four hotspots spread over the quarters of the map.
pub fn default_hotspots(n: usize, m: usize) -> Vec<(usize, usize)> {
    let mut spots = vec![
        (n / 4, m / 4),
        (n / 4, 3 * m / 4),
        (3 * n / 4, m / 4),
        (3 * n / 4, 3 * m / 4),
    ];
    spots.sort_unstable();
    spots.dedup();
    spots
}

fn daily_profile(hour: f64) -> f64 {
    // trough before dawn, crest mid-afternoon
    1.0 + 0.6 * (2.0 * PI * (hour - 9.0) / 24.0).sin()
}

fn weekly_profile(weekday: u32) -> f64 {
    match weekday {
        5 => 0.8,
        6 => 0.7,
        _ => 1.0,
    }
}

/// Generates a deterministic flow sequence: a smooth spatial base field
/// modulated by daily and weekly cycles, hotspot cells spiking at peak hours
/// over a damped neighbourhood, and additive Gaussian noise clipped at zero.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<FlowSequence> {
    if cfg.n == 0 || cfg.m == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid extents {}x{}",
            cfg.n, cfg.m
        )));
    }
    if cfg.days == 0 {
        return Err(Error::InvalidArgument("days must be >= 1".into()));
    }
    if cfg.interval_minutes == 0 || 1440 % cfg.interval_minutes != 0 {
        return Err(Error::InvalidArgument(format!(
            "interval {} must divide a day",
            cfg.interval_minutes
        )));
    }
    let valid = cfg.noise.is_finite() && cfg.noise >= 0.0 && cfg.level > 0.0 && cfg.spike >= 1.0;
    if !valid {
        return Err(Error::InvalidArgument(
            "noise >= 0, level > 0 and spike >= 1 required".into(),
        ));
    }
    if let Some(&(i, j)) = cfg
        .hotspots
        .iter()
        .find(|&&(i, j)| i >= cfg.n || j >= cfg.m)
    {
        return Err(Error::InvalidArgument(format!(
            "hotspot ({i},{j}) outside {}x{} grid",
            cfg.n, cfg.m
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, m) = (cfg.n, cfg.m);

    // Low-frequency field in [-1, 1] from three random plane waves.
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..1.5),
                rng.random_range(0.5..1.5),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let base: Vec<f64> = (0..n * m)
        .map(|idx| {
            let (i, j) = ((idx / m) as f64, (idx % m) as f64);
            let smooth = waves
                .iter()
                .map(|&(u, v, phase)| {
                    (2.0 * PI * (u * i / n as f64 + v * j / m as f64) + phase).cos()
                })
                .sum::<f64>()
                / 3.0;
            let jitter: f64 = rng.random_range(-1.0..1.0);
            cfg.level * (1.0 + 0.08 * smooth) * (1.0 + 0.1 * jitter)
        })
        .collect();
    let mut hotspot = vec![false; n * m];
    for &(i, j) in &cfg.hotspots {
        hotspot[i * m + j] = true;
    }
    // Hotspots sit in quiet surroundings so that their peaks read as high-low.
    let mut base = base;
    for idx in 0..n * m {
        let (i, j) = (idx / m, idx % m);
        let near_hotspot =
            !hotspot[idx] && queen_neighbors(n, m, i, j).any(|(r, c)| hotspot[r * m + c]);
        if near_hotspot {
            base[idx] *= QUIET_RING;
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let frames_per_day = (1440 / cfg.interval_minutes) as usize;
    let mut frames = Vec::with_capacity(cfg.days * frames_per_day);
    let mut ts = cfg.start;
    let step = chrono::Duration::minutes(i64::from(cfg.interval_minutes));
    for _ in 0..cfg.days * frames_per_day {
        let hour = f64::from(ts.hour()) + f64::from(ts.minute()) / 60.0;
        let scale = daily_profile(hour) * weekly_profile(ts.weekday().num_days_from_monday());
        let peak = cfg.peak_hours.contains(&ts.hour());
        let data = (0..n * m)
            .map(|idx| {
                let spike = if peak && hotspot[idx] { cfg.spike } else { 1.0 };
                let eps: f64 = normal.sample(&mut rng);
                (base[idx] * scale * spike + cfg.noise * eps).max(0.0)
            })
            .collect();
        frames.push(Grid::new(n, m, data)?);
        ts += step;
    }
    FlowSequence::new(cfg.interval_minutes, cfg.start, frames)
}
