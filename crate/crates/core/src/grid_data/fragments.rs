use chrono::NaiveDateTime;

use super::external::{external_features, HolidayCalendar};
use super::scaler::Scaler;
use super::sequence::FlowSequence;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tensor::Tensor;

const HOUR: u32 = 60;
const DAY: u32 = 24 * HOUR;
const WEEK: u32 = 7 * DAY;

/// How many lagged frames each temporal fragment contributes, and the lag
/// unit of each fragment in frames.
///
/// Channels are ordered closeness, periodic, trend. With `a = target - 1`
/// (the latest observed frame) the source frames are
/// `a, a - cs, …, a - (Tc-1)·cs`, then `a - ps, …, a - Tp·ps`, then
/// `a - ts, …, a - Tt·ts`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FragmentSpec {
    pub t_closeness: usize,
    pub t_periodic: usize,
    pub t_trend: usize,
    pub closeness_step: usize,
    pub periodic_step: usize,
    pub trend_step: usize,
}

fn step_in_frames(minutes: u32, interval_minutes: u32, what: &str) -> Result<usize> {
    if interval_minutes == 0 || !minutes.is_multiple_of(interval_minutes) {
        return Err(Error::InvalidArgument(format!(
            "{what} lag of {minutes} minutes is not a whole number of {interval_minutes}-minute frames"
        )));
    }
    Ok((minutes / interval_minutes) as usize)
}

impl FragmentSpec {
    pub const DEFAULT_COUNTS: (usize, usize, usize) = (5, 6, 4);

    /// Default fragment depths with hour/day/week lags converted to frames.
    pub fn for_interval(interval_minutes: u32) -> Result<Self> {
        let (c, p, t) = Self::DEFAULT_COUNTS;
        Self::with_counts(interval_minutes, c, p, t)
    }

    pub fn with_counts(
        interval_minutes: u32,
        t_closeness: usize,
        t_periodic: usize,
        t_trend: usize,
    ) -> Result<Self> {
        let spec = FragmentSpec {
            t_closeness,
            t_periodic,
            t_trend,
            closeness_step: step_in_frames(HOUR, interval_minutes, "closeness")?,
            periodic_step: step_in_frames(DAY, interval_minutes, "periodic")?,
            trend_step: step_in_frames(WEEK, interval_minutes, "trend")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::InvalidArgument(
                "fragment spec selects no channels".into(),
            ));
        }
        if self.closeness_step == 0 || self.periodic_step == 0 || self.trend_step == 0 {
            return Err(Error::InvalidArgument("fragment steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of input channels `T`.
    pub fn total(&self) -> usize {
        self.t_closeness + self.t_periodic + self.t_trend
    }

    /// Offset of each channel's source frame before the target index.
    pub fn lags(&self) -> Vec<usize> {
        let closeness = (0..self.t_closeness).map(|k| 1 + k * self.closeness_step);
        let periodic = (1..=self.t_periodic).map(|k| 1 + k * self.periodic_step);
        let trend = (1..=self.t_trend).map(|k| 1 + k * self.trend_step);
        closeness.chain(periodic).chain(trend).collect()
    }

    /// Smallest target index with complete history.
    pub fn first_target(&self) -> usize {
        self.lags().into_iter().max().unwrap_or(1)
    }

    pub fn source_indices(&self, target: usize) -> Option<Vec<usize>> {
        self.lags()
            .into_iter()
            .map(|lag| target.checked_sub(lag))
            .collect()
    }

    /// Human-readable channel names, e.g. `closeness-1h`, `periodic-3d`, `trend-2w`.
    pub fn channel_labels(&self) -> Vec<String> {
        let closeness = (1..=self.t_closeness).map(|k| format!("closeness-{k}h"));
        let periodic = (1..=self.t_periodic).map(|k| format!("periodic-{k}d"));
        let trend = (1..=self.t_trend).map(|k| format!("trend-{k}w"));
        closeness.chain(periodic).chain(trend).collect()
    }
}

/// One supervised example: lagged input channels, calendar features and the
/// frame to predict.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub target_index: usize,
    pub timestamp: NaiveDateTime,
    /// `[N, M, T]`, scaled.
    pub input: Tensor,
    pub external: Vec<f64>,
    /// Scaled target.
    pub target: Grid,
    pub raw_target: Grid,
}

/// Scaled `[N, M, T]` input and calendar features for predicting frame
/// `target`. The target may be one step past the last frame.
pub fn model_input(
    seq: &FlowSequence,
    spec: &FragmentSpec,
    scaler: &Scaler,
    holidays: &HolidayCalendar,
    target: usize,
) -> Result<(Tensor, Vec<f64>)> {
    spec.validate()?;
    if target > seq.len() {
        return Err(Error::InvalidArgument(format!(
            "target index {target} is more than one step past the {} frames",
            seq.len()
        )));
    }
    let sources = spec.source_indices(target).ok_or_else(|| {
        Error::InsufficientHistory(format!(
            "target {target} needs {} earlier frames",
            spec.first_target()
        ))
    })?;
    let (n, m, t) = (seq.n(), seq.m(), sources.len());
    let frames = seq.frames();
    let mut data = vec![0.0; n * m * t];
    for (c, &src) in sources.iter().enumerate() {
        for (cell, v) in frames[src].data().iter().enumerate() {
            data[cell * t + c] = scaler.apply(*v);
        }
    }
    let external = external_features(seq.timestamp(target), seq.interval_minutes(), holidays)?;
    Ok((Tensor::new(vec![n, m, t], data)?, external))
}

/// Builds the sample whose target frame is `target`.
pub fn sample_at(
    seq: &FlowSequence,
    spec: &FragmentSpec,
    scaler: &Scaler,
    holidays: &HolidayCalendar,
    target: usize,
) -> Result<Sample> {
    let raw_target = seq
        .frame(target)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("target index {target} beyond {} frames", seq.len()))
        })?
        .clone();
    let (input, external) = model_input(seq, spec, scaler, holidays, target)?;
    Ok(Sample {
        target_index: target,
        timestamp: seq.timestamp(target),
        input,
        external,
        target: scaler.apply_grid(&raw_target),
        raw_target,
    })
}

/// Every sample with full history, in chronological order. Targets without
/// enough history are skipped rather than padded.
pub fn build_samples(
    seq: &FlowSequence,
    spec: &FragmentSpec,
    scaler: &Scaler,
    holidays: &HolidayCalendar,
) -> Result<Vec<Sample>> {
    spec.validate()?;
    let first = spec.first_target();
    if first >= seq.len() {
        return Err(Error::InsufficientHistory(format!(
            "first usable target is frame {first}, sequence has {} frames",
            seq.len()
        )));
    }
    (first..seq.len())
        .map(|target| sample_at(seq, spec, scaler, holidays, target))
        .collect()
}

/// Chronological train / validation / test split of one sequence.
///
/// Frames before `boundary` form the training period; the scaler is fit on
/// those alone. Validation is the last `val_fraction` of training samples.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub spec: FragmentSpec,
    pub scaler: Scaler,
    pub boundary: usize,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SplitDataset {
    pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

    pub fn prepare(
        seq: &FlowSequence,
        spec: FragmentSpec,
        holidays: &HolidayCalendar,
        test_days: usize,
        val_fraction: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::InvalidArgument(format!(
                "val fraction {val_fraction} not in [0, 1)"
            )));
        }
        let test_frames = test_days * seq.frames_per_day()?;
        let boundary = seq.len().checked_sub(test_frames).ok_or_else(|| {
            Error::InsufficientHistory(format!(
                "{test_days} test days exceed the {}-frame sequence",
                seq.len()
            ))
        })?;
        if boundary <= spec.first_target() {
            return Err(Error::InsufficientHistory(format!(
                "training period ends at frame {boundary}, first usable target is {}",
                spec.first_target()
            )));
        }
        let scaler = Scaler::fit(&seq.frames()[..boundary])?;
        let mut train = build_samples(seq, &spec, &scaler, holidays)?;
        let test = train.split_off(boundary - spec.first_target());
        let val_count = (train.len() as f64 * val_fraction).floor() as usize;
        let val = train.split_off(train.len() - val_count);
        Ok(SplitDataset {
            spec,
            scaler,
            boundary,
            train,
            val,
            test,
        })
    }

    /// Training and validation samples together, chronologically.
    pub fn train_period(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(&self.val)
    }
}
