//! Raw-scale metrics, LISA-segmented evaluation, naive baselines and the
//! module ablation harness.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Timelike};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::grid_data::{FlowSequence, FragmentSpec, Sample, Scaler, SplitDataset};
use crate::model::{ModelConfig, ModuleFlags, Pasta};
use crate::spatial_stats::{quadrants, Quadrant};
use crate::train::{train, TrainConfig};

/// Cells whose true value is below this are left out of MAPE.
pub const DEFAULT_MAPE_THRESHOLD: f64 = 10.0;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no cells to evaluate".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Mean absolute percentage error (in percent) over cells with
/// `truth >= threshold`.
pub fn mape(pred: &[f64], truth: &[f64], threshold: f64) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (sum, count) = pred
        .iter()
        .zip(truth)
        .filter(|(_, t)| **t >= threshold && **t > 0.0)
        .fold((0.0, 0usize), |(s, c), (p, t)| {
            (s + (p - t).abs() / t, c + 1)
        });
    if count == 0 {
        return Err(Error::Empty(format!(
            "every cell is below the MAPE threshold {threshold}"
        )));
    }
    Ok(100.0 * sum / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    All,
    HL,
    LH,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::All => "ALL",
            Segment::HL => "HL",
            Segment::LH => "LH",
        })
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ALL" => Ok(Segment::All),
            "HL" => Ok(Segment::HL),
            "LH" => Ok(Segment::LH),
            other => Err(Error::InvalidArgument(format!("unknown segment `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub segment: Segment,
    pub rmse: f64,
    /// `None` when every evaluated cell falls under the MAPE threshold.
    pub mape: Option<f64>,
    pub count: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "segment,rmse,mape,count";

    pub fn csv_row(&self) -> String {
        let mape = self.mape.map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{},{}", self.segment, self.rmse, mape, self.count)
    }

    fn from_cells(segment: Segment, pred: &[f64], truth: &[f64], threshold: f64) -> Result<Self> {
        Ok(MetricReport {
            segment,
            rmse: rmse(pred, truth)?,
            mape: mape(pred, truth, threshold).ok(),
            count: pred.len(),
        })
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mape = self
            .mape
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "n/a".into());
        write!(
            f,
            "{:<4} RMSE {:>10.4}  MAPE {:>8}  cells {}",
            self.segment, self.rmse, mape, self.count
        )
    }
}

fn check_grids(preds: &[Grid], truths: &[Grid]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predicted frames vs {} true frames",
            preds.len(),
            truths.len()
        )));
    }
    if let Some((i, _)) = preds
        .iter()
        .zip(truths)
        .enumerate()
        .find(|(_, (p, t))| (p.n(), p.m()) != (t.n(), t.m()))
    {
        return Err(Error::Shape(format!(
            "frame {i}: prediction and truth extents differ"
        )));
    }
    Ok(())
}

/// Metrics over every cell of every frame.
pub fn evaluate(preds: &[Grid], truths: &[Grid], threshold: f64) -> Result<MetricReport> {
    check_grids(preds, truths)?;
    let p: Vec<f64> = preds.iter().flat_map(|g| g.data()).copied().collect();
    let t: Vec<f64> = truths.iter().flat_map(|g| g.data()).copied().collect();
    MetricReport::from_cells(Segment::All, &p, &t, threshold)
}

/// Metrics restricted to cells whose quadrant, computed on the true frame of
/// the same timestamp, matches `segment`.
pub fn segment_metrics(
    preds: &[Grid],
    truths: &[Grid],
    segment: Segment,
    threshold: f64,
) -> Result<MetricReport> {
    let wanted = match segment {
        Segment::All => return evaluate(preds, truths, threshold),
        Segment::HL => Quadrant::HL,
        Segment::LH => Quadrant::LH,
    };
    check_grids(preds, truths)?;
    let mut p = Vec::new();
    let mut t = Vec::new();
    for (pred, truth) in preds.iter().zip(truths) {
        let labels = quadrants(truth)?;
        for (idx, label) in labels.labels.iter().enumerate() {
            if *label == wanted {
                p.push(pred.data()[idx]);
                t.push(truth.data()[idx]);
            }
        }
    }
    if p.is_empty() {
        return Err(Error::Empty(format!(
            "no {segment} cells in the evaluated frames"
        )));
    }
    MetricReport::from_cells(segment, &p, &t, threshold)
}

/// All cells followed by the HL and LH segments.
pub fn segmented_report(
    preds: &[Grid],
    truths: &[Grid],
    threshold: f64,
) -> Result<Vec<MetricReport>> {
    [Segment::All, Segment::HL, Segment::LH]
        .into_iter()
        .map(|seg| segment_metrics(preds, truths, seg, threshold))
        .collect()
}

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{}\n", MetricReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Temporal attention weights of several samples, with channel labels.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionDump {
    pub labels: Vec<String>,
    pub rows: Vec<(NaiveDateTime, Vec<f64>)>,
}

impl AttentionDump {
    /// Per-channel mean over all rows.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.labels.len()];
        for (_, w) in &self.rows {
            for (a, v) in acc.iter_mut().zip(w) {
                *a += v;
            }
        }
        acc.iter()
            .map(|a| a / self.rows.len().max(1) as f64)
            .collect()
    }

    /// One line per sample keyed by target timestamp, then a `mean` line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("timestamp,{}\n", self.labels.join(","));
        let mut line = |key: &str, w: &[f64]| {
            let values: Vec<String> = w.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{key},{}", values.join(",")).expect("string write");
        };
        for (ts, w) in &self.rows {
            line(&ts.format("%Y-%m-%dT%H:%M:%S").to_string(), w);
        }
        line("mean", &self.mean());
        out
    }
}

/// Attention maps of a model with the temporal gate on.
pub fn attention_dump(
    model: &Pasta,
    samples: &[Sample],
    spec: &FragmentSpec,
) -> Result<AttentionDump> {
    if !model.flags.tag {
        return Err(Error::InvalidArgument(
            "the model was trained without the temporal gate".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::Empty("no samples to dump".into()));
    }
    let labels = spec.channel_labels();
    if labels.len() != model.config.t {
        return Err(Error::CheckpointMismatch(format!(
            "fragment spec has {} channels, model has {}",
            labels.len(),
            model.config.t
        )));
    }
    let rows = samples
        .iter()
        .map(|s| {
            let map = model.predict(s)?.attention.expect("temporal gate is on");
            Ok((s.timestamp, map.weights))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttentionDump { labels, rows })
}

/// Undo scaling and clip at zero (flows are counts).
pub fn denormalize(pred: &Grid, scaler: &Scaler) -> Grid {
    pred.map(|v| scaler.invert(v).max(0.0))
}

/// Raw-scale predictions for each sample.
pub fn predict_raw(model: &Pasta, samples: &[Sample], scaler: &Scaler) -> Result<Vec<Grid>> {
    samples
        .iter()
        .map(|s| Ok(denormalize(&model.predict(s)?.grid, scaler)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    /// Next frame equals the latest observed frame.
    Persistence,
    /// Mean of training frames sharing the target's hour-of-week slot.
    HistoricalAverage,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persistence" => Ok(BaselineKind::Persistence),
            "historical-average" | "historical_average" | "ha" => {
                Ok(BaselineKind::HistoricalAverage)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown baseline `{other}`"
            ))),
        }
    }
}

fn week_slot(seq: &FlowSequence, index: usize) -> usize {
    let ts = seq.timestamp(index);
    let minute_of_week = ts.weekday().num_days_from_monday() * 1440 + ts.hour() * 60 + ts.minute();
    (minute_of_week / seq.interval_minutes()) as usize
}

/// Baseline predictions for the given target frames; frames before
/// `train_end` are the training period.
pub fn baseline_predict(
    kind: BaselineKind,
    seq: &FlowSequence,
    targets: &[usize],
    train_end: usize,
) -> Result<Vec<Grid>> {
    if let Some(&t) = targets.iter().find(|&&t| t >= seq.len()) {
        return Err(Error::InvalidArgument(format!(
            "target {t} beyond {} frames",
            seq.len()
        )));
    }
    match kind {
        BaselineKind::Persistence => targets
            .iter()
            .map(|&t| {
                t.checked_sub(1)
                    .map(|prev| seq.frames()[prev].clone())
                    .ok_or_else(|| {
                        Error::InsufficientHistory("persistence needs a previous frame".into())
                    })
            })
            .collect(),
        BaselineKind::HistoricalAverage => {
            let cells = seq.n() * seq.m();
            let mut sums: std::collections::HashMap<usize, (Vec<f64>, usize)> = Default::default();
            for (k, frame) in seq.frames()[..train_end.min(seq.len())].iter().enumerate() {
                let entry = sums
                    .entry(week_slot(seq, k))
                    .or_insert_with(|| (vec![0.0; cells], 0));
                for (acc, v) in entry.0.iter_mut().zip(frame.data()) {
                    *acc += v;
                }
                entry.1 += 1;
            }
            targets
                .iter()
                .map(|&t| {
                    let (sum, count) = sums.get(&week_slot(seq, t)).ok_or_else(|| {
                        Error::InsufficientHistory(format!(
                            "no training frame shares the slot of frame {t}"
                        ))
                    })?;
                    Grid::new(
                        seq.n(),
                        seq.m(),
                        sum.iter().map(|s| s / *count as f64).collect(),
                    )
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub flags: ModuleFlags,
    pub rmse: f64,
    pub mape: Option<f64>,
    pub final_train_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Rows (A)–(F) of the component analysis, full model last.
pub fn table_variants() -> Vec<ModuleFlags> {
    vec![
        ModuleFlags::new(false, true, false),
        ModuleFlags::new(false, false, true),
        ModuleFlags::new(false, true, true),
        ModuleFlags::new(true, true, false),
        ModuleFlags::new(true, false, true),
        ModuleFlags::FULL,
    ]
}

/// Sort key: variants outside the table come first, then (A)–(F).
fn table_rank(f: &ModuleFlags) -> (usize, u8) {
    let bits = u8::from(f.sag) << 2 | u8::from(f.tag) << 1 | u8::from(f.msr);
    match table_variants().iter().position(|v| v == f) {
        Some(p) => (1 + p, bits),
        None => (0, bits),
    }
}

fn mark(on: bool) -> &'static str {
    if on {
        "1"
    } else {
        "0"
    }
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sag,tag,msr,rmse,mape\n");
        for r in &self.rows {
            let mape = r.mape.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                mark(r.flags.sag),
                mark(r.flags.tag),
                mark(r.flags.msr),
                r.rmse,
                mape
            )
            .expect("string write");
        }
        out
    }

    pub fn row(&self, flags: ModuleFlags) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.flags == flags)
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tick = |on: bool| if on { "✓" } else { " " };
        writeln!(
            f,
            "{:<5}{:^5}{:^5}{:^5}| {:>10} {:>8}",
            "row", "SAG", "TAG", "MSR", "RMSE", "MAPE"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            let mape = r
                .mape
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "n/a".into());
            let label = format!("({})", (b'A' + i as u8) as char);
            writeln!(
                f,
                "{label:<5}{:^5}{:^5}{:^5}| {:>10.4} {:>8}",
                tick(r.flags.sag),
                tick(r.flags.tag),
                tick(r.flags.msr),
                r.rmse,
                mape
            )?;
        }
        Ok(())
    }
}

/// Trains and scores one variant on the test split, returning the row.
pub fn evaluate_variant(
    data: &SplitDataset,
    model_cfg: &ModelConfig,
    flags: ModuleFlags,
    cfg: &TrainConfig,
    threshold: f64,
) -> Result<AblationRow> {
    let outcome = train(&data.train, &data.val, model_cfg, flags, cfg)?;
    let model = Pasta::new(*model_cfg, flags, outcome.best_params)?;
    let preds = predict_raw(&model, &data.test, &data.scaler)?;
    let truths: Vec<Grid> = data.test.iter().map(|s| s.raw_target.clone()).collect();
    let report = evaluate(&preds, &truths, threshold)?;
    let final_train_loss = outcome
        .history
        .epochs
        .last()
        .map_or(f64::NAN, |r| r.train_loss);
    Ok(AblationRow {
        flags,
        rmse: report.rmse,
        mape: report.mape,
        final_train_loss,
    })
}

/// Trains every variant with the same configuration and seed and scores it
/// on the raw-scale test split.
pub fn run_ablation(
    data: &SplitDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    variants: &[ModuleFlags],
    threshold: f64,
) -> Result<AblationReport> {
    if data.test.is_empty() {
        return Err(Error::Empty("ablation needs test samples".into()));
    }
    let mut rows = variants
        .iter()
        .map(|&flags| evaluate_variant(data, model_cfg, flags, cfg, threshold))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| table_rank(&r.flags));
    Ok(AblationReport { rows })
}
