use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;
use pasta_core::eval::{
    attention_dump, baseline_predict, predict_raw, reports_to_csv, run_ablation, segment_metrics,
    table_variants, BaselineKind, Segment,
};
use pasta_core::grid_data::{
    default_hotspots, generate_synthetic, model_input, sample_at, FlowSequence, FragmentSpec,
    HolidayCalendar, Sample, SplitDataset, SynthConfig,
};
use pasta_core::io::write_atomic;
use pasta_core::model::{
    forward_input, Checkpoint, CheckpointMeta, ModelConfig, ModuleFlags, Pasta,
};
use pasta_core::spatial_stats::{local_morans_i, quadrants};
use pasta_core::train::TrainConfig;
use pasta_core::Grid;

use crate::error::{CliError, DATA};
use crate::{
    AttentionArgs, DataArgs, EvalArgs, FragmentArgs, MoranArgs, OptimArgs, PredictArgs, SynthArgs,
    TrainArgs,
};

const TIMESTAMP: &str = "%Y-%m-%dT%H:%M:%S";

fn parse_timestamp(s: &str) -> Result<NaiveDateTime, CliError> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP)
        .map_err(|e| CliError::usage(format!("timestamp `{s}` is not YYYY-MM-DDTHH:MM:SS: {e}")))
}

fn parse_hotspots(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (r, c) = pair
                .split_once(',')
                .ok_or_else(|| CliError::usage(format!("hotspot `{pair}` is not `row,col`")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::usage(format!("hotspot `{pair}` is not `row,col`")))
            };
            Ok((num(r)?, num(c)?))
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn grid_csv(rows: impl Iterator<Item = Vec<String>>) -> String {
    rows.map(|r| r.join(",") + "\n").collect()
}

fn holidays(path: Option<&Path>) -> Result<HolidayCalendar, CliError> {
    Ok(match path {
        Some(p) => HolidayCalendar::load(p)?,
        None => HolidayCalendar::default(),
    })
}

fn fragment_spec(seq: &FlowSequence, f: &FragmentArgs) -> Result<FragmentSpec, CliError> {
    FragmentSpec::with_counts(seq.interval_minutes(), f.closeness, f.periodic, f.trend)
        .map_err(CliError::from_flags)
}

fn train_config(o: &OptimArgs) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        epochs: o.epochs,
        batch_size: o.batch_size,
        learning_rate: o.lr,
        huber_delta: o.huber_delta,
        seed: o.seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(CliError::from_flags)?;
    Ok(cfg)
}

fn model_config(
    seq: &FlowSequence,
    spec: &FragmentSpec,
    data: &SplitDataset,
) -> Result<ModelConfig, CliError> {
    let dext = data
        .train
        .first()
        .map(|s| s.external.len())
        .ok_or_else(|| CliError::new(DATA, "empty", "no training samples"))?;
    Ok(ModelConfig::new(seq.n(), seq.m(), spec.total(), dext)?)
}

fn prepare(d: &DataArgs, f: &FragmentArgs) -> Result<(FlowSequence, SplitDataset), CliError> {
    if !(0.0..1.0).contains(&d.val_fraction) {
        return Err(CliError::usage(format!(
            "--val-fraction {} not in [0, 1)",
            d.val_fraction
        )));
    }
    let seq = FlowSequence::load(&d.data)?;
    let spec = fragment_spec(&seq, f)?;
    let cal = holidays(d.holidays.as_deref())?;
    let data = SplitDataset::prepare(&seq, spec, &cal, d.test_days, d.val_fraction)?;
    Ok((seq, data))
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = SynthConfig {
        n: a.n,
        m: a.m,
        days: a.days,
        interval_minutes: a.interval,
        hotspots: match &a.hotspots {
            Some(s) => parse_hotspots(s)?,
            None => default_hotspots(a.n, a.m),
        },
        noise: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    if let Some(s) = &a.start {
        cfg.start = parse_timestamp(s)?;
    }
    let seq = generate_synthetic(&cfg).map_err(CliError::from_flags)?;
    seq.save(&a.out)?;
    println!(
        "wrote {} frames of {}x{} to {}",
        seq.len(),
        seq.n(),
        seq.m(),
        a.out.display()
    );
    Ok(())
}

pub fn moran(a: MoranArgs) -> Result<(), CliError> {
    let seq = FlowSequence::load(&a.data)?;
    let frame = seq.frame(a.t).ok_or_else(|| {
        CliError::new(
            DATA,
            "out-of-range",
            format!("frame {} requested, sequence has {}", a.t, seq.len()),
        )
    })?;
    let field = local_morans_i(frame)?;
    let labels = quadrants(frame)?;
    let mut out =
        grid_csv((0..seq.n()).map(|i| (0..seq.m()).map(|j| field.get(i, j).to_string()).collect()));
    out.push('\n');
    out += &grid_csv(
        (0..seq.n()).map(|i| (0..seq.m()).map(|j| labels.get(i, j).to_string()).collect()),
    );
    write(&a.out, &out)
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let tc = train_config(&a.optim)?;
    let (seq, data) = prepare(&a.data, &a.fragments)?;
    let cfg = model_config(&seq, &data.spec, &data)?;
    let flags = ModuleFlags::new(!a.modules.no_sag, !a.modules.no_tag, !a.modules.no_msr);
    let outcome = pasta_core::train::train(&data.train, &data.val, &cfg, flags, &tc)?;

    let meta = CheckpointMeta {
        n: cfg.n,
        m: cfg.m,
        t_closeness: data.spec.t_closeness,
        t_periodic: data.spec.t_periodic,
        t_trend: data.spec.t_trend,
        interval_minutes: seq.interval_minutes(),
        dext: cfg.dext,
        demb: cfg.demb,
        scaler_min: data.scaler.data_min,
        scaler_max: data.scaler.data_max,
        seed: tc.seed,
        modules: flags,
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| pasta_core::Error::io(&a.out_dir, e))?;
    let best = Checkpoint {
        meta: meta.clone(),
        params: outcome.best_params,
    };
    best.save(a.out_dir.join("best.json"))?;
    Checkpoint {
        meta,
        params: outcome.final_params,
    }
    .save(a.out_dir.join("final.json"))?;
    write(
        &a.out_dir.join("history.csv"),
        &outcome.history.to_csv(!a.no_timing),
    )?;

    let last = outcome.history.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs on {} samples; final loss {:.6}; best epoch {}",
        tc.epochs,
        data.train.len(),
        last.train_loss,
        outcome.best_epoch
    );
    Ok(())
}

/// A checkpoint together with everything needed to feed it.
struct Loaded {
    model: Pasta,
    meta: CheckpointMeta,
    spec: FragmentSpec,
}

fn load_checkpoint(path: &Path, seq: &FlowSequence) -> Result<Loaded, CliError> {
    let ckpt = Checkpoint::load(path)?;
    let meta = ckpt.meta;
    if (meta.n, meta.m) != (seq.n(), seq.m()) || meta.interval_minutes != seq.interval_minutes() {
        return Err(pasta_core::Error::CheckpointMismatch(format!(
            "checkpoint expects {}x{} frames every {} minutes, data has {}x{} every {}",
            meta.n,
            meta.m,
            meta.interval_minutes,
            seq.n(),
            seq.m(),
            seq.interval_minutes()
        ))
        .into());
    }
    let spec = meta.fragment_spec()?;
    let model = Pasta::new(meta.model_config()?, meta.modules, ckpt.params)?;
    Ok(Loaded { model, meta, spec })
}

/// Samples for every target in the final `test_days`, built with the
/// checkpoint's own scaler.
fn tail_samples(
    seq: &FlowSequence,
    loaded: &Loaded,
    cal: &HolidayCalendar,
    test_days: usize,
) -> Result<Vec<Sample>, CliError> {
    let frames = test_days * seq.frames_per_day()?;
    let start = seq
        .len()
        .saturating_sub(frames)
        .max(loaded.spec.first_target());
    if start >= seq.len() {
        return Err(pasta_core::Error::InsufficientHistory(format!(
            "no target in the last {test_days} days has {} frames of history",
            loaded.spec.first_target()
        ))
        .into());
    }
    let scaler = loaded.meta.scaler()?;
    Ok((start..seq.len())
        .map(|t| sample_at(seq, &loaded.spec, &scaler, cal, t))
        .collect::<pasta_core::Result<_>>()?)
}

fn parse_segments(raw: &[String]) -> Result<Vec<Segment>, CliError> {
    raw.iter()
        .map(|s| s.parse::<Segment>().map_err(CliError::from_flags))
        .collect()
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let segments = parse_segments(&a.segment)?;
    if a.ablation {
        let tc = train_config(&a.optim)?;
        let (seq, data) = prepare(&a.data, &a.fragments)?;
        let cfg = model_config(&seq, &data.spec, &data)?;
        let report = run_ablation(&data, &cfg, &tc, &table_variants(), a.threshold)?;
        print!("{report}");
        return write(&a.out, &report.to_csv());
    }

    let (preds, truths) = if let Some(kind) = &a.baseline {
        let kind: BaselineKind = kind.parse().map_err(CliError::from_flags)?;
        let (seq, data) = prepare(&a.data, &a.fragments)?;
        let targets: Vec<usize> = data.test.iter().map(|s| s.target_index).collect();
        let preds = baseline_predict(kind, &seq, &targets, data.boundary)?;
        (
            preds,
            data.test
                .iter()
                .map(|s| s.raw_target.clone())
                .collect::<Vec<_>>(),
        )
    } else {
        let path = a.checkpoint.as_ref().ok_or_else(|| {
            CliError::usage("one of --checkpoint, --baseline or --ablation is required")
        })?;
        let seq = FlowSequence::load(&a.data.data)?;
        let loaded = load_checkpoint(path, &seq)?;
        let cal = holidays(a.data.holidays.as_deref())?;
        let samples = tail_samples(&seq, &loaded, &cal, a.data.test_days)?;
        let preds = predict_raw(&loaded.model, &samples, &loaded.meta.scaler()?)?;
        (preds, samples.into_iter().map(|s| s.raw_target).collect())
    };
    let reports = segments
        .iter()
        .map(|&seg| segment_metrics(&preds, &truths, seg, a.threshold))
        .collect::<pasta_core::Result<Vec<_>>>()?;
    for r in &reports {
        println!("{r}");
    }
    write(&a.out, &reports_to_csv(&reports))
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    let seq = FlowSequence::load(&a.data)?;
    let loaded = load_checkpoint(&a.checkpoint, &seq)?;
    let cal = holidays(a.holidays.as_deref())?;
    let target = match &a.at {
        None => seq.len(),
        Some(s) => {
            let at = parse_timestamp(s)?;
            let minutes = (at - seq.start()).num_minutes();
            let step = i64::from(seq.interval_minutes());
            if minutes < 0 || minutes % step != 0 {
                return Err(CliError::new(
                    DATA,
                    "out-of-range",
                    format!("{s} is not on the sequence's {step}-minute grid"),
                ));
            }
            usize::try_from(minutes / step).expect("non-negative")
        }
    };
    let (input, external) = model_input(&seq, &loaded.spec, &loaded.meta.scaler()?, &cal, target)?;
    let pred = forward_input(
        &input,
        &external,
        &loaded.model.params,
        &loaded.model.config,
        loaded.model.flags,
    )?;
    let raw: Grid = pasta_core::eval::denormalize(&pred.grid, &loaded.meta.scaler()?);
    let text =
        grid_csv((0..raw.n()).map(|i| (0..raw.m()).map(|j| raw.get(i, j).to_string()).collect()));
    write(&a.out, &text)?;
    println!("forecast for {}", seq.timestamp(target).format(TIMESTAMP));
    Ok(())
}

pub fn attention(a: AttentionArgs) -> Result<(), CliError> {
    let seq = FlowSequence::load(&a.data)?;
    let loaded = load_checkpoint(&a.checkpoint, &seq)?;
    let cal = holidays(a.holidays.as_deref())?;
    let samples = tail_samples(&seq, &loaded, &cal, a.test_days)?;
    let dump = attention_dump(&loaded.model, &samples, &loaded.spec)?;
    let mut summary = String::new();
    for (label, w) in dump.labels.iter().zip(dump.mean()) {
        write!(summary, "{label}={w:.3} ").expect("string write");
    }
    println!("mean attention: {}", summary.trim_end());
    write(&a.out, &dump.to_csv())
}
