//! Generate a small hotspot dataset, train for a few epochs and compare
//! against persistence.
//!
//! `cargo run --release -p pasta-core --example quickstart`

use pasta_core::eval::{
    baseline_predict, evaluate, predict_raw, BaselineKind, DEFAULT_MAPE_THRESHOLD,
};
use pasta_core::grid_data::{
    generate_synthetic, FragmentSpec, HolidayCalendar, SplitDataset, SynthConfig,
};
use pasta_core::model::{ModelConfig, ModuleFlags, Pasta};
use pasta_core::train::{train, TrainConfig};
use pasta_core::Grid;

fn main() -> pasta_core::Result<()> {
    let seq = generate_synthetic(&SynthConfig::default())?;
    let spec = FragmentSpec::with_counts(seq.interval_minutes(), 5, 6, 2)?;
    let data = SplitDataset::prepare(&seq, spec, &HolidayCalendar::default(), 7, 0.1)?;
    println!(
        "train {} / val {} / test {}",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );

    let cfg = ModelConfig::new(seq.n(), seq.m(), spec.total(), data.train[0].external.len())?;
    let tc = TrainConfig {
        epochs: 10,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let outcome = train(&data.train, &data.val, &cfg, ModuleFlags::FULL, &tc)?;
    for e in &outcome.history.epochs {
        println!(
            "epoch {:>2}  loss {:.5}  val {:.5}",
            e.epoch,
            e.train_loss,
            e.val_rmse.unwrap_or(f64::NAN)
        );
    }

    let model = Pasta::new(cfg, ModuleFlags::FULL, outcome.best_params)?;
    let truths: Vec<Grid> = data.test.iter().map(|s| s.raw_target.clone()).collect();
    let preds = predict_raw(&model, &data.test, &data.scaler)?;
    let targets: Vec<usize> = data.test.iter().map(|s| s.target_index).collect();
    let naive = baseline_predict(BaselineKind::Persistence, &seq, &targets, data.boundary)?;
    println!(
        "model       {}",
        evaluate(&preds, &truths, DEFAULT_MAPE_THRESHOLD)?
    );
    println!(
        "persistence {}",
        evaluate(&naive, &truths, DEFAULT_MAPE_THRESHOLD)?
    );
    Ok(())
}
