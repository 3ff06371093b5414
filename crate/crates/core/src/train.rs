//! Mini-batch Adam on the mean Huber loss, with seeded shuffling and
//! best-on-validation tracking.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid_data::Sample;
use crate::model::{ModelConfig, ModuleFlags, ParameterSet, Pasta};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub huber_delta: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            huber_delta: 1.0,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return bad(format!("huber delta must be > 0, got {}", self.huber_delta));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return bad("adam needs beta1, beta2 in [0, 1) and eps > 0".into());
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParameterSet,
    pub v: ParameterSet,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient for parameter `{name}`")))?;
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "gradient of `{name}` has shape {:?}",
                g.shape()
            )));
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    state.step += 1;
    let step = i32::try_from(state.step).unwrap_or(i32::MAX);
    let bc1 = 1.0 - cfg.beta1.powi(step);
    let bc2 = 1.0 - cfg.beta2.powi(step);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("checked above").data();
        let m = state
            .m
            .get_mut(name)
            .expect("moments match parameters")
            .data_mut();
        let v = state
            .v
            .get_mut(name)
            .expect("moments match parameters")
            .data_mut();
        for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g).zip(m).zip(v) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean Huber loss over the epoch's batches.
    pub train_loss: f64,
    /// Scaled-space RMSE on the validation samples, if any.
    pub val_rmse: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_rmse,seconds`. With `timing` off the seconds
    /// column is written as 0 so the file depends only on data and seed.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("epoch,train_loss,val_rmse,seconds\n");
        for r in &self.epochs {
            let val = r.val_rmse.map(|v| v.to_string()).unwrap_or_default();
            let secs = if timing { r.seconds } else { 0.0 };
            writeln!(out, "{},{},{},{:.3}", r.epoch, r.train_loss, val, secs)
                .expect("string write");
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_params: ParameterSet,
    /// Parameters of the epoch with the lowest validation RMSE (the final
    /// parameters when there is no validation data).
    pub best_params: ParameterSet,
    pub best_epoch: usize,
    pub history: TrainHistory,
}

/// Root-mean-square error in scaled space over all cells of all samples.
pub fn scaled_rmse(model: &Pasta, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to score".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in samples {
        let pred = model.predict(s)?;
        for (p, t) in pred.grid.data().iter().zip(s.target.data()) {
            sum += (p - t) * (p - t);
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Divergence {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Trains a freshly initialised model (seeded by `cfg.seed`).
pub fn train(
    train: &[Sample],
    val: &[Sample],
    model_cfg: &ModelConfig,
    flags: ModuleFlags,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set has no samples".into()));
    }
    let mut model = Pasta::init(*model_cfg, flags, cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ParameterSet)> = None;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = model
                .loss_and_gradients(&batch, cfg.huber_delta)
                .map_err(diverged(epoch))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut model.params, &grads, &mut state, cfg)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_rmse = if val.is_empty() {
            None
        } else {
            Some(scaled_rmse(&model, val).map_err(diverged(epoch))?)
        };
        if let Some(v) = val_rmse {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.params.clone()));
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_rmse,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (cfg.epochs, model.params.clone()),
    };
    Ok(TrainOutcome {
        final_params: model.params,
        best_params,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use std::collections::BTreeMap;

    fn scalar_set(v: f64) -> ParameterSet {
        ParameterSet::from_map(BTreeMap::from([(
            "w".to_string(),
            Tensor::new(vec![1], vec![v]).unwrap(),
        )]))
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_fixed_point() {
        let mut p = scalar_set(1.5);
        let mut state = AdamState::new(&p);
        adam_step(
            &mut p,
            &scalar_set(0.0),
            &mut state,
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(p, scalar_set(1.5));

        // with existing moments, zero gradients only shrink them
        state.m = scalar_set(0.3);
        state.v = scalar_set(0.2);
        adam_step(
            &mut p,
            &scalar_set(0.0),
            &mut state,
            &TrainConfig::default(),
        )
        .unwrap();
        assert!(state.m.get("w").unwrap().data()[0] < 0.3);
        assert!(state.v.get("w").unwrap().data()[0] < 0.2);
    }

    #[test]
    fn first_step_is_bounded_by_learning_rate() {
        let cfg = TrainConfig::default();
        for g in [1e-9, 1e-3, 0.7, -3.0, 1e6] {
            let mut p = scalar_set(0.0);
            let mut state = AdamState::new(&p);
            adam_step(&mut p, &scalar_set(g), &mut state, &cfg).unwrap();
            let delta = p.get("w").unwrap().data()[0].abs();
            assert!(
                delta <= cfg.learning_rate * (1.0 + 1e-6),
                "g={g} delta={delta}"
            );
        }
    }

    #[test]
    fn non_finite_gradient_is_named_and_leaves_state_untouched() {
        let mut p = scalar_set(2.0);
        let mut state = AdamState::new(&p);
        let nan = ParameterSet::from_map(BTreeMap::from([(
            "w".to_string(),
            Tensor::from_parts(vec![1], vec![f64::NAN]),
        )]));
        let err = adam_step(&mut p, &nan, &mut state, &TrainConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::NonFiniteGradient(n) if n == "w"));
        assert_eq!(state.step, 0);
        assert_eq!(p, scalar_set(2.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                huber_delta: -1.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.5,
                    val_rmse: Some(0.25),
                    seconds: 1.23456,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 0.25,
                    val_rmse: None,
                    seconds: 2.0,
                },
            ],
        };
        assert_eq!(
            h.to_csv(true),
            "epoch,train_loss,val_rmse,seconds\n1,0.5,0.25,1.235\n2,0.25,,2.000\n"
        );
        assert!(h.to_csv(false).contains("1,0.5,0.25,0.000"));
    }
}
