use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{forward, EvalReport, ParseSample, ParserModel, ParserSpec};
use crate::autodiff::Tape;
use crate::data_io::{augment, AugmentConfig, SeedStreams};
use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::stgcn::{GraphConstants, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Factor applied to the step size when the training loss plateaus.
    pub decay: f64,
    pub min_lr: f64,
    /// Epochs without a relative improvement of `plateau_tolerance` before decaying.
    pub patience: usize,
    pub plateau_tolerance: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
    /// Validation action accuracy (percent) whose first epoch is reported.
    pub target_accuracy: Option<f64>,
    /// End training once `target_accuracy` is reached.
    pub stop_at_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 8,
            lr: 1e-3,
            decay: 0.1,
            min_lr: 1e-5,
            patience: 4,
            plateau_tolerance: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            augment: None,
            seed: 0,
            target_accuracy: None,
            stop_at_target: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.lr > 0.0
            && self.min_lr > 0.0
            && self.min_lr <= self.lr
            && self.decay > 0.0
            && self.decay < 1.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "invalid training config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Action top-1 (percent) of the training predictions made while training.
    pub train_action_top1: f64,
    pub val: Option<EvalReport>,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub model: ParserModel,
    pub curve: Vec<EpochStats>,
    /// First epoch whose validation action accuracy reached the target.
    pub epochs_to_target: Option<usize>,
}

struct Adam {
    m: ParamSet,
    v: ParamSet,
    t: i32,
}

impl Adam {
    fn new(params: &ParamSet) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (name, p) in params.tensors.iter_mut() {
            let Some(g) = grads.tensors.get(name) else {
                continue;
            };
            let m = self
                .m
                .tensors
                .get_mut(name)
                .expect("same layout")
                .data_mut();
            let v = self
                .v
                .tensors
                .get_mut(name)
                .expect("same layout")
                .data_mut();
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Loss, gradients and predicted action of one sample.
fn sample_gradient(
    model: &ParserModel,
    consts: &GraphConstants,
    sample: &ParseSample,
) -> Result<(f64, ParamSet, usize)> {
    let mut tape = Tape::new();
    let vars = model.params.leaves(&mut tape);
    let bin = if model.spec.config.head.score_head {
        Some(sample.score_bin()?)
    } else {
        None
    };
    let f = forward(
        &mut tape,
        &vars,
        consts,
        &model.spec,
        &sample.input,
        Some((&sample.clip, bin)),
    )?;
    let loss = f.loss.expect("labels given");
    let grads = tape.backward(loss)?;
    Ok((
        tape.value(loss).item(),
        vars.gradients(&grads),
        argmax(&f.prediction.action),
    ))
}

fn augmented(
    sample: &ParseSample,
    spec: &ParserSpec,
    config: &AugmentConfig,
    rng: &mut impl rand::Rng,
) -> Result<ParseSample> {
    let clip = augment(&sample.clip, config, rng);
    let input = spec.input(&clip)?;
    Ok(ParseSample { clip, input })
}

/// Trains streams and head jointly with Adam, dividing the step size by ten
/// whenever the epoch training loss stops improving.
///
/// Per-sample gradients run in parallel and are summed in batch order, so the
/// result depends only on the data, `spec` and `config.seed`.
pub fn train_parser(
    train: &[ParseSample],
    val: Option<&[ParseSample]>,
    spec: &ParserSpec,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if val.is_some_and(<[_]>::is_empty) {
        return Err(Error::InvalidInput("empty validation set".into()));
    }
    let streams = SeedStreams::new(config.seed);
    let mut model = ParserModel::init(spec.clone(), &mut streams.stream("init"))?;
    let consts = GraphConstants::new(&spec.graph)?;
    let mut adam = Adam::new(&model.params);
    let mut lr = config.lr;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut curve = Vec::new();
    let mut epochs_to_target = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut streams.indexed("shuffle", epoch));
        let data: Vec<ParseSample> = match &config.augment {
            Some(aug) => {
                let mut rng = streams.indexed("augment", epoch);
                order
                    .iter()
                    .map(|&i| augmented(&train[i], spec, aug, &mut rng))
                    .collect::<Result<_>>()?
            }
            None => order.iter().map(|&i| train[i].clone()).collect(),
        };

        let mut epoch_loss = 0.0;
        let mut hits = 0usize;
        for (b, batch) in data.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(f64, ParamSet, usize)>> = batch
                .par_iter()
                .map(|s| sample_gradient(&model, &consts, s))
                .collect();
            let mut grad = model.params.zeros_like();
            let mut batch_loss = 0.0;
            for (r, s) in results.into_iter().zip(batch) {
                let (l, g, pred) = r?;
                batch_loss += l;
                grad.axpy(1.0, &g);
                hits += usize::from(pred == s.clip.action);
            }
            let n = batch.len() as f64;
            grad.tensors
                .values_mut()
                .for_each(|t| *t = t.map(|x| x / n));
            if !batch_loss.is_finite() || !grad.all_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {batch_loss} at epoch {epoch}, batch {b}, step size {lr}"
                )));
            }
            epoch_loss += batch_loss;
            adam.step(&mut model.params, &grad, lr, config);
        }
        if !model.params.all_finite() {
            return Err(Error::NonFinite(format!(
                "parameters after epoch {epoch}, step size {lr}"
            )));
        }
        let train_loss = epoch_loss / data.len() as f64;
        let val_report = match val {
            Some(v) => Some(model.evaluate(v)?.1),
            None => None,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.0e} loss {train_loss:.4} val action {:?}",
            val_report.as_ref().map(|r| r.action_top1)
        );
        let reached = match (&val_report, config.target_accuracy) {
            (Some(r), Some(t)) => r.action_top1 >= t,
            _ => false,
        };
        curve.push(EpochStats {
            epoch,
            lr,
            train_loss,
            train_action_top1: 100.0 * hits as f64 / data.len() as f64,
            val: val_report,
        });
        if reached && epochs_to_target.is_none() {
            epochs_to_target = Some(epoch);
            if config.stop_at_target {
                break;
            }
        }

        if train_loss < best * (1.0 - config.plateau_tolerance) {
            best = train_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience && lr > config.min_lr {
                lr = (lr * config.decay).max(config.min_lr);
                stale = 0;
                log::info!("epoch {epoch}: loss plateau, step size now {lr:.0e}");
            }
        }
    }
    Ok(TrainResult {
        model,
        curve,
        epochs_to_target,
    })
}
