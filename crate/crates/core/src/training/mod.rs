//! Training of a single ensemble member.
//!
//! The objective interpolates from MSE to Gaussian NLL: `lambda = 1` for the warmup
//! steps, then linearly down to 0 over the interpolation steps. Batches come from a
//! seeded reshuffle of the training set each epoch. AdamW with exponential learning
//! rate decay updates the parameters, and the parameters with the lowest validation
//! NLL seen at any evaluation are returned.

mod loss;
mod optim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffnet::{
    loss_and_gradient, predict, DiffError, LossWeights, Member, ParamVector, ProbModel,
    TargetScaler, TrainingCounters,
};
use crate::error::ErrorClass;
use crate::seed;

pub use loss::{batch_loss, lambda_schedule, nll_point, LN_2PI};
pub use optim::{clip_grad_norm, AdamW};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite loss at instance {instance}")]
    NonFiniteLoss { instance: String },
    #[error("training diverged at step {step}: non-finite loss for a full evaluation window")]
    Diverged {
        step: usize,
        /// Best parameters seen before divergence.
        last_good: Box<(ParamVector, TargetScaler)>,
    },
    #[error(transparent)]
    Model(#[from] DiffError),
}

impl TrainError {
    pub fn class(&self) -> ErrorClass {
        match self {
            TrainError::InvalidConfig(_) => ErrorClass::Config,
            TrainError::Model(e) => e.class(),
            _ => ErrorClass::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub warmup_steps: usize,
    pub interp_steps: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Learning rate is multiplied by `lr_decay` every `lr_decay_steps` steps
    /// (applied continuously, so the per-step factor is `lr_decay^(1/lr_decay_steps)`).
    pub lr_decay: f64,
    /// 0 selects `max_steps / 100`.
    pub lr_decay_steps: usize,
    pub weight_decay: f64,
    pub eval_every: usize,
    /// Evaluations without validation NLL improvement before stopping. Counted only
    /// once the MSE to NLL ramp has finished.
    pub patience: usize,
    pub clip_grad_norm: Option<f64>,
    /// Standardise targets per atom instead of per molecule.
    pub per_atom: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 30_000,
            warmup_steps: 10_000,
            interp_steps: 10_000,
            batch_size: 32,
            lr0: 1e-4,
            lr_decay: 0.96,
            lr_decay_steps: 0,
            weight_decay: 0.01,
            eval_every: 500,
            patience: 20,
            clip_grad_norm: Some(10.0),
            per_atom: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.warmup_steps + self.interp_steps > self.max_steps {
            return bad(format!(
                "warmup_steps + interp_steps = {} exceeds max_steps = {}",
                self.warmup_steps + self.interp_steps,
                self.max_steps
            ));
        }
        if !(self.lr0 > 0.0) {
            return bad("lr0 must be positive".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must be in (0, 1]".into());
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch_size and eval_every must be at least 1".into());
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative".into());
        }
        if matches!(self.clip_grad_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_grad_norm must be positive".into());
        }
        Ok(())
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        let every = if self.lr_decay_steps == 0 {
            (self.max_steps / 100).max(1)
        } else {
            self.lr_decay_steps
        };
        self.lr0 * self.lr_decay.powf(step as f64 / every as f64)
    }
}

/// Borrowed inputs with ids and targets, aligned by position.
#[derive(Debug, Clone)]
pub struct Samples<'a, I> {
    pub ids: Vec<&'a str>,
    pub inputs: Vec<&'a I>,
    pub targets: Vec<f64>,
}

impl<'a, I> Samples<'a, I> {
    pub fn new(ids: Vec<&'a str>, inputs: Vec<&'a I>, targets: Vec<f64>) -> Self {
        assert!(ids.len() == inputs.len() && inputs.len() == targets.len());
        Self {
            ids,
            inputs,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            inputs: indices.iter().map(|&i| self.inputs[i]).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub lambda: f64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_nll: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "step,lambda,lr,train_loss,val_nll,val_mae";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.lambda, r.lr, r.train_loss, r.val_nll, r.val_mae
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub member: Member<M>,
    pub log: TrainLog,
    pub counters: TrainingCounters,
    /// Parameters after the last executed step, before best-checkpoint selection.
    pub final_params: ParamVector,
}

/// Mean validation NLL (with the `ln 2 pi` constant) and MAE in target units.
pub fn evaluate<M: ProbModel>(
    model: &M,
    params: &ParamVector,
    scaler: &TargetScaler,
    data: &Samples<'_, M::Input>,
) -> Result<(f64, f64), TrainError> {
    let preds = predict(model, params, scaler, &data.inputs)?;
    let n = preds.len() as f64;
    let mut nll = 0.0;
    let mut mae = 0.0;
    for (p, &y) in preds.iter().zip(&data.targets) {
        nll += nll_point(y, p.mean, p.variance)?;
        mae += (y - p.mean).abs();
    }
    Ok((nll / n, mae / n))
}

/// Trains one member from `seed`. Initialisation and shuffling use independent
/// sub-streams of the seed, so results are bit-reproducible.
pub fn train_member<M: ProbModel + Clone>(
    model: &M,
    train: &Samples<'_, M::Input>,
    val: &Samples<'_, M::Input>,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<M>, TrainError> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::InvalidConfig(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let extents: Vec<f64> = train.inputs.iter().map(|x| model.extent(x)).collect();
    let scaler = TargetScaler::fit(&train.targets, &extents, config.per_atom);
    let mut params = model.init_params(seed);
    let mut opt = AdamW::new(params.len());
    let mut rng = seed::rng(seed::substream(seed, "shuffle"));

    let score = |p: &ParamVector| -> Result<(f64, f64), TrainError> {
        match evaluate(model, p, &scaler, val) {
            Ok((nll, mae)) if nll.is_finite() => Ok((nll, mae)),
            Ok((_, mae)) => Ok((f64::INFINITY, mae)),
            Err(TrainError::Model(DiffError::NonFinite { .. })) => Ok((f64::INFINITY, f64::NAN)),
            Err(e) => Err(e),
        }
    };

    let (init_nll, _) = score(&params)?;
    let mut best_params = params.clone();
    let mut best_nll = init_nll;
    let mut best_step = 0;
    let mut log = TrainLog::default();

    let n = train.len();
    let batch_size = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    seed::shuffle(&mut order, &mut rng);
    let mut cursor = 0;

    let ramp_end = config.warmup_steps + config.interp_steps;
    let mut window_loss = 0.0;
    let mut window_count = 0usize;
    let mut bad_streak = 0usize;
    let mut stale_evals = 0usize;
    let mut stopped_early = false;
    let mut steps_run = 0;

    let mut batch_idx = Vec::with_capacity(batch_size);
    for step in 0..config.max_steps {
        let lambda = lambda_schedule(step, config);
        batch_idx.clear();
        while batch_idx.len() < batch_size {
            if cursor == n {
                seed::shuffle(&mut order, &mut rng);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let inputs: Vec<&M::Input> = batch_idx.iter().map(|&i| train.inputs[i]).collect();
        let targets: Vec<f64> = batch_idx.iter().map(|&i| train.targets[i]).collect();
        let weights = LossWeights {
            lambda,
            include_constant: false,
        };
        let result = loss_and_gradient(model, &params, &scaler, &inputs, &targets, weights);
        steps_run = step + 1;
        match result {
            Ok((loss, mut grad)) if loss.is_finite() && grad.is_finite() => {
                bad_streak = 0;
                if let Some(max_norm) = config.clip_grad_norm {
                    clip_grad_norm(&mut grad, max_norm);
                }
                let lr = config.learning_rate(step);
                opt.step(&mut params, &grad, lr, config.weight_decay);
                window_loss += loss;
                window_count += 1;
            }
            Ok(_) | Err(DiffError::NonFinite { .. }) => {
                bad_streak += 1;
                if bad_streak >= config.eval_every {
                    return Err(TrainError::Diverged {
                        step: step + 1,
                        last_good: Box::new((best_params, scaler)),
                    });
                }
            }
            Err(e) => return Err(e.into()),
        }

        if (step + 1) % config.eval_every == 0 || step + 1 == config.max_steps {
            let (val_nll, val_mae) = score(&params)?;
            log.rows.push(LogRow {
                step: step + 1,
                lambda,
                lr: config.learning_rate(step),
                train_loss: if window_count > 0 {
                    window_loss / window_count as f64
                } else {
                    f64::NAN
                },
                val_nll,
                val_mae,
            });
            window_loss = 0.0;
            window_count = 0;
            if val_nll < best_nll {
                best_nll = val_nll;
                best_params = params.clone();
                best_step = step + 1;
                stale_evals = 0;
            } else if step + 1 >= ramp_end {
                stale_evals += 1;
                if stale_evals >= config.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(TrainOutcome {
        member: Member {
            model: model.clone(),
            params: best_params,
            scaler,
        },
        log,
        counters: TrainingCounters {
            steps_run,
            best_step,
            best_val_nll: best_nll,
            stopped_early,
        },
        final_params: params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{DenseConfig, DenseNet, Features};

    fn toy(n: usize, offset: usize) -> (Vec<String>, Vec<Features>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * ((i * 7 + offset) % n) as f64 / n as f64).collect();
        let ids = (0..n).map(|i| format!("p{i}")).collect();
        let ys = xs.iter().map(|x| 2.0 * x + 0.5).collect();
        (ids, xs.into_iter().map(|x| Features(vec![x])).collect(), ys)
    }

    fn view<'a>(d: &'a (Vec<String>, Vec<Features>, Vec<f64>)) -> Samples<'a, Features> {
        Samples::new(
            d.0.iter().map(String::as_str).collect(),
            d.1.iter().collect(),
            d.2.clone(),
        )
    }

    fn small_net() -> DenseNet {
        DenseNet::new(DenseConfig {
            input_dim: 1,
            hidden_dims: vec![8],
            min_variance: 1e-6,
        })
        .unwrap()
    }

    fn quick(max_steps: usize) -> TrainConfig {
        TrainConfig {
            max_steps,
            warmup_steps: max_steps / 3,
            interp_steps: max_steps / 3,
            batch_size: 16,
            lr0: 1e-2,
            eval_every: 20,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let c = TrainConfig {
            max_steps: 10,
            warmup_steps: 6,
            interp_steps: 6,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(TrainError::InvalidConfig(_))));
        assert!(TrainConfig {
            lr0: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn learning_rate_decay() {
        let c = TrainConfig {
            max_steps: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(c.learning_rate(0), 1e-4);
        assert!((c.learning_rate(10) - 1e-4 * 0.96).abs() < 1e-18);
    }

    #[test]
    fn zero_steps_returns_initial_params() {
        let (tr, va) = (toy(32, 0), toy(16, 3));
        let net = small_net();
        let out = train_member(&net, &view(&tr), &view(&va), &quick(0), 4).unwrap();
        assert_eq!(out.member.params, net.init_params(4));
        assert!(out.log.rows.is_empty());
        assert_eq!(out.log.to_csv(), format!("{}\n", TrainLog::CSV_HEADER));
    }

    #[test]
    fn fits_line_and_is_deterministic() {
        let (tr, va) = (toy(64, 0), toy(32, 5));
        let net = small_net();
        let cfg = quick(600);
        let a = train_member(&net, &view(&tr), &view(&va), &cfg, 1).unwrap();
        let b = train_member(&net, &view(&tr), &view(&va), &cfg, 1).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.to_csv(), b.log.to_csv());
        assert_eq!(a.member.params, b.member.params);
        let last = a.log.rows.last().unwrap();
        assert!(last.val_mae < 0.2, "{last:?}");

        let c = train_member(&net, &view(&tr), &view(&va), &cfg, 2).unwrap();
        assert_ne!(a.member.params.values, c.member.params.values);
    }

    #[test]
    fn returned_params_dominate_final() {
        let (tr, va) = (toy(64, 0), toy(32, 5));
        let net = small_net();
        let out = train_member(&net, &view(&tr), &view(&va), &quick(300), 7).unwrap();
        let (best, _) = evaluate(&net, &out.member.params, &out.member.scaler, &view(&va)).unwrap();
        let (fin, _) = evaluate(&net, &out.final_params, &out.member.scaler, &view(&va)).unwrap();
        assert!(best <= fin);
        assert_eq!(best, out.counters.best_val_nll);
        let min_logged = out.log.rows.iter().map(|r| r.val_nll).fold(f64::INFINITY, f64::min);
        assert!(out.counters.best_val_nll <= min_logged);
    }

    #[test]
    fn empty_validation_rejected() {
        let tr = toy(8, 0);
        let empty: Samples<'_, Features> = Samples::new(vec![], vec![], vec![]);
        assert!(train_member(&small_net(), &view(&tr), &empty, &quick(10), 0).is_err());
    }

    #[test]
    fn divergence_keeps_last_good() {
        let (tr, va) = (toy(16, 0), toy(8, 1));
        let mut bad = tr.clone();
        bad.2[0] = f64::NAN;
        bad.2.iter_mut().for_each(|y| *y = f64::NAN);
        let cfg = TrainConfig {
            eval_every: 5,
            ..quick(30)
        };
        match train_member(&small_net(), &view(&bad), &view(&va), &cfg, 0) {
            Err(TrainError::Diverged { step, last_good }) => {
                assert_eq!(step, 5);
                assert!(last_good.0.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }
}
