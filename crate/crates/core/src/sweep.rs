//! Ensemble training, ensemble-size sweeps and learning curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diffnet::{Member, ProbModel};
use crate::ensemble::{predict_ensemble, NllMode};
use crate::evalmetrics::{mae, mean_nll, rmse};
use crate::seed;
use crate::training::{train_member, Samples, TrainConfig, TrainError, TrainOutcome};
use crate::{Error, Result};

/// Trains `m` members with seeds `member_seed(global_seed, i)` on up to `workers`
/// threads. Each member's result depends only on its own seed.
pub fn train_ensemble<M>(
    model: &M,
    train: &Samples<'_, M::Input>,
    val: &Samples<'_, M::Input>,
    config: &TrainConfig,
    m: usize,
    global_seed: u64,
    workers: usize,
) -> Vec<std::result::Result<TrainOutcome<M>, TrainError>>
where
    M: ProbModel + Clone,
{
    let run = |i: usize| train_member(model, train, val, config, seed::member_seed(global_seed, i));
    let workers = workers.clamp(1, m.max(1));
    if workers == 1 {
        return (0..m).map(run).collect();
    }
    let mut slots: Vec<Option<std::result::Result<TrainOutcome<M>, TrainError>>> = (0..m).map(|_| None).collect();
    std::thread::scope(|s| {
        for (w, chunk) in slots.chunks_mut(m.div_ceil(workers)).enumerate() {
            let run = &run;
            let base = w * m.div_ceil(workers);
            s.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run(base + j));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every member slot is filled")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Ensemble size or training fraction.
    pub x: f64,
    pub n_train: usize,
    pub m: usize,
    pub mae: f64,
    pub rmse: f64,
    pub nll: f64,
}

pub fn sweep_csv(x_name: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{x_name},n_train,M,MAE,RMSE,NLL\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{},{}", r.x, r.n_train, r.m, r.mae, r.rmse, r.nll).unwrap();
    }
    s
}

fn score<M: ProbModel>(members: &[Member<M>], eval: &Samples<'_, M::Input>) -> Result<(f64, f64, f64)> {
    let preds = predict_ensemble(members, &eval.inputs)?;
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    Ok((
        mae(&means, &eval.targets)?,
        rmse(&means, &eval.targets)?,
        mean_nll(&preds, &eval.targets, NllMode::Gaussian)?,
    ))
}

/// Indices of `pool` ordered by validation NLL, best first; ties keep pool order.
pub fn rank_by_nll(val_nll: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..val_nll.len()).collect();
    order.sort_by(|&a, &b| val_nll[a].total_cmp(&val_nll[b]));
    order
}

/// Metrics on `eval` of the ensembles formed by the best `1..=max_size` members.
pub fn ensemble_size_sweep<M: ProbModel + Clone>(
    pool: &[Member<M>],
    val_nll: &[f64],
    eval: &Samples<'_, M::Input>,
    max_size: usize,
    n_train: usize,
) -> Result<Vec<SweepRow>> {
    if pool.len() < max_size || max_size == 0 {
        return Err(Error::Train(TrainError::InvalidConfig(format!(
            "ensemble-size sweep to {max_size} needs at least that many members, pool has {}",
            pool.len()
        ))));
    }
    let order = rank_by_nll(val_nll);
    let ranked: Vec<Member<M>> = order.iter().map(|&i| pool[i].clone()).collect();
    (1..=max_size)
        .map(|m| {
            let (mae, rmse, nll) = score(&ranked[..m], eval)?;
            Ok(SweepRow {
                x: m as f64,
                n_train,
                m,
                mae,
                rmse,
                nll,
            })
        })
        .collect()
}

/// Retrains `m` members on nested prefixes of one seeded permutation of `train`.
#[allow(clippy::too_many_arguments)]
pub fn learning_curve<M: ProbModel + Clone>(
    model: &M,
    train: &Samples<'_, M::Input>,
    val: &Samples<'_, M::Input>,
    eval: &Samples<'_, M::Input>,
    fractions: &[f64],
    m: usize,
    config: &TrainConfig,
    global_seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::Train(TrainError::InvalidConfig(
            "train fractions must lie in (0, 1]".into(),
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = seed::rng(seed::substream(global_seed, "learning-curve"));
    seed::shuffle(&mut order, &mut rng);
    let mut rows = Vec::new();
    for &f in fractions {
        let n = ((f * train.len() as f64).round() as usize).clamp(1, train.len());
        let subset = train.subset(&order[..n]);
        let members = train_ensemble(model, &subset, val, config, m, global_seed, workers)
            .into_iter()
            .map(|r| r.map(|o| o.member))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let (mae, rmse, nll) = score(&members, eval)?;
        rows.push(SweepRow {
            x: f,
            n_train: n,
            m,
            mae,
            rmse,
            nll,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{DenseConfig, DenseNet, Features};

    struct Data {
        ids: Vec<String>,
        x: Vec<Features>,
        y: Vec<f64>,
    }

    impl Data {
        fn line(n: usize, shift: f64) -> Self {
            let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + shift) / n as f64).collect();
            Self {
                ids: (0..n).map(|i| format!("i{i}")).collect(),
                y: xs.iter().map(|x| x * 1.5).collect(),
                x: xs.into_iter().map(|v| Features(vec![v])).collect(),
            }
        }

        fn view(&self) -> Samples<'_, Features> {
            Samples::new(self.ids.iter().map(String::as_str).collect(), self.x.iter().collect(), self.y.clone())
        }
    }

    fn setup() -> (DenseNet, TrainConfig) {
        let net = DenseNet::new(DenseConfig {
            input_dim: 1,
            hidden_dims: vec![6],
            min_variance: 1e-6,
        })
        .unwrap();
        let cfg = TrainConfig {
            max_steps: 60,
            warmup_steps: 20,
            interp_steps: 20,
            batch_size: 8,
            lr0: 1e-2,
            eval_every: 20,
            ..TrainConfig::default()
        };
        (net, cfg)
    }

    #[test]
    fn threaded_training_matches_sequential() {
        let (net, cfg) = setup();
        let (tr, va) = (Data::line(32, 0.0), Data::line(16, 0.5));
        let a = train_ensemble(&net, &tr.view(), &va.view(), &cfg, 3, 9, 1);
        let b = train_ensemble(&net, &tr.view(), &va.view(), &cfg, 3, 9, 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_ref().unwrap().member, y.as_ref().unwrap().member);
        }
        // A bigger ensemble keeps the first members unchanged.
        let c = train_ensemble(&net, &tr.view(), &va.view(), &cfg, 4, 9, 2);
        assert_eq!(a[2].as_ref().unwrap().member, c[2].as_ref().unwrap().member);
    }

    #[test]
    fn size_sweep_rows_and_errors() {
        let (net, cfg) = setup();
        let (tr, va) = (Data::line(32, 0.0), Data::line(16, 0.5));
        let outs = train_ensemble(&net, &tr.view(), &va.view(), &cfg, 2, 1, 1);
        let pool: Vec<_> = outs.iter().map(|o| o.as_ref().unwrap().member.clone()).collect();
        let nll: Vec<f64> = outs.iter().map(|o| o.as_ref().unwrap().counters.best_val_nll).collect();
        let rows = ensemble_size_sweep(&pool, &nll, &va.view(), 2, 32).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(ensemble_size_sweep(&pool, &nll, &va.view(), 1, 32).unwrap().len(), 1);
        assert!(ensemble_size_sweep(&pool, &nll, &va.view(), 3, 32).is_err());
        assert!(sweep_csv("ensemble_size", &rows).starts_with("ensemble_size,n_train,M,MAE,RMSE,NLL\n1,"));
        assert_eq!(rank_by_nll(&[0.5, -1.0, 0.5]), vec![1, 0, 2]);
    }

    #[test]
    fn learning_curve_uses_nested_sizes() {
        let (net, cfg) = setup();
        let (tr, va) = (Data::line(40, 0.0), Data::line(16, 0.5));
        let rows = learning_curve(&net, &tr.view(), &va.view(), &va.view(), &[0.1, 0.5, 1.0], 1, &cfg, 3, 1).unwrap();
        assert_eq!(rows.iter().map(|r| r.n_train).collect::<Vec<_>>(), vec![4, 20, 40]);
        assert!(learning_curve(&net, &tr.view(), &va.view(), &va.view(), &[1.5], 1, &cfg, 3, 1).is_err());
    }
}
