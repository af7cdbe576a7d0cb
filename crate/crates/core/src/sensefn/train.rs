use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Record};
use super::model::{Activation, SensingModel};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_nodes: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Fraction of records held out to select the checkpoint; 0 selects on
    /// the training loss.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_nodes: 64,
            activation: Activation::Sigmoid,
            learning_rate: 0.05,
            epochs: 2000,
            batch_size: None,
            validation_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::Config("learning_rate must lie in [0, 1]".into()));
        }
        if self.epochs == 0 || self.hidden_nodes == 0 {
            return Err(Error::Config("epochs and hidden_nodes must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch root mean squared errors on min-max scaled targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: SensingModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Gradient descent on the RMSE loss, keeping the parameters with the lowest
/// validation error seen.
///
/// `seed` and `stream` select the initialisation, split and batch-order
/// streams.
pub fn train(ds: &Dataset, out_bounds: &[(f64, f64)], cfg: &TrainConfig, seed: u64, stream: u64) -> Result<Trained> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let n_val = if ds.len() >= 2 {
        ((cfg.validation_fraction * ds.len() as f64).round() as usize).min(ds.len() - 1)
    } else {
        0
    };
    if n_val > 0 {
        order.shuffle(&mut rng::stream(seed, &[rng::tag::SPLIT, stream]));
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let train_set = ds.subset(&train_idx);
    let val_set = ds.subset(val_idx);

    let mut model = SensingModel::init(
        &train_set,
        cfg.hidden_nodes,
        out_bounds,
        cfg.activation,
        &mut rng::stream(seed, &[rng::tag::TRAIN_INIT, stream]),
    )?;
    let train_refs: Vec<&Record> = train_set.records.iter().collect();
    let val_refs: Vec<&Record> = val_set.records.iter().collect();
    let mut order_rng = rng::stream(seed, &[rng::tag::TRAIN_ORDER, stream]);
    let batch = cfg.batch_size.unwrap_or(train_refs.len()).min(train_refs.len());

    let mut best = (f64::INFINITY, model.w.clone(), 0usize);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut perm: Vec<usize> = (0..train_refs.len()).collect();
    for epoch in 0..=cfg.epochs {
        let full_batch = batch == train_refs.len();
        // The final pass only scores the last update.
        let (train_loss, grad) = if full_batch || epoch == cfg.epochs {
            let (l, g) = model.loss_gradient(&train_refs)?;
            (l, Some(g))
        } else {
            (model.loss(&train_refs)?, None)
        };
        let val_loss = if val_refs.is_empty() {
            train_loss
        } else {
            model.loss(&val_refs)?
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        history.push(EpochStats {
            train: train_loss.sqrt(),
            validation: val_loss.sqrt(),
        });
        if val_loss < best.0 {
            best = (val_loss, model.w.clone(), epoch);
        }
        if epoch == cfg.epochs || train_loss == 0.0 {
            break;
        }
        if full_batch {
            step(
                &mut model,
                &grad.expect("full batch gradient"),
                train_loss,
                cfg.learning_rate,
            );
        } else {
            perm.shuffle(&mut order_rng);
            for chunk in perm.chunks(batch) {
                let b: Vec<&Record> = chunk.iter().map(|&i| train_refs[i]).collect();
                let (l, g) = model.loss_gradient(&b)?;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, loss: l });
                }
                if l > 0.0 {
                    step(&mut model, &g, l, cfg.learning_rate);
                }
            }
        }
    }
    model.w = best.1;
    Ok(Trained {
        model,
        history,
        best_epoch: best.2,
    })
}

/// `w <- w - beta * grad(RMSE)`, using `grad(RMSE) = grad(MSE) / (2 RMSE)`.
fn step(model: &mut SensingModel, grad_mse: &[f64], mse: f64, beta: f64) {
    let k = beta / (2.0 * mse.sqrt());
    for (w, g) in model.w.iter_mut().zip(grad_mse) {
        *w -= k * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensefn::model::rmse;

    fn linear_dataset() -> Dataset {
        let mut records = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                let (x, y) = (a as f64, b as f64);
                records.push(Record {
                    c: vec![x, y],
                    meas_idx: 0,
                    p: vec![-40.0 + 2.0 * x - y, -30.0 + x + 3.0 * y, -35.0 - x + 0.5 * y],
                });
            }
        }
        Dataset { records }
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let ds = linear_dataset();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            hidden_nodes: 8,
            ..Default::default()
        };
        let t = train(&ds, &[(0.0, 4.0); 2], &cfg, 1, 0).unwrap();
        let init = SensingModel::init(
            &ds,
            8,
            &[(0.0, 4.0); 2],
            Activation::Sigmoid,
            &mut rng::stream(1, &[rng::tag::TRAIN_INIT, 0]),
        )
        .unwrap();
        assert_eq!(t.model, init);
    }

    #[test]
    fn converges_on_linear_data() {
        let ds = linear_dataset();
        let cfg = TrainConfig {
            hidden_nodes: 16,
            epochs: 1500,
            learning_rate: 0.05,
            ..Default::default()
        };
        let t = train(&ds, &[(0.0, 4.0); 2], &cfg, 2, 0).unwrap();
        assert!(t.history[..11].windows(2).all(|w| w[1].train < w[0].train));
        let last = t.history[t.best_epoch].train;
        assert!(last < 0.1 * t.history[0].train, "{last} vs {}", t.history[0].train);
        assert!(rmse(&t.model, &ds).unwrap() < 0.4 * 4.0 * t.history[0].train);
    }

    #[test]
    fn deterministic_histories() {
        let ds = linear_dataset();
        let cfg = TrainConfig {
            hidden_nodes: 8,
            epochs: 50,
            batch_size: Some(7),
            validation_fraction: 0.2,
            ..Default::default()
        };
        let a = train(&ds, &[(0.0, 4.0); 2], &cfg, 3, 1).unwrap();
        let b = train(&ds, &[(0.0, 4.0); 2], &cfg, 3, 1).unwrap();
        assert_eq!(a, b);
        let c = train(&ds, &[(0.0, 4.0); 2], &cfg, 4, 1).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn checkpoint_is_best_validation() {
        let ds = linear_dataset();
        let cfg = TrainConfig {
            hidden_nodes: 8,
            epochs: 200,
            learning_rate: 0.5,
            validation_fraction: 0.2,
            ..Default::default()
        };
        let t = train(&ds, &[(0.0, 4.0); 2], &cfg, 5, 0).unwrap();
        let best = t.history.iter().map(|h| h.validation).fold(f64::INFINITY, f64::min);
        assert_eq!(t.history[t.best_epoch].validation, best);
    }

    #[test]
    fn divergence_reported() {
        let mut ds = linear_dataset();
        ds.records[0].c[0] = f64::INFINITY;
        let cfg = TrainConfig {
            epochs: 3,
            hidden_nodes: 4,
            ..Default::default()
        };
        assert!(matches!(
            train(&ds, &[(0.0, 4.0); 2], &cfg, 1, 0),
            Err(Error::Diverged { epoch: 0, .. })
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            TrainConfig {
                learning_rate: 1.5,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: Some(0),
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }
}
