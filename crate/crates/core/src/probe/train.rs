//! MAP training of the probe's MLP with AdamW.
//!
//! The objective is the mean cross-entropy plus `c ||W||^2` with
//! `c = 1/(2 sigma^2 N)`, the per-example share of a Gaussian prior on the
//! weights. AdamW's decoupled decay `lambda = 2c` applies that penalty
//! outside the adaptive step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp};
use crate::data::Examples;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// `None` means `min(64, N)`.
    pub batch_size: Option<usize>,
    /// `None` derives the decay from the prior: `1/(sigma^2 N)`.
    pub weight_decay: Option<f64>,
    /// Stop once the best objective improved by less than `min_delta` bits
    /// over this many epochs.
    pub patience: usize,
    pub min_delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 500,
            batch_size: None,
            weight_decay: None,
            patience: 20,
            min_delta: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning rate", self.learning_rate)?;
        positive("epsilon", self.epsilon)?;
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == Some(0) {
            return Err(Error::Config("epochs, patience and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.min_delta < 0.0 || self.weight_decay.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("min delta and weight decay must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn resolved_weight_decay(&self, sigma: f64, n: usize) -> f64 {
        self.weight_decay.unwrap_or_else(|| 1.0 / (sigma * sigma * n as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// MAP objective in bits after each epoch; entry 0 is the initial value.
    pub trace: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub weight_decay: f64,
}

impl TrainReport {
    pub fn initial_objective(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_objective(&self) -> f64 {
        self.trace[self.best_epoch]
    }
}

/// The MAP objective in bits.
pub fn objective_bits(mlp: &Mlp, data: &Examples, weight_decay: f64) -> Result<f64> {
    let ce = mlp.mean_cross_entropy(data.x.view(), &data.y)?;
    Ok((ce + 0.5 * weight_decay * mlp.weight_norm_sq()) / std::f64::consts::LN_2)
}

struct AdamState {
    m: Vec<Dense>,
    v: Vec<Dense>,
    step: i32,
}

impl AdamState {
    fn new(mlp: &Mlp) -> Self {
        let zeros = |l: &Dense| Dense {
            w: ndarray::Array2::zeros(l.w.raw_dim()),
            b: ndarray::Array1::zeros(l.b.raw_dim()),
        };
        Self {
            m: mlp.layers().iter().map(zeros).collect(),
            v: mlp.layers().iter().map(zeros).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, mlp: &mut Mlp, grads: &[Dense], cfg: &TrainConfig, decay: f64) {
        self.step += 1;
        let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.epsilon);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let shrink = 1.0 - lr * decay;
        for (((layer, g), m), v) in mlp.layers_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            layer.w.mapv_inplace(|w| w * shrink);
            ndarray::Zip::from(&mut layer.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
            ndarray::Zip::from(&mut layer.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Trains in place and keeps the parameters with the lowest full-data
/// objective, so the returned objective never exceeds the initial one.
pub fn train_map(mlp: &mut Mlp, data: &Examples, sigma: f64, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("prior standard deviation {sigma} must be positive")));
    }
    let decay = cfg.resolved_weight_decay(sigma, n);
    let batch = cfg.batch_size.unwrap_or(64).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(mlp);

    let first = objective_bits(mlp, data, decay)?;
    let mut trace = vec![first];
    if !first.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: "non-finite initial objective".into(),
            trace,
        });
    }
    let mut best = (first, 0, mlp.clone());
    // best objective at the end of each epoch, for the patience window
    let mut best_history = vec![first];
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = data.x.select(ndarray::Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| data.y[i]).collect();
            let (loss, grads) = mlp.loss_and_grad(xb.view(), &yb, Some(&mut rng))?;
            if !loss.is_finite() {
                trace.push(loss);
                return Err(Error::Training {
                    epoch,
                    reason: "non-finite batch loss".into(),
                    trace,
                });
            }
            adam.apply(mlp, &grads, cfg, decay);
        }
        epochs_run = epoch;
        let obj = objective_bits(mlp, data, decay)?;
        trace.push(obj);
        if !obj.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: "non-finite objective".into(),
                trace,
            });
        }
        if obj < best.0 {
            best = (obj, epoch, mlp.clone());
        }
        best_history.push(best.0);
        if epoch >= cfg.patience && best_history[epoch - cfg.patience] - best.0 < cfg.min_delta {
            break;
        }
    }
    let (_, best_epoch, params) = best;
    *mlp = params;
    Ok(TrainReport {
        trace,
        best_epoch,
        epochs_run,
        weight_decay: decay,
    })
}
