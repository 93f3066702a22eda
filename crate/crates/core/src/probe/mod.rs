//! Probe agents: an MLP conditional belief over labels given a
//! representation, a Laplace-smoothed unconditional belief over labels, and
//! Bayesian MI estimated on held-out data.

pub mod curve;
pub mod mlp;
pub mod train;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::DEFAULT_ALPHA;
use crate::data::Examples;
use crate::error::{Error, Result};
use crate::info::FiniteDistribution;
use crate::numerics::stable_sum;

pub use curve::{
    compare_representations, curve_sizes, pareto_aggregate, run_learning_curve, sample_architecture, ArchitectureSpace,
    CurveConfig, CurvePoint, CurveRow, EnvelopePoint, LearningCurve,
};
pub use mlp::{Mlp, MlpArchitecture};
pub use train::{train_map, TrainConfig, TrainReport};

/// Default standard deviation of the Gaussian prior on probe weights.
pub const DEFAULT_SIGMA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeAgent {
    mlp: Mlp,
    counts: Vec<u64>,
    sigma: f64,
    alpha: f64,
}

impl ProbeAgent {
    /// An agent at its prior: uniform conditional and unconditional beliefs.
    pub fn new(arch: MlpArchitecture, input_dim: usize, n_labels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            mlp: Mlp::new(arch, input_dim, n_labels, &mut rng)?,
            counts: vec![0; n_labels],
            sigma: DEFAULT_SIGMA,
            alpha: DEFAULT_ALPHA,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!("prior standard deviation {sigma} must be positive")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("concentration {alpha} must be positive")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn n_labels(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n_observations(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `q(t | r)` with dropout off.
    pub fn forward(&self, r: &[f64]) -> Result<FiniteDistribution> {
        let x = ArrayView2::from_shape((1, r.len()), r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let lp = self.mlp.log_probs(x)?;
        FiniteDistribution::from_probs(lp.row(0).iter().map(|v| v.exp()).collect())
    }

    /// Natural-log `q(t | r)`, one row per input.
    pub fn conditional_log_probs(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.mlp.log_probs(x)
    }

    /// Natural-log `(count + alpha) / (N + alpha |T|)`.
    pub fn unconditional_log_probs(&self) -> Vec<f64> {
        let denom = (self.n_observations() as f64 + self.alpha * self.n_labels() as f64).ln();
        self.counts.iter().map(|&c| (c as f64 + self.alpha).ln() - denom).collect()
    }

    pub fn unconditional_predictive(&self) -> FiniteDistribution {
        let n = self.n_observations() as f64 + self.alpha * self.n_labels() as f64;
        FiniteDistribution::from_probs(self.counts.iter().map(|&c| (c as f64 + self.alpha) / n).collect())
            .expect("Laplace-smoothed counts form a distribution")
    }

    /// Fits the MLP to MAP and replaces the label counts with those of
    /// `train`; the two parts share data but not parameters.
    pub fn map_train(&mut self, train: &Examples, cfg: &TrainConfig) -> Result<TrainReport> {
        if let Some(&bad) = train.y.iter().find(|&&y| y >= self.n_labels()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: self.n_labels(),
            });
        }
        let report = train_map(&mut self.mlp, train, self.sigma, cfg)?;
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &y in &train.y {
            self.counts[y] += 1;
        }
        Ok(report)
    }

    /// Sample mean over held-out pairs of `log2 q(t|r) - log2 q(t)`.
    /// Negative when the conditional belief generalises worse than the
    /// label frequencies.
    pub fn estimate_bayesian_mi(&self, test: &Examples) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::Empty("test data"));
        }
        let cond = self.conditional_log_probs(test.x.view())?;
        let uncond = self.unconditional_log_probs();
        let k = self.n_labels();
        let terms = test.y.iter().enumerate().map(|(i, &t)| {
            if t >= k {
                return f64::NAN;
            }
            cond[[i, t]] - uncond[t]
        });
        let total = stable_sum(terms.collect::<Vec<_>>().into_iter());
        if total.is_nan() {
            return Err(Error::DomainMismatch(format!("test labels exceed the {k} known labels")));
        }
        Ok(total / test.len() as f64 / std::f64::consts::LN_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> Examples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let t = i % 2;
            let sign = if t == 0 { -1.0 } else { 1.0 };
            x[[i, 0]] = sign * (1.0 + rng.random::<f64>());
            x[[i, 1]] = rng.random_range(-1.0..1.0);
            y.push(t);
        }
        Examples::new(x, y).unwrap()
    }

    #[test]
    fn prior_agent_has_zero_information() {
        for layers in 0..=2 {
            let agent = ProbeAgent::new(MlpArchitecture::new(layers, 32, 0.3).unwrap(), 2, 5, 9).unwrap();
            let test = Examples::new(Array2::from_elem((20, 2), 3.7), vec![4; 20]).unwrap();
            assert_eq!(agent.estimate_bayesian_mi(&test).unwrap(), 0.0);
        }
    }

    #[test]
    fn forward_rows_are_distributions() {
        let mut agent = ProbeAgent::new(MlpArchitecture::new(2, 16, 0.0).unwrap(), 3, 4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut flat = agent.mlp().to_flat();
        flat.iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
        agent.mlp_mut().set_flat(&flat).unwrap();
        for _ in 0..1000 {
            let r: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let q = agent.forward(&r).unwrap();
            assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(agent.forward(&[1.0]).is_err());
    }

    #[test]
    fn laplace_unconditional() {
        let mut agent = ProbeAgent::new(MlpArchitecture::linear(), 2, 3, 0).unwrap();
        assert_eq!(agent.unconditional_predictive().probs(), &[1.0 / 3.0; 3]);
        let train = Examples::new(Array2::zeros((4, 2)), vec![0, 0, 0, 2]).unwrap();
        let cfg = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        agent.map_train(&train, &cfg).unwrap();
        let q = agent.unconditional_predictive();
        assert_eq!(q.probs(), &[4.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0]);
    }

    #[test]
    fn linear_probe_separates_blobs() {
        let train = blobs(200, 1);
        let mut agent = ProbeAgent::new(MlpArchitecture::linear(), 2, 2, 0).unwrap();
        let report = agent.map_train(&train, &TrainConfig::default()).unwrap();
        assert!(report.final_objective() <= report.initial_objective());
        let lp = agent.conditional_log_probs(train.x.view()).unwrap();
        let correct = (0..train.len()).filter(|&i| lp[[i, train.y[i]]] > lp[[i, 1 - train.y[i]]]).count();
        assert_eq!(correct, train.len());
        let loss = agent.mlp().mean_cross_entropy(train.x.view(), &train.y).unwrap() / std::f64::consts::LN_2;
        assert!(loss < 0.1, "{loss}");
        let test = blobs(500, 2);
        assert!(agent.estimate_bayesian_mi(&test).unwrap() > 0.8);
    }

    #[test]
    fn single_example_is_fitted() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let r: Vec<f64> = (0..16).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        for layers in 0..=2 {
            let train = Examples::new(Array2::from_shape_vec((1, 16), r.clone()).unwrap(), vec![2]).unwrap();
            let mut agent = ProbeAgent::new(MlpArchitecture::new(layers, 32, 0.0).unwrap(), 16, 4, 7).unwrap();
            agent.map_train(&train, &TrainConfig::default()).unwrap();
            let q = agent.forward(&r).unwrap();
            assert!(q.probs()[2] > 0.9, "{layers} layers: {:?}", q.probs());
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        let mut agent = ProbeAgent::new(MlpArchitecture::linear(), 2, 2, 0).unwrap();
        assert!(agent.estimate_bayesian_mi(&Examples::empty(2)).is_err());
        assert!(agent.map_train(&Examples::empty(2), &TrainConfig::default()).is_err());
        let bad = Examples::new(Array2::zeros((1, 2)), vec![5]).unwrap();
        assert!(agent.map_train(&bad, &TrainConfig::default()).is_err());
        assert!(agent.estimate_bayesian_mi(&bad).is_err());
    }

    #[test]
    fn non_finite_loss_is_a_training_failure() {
        let x = Array2::from_shape_vec((2, 1), vec![1e300, -1e300]).unwrap();
        let train = Examples::new(x, vec![0, 1]).unwrap();
        let mut agent = ProbeAgent::new(MlpArchitecture::new(1, 4, 0.0).unwrap(), 1, 2, 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e3,
            ..TrainConfig::default()
        };
        match agent.map_train(&train, &cfg) {
            Err(Error::Training { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected a training failure, got {other:?}"),
        }
    }
}
