//! Learning-curve experiments: probes trained on nested prefixes of a
//! shuffled training pool, scored on the full test set, and reduced to a
//! per-size upper envelope.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::MlpArchitecture;
use super::train::TrainConfig;
use super::{ProbeAgent, DEFAULT_SIGMA};
use crate::agents::DEFAULT_ALPHA;
use crate::data::TokenDataset;
use crate::error::{Error, Result};
use crate::numerics::derive_seed;

const SHUFFLE_STREAM: u64 = 0;
const ARCH_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

/// The distribution architectures are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpace {
    pub layer_choices: Vec<usize>,
    pub min_hidden: usize,
    pub max_hidden: usize,
    pub max_dropout: f64,
}

impl Default for ArchitectureSpace {
    fn default() -> Self {
        Self {
            layer_choices: vec![0, 1, 2],
            min_hidden: 32,
            max_hidden: 1024,
            max_dropout: 0.5,
        }
    }
}

impl ArchitectureSpace {
    pub fn with_max_hidden(mut self, max_hidden: usize) -> Self {
        self.max_hidden = max_hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_choices.is_empty() || self.layer_choices.iter().any(|&l| l > super::mlp::MAX_LAYERS) {
            return Err(Error::Config(format!("layer choices {:?} are invalid", self.layer_choices)));
        }
        if self.min_hidden == 0 || self.min_hidden > self.max_hidden {
            return Err(Error::Config(format!(
                "hidden range [{}, {}] is invalid",
                self.min_hidden, self.max_hidden
            )));
        }
        if !(0.0..1.0).contains(&self.max_dropout) {
            return Err(Error::Config(format!("max dropout {} outside [0, 1)", self.max_dropout)));
        }
        Ok(())
    }

    /// Layers uniform over the choices, dropout uniform on
    /// `[0, max_dropout]`, hidden size log-uniform then rounded.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MlpArchitecture {
        let n_layers = self.layer_choices[rng.random_range(0..self.layer_choices.len())];
        let dropout = rng.random_range(0.0..=self.max_dropout);
        let (lo, hi) = ((self.min_hidden as f64).ln(), (self.max_hidden as f64).ln());
        let hidden = rng.random_range(lo..=hi).exp().round() as usize;
        MlpArchitecture {
            n_layers,
            hidden_size: hidden.clamp(self.min_hidden, self.max_hidden),
            dropout,
        }
    }
}

/// An architecture from the default space.
pub fn sample_architecture<R: Rng + ?Sized>(rng: &mut R) -> MlpArchitecture {
    ArchitectureSpace::default().sample(rng)
}

/// `round(logspace(0, log10 n_train, n_points))`, deduplicated ascending.
pub fn curve_sizes(n_train: usize, n_points: usize) -> Result<Vec<usize>> {
    if n_train == 0 {
        return Err(Error::Empty("training data"));
    }
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 curve points, got {n_points}")));
    }
    let top = (n_train as f64).log10();
    let mut sizes: Vec<usize> = (0..n_points)
        .map(|i| {
            let e = top * i as f64 / (n_points - 1) as f64;
            (10f64.powf(e).round() as usize).clamp(1, n_train)
        })
        .collect();
    sizes.dedup();
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub n_points: usize,
    pub trials: usize,
    pub seed: u64,
    pub space: ArchitectureSpace,
    /// Template for every trial; its seed is replaced per trial.
    pub train: TrainConfig,
    pub sigma: f64,
    pub alpha: f64,
    /// Explicit sizes instead of the log schedule.
    pub sizes: Option<Vec<usize>>,
    /// Also record the untrained agent at size 0.
    pub include_prior_point: bool,
    /// Worker threads; `None` uses rayon's default pool.
    pub workers: Option<usize>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            n_points: 50,
            trials: 5,
            seed: 0,
            space: ArchitectureSpace::default(),
            train: TrainConfig::default(),
            sigma: DEFAULT_SIGMA,
            alpha: DEFAULT_ALPHA,
            sizes: None,
            include_prior_point: false,
            workers: None,
        }
    }
}

impl CurveConfig {
    pub fn resolved_sizes(&self, n_train: usize) -> Result<Vec<usize>> {
        let mut sizes = match &self.sizes {
            Some(explicit) => {
                if explicit.is_empty() {
                    return Err(Error::Empty("curve sizes"));
                }
                if let Some(&bad) = explicit.iter().find(|&&n| n > n_train || n == 0) {
                    return Err(Error::InvalidArgument(format!(
                        "curve size {bad} outside 1..={n_train} available training examples"
                    )));
                }
                let mut s = explicit.clone();
                s.sort_unstable();
                s.dedup();
                s
            }
            None => curve_sizes(n_train, self.n_points)?,
        };
        if self.include_prior_point {
            sizes.insert(0, 0);
        }
        Ok(sizes)
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial per size".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be positive".into()));
        }
        self.space.validate()?;
        self.train.validate()
    }

    /// The architecture and training seed of one (size, trial) cell; shared
    /// by every representation so curves are paired.
    pub fn trial_plan(&self, size_index: usize, trial: usize) -> (MlpArchitecture, u64) {
        let path = [size_index as u64, trial as u64];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[ARCH_STREAM, path[0], path[1]]));
        let arch = self.space.sample(&mut rng);
        (arch, derive_seed(self.seed, &[TRAIN_STREAM, path[0], path[1]]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub trial: usize,
    pub architecture: MlpArchitecture,
    pub seed: u64,
    pub bayesian_mi_bits: f64,
    pub test_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub repr: String,
    pub task: String,
    /// Ordered by size, then trial.
    pub points: Vec<CurvePoint>,
}

/// One CSV row of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub repr: String,
    pub task: String,
    pub n: usize,
    pub trial: usize,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub seed: u64,
    pub bayesian_mi_bits: f64,
}

impl LearningCurve {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.points.iter().map(|p| p.n).collect();
        s.dedup();
        s
    }

    pub fn envelope(&self) -> Vec<EnvelopePoint> {
        pareto_aggregate(&self.points)
    }

    /// Envelope value at size `n`, if that size was run.
    pub fn envelope_at(&self, n: usize) -> Option<f64> {
        self.envelope().into_iter().find(|e| e.n == n).map(|e| e.bayesian_mi_bits)
    }

    pub fn rows(&self) -> Vec<CurveRow> {
        self.points
            .iter()
            .map(|p| CurveRow {
                repr: self.repr.clone(),
                task: self.task.clone(),
                n: p.n,
                trial: p.trial,
                layers: p.architecture.n_layers,
                hidden: p.architecture.hidden_size,
                dropout: p.architecture.dropout,
                seed: p.seed,
                bayesian_mi_bits: p.bayesian_mi_bits,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub n: usize,
    pub bayesian_mi_bits: f64,
    /// Trial attaining the maximum (first on ties).
    pub trial: usize,
}

/// Maximum Bayesian MI per size across trials, ascending in size.
pub fn pareto_aggregate(points: &[CurvePoint]) -> Vec<EnvelopePoint> {
    let mut best: BTreeMap<usize, EnvelopePoint> = BTreeMap::new();
    for p in points {
        let candidate = EnvelopePoint {
            n: p.n,
            bayesian_mi_bits: p.bayesian_mi_bits,
            trial: p.trial,
        };
        best.entry(p.n)
            .and_modify(|e| {
                if p.bayesian_mi_bits > e.bayesian_mi_bits {
                    *e = candidate;
                }
            })
            .or_insert(candidate);
    }
    best.into_values().collect()
}

fn check_paired(datasets: &[&TokenDataset]) -> Result<()> {
    let first = datasets.first().ok_or(Error::Empty("representations"))?;
    for ds in &datasets[1..] {
        if ds.label_names() != first.label_names() {
            return Err(Error::DomainMismatch(format!(
                "representations `{}` and `{}` have different label sets",
                first.repr(),
                ds.repr()
            )));
        }
        if ds.train().len() != first.train().len() || ds.train().y != first.train().y || ds.test().y != first.test().y
        {
            return Err(Error::DomainMismatch(format!(
                "representations `{}` and `{}` do not label the same tokens",
                first.repr(),
                ds.repr()
            )));
        }
    }
    Ok(())
}

struct Job {
    repr: usize,
    size_index: usize,
    n: usize,
    trial: usize,
}

fn run_job(ds: &TokenDataset, order: &[usize], job: &Job, cfg: &CurveConfig) -> Result<CurvePoint> {
    let (architecture, seed) = cfg.trial_plan(job.size_index, job.trial);
    let mut agent = ProbeAgent::new(architecture, ds.dim(), ds.n_labels(), seed)?
        .with_sigma(cfg.sigma)?
        .with_alpha(cfg.alpha)?;
    let mut epochs = 0;
    if job.n > 0 {
        let subset = ds.train().select(&order[..job.n]);
        let train_cfg = cfg.train.clone().with_seed(seed);
        let report = agent.map_train(&subset, &train_cfg)?;
        epochs = report.epochs_run;
        log::debug!(
            "{} n={} trial={} objective {:.4} -> {:.4} bits in {} epochs",
            ds.repr(),
            job.n,
            job.trial,
            report.initial_objective(),
            report.final_objective(),
            epochs
        );
    }
    Ok(CurvePoint {
        n: job.n,
        trial: job.trial,
        architecture,
        seed,
        bayesian_mi_bits: agent.estimate_bayesian_mi(ds.test())?,
        test_size: ds.test().len(),
        epochs,
    })
}

/// Runs the same architecture and data-order plan on every dataset.
/// Results are ordered canonically whatever the worker count.
pub fn compare_representations(datasets: &[&TokenDataset], cfg: &CurveConfig) -> Result<Vec<LearningCurve>> {
    cfg.validate()?;
    check_paired(datasets)?;
    let n_train = datasets[0].train().len();
    let sizes = cfg.resolved_sizes(n_train)?;
    let mut order: Vec<usize> = (0..n_train).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[SHUFFLE_STREAM])));

    let mut jobs = Vec::new();
    for repr in 0..datasets.len() {
        for (size_index, &n) in sizes.iter().enumerate() {
            for trial in 0..cfg.trials {
                jobs.push(Job {
                    repr,
                    size_index,
                    n,
                    trial,
                });
            }
        }
    }
    let run_all = || -> Result<Vec<CurvePoint>> {
        jobs.par_iter()
            .map(|job| run_job(datasets[job.repr], &order, job, cfg))
            .collect()
    };
    let points = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run_all)?,
        None => run_all()?,
    };

    let per_repr = sizes.len() * cfg.trials;
    Ok(datasets
        .iter()
        .zip(points.chunks(per_repr))
        .map(|(ds, chunk)| LearningCurve {
            repr: ds.repr().to_string(),
            task: ds.task().to_string(),
            points: chunk.to_vec(),
        })
        .collect())
}

pub fn run_learning_curve(dataset: &TokenDataset, cfg: &CurveConfig) -> Result<LearningCurve> {
    Ok(compare_representations(&[dataset], cfg)?.remove(0))
}
