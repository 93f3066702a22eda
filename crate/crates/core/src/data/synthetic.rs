//! Synthetic probing datasets whose representation–label mutual information
//! is known in closed form or by quadrature.
//!
//! Labels `t` follow a prior `pi`. Without a vocabulary `pi` is uniform;
//! with a vocabulary of `V` words, a word `w` is drawn uniformly and
//! `t = w mod T`, so every token also carries a form `w{w}` that random
//! type-level embeddings can encode.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Examples, TokenDataset};
use super::embeddings::type_vector;
use crate::error::{Error, Result};
use crate::info::{mutual_information, ConditionalBelief, FiniteDistribution, JointDistribution};
use crate::numerics::{derive_seed, gauss_hermite, log_sum_exp};

/// Largest label count for which the informative kind's quadrature is run.
pub const MAX_INFORMATIVE_LABELS: usize = 6;

/// Budget of tensor-product quadrature nodes per label.
const QUADRATURE_BUDGET: f64 = 2.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// `r = onehot(t) + N(0, noise^2 I)`, zero-padded to `dim`.
    Informative,
    /// `r ~ N(0, noise^2 I)` independent of `t`.
    Noise,
    /// `t' = t` with probability `1 - noise`, otherwise uniform over the
    /// other labels; `r = onehot(t')`.
    LossyChannel,
}

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::Informative => "informative",
            SyntheticKind::Noise => "noise",
            SyntheticKind::LossyChannel => "lossy-channel",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "informative" => Ok(SyntheticKind::Informative),
            "noise" => Ok(SyntheticKind::Noise),
            "lossy-channel" | "lossy_channel" | "lossy" => Ok(SyntheticKind::LossyChannel),
            other => Err(Error::Config(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

fn default_test_size() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub dim: usize,
    pub n_labels: usize,
    /// Gaussian standard deviation, or flip probability for the channel.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub vocab: Option<usize>,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, dim: usize, n_labels: usize, noise: f64, seed: u64) -> Self {
        Self {
            kind,
            dim,
            n_labels,
            noise,
            seed,
            test_size: default_test_size(),
            vocab: None,
        }
    }

    pub fn with_test_size(mut self, test_size: usize) -> Self {
        self.test_size = test_size;
        self
    }

    pub fn with_vocab(mut self, vocab: usize) -> Self {
        self.vocab = Some(vocab);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.n_labels;
        if t < 2 {
            return Err(Error::Config(format!("need at least 2 labels, got {t}")));
        }
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.test_size == 0 {
            return Err(Error::Config("test size must be positive".into()));
        }
        if let Some(v) = self.vocab {
            if v < t {
                return Err(Error::Config(format!("vocabulary of {v} words cannot cover {t} labels")));
            }
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::Config(format!("noise level {} must be finite and nonnegative", self.noise)));
        }
        match self.kind {
            SyntheticKind::Informative | SyntheticKind::LossyChannel if self.dim < t => Err(Error::Config(format!(
                "{} needs dimension >= {t} for one-hot codes, got {}",
                self.kind, self.dim
            ))),
            SyntheticKind::Informative if t > MAX_INFORMATIVE_LABELS && self.noise > 0.0 => Err(Error::Config(format!(
                "informative quadrature supports at most {MAX_INFORMATIVE_LABELS} labels, got {t}"
            ))),
            SyntheticKind::LossyChannel if self.noise > 1.0 => {
                Err(Error::Config(format!("flip probability {} exceeds 1", self.noise)))
            }
            _ => Ok(()),
        }
    }

    /// The label prior implied by the vocabulary.
    pub fn label_prior(&self) -> Vec<f64> {
        let t = self.n_labels;
        match self.vocab {
            None => vec![1.0 / t as f64; t],
            Some(v) => (0..t).map(|k| ((v - k).div_ceil(t)) as f64 / v as f64).collect(),
        }
    }

    /// `C[t][t']` of the symmetric channel.
    fn channel(&self) -> Vec<Vec<f64>> {
        let t = self.n_labels;
        let eps = self.noise;
        (0..t)
            .map(|a| (0..t).map(|b| if a == b { 1.0 - eps } else { eps / (t - 1) as f64 }).collect())
            .collect()
    }

    /// I(R;T) in bits.
    pub fn analytic_mi(&self) -> Result<f64> {
        self.validate()?;
        let prior = self.label_prior();
        match self.kind {
            SyntheticKind::Noise => Ok(0.0),
            SyntheticKind::LossyChannel => {
                let rows = self
                    .channel()
                    .iter()
                    .zip(&prior)
                    .map(|(row, &p)| row.iter().map(|c| c * p).collect())
                    .collect();
                Ok(mutual_information(&JointDistribution::from_matrix(rows)?))
            }
            SyntheticKind::Informative => Ok(informative_mi(&prior, self.noise)),
        }
    }
}

fn label_entropy(prior: &[f64]) -> f64 {
    -prior.iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// Quadrature oracle for one-hot codes in isotropic Gaussian noise.
///
/// Given `t`, the posterior surprisal is
/// `log sum_k (pi_k/pi_t) exp(a_k)` with `a_t = 0` and
/// `a_k = (sd (z_k - z_t) - 1) / sd^2`; the expectation over the `T`
/// independent standard normals `z` runs on a Gauss–Hermite tensor grid.
pub fn informative_mi(prior: &[f64], sd: f64) -> f64 {
    let h_t = label_entropy(prior);
    if sd == 0.0 {
        return h_t;
    }
    let t = prior.len();
    let per_axis = (QUADRATURE_BUDGET.powf(1.0 / t as f64).floor() as usize).clamp(4, 40);
    let (nodes, weights) = gauss_hermite(per_axis);
    let norm = std::f64::consts::PI.powf(-0.5);
    let z: Vec<f64> = nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect();
    let w: Vec<f64> = weights.iter().map(|x| x * norm).collect();
    let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();

    let mut conditional = 0.0;
    let mut idx = vec![0usize; t];
    let mut terms = vec![0.0; t];
    for (label, &p) in prior.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            let weight: f64 = idx.iter().map(|&i| w[i]).product();
            let zt = z[idx[label]];
            for k in 0..t {
                let a = if k == label { 0.0 } else { (sd * (z[idx[k]] - zt) - 1.0) / (sd * sd) };
                terms[k] = log_prior[k] - log_prior[label] + a;
            }
            acc += weight * log_sum_exp(&terms);
            // odometer over the grid
            let mut axis = 0;
            while axis < t {
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == t {
                break;
            }
        }
        conditional += p * acc;
    }
    h_t - conditional / std::f64::consts::LN_2
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: TokenDataset,
    pub analytic_mi: f64,
    /// Word forms per example, present when the spec has a vocabulary.
    pub train_forms: Option<Vec<String>>,
    pub test_forms: Option<Vec<String>>,
}

impl SyntheticData {
    /// The same tokens and labels, re-encoded by type-level random vectors
    /// of their word forms.
    pub fn random_counterpart(&self, dim: usize, seed: u64) -> Result<TokenDataset> {
        let (Some(train_forms), Some(test_forms)) = (&self.train_forms, &self.test_forms) else {
            return Err(Error::Config("random counterpart needs a vocabulary".into()));
        };
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let encode = |forms: &[String], y: &[usize]| {
            let flat: Vec<f64> = forms
                .iter()
                .flat_map(|f| type_vector(f, dim, seed).into_iter().map(f64::from))
                .collect();
            Examples::new(Array2::from_shape_vec((forms.len(), dim), flat).expect("dim-wide rows"), y.to_vec())
        };
        let ds = &self.dataset;
        TokenDataset::new(
            format!("random-{dim}"),
            ds.task(),
            ds.label_names().to_vec(),
            encode(train_forms, &ds.train().y)?,
            encode(test_forms, &ds.test().y)?,
        )
    }
}

struct Draw {
    row: Vec<f64>,
    label: usize,
    word: Option<usize>,
}

fn draw_one(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, prior: &FiniteDistribution, channel: Option<&ConditionalBelief>) -> Draw {
    let t_count = spec.n_labels;
    let (label, word) = match spec.vocab {
        Some(v) => {
            let w = rng.random_range(0..v);
            (w % t_count, Some(w))
        }
        None => (prior.sample_index(rng), None),
    };
    let mut row = vec![0.0; spec.dim];
    match spec.kind {
        SyntheticKind::Informative => {
            row[label] = 1.0;
            if spec.noise > 0.0 {
                for v in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += spec.noise * z;
                }
            }
        }
        SyntheticKind::Noise => {
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = spec.noise * z;
            }
        }
        SyntheticKind::LossyChannel => {
            let out = channel.expect("channel built").rows()[label].sample_index(rng);
            row[out] = 1.0;
        }
    }
    Draw { row, label, word }
}

fn draw_split(
    spec: &SyntheticSpec,
    n: usize,
    stream: u64,
    prior: &FiniteDistribution,
    channel: Option<&ConditionalBelief>,
) -> (Examples, Option<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[stream]));
    let mut flat = Vec::with_capacity(n * spec.dim);
    let mut y = Vec::with_capacity(n);
    let mut forms = spec.vocab.map(|_| Vec::with_capacity(n));
    for _ in 0..n {
        let d = draw_one(spec, &mut rng, prior, channel);
        flat.extend(d.row);
        y.push(d.label);
        if let (Some(forms), Some(w)) = (forms.as_mut(), d.word) {
            forms.push(format!("w{w}"));
        }
    }
    let x = Array2::from_shape_vec((n, spec.dim), flat).expect("dim-wide rows");
    (Examples { x, y }, forms)
}

/// Generates `n` training examples and `spec.test_size` test examples.
///
/// Train and test come from separate streams, so the test set does not
/// depend on `n` and the training set for `n` is a prefix of that for any
/// larger `n`.
pub fn synthesize(spec: &SyntheticSpec, n: usize) -> Result<SyntheticData> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one training example".into()));
    }
    let analytic_mi = spec.analytic_mi()?;
    let prior = FiniteDistribution::from_probs(spec.label_prior())?;
    let channel = match spec.kind {
        SyntheticKind::LossyChannel => Some(ConditionalBelief::from_rows(
            spec.channel()
                .into_iter()
                .map(FiniteDistribution::from_probs)
                .collect::<Result<Vec<_>>>()?,
        )?),
        _ => None,
    };
    let (train, train_forms) = draw_split(spec, n, 1, &prior, channel.as_ref());
    let (test, test_forms) = draw_split(spec, spec.test_size, 2, &prior, channel.as_ref());
    let labels = (0..spec.n_labels).map(|t| format!("t{t}")).collect();
    let dataset = TokenDataset::new(spec.kind.as_str(), "synthetic", labels, train, test)?;
    Ok(SyntheticData {
        dataset,
        analytic_mi,
        train_forms,
        test_forms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary_entropy(p: f64) -> f64 {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    #[test]
    fn closed_forms() {
        let noise = SyntheticSpec::new(SyntheticKind::Noise, 8, 5, 1.0, 0);
        assert_eq!(noise.analytic_mi().unwrap(), 0.0);

        let identity = SyntheticSpec::new(SyntheticKind::LossyChannel, 4, 4, 0.0, 0);
        assert_abs_diff_eq!(identity.analytic_mi().unwrap(), 2.0, epsilon = 1e-12);

        let bsc = SyntheticSpec::new(SyntheticKind::LossyChannel, 2, 2, 0.1, 0);
        let mi = bsc.analytic_mi().unwrap();
        assert_abs_diff_eq!(mi, 1.0 - binary_entropy(0.1), epsilon = 1e-12);
        assert_abs_diff_eq!(mi, 0.53100, epsilon = 5e-6);

        let clean = SyntheticSpec::new(SyntheticKind::Informative, 3, 3, 0.0, 0);
        assert_abs_diff_eq!(clean.analytic_mi().unwrap(), 3f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn vocabulary_prior() {
        let spec = SyntheticSpec::new(SyntheticKind::LossyChannel, 3, 3, 0.0, 0).with_vocab(7);
        let prior = spec.label_prior();
        assert_eq!(prior, vec![3.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0]);
        assert_abs_diff_eq!(spec.analytic_mi().unwrap(), label_entropy(&prior), epsilon = 1e-12);
    }

    #[test]
    fn binary_informative_matches_one_dimensional_integral() {
        // For T = 2 only z_1 - z_0 ~ N(0, 2) matters.
        let sd: f64 = 0.8;
        let h = crate::numerics::integrate(
            |u: f64| {
                let a = (sd * u - 1.0) / (sd * sd);
                let density = (-u * u / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt();
                density * (a.exp().ln_1p())
            },
            -20.0,
            20.0,
            64,
            20,
        );
        let expected = 1.0 - h / std::f64::consts::LN_2;
        assert_abs_diff_eq!(informative_mi(&[0.5, 0.5], sd), expected, epsilon = 1e-9);
    }

    #[test]
    fn informative_mi_is_bounded_and_decreasing_in_noise() {
        let prior = [0.25; 4];
        let mut last = 2.0;
        for sd in [0.2, 0.5, 1.0, 2.0] {
            let mi = informative_mi(&prior, sd);
            assert!(mi > 0.0 && mi < last, "sd {sd}: {mi}");
            last = mi;
        }
    }

    #[test]
    fn validation() {
        assert!(SyntheticSpec::new(SyntheticKind::Informative, 2, 3, 1.0, 0).validate().is_err());
        assert!(SyntheticSpec::new(SyntheticKind::Informative, 8, 8, 1.0, 0).validate().is_err());
        assert!(SyntheticSpec::new(SyntheticKind::Informative, 8, 8, 0.0, 0).validate().is_ok());
        assert!(SyntheticSpec::new(SyntheticKind::LossyChannel, 2, 2, 1.5, 0).validate().is_err());
        assert!(SyntheticSpec::new(SyntheticKind::Noise, 8, 1, 1.0, 0).validate().is_err());
        assert!(SyntheticSpec::new(SyntheticKind::Noise, 8, 3, 1.0, 0).with_vocab(2).validate().is_err());
        assert!(synthesize(&SyntheticSpec::new(SyntheticKind::Noise, 8, 3, 1.0, 0), 0).is_err());
        assert!("gaussian".parse::<SyntheticKind>().is_err());
    }

    #[test]
    fn spec_json() {
        let spec: SyntheticSpec =
            serde_json::from_str(r#"{"kind":"lossy-channel","dim":2,"n_labels":2,"noise":0.1}"#).unwrap();
        assert_eq!(spec.kind, SyntheticKind::LossyChannel);
        assert_eq!(spec.test_size, 1000);
        assert_eq!(spec.vocab, None);
    }

    #[test]
    fn prefixes_and_fixed_test_set() {
        let spec = SyntheticSpec::new(SyntheticKind::Informative, 5, 3, 0.5, 9).with_test_size(50);
        let small = synthesize(&spec, 10).unwrap();
        let large = synthesize(&spec, 40).unwrap();
        assert_eq!(small.dataset.test(), large.dataset.test());
        assert_eq!(small.dataset.train().select(&(0..10).collect::<Vec<_>>()), *small.dataset.train());
        assert_eq!(large.dataset.train().select(&(0..10).collect::<Vec<_>>()), *small.dataset.train());
        assert_eq!(small.dataset.content_hash(), synthesize(&spec, 10).unwrap().dataset.content_hash());
    }

    #[test]
    fn random_counterpart_shares_labels() {
        let spec = SyntheticSpec::new(SyntheticKind::Informative, 4, 4, 0.0, 2).with_vocab(12).with_test_size(30);
        let data = synthesize(&spec, 25).unwrap();
        let random = data.random_counterpart(16, 5).unwrap();
        assert_eq!(random.train().y, data.dataset.train().y);
        assert_eq!(random.test().y, data.dataset.test().y);
        assert_eq!(random.dim(), 16);
        let forms = data.train_forms.as_ref().unwrap();
        for (i, f) in forms.iter().enumerate() {
            let w: usize = f[1..].parse().unwrap();
            assert_eq!(data.dataset.train().y[i], w % 4);
        }
        let no_vocab = synthesize(&SyntheticSpec::new(SyntheticKind::Noise, 4, 2, 1.0, 0), 5).unwrap();
        assert!(no_vocab.random_counterpart(4, 0).is_err());
    }

    // Self-consistency of the analytic value against 10^6 generated samples.

    fn plug_in(pairs: impl Iterator<Item = (usize, usize)>, nx: usize, ny: usize) -> f64 {
        let mut counts = vec![vec![0.0; ny]; nx];
        let mut n = 0.0;
        for (a, b) in pairs {
            counts[a][b] += 1.0;
            n += 1.0;
        }
        let rows = counts.into_iter().map(|r| r.into_iter().map(|c| c / n).collect()).collect();
        mutual_information(&JointDistribution::from_matrix(rows).unwrap())
    }

    const MILLION: usize = 1_000_000;

    #[test]
    fn lossy_channel_plug_in_agrees() {
        let spec = SyntheticSpec::new(SyntheticKind::LossyChannel, 3, 3, 0.2, 4).with_vocab(10).with_test_size(1);
        let data = synthesize(&spec, MILLION).unwrap();
        let train = data.dataset.train();
        let code = |i: usize| train.row(i).iter().position(|&v| v == 1.0).unwrap();
        let mi = plug_in((0..train.len()).map(|i| (train.y[i], code(i))), 3, 3);
        assert!((mi - data.analytic_mi).abs() < 0.01, "{mi} vs {}", data.analytic_mi);
    }

    #[test]
    fn noise_plug_in_agrees() {
        let spec = SyntheticSpec::new(SyntheticKind::Noise, 2, 4, 1.0, 4).with_test_size(1);
        let data = synthesize(&spec, MILLION).unwrap();
        let train = data.dataset.train();
        let quadrant = |i: usize| usize::from(train.x[[i, 0]] > 0.0) * 2 + usize::from(train.x[[i, 1]] > 0.0);
        let mi = plug_in((0..train.len()).map(|i| (train.y[i], quadrant(i))), 4, 4);
        assert!(mi.abs() < 0.01, "{mi}");
    }

    #[test]
    fn informative_monte_carlo_agrees() {
        let spec = SyntheticSpec::new(SyntheticKind::Informative, 4, 3, 0.7, 4).with_vocab(8).with_test_size(1);
        let data = synthesize(&spec, MILLION).unwrap();
        let train = data.dataset.train();
        let prior = spec.label_prior();
        let sd2 = spec.noise * spec.noise;
        // sample mean of log2 p(t|r)/pi_t under the exact posterior
        let total: f64 = (0..train.len())
            .map(|i| {
                let logits: Vec<f64> = (0..3).map(|k| prior[k].ln() + train.x[[i, k]] / sd2).collect();
                let t = train.y[i];
                (logits[t] - log_sum_exp(&logits) - prior[t].ln()) / std::f64::consts::LN_2
            })
            .sum();
        let mi = total / train.len() as f64;
        assert!((mi - data.analytic_mi).abs() < 0.01, "{mi} vs {}", data.analytic_mi);
    }
}
