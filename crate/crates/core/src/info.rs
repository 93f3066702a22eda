//! Exact information-theoretic quantities over finite domains, in bits.
//!
//! Three families of quantity live here:
//!
//! | quantity | expectation under | log of |
//! |----------|-------------------|--------|
//! | Shannon entropy / MI | true `p` | true `p` |
//! | belief entropy / MI | belief `q` | belief `q` |
//! | Bayesian entropy / MI | true `p` | posterior predictive `q` |
//!
//! Bayesian MI is a difference of two cross-entropies and is not
//! sign-constrained; nothing in this module clamps it.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{plogp_ratio, stable_sum};

/// Accepted deviation of a probability vector's sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-12;
/// Inputs within this distance of 1 (but outside [`SUM_TOLERANCE`]) are
/// renormalised; anything further is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn validate_probs(probs: &mut [f64]) -> Result<()> {
    for (index, &value) in probs.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidProbability { index, value });
        }
    }
    let total = stable_sum(probs.iter().copied());
    let deviation = (total - 1.0).abs();
    if deviation <= SUM_TOLERANCE {
        Ok(())
    } else if deviation <= RENORMALIZE_TOLERANCE {
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(())
    } else {
        Err(Error::NotNormalized(total))
    }
}

/// An exact probability vector over a finite labelled domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(labels: Vec<String>, mut probs: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("distribution domain"));
        }
        if labels.len() != probs.len() {
            return Err(Error::DomainMismatch(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        check_unique(&labels)?;
        validate_probs(&mut probs)?;
        Ok(Self { labels, probs })
    }

    /// A distribution whose labels are the indices `"0"`, `"1"`, ...
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::new(index_labels(probs.len()), probs)
    }

    /// Normalises nonnegative weights into a distribution over `labels`.
    pub fn from_weights(labels: Vec<String>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Numerical(format!("weights sum to {total}")));
        }
        Self::new(labels, weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::uniform_over(index_labels(n))
    }

    pub fn uniform_over(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        Self::new(labels, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, size: n });
        }
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Self::from_probs(probs)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == symbol)
            .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
    }

    pub fn prob(&self, symbol: &str) -> Result<f64> {
        Ok(self.probs[self.index_of(symbol)?])
    }

    pub fn prob_at(&self, index: usize) -> Result<f64> {
        self.probs.get(index).copied().ok_or(Error::IndexOutOfRange {
            index,
            size: self.len(),
        })
    }

    pub fn same_domain(&self, other: &Self) -> bool {
        self.labels == other.labels
    }

    fn require_same_domain(&self, other: &Self) -> Result<()> {
        if self.same_domain(other) {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!(
                "{:?} vs {:?}",
                self.labels, other.labels
            )))
        }
    }

    /// Draws one index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding: fall back to the last index with positive mass
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// An exact joint distribution `p(x, y)` stored row-major as `|X| x |Y|`.
///
/// Marginals are fixed at construction. For [`JointDistribution::product`]
/// they are the factors themselves, so independence is represented exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    x_labels: Vec<String>,
    y_labels: Vec<String>,
    probs: Vec<f64>,
    marginal_x: Vec<f64>,
    marginal_y: Vec<f64>,
}

impl JointDistribution {
    pub fn new(x_labels: Vec<String>, y_labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if x_labels.is_empty() || y_labels.is_empty() {
            return Err(Error::Empty("joint domain"));
        }
        check_unique(&x_labels)?;
        check_unique(&y_labels)?;
        if rows.len() != x_labels.len() || rows.iter().any(|r| r.len() != y_labels.len()) {
            return Err(Error::DomainMismatch(format!(
                "joint table is not {}x{}",
                x_labels.len(),
                y_labels.len()
            )));
        }
        let mut probs: Vec<f64> = rows.into_iter().flatten().collect();
        validate_probs(&mut probs)?;
        let ny = y_labels.len();
        let marginal_x = probs.chunks(ny).map(|r| r.iter().sum()).collect();
        let marginal_y = (0..ny)
            .map(|y| probs.iter().skip(y).step_by(ny).sum())
            .collect();
        Ok(Self {
            x_labels,
            y_labels,
            probs,
            marginal_x,
            marginal_y,
        })
    }

    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, |r| r.len());
        Self::new(index_labels(nx), index_labels(ny), rows)
    }

    /// The independent joint `p(x) p(y)`.
    pub fn product(px: &FiniteDistribution, py: &FiniteDistribution) -> Result<Self> {
        let probs = px
            .probs
            .iter()
            .flat_map(|a| py.probs.iter().map(move |b| a * b))
            .collect();
        Ok(Self {
            x_labels: px.labels.clone(),
            y_labels: py.labels.clone(),
            probs,
            marginal_x: px.probs.clone(),
            marginal_y: py.probs.clone(),
        })
    }

    /// Builds `p(x, y) = p(y) p(x | y)`.
    pub fn from_conditional(py: &FiniteDistribution, px_given_y: &ConditionalBelief) -> Result<Self> {
        if px_given_y.given_labels() != py.labels() {
            return Err(Error::DomainMismatch(
                "conditioning labels differ from the marginal's labels".into(),
            ));
        }
        let x_labels = px_given_y.target_labels().to_vec();
        let rows = (0..x_labels.len())
            .map(|x| {
                py.probs
                    .iter()
                    .zip(&px_given_y.rows)
                    .map(|(p, row)| p * row.probs[x])
                    .collect()
            })
            .collect();
        Self::new(x_labels, py.labels.clone(), rows)
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn y_labels(&self) -> &[String] {
        &self.y_labels
    }

    pub fn nx(&self) -> usize {
        self.x_labels.len()
    }

    pub fn ny(&self) -> usize {
        self.y_labels.len()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.ny() + y]
    }

    pub fn marginal_x(&self) -> FiniteDistribution {
        FiniteDistribution {
            labels: self.x_labels.clone(),
            probs: self.marginal_x.clone(),
        }
    }

    pub fn marginal_y(&self) -> FiniteDistribution {
        FiniteDistribution {
            labels: self.y_labels.clone(),
            probs: self.marginal_y.clone(),
        }
    }

    /// `p(x | y)`; rows with `p(y) = 0` are undefined and set to uniform.
    pub fn conditional_x_given_y(&self) -> ConditionalBelief {
        let rows = (0..self.ny())
            .map(|y| {
                let py = self.marginal_y[y];
                let probs = if py > 0.0 {
                    (0..self.nx()).map(|x| self.get(x, y) / py).collect()
                } else {
                    vec![1.0 / self.nx() as f64; self.nx()]
                };
                FiniteDistribution {
                    labels: self.x_labels.clone(),
                    probs,
                }
            })
            .collect();
        ConditionalBelief {
            given_labels: self.y_labels.clone(),
            rows,
        }
    }

    pub fn transpose(&self) -> Self {
        let (nx, ny) = (self.nx(), self.ny());
        let probs = (0..ny)
            .flat_map(|y| (0..nx).map(move |x| (x, y)))
            .map(|(x, y)| self.probs[x * ny + y])
            .collect();
        Self {
            x_labels: self.y_labels.clone(),
            y_labels: self.x_labels.clone(),
            probs,
            marginal_x: self.marginal_y.clone(),
            marginal_y: self.marginal_x.clone(),
        }
    }

    /// Draws `n` pairs, returned as `(y, x)` index pairs.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<(usize, usize)> {
        let ny = self.ny();
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let cell = cdf.partition_point(|&c| c <= u).min(last);
                (cell % ny, cell / ny)
            })
            .collect()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A belief `q(x | y)`: one distribution over `X` per conditioning symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBelief {
    given_labels: Vec<String>,
    rows: Vec<FiniteDistribution>,
}

impl ConditionalBelief {
    pub fn new(given_labels: Vec<String>, rows: Vec<FiniteDistribution>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("conditional belief"));
        }
        if given_labels.len() != rows.len() {
            return Err(Error::DomainMismatch(format!(
                "{} conditioning labels but {} rows",
                given_labels.len(),
                rows.len()
            )));
        }
        check_unique(&given_labels)?;
        let first = &rows[0];
        if let Some(bad) = rows.iter().find(|r| !r.same_domain(first)) {
            return Err(Error::DomainMismatch(format!(
                "rows over {:?} and {:?}",
                first.labels, bad.labels
            )));
        }
        Ok(Self { given_labels, rows })
    }

    pub fn from_rows(rows: Vec<FiniteDistribution>) -> Result<Self> {
        Self::new(index_labels(rows.len()), rows)
    }

    /// The same row for every conditioning symbol.
    pub fn constant(given_labels: Vec<String>, row: FiniteDistribution) -> Result<Self> {
        let rows = vec![row; given_labels.len()];
        Self::new(given_labels, rows)
    }

    pub fn given_labels(&self) -> &[String] {
        &self.given_labels
    }

    pub fn target_labels(&self) -> &[String] {
        &self.rows[0].labels
    }

    pub fn rows(&self) -> &[FiniteDistribution] {
        &self.rows
    }

    pub fn row(&self, y: usize) -> Result<&FiniteDistribution> {
        self.rows.get(y).ok_or(Error::IndexOutOfRange {
            index: y,
            size: self.rows.len(),
        })
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[y].probs[x]
    }
}

/// Surprisal `-log2 p(x)` of a symbol; `+inf` when `p(x) = 0`.
pub fn surprisal(p: &FiniteDistribution, symbol: &str) -> Result<f64> {
    Ok(-p.prob(symbol)?.log2())
}

/// Shannon entropy `-sum p log2 p`.
pub fn entropy(p: &FiniteDistribution) -> f64 {
    -stable_sum(
        p.probs
            .iter()
            .map(|&v| if v > 0.0 { v * v.log2() } else { 0.0 }),
    )
}

/// `H(X | Y) = -sum p(x,y) log2 p(x|y)`.
pub fn conditional_entropy(j: &JointDistribution) -> f64 {
    let ny = j.ny();
    -stable_sum(j.probs.iter().enumerate().map(|(cell, &pxy)| {
        if pxy > 0.0 {
            pxy * (pxy / j.marginal_y[cell % ny]).log2()
        } else {
            0.0
        }
    }))
}

/// `I(X; Y)`, computed as `sum p(x,y) log2 [p(x,y) / (p(x) p(y))]`, which
/// equals `H(X) - H(X|Y)` and is exactly symmetric under transposition.
pub fn mutual_information(j: &JointDistribution) -> f64 {
    let ny = j.ny();
    stable_sum(j.probs.iter().enumerate().map(|(cell, &pxy)| {
        plogp_ratio(pxy, j.marginal_x[cell / ny] * j.marginal_y[cell % ny])
    }))
}

/// `KL(p || q)` in bits; `+inf` when `q` misses mass of `p`.
pub fn kl_divergence(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    p.require_same_domain(q)?;
    Ok(stable_sum(
        p.probs.iter().zip(&q.probs).map(|(&a, &b)| plogp_ratio(a, b)),
    ))
}

/// `-sum p log2 q`; `+inf` when `q` is zero where `p` is positive.
pub fn cross_entropy(p_true: &FiniteDistribution, q_belief: &FiniteDistribution) -> Result<f64> {
    p_true.require_same_domain(q_belief)?;
    Ok(-stable_sum(p_true.probs.iter().zip(&q_belief.probs).map(
        |(&a, &b)| if a > 0.0 { a * b.log2() } else { 0.0 },
    )))
}

/// Entropy of a belief taken under the belief itself.
pub fn belief_entropy(q: &FiniteDistribution) -> f64 {
    entropy(q)
}

/// `H_b(X) - sum_y q(y) H_b(X | Y = y)`. Ungrounded in any true
/// distribution; may take either sign.
pub fn belief_mi(
    qx: &FiniteDistribution,
    qx_given_y: &ConditionalBelief,
    qy: &FiniteDistribution,
) -> Result<f64> {
    if qx_given_y.target_labels() != qx.labels() {
        return Err(Error::DomainMismatch(
            "conditional rows and marginal are over different domains".into(),
        ));
    }
    if qx_given_y.given_labels() != qy.labels() {
        return Err(Error::DomainMismatch(
            "conditioning labels differ from the belief over Y".into(),
        ));
    }
    let conditional: f64 = qy
        .probs
        .iter()
        .zip(&qx_given_y.rows)
        .map(|(w, row)| w * belief_entropy(row))
        .sum();
    Ok(belief_entropy(qx) - conditional)
}

/// Posterior-predictive Bayesian entropy: a cross-entropy whose
/// expectation is over the true distribution.
pub fn bayesian_entropy(p_true: &FiniteDistribution, q_predictive: &FiniteDistribution) -> Result<f64> {
    cross_entropy(p_true, q_predictive)
}

/// `H_theta(X | Y) = -sum_{x,y} p(x,y) log2 q(x|y)`.
pub fn bayesian_conditional_entropy(p_joint: &JointDistribution, qx_given_y: &ConditionalBelief) -> Result<f64> {
    check_conditional_domain(p_joint, qx_given_y)?;
    let ny = p_joint.ny();
    Ok(-stable_sum(p_joint.probs.iter().enumerate().map(|(cell, &pxy)| {
        if pxy > 0.0 {
            pxy * qx_given_y.prob(cell / ny, cell % ny).log2()
        } else {
            0.0
        }
    })))
}

fn check_conditional_domain(p_joint: &JointDistribution, qx_given_y: &ConditionalBelief) -> Result<()> {
    if qx_given_y.target_labels() != p_joint.x_labels() || qx_given_y.given_labels() != p_joint.y_labels() {
        return Err(Error::DomainMismatch(
            "conditional belief does not match the joint's domains".into(),
        ));
    }
    Ok(())
}

/// Bayesian mutual information `I_theta(Y -> X) = H_theta(X) - H_theta(X | Y)`.
///
/// May be negative. Callers must not clamp it.
pub fn bayesian_mi(
    p_joint: &JointDistribution,
    qx: &FiniteDistribution,
    qx_given_y: &ConditionalBelief,
) -> Result<f64> {
    let unconditional = bayesian_entropy(&p_joint.marginal_x(), qx)?;
    let conditional = bayesian_conditional_entropy(p_joint, qx_given_y)?;
    Ok(unconditional - conditional)
}

/// Monte-Carlo form of [`bayesian_mi`]: the sample mean of
/// `log2 q(x|y) - log2 q(x)` over `(y, x)` index pairs drawn from the truth.
pub fn empirical_bayesian_mi(
    samples: &[(usize, usize)],
    qx: &FiniteDistribution,
    qx_given_y: &ConditionalBelief,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    if qx_given_y.target_labels() != qx.labels() {
        return Err(Error::DomainMismatch(
            "conditional rows and marginal are over different domains".into(),
        ));
    }
    let mut terms = Vec::with_capacity(samples.len());
    for &(y, x) in samples {
        let conditional = qx_given_y.row(y)?.prob_at(x)?;
        let marginal = qx.prob_at(x)?;
        terms.push(conditional.log2() - marginal.log2());
    }
    Ok(stable_sum(terms.iter().copied()) / samples.len() as f64)
}
