//! Bayesian agents: a belief family, a prior, and posterior-predictive
//! queries that feed [`crate::info`].
//!
//! The conjugate agents keep sufficient statistics (counts) only, so
//! observing is exchangeable by construction. Enumerated families keep
//! posterior weights in log space.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::info::{bayesian_mi, ConditionalBelief, FiniteDistribution, JointDistribution};
use crate::numerics::log_sum_exp;

/// Default Dirichlet concentration (add-one smoothing).
pub const DEFAULT_ALPHA: f64 = 1.0;

fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn check_concentration(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::Empty("concentration vector"));
    }
    match alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        Some(a) => Err(Error::InvalidArgument(format!("concentration {a} is not positive"))),
        None => Ok(()),
    }
}

/// Dirichlet prior over a categorical belief; posterior is tracked by counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCategoricalAgent {
    labels: Vec<String>,
    concentration: Vec<f64>,
    counts: Vec<u64>,
}

impl DirichletCategoricalAgent {
    pub fn new(labels: Vec<String>, concentration: Vec<f64>) -> Result<Self> {
        check_concentration(&concentration)?;
        if labels.len() != concentration.len() {
            return Err(Error::DomainMismatch(format!(
                "{} labels but {} concentrations",
                labels.len(),
                concentration.len()
            )));
        }
        // reuses the label checks of a valid distribution
        FiniteDistribution::uniform_over(labels.clone())?;
        let n = labels.len();
        Ok(Self {
            labels,
            concentration,
            counts: vec![0; n],
        })
    }

    /// Symmetric prior over `n` index-labelled classes.
    pub fn symmetric(n: usize, alpha: f64) -> Result<Self> {
        Self::new(index_labels(n), vec![alpha; n])
    }

    /// The add-one (Laplace) agent over `n` classes.
    pub fn laplace(n: usize) -> Result<Self> {
        Self::symmetric(n, DEFAULT_ALPHA)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn n_observations(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn observe(&mut self, symbol: &str) -> Result<()> {
        let index = self
            .labels
            .iter()
            .position(|l| l == symbol)
            .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))?;
        self.counts[index] += 1;
        Ok(())
    }

    pub fn observe_index(&mut self, index: usize) -> Result<()> {
        self.observe_count(index, 1)
    }

    pub fn observe_count(&mut self, index: usize, count: u64) -> Result<()> {
        let size = self.counts.len();
        let slot = self
            .counts
            .get_mut(index)
            .ok_or(Error::IndexOutOfRange { index, size })?;
        *slot += count;
        Ok(())
    }

    /// Value-semantic form of [`Self::observe`].
    pub fn observed(mut self, symbol: &str) -> Result<Self> {
        self.observe(symbol)?;
        Ok(self)
    }

    pub fn observe_all<'a, I: IntoIterator<Item = &'a str>>(&mut self, symbols: I) -> Result<()> {
        symbols.into_iter().try_for_each(|s| self.observe(s))
    }

    /// `(count_t + alpha_t) / (N + sum alpha)`.
    pub fn posterior_predictive(&self) -> FiniteDistribution {
        let total = self.n_observations() as f64 + self.concentration.iter().sum::<f64>();
        let probs = self
            .counts
            .iter()
            .zip(&self.concentration)
            .map(|(&n, a)| (n as f64 + a) / total)
            .collect();
        FiniteDistribution::new(self.labels.clone(), probs).expect("predictive of a valid agent")
    }

    /// Natural-log probability of the observed sequence (in any fixed order)
    /// under the Dirichlet–multinomial marginal likelihood.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let alpha_total: f64 = self.concentration.iter().sum();
        let n = self.n_observations() as f64;
        let per_class: f64 = self
            .counts
            .iter()
            .zip(&self.concentration)
            .map(|(&c, &a)| ln_gamma(c as f64 + a) - ln_gamma(a))
            .sum();
        ln_gamma(alpha_total) - ln_gamma(n + alpha_total) + per_class
    }
}

/// One independent Dirichlet–categorical agent per conditioning symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDirichletAgent {
    given_labels: Vec<String>,
    rows: Vec<DirichletCategoricalAgent>,
}

impl ConditionalDirichletAgent {
    pub fn new(given_labels: Vec<String>, template: DirichletCategoricalAgent) -> Result<Self> {
        if given_labels.is_empty() {
            return Err(Error::Empty("conditioning domain"));
        }
        FiniteDistribution::uniform_over(given_labels.clone())?;
        let rows = vec![template; given_labels.len()];
        Ok(Self { given_labels, rows })
    }

    /// `ny` rows, each a symmetric agent over `nx` classes.
    pub fn symmetric(nx: usize, ny: usize, alpha: f64) -> Result<Self> {
        Self::new(index_labels(ny), DirichletCategoricalAgent::symmetric(nx, alpha)?)
    }

    pub fn rows(&self) -> &[DirichletCategoricalAgent] {
        &self.rows
    }

    pub fn observe_index(&mut self, y: usize, x: usize) -> Result<()> {
        let size = self.rows.len();
        self.rows
            .get_mut(y)
            .ok_or(Error::IndexOutOfRange { index: y, size })?
            .observe_index(x)
    }

    pub fn conditional_belief(&self) -> ConditionalBelief {
        let rows = self.rows.iter().map(|r| r.posterior_predictive()).collect();
        ConditionalBelief::new(self.given_labels.clone(), rows).expect("rows share a domain")
    }
}

/// The four beliefs an agent holds about a pair `(X, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet {
    pub q_x: FiniteDistribution,
    pub q_y: FiniteDistribution,
    pub q_x_given_y: ConditionalBelief,
    pub q_y_given_x: ConditionalBelief,
}

impl BeliefSet {
    /// `I_theta(Y -> X)`: information `Y` gives the agent about `X`.
    pub fn mi_y_to_x(&self, p: &JointDistribution) -> Result<f64> {
        bayesian_mi(p, &self.q_x, &self.q_x_given_y)
    }

    /// `I_theta(X -> Y)`.
    pub fn mi_x_to_y(&self, p: &JointDistribution) -> Result<f64> {
        bayesian_mi(&p.transpose(), &self.q_y, &self.q_y_given_x)
    }

    /// Largest cell-wise violation of `q(x|y) q(y) = q(y|x) q(x)`.
    pub fn bayes_rule_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (y, qy) in self.q_y.probs().iter().enumerate() {
            for (x, qx) in self.q_x.probs().iter().enumerate() {
                let lhs = self.q_x_given_y.prob(x, y) * qy;
                let rhs = self.q_y_given_x.prob(y, x) * qx;
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    pub fn is_consistent(&self, tolerance: f64) -> bool {
        self.bayes_rule_residual() <= tolerance
    }
}

/// A single Dirichlet over the cells of the joint table. All four beliefs
/// come from one predictive joint, so the agent is consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDirichletAgent {
    nx: usize,
    ny: usize,
    concentration: Vec<f64>,
    counts: Vec<u64>,
}

impl JointDirichletAgent {
    /// `concentration` is row-major `nx x ny`.
    pub fn new(nx: usize, ny: usize, concentration: Vec<f64>) -> Result<Self> {
        check_concentration(&concentration)?;
        if nx == 0 || ny == 0 || concentration.len() != nx * ny {
            return Err(Error::DomainMismatch(format!(
                "{} concentrations for a {nx}x{ny} table",
                concentration.len()
            )));
        }
        Ok(Self {
            nx,
            ny,
            concentration,
            counts: vec![0; nx * ny],
        })
    }

    pub fn symmetric(nx: usize, ny: usize, alpha: f64) -> Result<Self> {
        Self::new(nx, ny, vec![alpha; nx * ny])
    }

    pub fn observe_index(&mut self, x: usize, y: usize) -> Result<()> {
        self.observe_count(x, y, 1)
    }

    pub fn observe_count(&mut self, x: usize, y: usize, count: u64) -> Result<()> {
        if x >= self.nx {
            return Err(Error::IndexOutOfRange { index: x, size: self.nx });
        }
        if y >= self.ny {
            return Err(Error::IndexOutOfRange { index: y, size: self.ny });
        }
        self.counts[x * self.ny + y] += count;
        Ok(())
    }

    pub fn n_observations(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn predictive_joint(&self) -> JointDistribution {
        let total = self.n_observations() as f64 + self.concentration.iter().sum::<f64>();
        let rows = (0..self.nx)
            .map(|x| {
                (0..self.ny)
                    .map(|y| {
                        let cell = x * self.ny + y;
                        (self.counts[cell] as f64 + self.concentration[cell]) / total
                    })
                    .collect()
            })
            .collect();
        JointDistribution::from_matrix(rows).expect("predictive of a valid agent")
    }

    pub fn beliefs(&self) -> BeliefSet {
        let joint = self.predictive_joint();
        BeliefSet {
            q_x: joint.marginal_x(),
            q_y: joint.marginal_y(),
            q_x_given_y: joint.conditional_x_given_y(),
            q_y_given_x: joint.transpose().conditional_x_given_y(),
        }
    }
}

/// Two independent `c`-class categoricals, queried at `d_0` only:
/// `q(x) = 1/c` and `q(x|y) = 2/(c+1)` when `x = y`, else `1/(c+1)`.
///
/// The agent's beliefs about `Y` are taken as uniform, both marginally and
/// given `X`; that pair does not cohere with `q(x|y)` under Bayes' rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IllustrativeAgent {
    classes: usize,
}

/// Quantities reported for the illustrative agent, all in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IllustrativeRecord {
    pub classes: usize,
    pub mi: f64,
    pub belief_mi: f64,
    pub bayesian_mi_at_d0: f64,
}

impl IllustrativeAgent {
    pub fn new(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn q_x(&self) -> FiniteDistribution {
        FiniteDistribution::uniform(self.classes).expect("c >= 2")
    }

    pub fn q_x_given_y(&self) -> ConditionalBelief {
        let c = self.classes;
        let rows = (0..c)
            .map(|y| {
                let probs = (0..c)
                    .map(|x| if x == y { 2.0 } else { 1.0 } / (c as f64 + 1.0))
                    .collect();
                FiniteDistribution::from_probs(probs).expect("row sums to 1")
            })
            .collect();
        ConditionalBelief::from_rows(rows).expect("rows share a domain")
    }

    pub fn beliefs(&self) -> BeliefSet {
        let uniform = self.q_x();
        BeliefSet {
            q_x: uniform.clone(),
            q_y: uniform.clone(),
            q_x_given_y: self.q_x_given_y(),
            q_y_given_x: ConditionalBelief::constant(uniform.labels().to_vec(), uniform).expect("valid row"),
        }
    }

    /// The true world: `X` and `Y` independent and uniform.
    pub fn true_joint(&self) -> JointDistribution {
        let u = self.q_x();
        JointDistribution::product(&u, &u).expect("product of valid marginals")
    }
}

/// MI, belief MI and Bayesian MI at `d_0` for the `c`-class illustrative agent.
pub fn illustrative_example(classes: usize) -> Result<IllustrativeRecord> {
    let agent = IllustrativeAgent::new(classes)?;
    let truth = agent.true_joint();
    let beliefs = agent.beliefs();
    Ok(IllustrativeRecord {
        classes,
        mi: crate::info::mutual_information(&truth),
        belief_mi: crate::info::belief_mi(&beliefs.q_x, &beliefs.q_x_given_y, &beliefs.q_y)?,
        bayesian_mi_at_d0: beliefs.mi_y_to_x(&truth)?,
    })
}

fn normalised_log_weights(log_posterior: &[f64]) -> Result<Vec<f64>> {
    let z = log_sum_exp(log_posterior);
    if !z.is_finite() {
        return Err(Error::Numerical(
            "every family member has zero posterior weight".into(),
        ));
    }
    Ok(log_posterior.iter().map(|l| (l - z).exp()).collect())
}

fn log_prior(prior: &[f64], k: usize) -> Result<Vec<f64>> {
    if prior.len() != k {
        return Err(Error::DomainMismatch(format!(
            "{} prior weights for {k} family members",
            prior.len()
        )));
    }
    let prior = FiniteDistribution::from_probs(prior.to_vec())?;
    if prior.probs().iter().any(|&w| w <= 0.0) {
        return Err(Error::InvalidArgument("prior weights must be positive".into()));
    }
    Ok(prior.probs().iter().map(|w| w.ln()).collect())
}

/// A finite family of categorical beliefs with a prior over members.
///
/// The truth need not belong to the family; the posterior then
/// concentrates on the member nearest the data in KL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedFamilyAgent {
    members: Vec<FiniteDistribution>,
    log_prior: Vec<f64>,
    counts: Vec<u64>,
}

impl RestrictedFamilyAgent {
    pub fn new(members: Vec<FiniteDistribution>, prior: &[f64]) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("belief family"))?;
        if members.iter().any(|m| !m.same_domain(first)) {
            return Err(Error::DomainMismatch("family members differ in domain".into()));
        }
        let log_prior = log_prior(prior, members.len())?;
        let counts = vec![0; first.len()];
        Ok(Self {
            members,
            log_prior,
            counts,
        })
    }

    pub fn uniform_prior(members: Vec<FiniteDistribution>) -> Result<Self> {
        let k = members.len().max(1);
        Self::new(members, &vec![1.0 / k as f64; k])
    }

    pub fn members(&self) -> &[FiniteDistribution] {
        &self.members
    }

    pub fn observe_index(&mut self, index: usize) -> Result<()> {
        self.observe_count(index, 1)
    }

    pub fn observe_count(&mut self, index: usize, count: u64) -> Result<()> {
        let size = self.counts.len();
        *self
            .counts
            .get_mut(index)
            .ok_or(Error::IndexOutOfRange { index, size })? += count;
        Ok(())
    }

    fn log_posterior(&self) -> Vec<f64> {
        self.members
            .iter()
            .zip(&self.log_prior)
            .map(|(m, lp)| {
                lp + self
                    .counts
                    .iter()
                    .zip(m.probs())
                    .filter(|(&n, _)| n > 0)
                    .map(|(&n, q)| n as f64 * q.ln())
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn posterior_weights(&self) -> Result<Vec<f64>> {
        normalised_log_weights(&self.log_posterior())
    }

    /// Direct linear-space evaluation; underflows for moderate data sizes and
    /// exists to cross-check the log-space path.
    pub fn posterior_weights_linear(&self) -> Result<Vec<f64>> {
        let unnormalised: Vec<f64> = self
            .members
            .iter()
            .zip(&self.log_prior)
            .map(|(m, lp)| {
                let mut w = lp.exp();
                for (&n, q) in self.counts.iter().zip(m.probs()) {
                    w *= q.powi(n as i32);
                }
                w
            })
            .collect();
        let z: f64 = unnormalised.iter().sum();
        if !(z > 0.0) {
            return Err(Error::Numerical("linear-space weights underflowed".into()));
        }
        Ok(unnormalised.iter().map(|w| w / z).collect())
    }

    /// Mixture of members weighted by the posterior.
    pub fn posterior_predictive(&self) -> Result<FiniteDistribution> {
        let weights = self.posterior_weights()?;
        let n = self.members[0].len();
        let mut probs = vec![0.0; n];
        for (w, m) in weights.iter().zip(&self.members) {
            for (acc, q) in probs.iter_mut().zip(m.probs()) {
                *acc += w * q;
            }
        }
        FiniteDistribution::new(self.members[0].labels().to_vec(), probs)
    }
}

/// A finite family of conditional beliefs `q_k(x|y)` with a prior over `k`;
/// each observed pair contributes `q_k(x|y)` to member `k`'s likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedConditionalAgent {
    members: Vec<ConditionalBelief>,
    log_prior: Vec<f64>,
    /// Row-major `nx x ny` pair counts.
    counts: Vec<u64>,
    nx: usize,
    ny: usize,
}

impl RestrictedConditionalAgent {
    pub fn new(members: Vec<ConditionalBelief>, prior: &[f64]) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("belief family"))?;
        if members
            .iter()
            .any(|m| m.target_labels() != first.target_labels() || m.given_labels() != first.given_labels())
        {
            return Err(Error::DomainMismatch("family members differ in domain".into()));
        }
        let nx = first.target_labels().len();
        let ny = first.given_labels().len();
        let log_prior = log_prior(prior, members.len())?;
        Ok(Self {
            members,
            log_prior,
            counts: vec![0; nx * ny],
            nx,
            ny,
        })
    }

    pub fn uniform_prior(members: Vec<ConditionalBelief>) -> Result<Self> {
        let k = members.len().max(1);
        Self::new(members, &vec![1.0 / k as f64; k])
    }

    pub fn observe_count(&mut self, x: usize, y: usize, count: u64) -> Result<()> {
        if x >= self.nx {
            return Err(Error::IndexOutOfRange { index: x, size: self.nx });
        }
        if y >= self.ny {
            return Err(Error::IndexOutOfRange { index: y, size: self.ny });
        }
        self.counts[x * self.ny + y] += count;
        Ok(())
    }

    pub fn posterior_weights(&self) -> Result<Vec<f64>> {
        let log_posterior: Vec<f64> = self
            .members
            .iter()
            .zip(&self.log_prior)
            .map(|(m, lp)| {
                let mut total = *lp;
                for (cell, &n) in self.counts.iter().enumerate() {
                    if n > 0 {
                        total += n as f64 * m.prob(cell / self.ny, cell % self.ny).ln();
                    }
                }
                total
            })
            .collect();
        normalised_log_weights(&log_posterior)
    }

    pub fn posterior_predictive(&self) -> Result<ConditionalBelief> {
        let weights = self.posterior_weights()?;
        let first = &self.members[0];
        let rows = (0..self.ny)
            .map(|y| {
                let probs = (0..self.nx)
                    .map(|x| weights.iter().zip(&self.members).map(|(w, m)| w * m.prob(x, y)).sum())
                    .collect();
                FiniteDistribution::new(first.target_labels().to_vec(), probs)
            })
            .collect::<Result<Vec<_>>>()?;
        ConditionalBelief::new(first.given_labels().to_vec(), rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::{belief_entropy, kl_divergence, mutual_information};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(p: &[f64]) -> FiniteDistribution {
        FiniteDistribution::from_probs(p.to_vec()).unwrap()
    }

    #[test]
    fn laplace_predictive_examples() {
        let agent = DirichletCategoricalAgent::laplace(3).unwrap();
        assert_eq!(agent.posterior_predictive().probs(), &[1.0 / 3.0; 3]);

        let mut agent = DirichletCategoricalAgent::laplace(2).unwrap();
        agent.observe_count(0, 2).unwrap();
        assert_eq!(agent.posterior_predictive().probs(), &[0.75, 0.25]);

        let mut agent = DirichletCategoricalAgent::laplace(3).unwrap();
        for (i, n) in [5, 3, 2].into_iter().enumerate() {
            agent.observe_count(i, n).unwrap();
        }
        let p = agent.posterior_predictive();
        for (got, want) in p.probs().iter().zip([6.0 / 13.0, 4.0 / 13.0, 3.0 / 13.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn observe_updates_counts() {
        let agent = DirichletCategoricalAgent::laplace(2).unwrap().observed("0").unwrap();
        let p = agent.posterior_predictive();
        assert_abs_diff_eq!(p.probs()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(
            DirichletCategoricalAgent::laplace(2).unwrap().observe("7"),
            Err(Error::UnknownSymbol(_))
        ));

        let mut twice = DirichletCategoricalAgent::laplace(2).unwrap();
        twice.observe("1").unwrap();
        twice.observe("1").unwrap();
        let mut batch = DirichletCategoricalAgent::laplace(2).unwrap();
        batch.observe_count(1, 2).unwrap();
        assert_eq!(twice.posterior_predictive(), batch.posterior_predictive());

        let mut many = DirichletCategoricalAgent::laplace(2).unwrap();
        many.observe_count(0, 1_000_000).unwrap();
        assert!(many.posterior_predictive().probs()[0] > 0.999_99);
    }

    #[test]
    fn rejects_bad_concentration() {
        assert!(DirichletCategoricalAgent::symmetric(2, 0.0).is_err());
        assert!(DirichletCategoricalAgent::symmetric(2, f64::NAN).is_err());
        assert!(JointDirichletAgent::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn marginal_likelihood_matches_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = DirichletCategoricalAgent::laplace(3).unwrap();
        let mut chain = 0.0;
        for _ in 0..50 {
            let t = rng.random_range(0..3);
            chain += agent.posterior_predictive().probs()[t].ln();
            agent.observe_index(t).unwrap();
        }
        assert_abs_diff_eq!(chain, agent.log_marginal_likelihood(), epsilon = 1e-10);
    }

    #[test]
    fn illustrative_two_classes() {
        let r = illustrative_example(2).unwrap();
        assert_eq!(r.mi, 0.0);
        // 1 - H(2/3, 1/3) and (1/2) log2(4/3) + (1/2) log2(2/3)
        assert_abs_diff_eq!(r.belief_mi, 0.081_704_165_945_510_4, epsilon = 1e-12);
        assert_abs_diff_eq!(r.bayesian_mi_at_d0, -0.084_962_500_721_156_2, epsilon = 1e-12);
        assert_abs_diff_eq!(belief_entropy(&dist(&[2.0 / 3.0, 1.0 / 3.0])), 1.0 - r.belief_mi, epsilon = 1e-15);
        assert!(illustrative_example(1).is_err());
    }

    #[test]
    fn illustrative_closed_forms_and_limit() {
        let mut last = (0.0, 0.0);
        for c in 2..=200usize {
            let r = illustrative_example(c).unwrap();
            let cf = c as f64;
            let row_entropy = -(2.0 / (cf + 1.0)) * (2.0 / (cf + 1.0)).log2()
                - (cf - 1.0) / (cf + 1.0) * (1.0 / (cf + 1.0)).log2();
            let bayes = (2.0 * cf / (cf + 1.0)).log2() / cf + (cf - 1.0) / cf * (cf / (cf + 1.0)).log2();
            assert_eq!(r.mi, 0.0);
            assert_abs_diff_eq!(r.belief_mi, cf.log2() - row_entropy, epsilon = 1e-10);
            assert_abs_diff_eq!(r.bayesian_mi_at_d0, bayes, epsilon = 1e-10);
            assert!(r.belief_mi > 0.0 && r.bayesian_mi_at_d0 < 0.0, "c = {c}");
            last = (r.belief_mi, -r.bayesian_mi_at_d0);
        }
        assert!(last.0 < 1e-2 && last.1 < 1e-2);
    }

    #[test]
    fn illustrative_agent_is_inconsistent() {
        for c in 2..=10 {
            assert!(IllustrativeAgent::new(c).unwrap().beliefs().bayes_rule_residual() > 1e-3);
        }
    }

    #[test]
    fn joint_agent_beliefs() {
        let agent = JointDirichletAgent::symmetric(3, 2, 1.0).unwrap();
        let b = agent.beliefs();
        assert_eq!(b.q_x.probs(), &[1.0 / 3.0; 3]);
        assert_eq!(b.q_y.probs(), &[0.5; 2]);
        assert!(b.q_x_given_y.rows().iter().all(|r| r.probs().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15)));

        let mut agent = agent;
        agent.observe_index(1, 0).unwrap();
        let b = agent.beliefs();
        assert!(b.q_x_given_y.prob(1, 0) > b.q_x.probs()[1]);
    }

    #[test]
    fn joint_agent_consistency_over_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (nx, ny) = (rng.random_range(2..6), rng.random_range(2..6));
            let mut agent = JointDirichletAgent::symmetric(nx, ny, rng.random_range(0.1..3.0)).unwrap();
            for _ in 0..rng.random_range(0..200) {
                agent.observe_index(rng.random_range(0..nx), rng.random_range(0..ny)).unwrap();
            }
            assert!(agent.beliefs().bayes_rule_residual() <= 1e-12);
        }
    }

    #[test]
    fn restricted_family_examples() {
        let family = vec![dist(&[0.8, 0.2]), dist(&[0.3, 0.7])];
        let agent = RestrictedFamilyAgent::uniform_prior(family.clone()).unwrap();
        assert_abs_diff_eq!(agent.posterior_predictive().unwrap().probs()[0], 0.55, epsilon = 1e-15);

        // truth (0.6, 0.4) is nearer the first member in KL
        let truth = dist(&[0.6, 0.4]);
        let k0 = kl_divergence(&truth, &family[0]).unwrap();
        let k1 = kl_divergence(&truth, &family[1]).unwrap();
        assert!(k0 < k1);
        let mut agent = agent;
        agent.observe_count(0, 6_000).unwrap();
        agent.observe_count(1, 4_000).unwrap();
        let q = agent.posterior_predictive().unwrap();
        assert_abs_diff_eq!(q.probs()[0], 0.8, epsilon = 1e-12);
        assert!(agent.posterior_weights_linear().is_err());

        let mut with_truth = RestrictedFamilyAgent::uniform_prior(vec![family[0].clone(), truth.clone()]).unwrap();
        with_truth.observe_count(0, 600).unwrap();
        with_truth.observe_count(1, 400).unwrap();
        assert_abs_diff_eq!(with_truth.posterior_predictive().unwrap().probs()[0], 0.6, epsilon = 1e-6);
    }

    #[test]
    fn restricted_family_all_zero_weight_is_an_error() {
        let mut agent = RestrictedFamilyAgent::uniform_prior(vec![dist(&[1.0, 0.0]), dist(&[1.0, 0.0])]).unwrap();
        agent.observe_index(1).unwrap();
        assert!(matches!(agent.posterior_predictive(), Err(Error::Numerical(_))));
    }

    #[test]
    fn restricted_conditional_concentrates() {
        let a = ConditionalBelief::from_rows(vec![dist(&[0.9, 0.1]), dist(&[0.1, 0.9])]).unwrap();
        let b = ConditionalBelief::from_rows(vec![dist(&[0.5, 0.5]), dist(&[0.5, 0.5])]).unwrap();
        let mut agent = RestrictedConditionalAgent::uniform_prior(vec![a.clone(), b]).unwrap();
        agent.observe_count(0, 0, 80).unwrap();
        agent.observe_count(1, 1, 80).unwrap();
        agent.observe_count(1, 0, 20).unwrap();
        agent.observe_count(0, 1, 20).unwrap();
        let q = agent.posterior_predictive().unwrap();
        assert_abs_diff_eq!(q.prob(0, 0), 0.9, epsilon = 1e-9);
    }

    #[test]
    fn consistent_agent_mi_is_symmetric() {
        let p = JointDistribution::from_matrix(vec![vec![0.3, 0.1], vec![0.05, 0.55]]).unwrap();
        let mut agent = JointDirichletAgent::symmetric(2, 2, 1.0).unwrap();
        let b = agent.beliefs();
        assert_eq!(b.mi_y_to_x(&p).unwrap(), 0.0);
        agent.observe_count(0, 0, 3).unwrap();
        agent.observe_count(1, 1, 4).unwrap();
        let b = agent.beliefs();
        assert_abs_diff_eq!(b.mi_y_to_x(&p).unwrap(), b.mi_x_to_y(&p).unwrap(), epsilon = 1e-12);
        assert!(mutual_information(&p) > 0.0);
    }

    proptest! {
        #[test]
        fn observation_order_is_irrelevant(seq in prop::collection::vec(0usize..4, 0..60), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut forward = DirichletCategoricalAgent::laplace(4).unwrap();
            seq.iter().for_each(|&t| forward.observe_index(t).unwrap());
            let mut shuffled = seq.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut other = DirichletCategoricalAgent::laplace(4).unwrap();
            shuffled.iter().for_each(|&t| other.observe_index(t).unwrap());
            prop_assert_eq!(forward.posterior_predictive(), other.posterior_predictive());
        }

        #[test]
        fn log_space_matches_linear_space(
            members in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 1..5),
            counts in prop::collection::vec(0u64..8, 3),
        ) {
            let family: Vec<_> = members
                .iter()
                .map(|w| FiniteDistribution::from_weights(vec!["a".into(), "b".into(), "c".into()], w).unwrap())
                .collect();
            let mut agent = RestrictedFamilyAgent::uniform_prior(family).unwrap();
            for (i, &n) in counts.iter().enumerate() {
                agent.observe_count(i, n).unwrap();
            }
            let log = agent.posterior_weights().unwrap();
            let lin = agent.posterior_weights_linear().unwrap();
            for (a, b) in log.iter().zip(&lin) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
