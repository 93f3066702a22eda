//! Numerical checks of the theory: each check builds a construction, measures
//! both sides of a claim in bits and returns a serialisable
//! [`TheoremReport`].
//!
//! Every check is single-threaded and a pure function of its parameters and
//! seed. Tolerances are multiplied by [`CheckOptions::tolerance_scale`], so a
//! scale of zero turns every "within tolerance" comparison into a failure.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::agents::{
    ConditionalDirichletAgent, DirichletCategoricalAgent, IllustrativeAgent, JointDirichletAgent,
    RestrictedConditionalAgent, RestrictedFamilyAgent,
};
use crate::error::{Error, Result};
use crate::info::{
    bayesian_mi, cross_entropy, entropy, kl_divergence, mutual_information,
    ConditionalBelief, FiniteDistribution, JointDistribution,
};
use crate::numerics::{derive_seed, integrate};

/// Identifiers of the available checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremId {
    T1,
    T1x,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    Mdl,
}

impl TheoremId {
    pub const ALL: [TheoremId; 9] = [
        TheoremId::T1,
        TheoremId::T1x,
        TheoremId::T2,
        TheoremId::T3,
        TheoremId::T4,
        TheoremId::T5,
        TheoremId::T6,
        TheoremId::T7,
        TheoremId::Mdl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::T1 => "t1",
            TheoremId::T1x => "t1x",
            TheoremId::T2 => "t2",
            TheoremId::T3 => "t3",
            TheoremId::T4 => "t4",
            TheoremId::T5 => "t5",
            TheoremId::T6 => "t6",
            TheoremId::T7 => "t7",
            TheoremId::Mdl => "mdl",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            TheoremId::T1 => "consistent agents have symmetric Bayesian MI",
            TheoremId::T1x => "an inconsistent agent has asymmetric Bayesian MI",
            TheoremId::T2 => "processing can increase Bayesian MI (no DPI)",
            TheoremId::T3 => "Bayesian MI is bounded by MI under the KL assumption",
            TheoremId::T4 => "well-formed agents converge to MI",
            TheoremId::T5 => "restricted families converge to V-information",
            TheoremId::T6 => "cross-entropy = entropy + KL",
            TheoremId::T7 => "ill-formed agents lose information",
            TheoremId::Mdl => "online code length, SDL trend, bounded Bayesian MI",
        }
    }

    fn stream(&self) -> u64 {
        TheoremId::ALL.iter().position(|id| id == self).unwrap() as u64
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown theorem id `{s}`")))
    }
}

/// Outcome of one check. A failing report carries the violating instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub id: TheoremId,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub parameters: Value,
    pub seed: u64,
    pub violation: Option<Value>,
}

impl TheoremReport {
    fn new(id: TheoremId, seed: u64, parameters: Value) -> Self {
        Self {
            id,
            passed: true,
            measured: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            parameters,
            seed,
            violation: None,
        }
    }

    fn measure(&mut self, key: &str, value: f64) {
        self.measured.insert(key.to_string(), value);
    }

    fn tolerance(&mut self, key: &str, value: f64) -> f64 {
        self.tolerances.insert(key.to_string(), value);
        value
    }

    /// Records a failed sub-check; the first violation is kept.
    fn fail(&mut self, instance: Value) {
        self.passed = false;
        if self.violation.is_none() {
            self.violation = Some(instance);
        }
    }

    fn require(&mut self, ok: bool, instance: impl FnOnce() -> Value) {
        if !ok {
            self.fail(instance());
        }
    }

    /// One line: id, verdict and the measured quantities.
    pub fn summary_line(&self) -> String {
        let measured: Vec<String> = self
            .measured
            .iter()
            .map(|(k, v)| format!("{k}={v:.6e}"))
            .collect();
        format!(
            "{:<4} {:<4} {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            measured.join(" ")
        )
    }
}

/// Settings shared by every check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    pub tolerance_scale: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance_scale: 1.0,
        }
    }
}

impl CheckOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn rng(&self, id: TheoremId) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[id.stream()]))
    }

    fn tol(&self, base: f64) -> f64 {
        base * self.tolerance_scale
    }
}

/// A point drawn uniformly from the probability simplex of size `n`.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> FiniteDistribution {
    FiniteDistribution::from_probs(random_simplex(rng, n)).expect("simplex point")
}

/// A joint drawn uniformly from the `nx * ny` simplex.
pub fn random_joint<R: Rng + ?Sized>(rng: &mut R, nx: usize, ny: usize) -> JointDistribution {
    let flat = random_simplex(rng, nx * ny);
    JointDistribution::from_matrix(flat.chunks(ny).map(|r| r.to_vec()).collect()).expect("simplex point")
}

fn random_conditional<R: Rng + ?Sized>(rng: &mut R, nx: usize, ny: usize) -> ConditionalBelief {
    ConditionalBelief::from_rows((0..ny).map(|_| random_distribution(rng, nx)).collect()).expect("rows share a domain")
}

fn joint_rows(j: &JointDistribution) -> Vec<Vec<f64>> {
    j.probs().chunks(j.ny()).map(|r| r.to_vec()).collect()
}

/// Sampled `(y, x)` pairs tallied into a row-major `nx x ny` count table.
fn tally(j: &JointDistribution, samples: &[(usize, usize)]) -> Vec<u64> {
    let mut counts = vec![0u64; j.nx() * j.ny()];
    for &(y, x) in samples {
        counts[x * j.ny() + y] += 1;
    }
    counts
}

/// Runs one check with its default parameters.
pub fn run_check(id: TheoremId, options: &CheckOptions) -> Result<TheoremReport> {
    match id {
        TheoremId::T1 => check_symmetry_consistent(100, options),
        TheoremId::T1x => check_symmetry_violated_inconsistent(2, options),
        TheoremId::T2 => check_dpi_violation(&PoissonSigmoidWorld::default(), 0, options),
        TheoremId::T3 => check_upper_bound(200, options),
        TheoremId::T4 => check_convergence_mi(&ConvergenceConfig::default(), options),
        TheoremId::T5 => check_convergence_v_info(&VInfoConfig::default(), options),
        TheoremId::T6 => check_decomposition(100, options),
        TheoremId::T7 => check_illformed_loss(&IllFormedConfig::default(), options),
        TheoremId::Mdl => check_mdl_sdl(&MdlConfig::default(), options),
    }
}

/// Runs the given checks in order.
pub fn run_checks(ids: &[TheoremId], options: &CheckOptions) -> Result<Vec<TheoremReport>> {
    ids.iter().map(|&id| run_check(id, options)).collect()
}

/// Random joints and joint-Dirichlet agents at random data sizes; both
/// directions of Bayesian MI must agree.
pub fn check_symmetry_consistent(trials: usize, options: &CheckOptions) -> Result<TheoremReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let id = TheoremId::T1;
    let mut report = TheoremReport::new(id, options.seed, json!({ "trials": trials, "alpha": 1.0 }));
    let tol = report.tolerance("symmetry_gap", options.tol(1e-10));
    let mut rng = options.rng(id);

    let prior_agent = JointDirichletAgent::symmetric(3, 3, 1.0)?.beliefs();
    let p0 = random_joint(&mut rng, 3, 3);
    let prior_forward = prior_agent.mi_x_to_y(&p0)?;
    let prior_reverse = prior_agent.mi_y_to_x(&p0)?;
    report.measure("prior_mi_abs_max", prior_forward.abs().max(prior_reverse.abs()));
    report.require(prior_forward.abs() <= tol && prior_reverse.abs() <= tol, || {
        json!({ "case": "no data", "forward": prior_forward, "reverse": prior_reverse })
    });

    let mut worst: f64 = 0.0;
    let mut min_shannon = f64::INFINITY;
    for trial in 0..trials {
        let nx = rng.random_range(2..=5);
        let ny = rng.random_range(2..=5);
        let p = random_joint(&mut rng, nx, ny);
        let n = rng.random_range(0..=1000);
        let mut agent = JointDirichletAgent::symmetric(nx, ny, 1.0)?;
        for (y, x) in p.sample(&mut rng, n) {
            agent.observe_index(x, y)?;
        }
        let beliefs = agent.beliefs();
        let forward = beliefs.mi_x_to_y(&p)?;
        let reverse = beliefs.mi_y_to_x(&p)?;
        let gap = (forward - reverse).abs();
        worst = worst.max(gap);
        min_shannon = min_shannon.min(mutual_information(&p));
        report.require(gap < tol, || {
            json!({ "trial": trial, "joint": joint_rows(&p), "n": n, "forward": forward, "reverse": reverse })
        });
    }
    report.measure("max_symmetry_gap", worst);
    report.measure("min_shannon_mi", min_shannon);
    report.require(min_shannon >= -options.tol(1e-12), || json!({ "shannon_mi": min_shannon }));
    Ok(report)
}

/// A point-mass joint `p(x0, y0) = 1` under the inconsistent illustrative
/// agent, with a joint-Dirichlet agent as control.
pub fn check_symmetry_violated_inconsistent(classes: usize, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::T1x;
    let mut report = TheoremReport::new(id, options.seed, json!({ "classes": classes, "x0": 0, "y0": 0 }));
    let min_gap = report.tolerance("min_asymmetry_gap", 1e-6 / options.tolerance_scale.max(f64::MIN_POSITIVE));
    let control_tol = report.tolerance("control_gap", options.tol(1e-10));

    let mut rows = vec![vec![0.0; classes]; classes];
    rows[0][0] = 1.0;
    let p = JointDistribution::from_matrix(rows)?;

    let beliefs = IllustrativeAgent::new(classes)?.beliefs();
    let y_to_x = beliefs.mi_y_to_x(&p)?;
    let x_to_y = beliefs.mi_x_to_y(&p)?;
    let gap = (y_to_x - x_to_y).abs();
    report.measure("mi_y_to_x", y_to_x);
    report.measure("mi_x_to_y", x_to_y);
    report.measure("asymmetry_gap", gap);
    report.measure("bayes_rule_residual", beliefs.bayes_rule_residual());
    report.require(gap > min_gap, || json!({ "agent": "illustrative", "y_to_x": y_to_x, "x_to_y": x_to_y }));

    let mut control = JointDirichletAgent::symmetric(classes, classes, 1.0)?;
    control.observe_count(0, 0, 3)?;
    control.observe_count(classes - 1, 0, 1)?;
    let cb = control.beliefs();
    let control_gap = (cb.mi_y_to_x(&p)? - cb.mi_x_to_y(&p)?).abs();
    report.measure("control_gap", control_gap);
    report.require(control_gap < control_tol, || json!({ "agent": "joint dirichlet", "gap": control_gap }));
    Ok(report)
}

/// Prior over the Poisson mean of [`PoissonSigmoidWorld`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterPrior {
    /// Shape and rate parameterisation; shape must be at least 1 so the
    /// density is bounded at zero.
    Gamma { shape: f64, rate: f64 },
    PointMass { value: f64 },
}

/// `Y ~ Pois(theta_hat)`, `Z = Y - theta_hat`, `P(X = 1 | y) = sigmoid(y - theta_hat)`.
/// The agent knows the form but not the mean; given `Z` it needs no mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonSigmoidWorld {
    pub true_mean: f64,
    pub prior: ParameterPrior,
    /// Largest admissible probability of `Y` beyond the truncation bound.
    pub tail_mass: f64,
    pub quadrature_panels: usize,
    pub quadrature_order: usize,
}

impl Default for PoissonSigmoidWorld {
    fn default() -> Self {
        Self {
            true_mean: 5.0,
            prior: ParameterPrior::Gamma { shape: 2.0, rate: 0.5 },
            tail_mass: 1e-10,
            quadrature_panels: 64,
            quadrature_order: 20,
        }
    }
}

/// Bayesian and Shannon quantities of one evaluation of the world, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpiEvaluation {
    pub support_max: u64,
    pub bayesian_entropy: f64,
    pub bayesian_conditional_entropy_y: f64,
    pub conditional_entropy_z: f64,
    pub mi_y: f64,
    pub mi_z: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn ln_poisson(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_gamma(k as f64 + 1.0)
}

fn binary_entropy(p: f64) -> f64 {
    let term = |v: f64| if v > 0.0 { -v * v.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// `sum_y Pois(y | theta) sigmoid(y - theta)` for an arbitrary mean, summed
/// until the remaining terms are negligible.
fn poisson_sigmoid_mean(theta: f64) -> f64 {
    let mut total = 0.0;
    let mut k = 0u64;
    loop {
        let w = ln_poisson(k, theta).exp();
        total += w * sigmoid(k as f64 - theta);
        if k as f64 > theta && w < 1e-18 {
            break total;
        }
        k += 1;
    }
}

impl PoissonSigmoidWorld {
    fn validate(&self) -> Result<()> {
        if !(self.true_mean.is_finite() && self.true_mean > 0.0) {
            return Err(Error::Config(format!("true mean {} must be positive", self.true_mean)));
        }
        if !(self.tail_mass > 0.0 && self.tail_mass < 1.0) {
            return Err(Error::Config(format!("tail mass {} outside (0, 1)", self.tail_mass)));
        }
        if self.quadrature_panels == 0 || self.quadrature_order == 0 {
            return Err(Error::Config("quadrature needs panels and nodes".into()));
        }
        match self.prior {
            ParameterPrior::Gamma { shape, rate } if !(shape >= 1.0 && rate > 0.0) => Err(Error::Config(format!(
                "gamma prior needs shape >= 1 and rate > 0, got ({shape}, {rate})"
            ))),
            ParameterPrior::PointMass { value } if !(value > 0.0) => {
                Err(Error::Config(format!("point mass at {value} is not a positive mean")))
            }
            _ => Ok(()),
        }
    }

    /// Smallest `k` with `P(Y > k) < tail_mass`, and that tail mass.
    pub fn truncation_bound(&self) -> (u64, f64) {
        let tail_from = |k: u64| {
            let mut total = 0.0;
            let mut j = k + 1;
            loop {
                let w = ln_poisson(j, self.true_mean).exp();
                total += w;
                if j as f64 > self.true_mean && w < total * 1e-17 {
                    break total;
                }
                j += 1;
            }
        };
        let mut k = self.true_mean.floor() as u64;
        loop {
            let tail = tail_from(k);
            if tail < self.tail_mass {
                return (k, tail);
            }
            k += 1;
        }
    }

    /// Posterior after observing counts drawn from `Pois(theta_hat)`.
    pub fn posterior(&self, data: &[u64]) -> ParameterPrior {
        match self.prior {
            ParameterPrior::Gamma { shape, rate } => ParameterPrior::Gamma {
                shape: shape + data.iter().sum::<u64>() as f64,
                rate: rate + data.len() as f64,
            },
            point => point,
        }
    }

    /// `E[f(theta)]` under `belief`, by composite Gauss–Legendre quadrature
    /// over the region holding all but ~1e-15 of the mass.
    fn expect<F: Fn(f64) -> f64>(&self, belief: &ParameterPrior, panels: usize, f: F) -> Result<f64> {
        match *belief {
            ParameterPrior::PointMass { value } => Ok(f(value)),
            ParameterPrior::Gamma { shape, rate } => {
                let dist = Gamma::new(shape, rate).map_err(|e| Error::Config(e.to_string()))?;
                let mean = shape / rate;
                let sd = shape.sqrt() / rate;
                let mut hi = mean + 10.0 * sd;
                while dist.sf(hi) > 1e-16 {
                    hi += 5.0 * sd;
                }
                let mut lo = (mean - 10.0 * sd).max(0.0);
                while lo > 0.0 && dist.cdf(lo) > 1e-16 {
                    lo = (lo - 5.0 * sd).max(0.0);
                }
                Ok(integrate(|t| f(t) * dist.pdf(t), lo, hi, panels, self.quadrature_order))
            }
        }
    }

    /// Exact evaluation with the support truncated at `support_max` and
    /// renormalised.
    pub fn evaluate_with(&self, data: &[u64], support_max: u64, panels: usize) -> Result<DpiEvaluation> {
        self.validate()?;
        let posterior = self.posterior(data);
        let weights: Vec<f64> = (0..=support_max).map(|k| ln_poisson(k, self.true_mean).exp()).collect();
        let total: f64 = weights.iter().sum();
        let py: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let mut h_cond_y = 0.0;
        let mut h_cond_z = 0.0;
        let mut px1 = 0.0;
        for (k, &w) in py.iter().enumerate() {
            let truth = sigmoid(k as f64 - self.true_mean);
            let belief = self.expect(&posterior, panels, |t| sigmoid(k as f64 - t))?;
            h_cond_y -= w * (truth * belief.log2() + (1.0 - truth) * (1.0 - belief).log2());
            h_cond_z += w * binary_entropy(truth);
            px1 += w * truth;
        }
        let q1 = self.expect(&posterior, panels, poisson_sigmoid_mean)?;
        let h_unconditional = -(px1 * q1.log2() + (1.0 - px1) * (1.0 - q1).log2());
        Ok(DpiEvaluation {
            support_max,
            bayesian_entropy: h_unconditional,
            bayesian_conditional_entropy_y: h_cond_y,
            conditional_entropy_z: h_cond_z,
            mi_y: h_unconditional - h_cond_y,
            mi_z: h_unconditional - h_cond_z,
        })
    }

    pub fn evaluate(&self, data: &[u64]) -> Result<DpiEvaluation> {
        let (bound, tail) = self.truncation_bound();
        if tail >= self.tail_mass {
            return Err(Error::Config(format!("truncated tail mass {tail} too large")));
        }
        self.evaluate_with(data, bound, self.quadrature_panels)
    }

    /// Shannon `I(X; Y)` and `I(X; Z)`, each from its own labelled joint table.
    pub fn shannon_pair(&self) -> Result<(f64, f64)> {
        let (bound, _) = self.truncation_bound();
        let weights: Vec<f64> = (0..=bound).map(|k| ln_poisson(k, self.true_mean).exp()).collect();
        let total: f64 = weights.iter().sum();
        let table = |f: &dyn Fn(u64) -> f64| -> Vec<Vec<f64>> {
            let mut rows = vec![Vec::new(), Vec::new()];
            for (k, w) in weights.iter().enumerate() {
                let g = sigmoid(f(k as u64));
                rows[0].push(w / total * (1.0 - g));
                rows[1].push(w / total * g);
            }
            rows
        };
        let x_labels = vec!["0".to_string(), "1".to_string()];
        let y_labels: Vec<String> = (0..=bound).map(|k| k.to_string()).collect();
        let z_labels: Vec<String> = (0..=bound).map(|k| format!("{}", k as f64 - self.true_mean)).collect();
        let mean = self.true_mean;
        let joint_y = JointDistribution::new(x_labels.clone(), y_labels, table(&|k| k as f64 - mean))?;
        // Z is indexed by its own value; the sigmoid sees z directly
        let z_values: Vec<f64> = (0..=bound).map(|k| k as f64 - mean).collect();
        let joint_z = JointDistribution::new(x_labels, z_labels, table(&|k| z_values[k as usize]))?;
        Ok((mutual_information(&joint_y), mutual_information(&joint_z)))
    }
}

/// Shows `I_theta(f(Y) -> X) > I_theta(Y -> X)` after `n_data` observations.
pub fn check_dpi_violation(world: &PoissonSigmoidWorld, n_data: usize, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::T2;
    if let ParameterPrior::PointMass { value } = world.prior {
        if value == world.true_mean {
            return Err(Error::Config("prior must not be a point mass at the true mean".into()));
        }
    }
    let mut rng = options.rng(id);
    let data: Vec<u64> = if n_data == 0 {
        Vec::new()
    } else {
        let pois = rand_distr::Poisson::new(world.true_mean).map_err(|e| Error::Config(e.to_string()))?;
        (0..n_data).map(|_| pois.sample(&mut rng) as u64).collect()
    };
    let mut report = TheoremReport::new(
        id,
        options.seed,
        json!({ "world": world, "n_data": n_data, "data": data }),
    );
    let quad_tol = report.tolerance("quadrature_self_convergence", options.tol(1e-8));
    let trunc_tol = report.tolerance("truncation_extension", options.tol(1e-9));
    let shannon_tol = report.tolerance("shannon_control", options.tol(1e-10));

    let (bound, tail) = world.truncation_bound();
    report.measure("support_max", bound as f64);
    report.measure("truncated_tail_mass", tail);
    let base = world.evaluate(&data)?;
    let doubled = world.evaluate_with(&data, bound, 2 * world.quadrature_panels)?;
    let extended = world.evaluate_with(&data, bound + 10, world.quadrature_panels)?;
    report.measure("mi_y", base.mi_y);
    report.measure("mi_f_y", base.mi_z);
    report.measure("violation_margin", base.mi_z - base.mi_y);
    let quad_delta = (doubled.mi_y - base.mi_y).abs().max((doubled.mi_z - base.mi_z).abs());
    let trunc_delta = (extended.mi_y - base.mi_y).abs().max((extended.mi_z - base.mi_z).abs());
    report.measure("quadrature_delta", quad_delta);
    report.measure("truncation_delta", trunc_delta);
    report.require(base.mi_z > base.mi_y, || json!({ "evaluation": base }));
    report.require(quad_delta < quad_tol, || json!({ "base": base, "doubled": doubled }));
    report.require(trunc_delta < trunc_tol, || json!({ "base": base, "extended": extended }));

    let point = PoissonSigmoidWorld {
        prior: ParameterPrior::PointMass { value: world.true_mean },
        ..*world
    };
    let degenerate = point.evaluate(&data)?;
    let degenerate_gap = (degenerate.mi_z - degenerate.mi_y).abs();
    report.measure("point_mass_gap", degenerate_gap);
    report.require(degenerate_gap < quad_tol, || json!({ "point_mass": degenerate }));

    let (shannon_y, shannon_z) = world.shannon_pair()?;
    report.measure("shannon_mi_y", shannon_y);
    report.measure("shannon_mi_f_y", shannon_z);
    report.require((shannon_y - shannon_z).abs() < shannon_tol && shannon_y >= 0.0, || {
        json!({ "shannon_y": shannon_y, "shannon_z": shannon_z })
    });
    Ok(report)
}

/// Upper bound on Bayesian MI, checked on instances satisfying the KL
/// assumption (marginal weighted by the true `p(y)`).
pub fn check_upper_bound(trials: usize, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::T3;
    let max_attempts = trials * 50;
    let mut report = TheoremReport::new(
        id,
        options.seed,
        json!({ "trials": trials, "max_attempts": max_attempts, "alpha": 1.0 }),
    );
    let tol = report.tolerance("bound_slack", options.tol(1e-10));
    let tight_tol = report.tolerance("large_n_tightness", options.tol(0.01));
    let mut rng = options.rng(id);

    let mut attempts = 0;
    let mut held = 0;
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    while held < trials && attempts < max_attempts {
        attempts += 1;
        let nx = rng.random_range(2..=4);
        let ny = rng.random_range(2..=4);
        let p = random_joint(&mut rng, nx, ny);
        let n = (10f64.powf(rng.random_range(0.0..3.0))) as usize;
        let (mi_theta, assumption) = conjugate_pair_mi(&p, &p.sample(&mut rng, n))?;
        if !assumption {
            continue;
        }
        held += 1;
        let excess = mi_theta - mutual_information(&p);
        max_excess = max_excess.max(excess);
        if excess > tol {
            violations += 1;
            report.fail(json!({ "joint": joint_rows(&p), "n": n, "bayesian_mi": mi_theta, "excess": excess }));
        }
    }
    report.measure("assumption_holding_instances", held as f64);
    report.measure("attempts", attempts as f64);
    report.measure("assumption_hold_rate", held as f64 / attempts as f64);
    report.measure("violations", violations as f64);
    report.measure("max_excess_over_mi", max_excess);
    report.require(held == trials, || json!({ "reason": "too few assumption-holding instances", "held": held }));

    // independent truth: the bound reads I_theta <= 0
    let mut independent_max = f64::NEG_INFINITY;
    for _ in 0..20 {
        let px = random_distribution(&mut rng, 3);
        let py = random_distribution(&mut rng, 3);
        let p = JointDistribution::product(&px, &py)?;
        let n = rng.random_range(1..200);
        let (mi_theta, assumption) = conjugate_pair_mi(&p, &p.sample(&mut rng, n))?;
        if assumption {
            independent_max = independent_max.max(mi_theta);
        }
    }
    report.measure("independent_max_bayesian_mi", independent_max);
    report.require(independent_max <= tol, || json!({ "independent_max": independent_max }));

    let p = random_joint(&mut rng, 3, 3);
    let (mi_theta, _) = conjugate_pair_mi(&p, &p.sample(&mut rng, 1_000_000))?;
    let gap = (mutual_information(&p) - mi_theta).abs();
    report.measure("large_n_gap", gap);
    report.require(gap < tight_tol, || json!({ "joint": joint_rows(&p), "gap": gap }));
    Ok(report)
}

/// Bayesian MI of an unconditional plus per-`y` Dirichlet agent pair, and
/// whether the bound's KL assumption holds.
fn conjugate_pair_mi(p: &JointDistribution, samples: &[(usize, usize)]) -> Result<(f64, bool)> {
    let mut unconditional = DirichletCategoricalAgent::laplace(p.nx())?;
    let mut conditional = ConditionalDirichletAgent::symmetric(p.nx(), p.ny(), 1.0)?;
    for &(y, x) in samples {
        unconditional.observe_index(x)?;
        conditional.observe_index(y, x)?;
    }
    let qx = unconditional.posterior_predictive();
    let qxy = conditional.conditional_belief();
    let py = p.marginal_y();
    let mixed: Vec<f64> = (0..p.nx())
        .map(|x| py.probs().iter().enumerate().map(|(y, w)| w * qxy.prob(x, y)).sum())
        .collect();
    let mixed = FiniteDistribution::from_probs(mixed)?;
    let px = p.marginal_x();
    let assumption = kl_divergence(&px, &qx)? <= kl_divergence(&px, &mixed)?;
    Ok((bayesian_mi(p, &qx, &qxy)?, assumption))
}

/// Parameters for [`check_convergence_mi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub nx: usize,
    pub ny: usize,
    pub schedule: Vec<usize>,
    pub seeds: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            nx: 3,
            ny: 3,
            schedule: vec![10, 100, 1_000, 10_000, 100_000],
            seeds: 20,
        }
    }
}

/// Least-squares slope of `log10 |error|` against `log10 N`.
fn log_log_slope(ns: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log10()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).log10()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// A consistent, well-formed agent fed nested samples; the error against the
/// exact MI must shrink along the schedule.
///
/// A seed counts as decreasing when the least-squares slope of log error
/// against log `N` is negative and the final error is below the first.
pub fn check_convergence_mi(config: &ConvergenceConfig, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::T4;
    if config.schedule.len() < 2 || config.schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("schedule must be strictly increasing with two or more sizes".into()));
    }
    if config.nx > 5 || config.ny > 5 {
        return Err(Error::InvalidArgument("domains are limited to 5 symbols".into()));
    }
    let mut report = TheoremReport::new(id, options.seed, serde_json::to_value(config)?);
    let final_tol = report.tolerance("final_error", options.tol(0.01));
    let fraction_needed = report.tolerance("decreasing_fraction", 0.9);
    let prior_tol = report.tolerance("prior_mi", options.tol(1e-12));
    let mut rng = options.rng(id);

    let prior = JointDirichletAgent::symmetric(config.nx, config.ny, 1.0)?.beliefs();
    let prior_mi = prior.mi_y_to_x(&random_joint(&mut rng, config.nx, config.ny))?;
    report.measure("prior_mi", prior_mi);
    report.require(prior_mi.abs() <= prior_tol, || json!({ "prior_mi": prior_mi }));

    let n_max = *config.schedule.last().unwrap();
    let mut decreasing = 0;
    let mut pairwise = 0;
    let mut worst_final: f64 = 0.0;
    let mut mean_errors = vec![0.0; config.schedule.len()];
    for s in 0..config.seeds {
        let p = random_joint(&mut rng, config.nx, config.ny);
        let truth = mutual_information(&p);
        let samples = p.sample(&mut rng, n_max);
        let mut agent = JointDirichletAgent::symmetric(config.nx, config.ny, 1.0)?;
        let mut seen = 0;
        let mut errors = Vec::with_capacity(config.schedule.len());
        for &n in &config.schedule {
            for &(y, x) in &samples[seen..n] {
                agent.observe_index(x, y)?;
            }
            seen = n;
            errors.push((agent.beliefs().mi_y_to_x(&p)? - truth).abs());
        }
        for (m, e) in mean_errors.iter_mut().zip(&errors) {
            *m += e / config.seeds as f64;
        }
        let last = errors.len() - 1;
        if log_log_slope(&config.schedule, &errors) < 0.0 && errors[last] < errors[0] {
            decreasing += 1;
        }
        if errors[last] < errors[last - 1] {
            pairwise += 1;
        }
        worst_final = worst_final.max(errors[last]);
        report.require(errors[last] < final_tol, || {
            json!({ "seed_index": s, "joint": joint_rows(&p), "errors": errors })
        });
    }
    let fraction = decreasing as f64 / config.seeds as f64;
    report.measure("decreasing_fraction", fraction);
    report.measure("last_step_decreasing_fraction", pairwise as f64 / config.seeds as f64);
    report.measure("max_final_error", worst_final);
    for (n, e) in config.schedule.iter().zip(&mean_errors) {
        report.measure(&format!("mean_error_n{n}"), *e);
    }
    report.require(fraction >= fraction_needed, || json!({ "decreasing_fraction": fraction }));
    Ok(report)
}

/// Parameters for [`check_convergence_v_info`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VInfoConfig {
    pub instances: usize,
    pub nx: usize,
    pub ny: usize,
    pub unconditional_members: usize,
    pub conditional_members: usize,
    /// Adds the true marginal to the unconditional family, which makes
    /// `I_V <= I` a theorem.
    pub include_true_marginal: bool,
    pub n_final: usize,
}

impl Default for VInfoConfig {
    fn default() -> Self {
        Self {
            instances: 10,
            nx: 3,
            ny: 3,
            unconditional_members: 5,
            conditional_members: 5,
            include_true_marginal: true,
            n_final: 100_000,
        }
    }
}

/// `H_V(X) - H_V(X|Y)` by exhaustive minimisation over the two families.
pub fn v_information(
    p: &JointDistribution,
    unconditional: &[FiniteDistribution],
    conditional: &[ConditionalBelief],
) -> Result<f64> {
    let px = p.marginal_x();
    let mut hv = f64::INFINITY;
    for q in unconditional {
        hv = hv.min(cross_entropy(&px, q)?);
    }
    let qx_dummy = FiniteDistribution::uniform_over(p.x_labels().to_vec())?;
    let h_uniform = cross_entropy(&px, &qx_dummy)?;
    let mut hv_cond = f64::INFINITY;
    for q in conditional {
        // H_theta(X|Y) = H_theta(X) - I_theta(Y -> X) with any fixed q_x
        hv_cond = hv_cond.min(h_uniform - bayesian_mi(p, &qx_dummy, q)?);
    }
    Ok(hv - hv_cond)
}

/// Restricted-family agents (truth outside the conditional family) converge
/// to the brute-force V-information.
pub fn check_convergence_v_info(config: &VInfoConfig, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::T5;
    let mut report = TheoremReport::new(id, options.seed, serde_json::to_value(config)?);
    let tol = report.tolerance("convergence", options.tol(0.02));
    let bound_tol = report.tolerance("v_info_bound_slack", options.tol(1e-10));
    let mut rng = options.rng(id);
    let (nx, ny) = (config.nx, config.ny);

    let mut worst: f64 = 0.0;
    let mut worst_bound = f64::NEG_INFINITY;
    for instance in 0..config.instances {
        let p = random_joint(&mut rng, nx, ny);
        let mut unconditional: Vec<FiniteDistribution> =
            (0..config.unconditional_members).map(|_| random_distribution(&mut rng, nx)).collect();
        if config.include_true_marginal {
            unconditional.push(p.marginal_x());
        }
        let conditional: Vec<ConditionalBelief> =
            (0..config.conditional_members).map(|_| random_conditional(&mut rng, nx, ny)).collect();
        let iv = v_information(&p, &unconditional, &conditional)?;
        let mi = mutual_information(&p);
        if config.include_true_marginal {
            worst_bound = worst_bound.max(iv - mi);
            report.require(iv <= mi + bound_tol, || json!({ "instance": instance, "i_v": iv, "mi": mi }));
        }

        let mut u_agent = RestrictedFamilyAgent::uniform_prior(unconditional.clone())?;
        let mut c_agent = RestrictedConditionalAgent::uniform_prior(conditional.clone())?;
        let counts = tally(&p, &p.sample(&mut rng, config.n_final));
        for (cell, &n) in counts.iter().enumerate() {
            u_agent.observe_count(cell / ny, n)?;
            c_agent.observe_count(cell / ny, cell % ny, n)?;
        }
        let mi_theta = bayesian_mi(&p, &u_agent.posterior_predictive()?, &c_agent.posterior_predictive()?)?;
        let err = (mi_theta - iv).abs();
        worst = worst.max(err);
        report.require(err < tol, || {
            json!({ "instance": instance, "joint": joint_rows(&p), "i_v": iv, "bayesian_mi": mi_theta })
        });
    }
    report.measure("max_abs_error", worst);
    if config.include_true_marginal {
        report.measure("max_v_info_minus_mi", worst_bound);
    }

    // control: families containing the truth give I_V = I
    let p = random_joint(&mut rng, nx, ny);
    let mut conditional: Vec<ConditionalBelief> = (0..3).map(|_| random_conditional(&mut rng, nx, ny)).collect();
    conditional.push(p.conditional_x_given_y());
    let control = (v_information(&p, &[p.marginal_x()], &conditional)? - mutual_information(&p)).abs();
    report.measure("well_formed_control_gap", control);
    report.require(control < options.tol(1e-12), || json!({ "control_gap": control }));
    Ok(report)
}

/// `H_theta(T|d_N) = H(T) + KL(p || q)` for Dirichlet agents at random `N`.
pub fn check_decomposition(trials: usize, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::T6;
    let mut report = TheoremReport::new(id, options.seed, json!({ "trials": trials, "alpha": 1.0 }));
    let tol = report.tolerance("identity", options.tol(1e-12));
    let mut rng = options.rng(id);

    let mut worst: f64 = 0.0;
    let mut min_kl = f64::INFINITY;
    for trial in 0..trials {
        let n_classes = rng.random_range(2..=8);
        let p = random_distribution(&mut rng, n_classes);
        let n = rng.random_range(0..=500);
        let mut agent = DirichletCategoricalAgent::laplace(n_classes)?;
        for _ in 0..n {
            agent.observe_index(p.sample_index(&mut rng))?;
        }
        let q = agent.posterior_predictive();
        let ce = cross_entropy(&p, &q)?;
        let kl = kl_divergence(&p, &q)?;
        let residual = (ce - entropy(&p) - kl).abs();
        worst = worst.max(residual);
        min_kl = min_kl.min(kl);
        report.require(residual < tol, || json!({ "trial": trial, "p": p.probs(), "q": q.probs() }));
        report.require(kl > 0.0, || json!({ "trial": trial, "reason": "beliefs differ but KL is 0" }));
    }
    report.measure("max_residual", worst);
    report.measure("min_kl", min_kl);

    let p = random_distribution(&mut rng, 4);
    let self_gap = (cross_entropy(&p, &p)? - entropy(&p)).abs() + kl_divergence(&p, &p)?;
    report.measure("matched_belief_gap", self_gap);
    report.require(self_gap < tol, || json!({ "p": p.probs(), "gap": self_gap }));
    Ok(report)
}

/// Parameters for [`check_illformed_loss`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllFormedConfig {
    pub instances: usize,
    pub classes: usize,
    pub data_sizes: Vec<usize>,
}

impl Default for IllFormedConfig {
    fn default() -> Self {
        Self {
            instances: 10,
            classes: 3,
            data_sizes: vec![0, 10, 100, 1_000],
        }
    }
}

/// `I_theta(T -> Theta = theta* | d_N)` via the posterior ratio
/// `p(theta*|t, d) / p(theta*|d)`.
fn information_about_member(p: &FiniteDistribution, agent: &RestrictedFamilyAgent, star: usize) -> Result<f64> {
    let weights = agent.posterior_weights()?;
    let members = agent.members();
    let mut total = 0.0;
    for (t, &pt) in p.probs().iter().enumerate() {
        if pt == 0.0 {
            continue;
        }
        let evidence: f64 = weights.iter().zip(members).map(|(w, m)| w * m.probs()[t]).sum();
        let updated = weights[star] * members[star].probs()[t] / evidence;
        total += pt * (updated / weights[star]).log2();
    }
    Ok(total)
}

/// Two-member families excluding the truth lose exactly `KL(p || q*)` bits
/// relative to the well-formed bound.
pub fn check_illformed_loss(config: &IllFormedConfig, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::T7;
    let mut report = TheoremReport::new(id, options.seed, serde_json::to_value(config)?);
    let tol = report.tolerance("gap_equals_kl", options.tol(1e-9));
    let mut rng = options.rng(id);

    let mut worst: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for instance in 0..config.instances {
        let p = random_distribution(&mut rng, config.classes);
        let family = vec![
            random_distribution(&mut rng, config.classes),
            random_distribution(&mut rng, config.classes),
        ];
        let kls = [kl_divergence(&p, &family[0])?, kl_divergence(&p, &family[1])?];
        let star = if kls[0] <= kls[1] { 0 } else { 1 };
        for &n in &config.data_sizes {
            let mut agent = RestrictedFamilyAgent::uniform_prior(family.clone())?;
            for _ in 0..n {
                agent.observe_index(p.sample_index(&mut rng))?;
            }
            let lhs = information_about_member(&p, &agent, star)?;
            let rhs = cross_entropy(&p, &agent.posterior_predictive()?)? - entropy(&p);
            let gap = rhs - lhs;
            let deviation = (gap - kls[star]).abs();
            worst = worst.max(deviation);
            min_gap = min_gap.min(gap);
            report.require(lhs < rhs && deviation < tol, || {
                json!({ "instance": instance, "n": n, "p": p.probs(), "family": [family[0].probs(), family[1].probs()],
                        "lhs": lhs, "rhs": rhs, "kl": kls[star] })
            });
        }
    }
    report.measure("max_gap_minus_kl", worst);
    report.measure("min_gap", min_gap);

    // control: the truth inside the family closes the gap
    let p = random_distribution(&mut rng, config.classes);
    let mut agent = RestrictedFamilyAgent::uniform_prior(vec![random_distribution(&mut rng, config.classes), p.clone()])?;
    for _ in 0..1_000 {
        agent.observe_index(p.sample_index(&mut rng))?;
    }
    let control = cross_entropy(&p, &agent.posterior_predictive()?)? - entropy(&p) - information_about_member(&p, &agent, 1)?;
    report.measure("well_formed_gap", control);
    report.require(control.abs() < tol, || json!({ "control_gap": control }));
    Ok(report)
}

/// Parameters for [`check_mdl_sdl`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdlConfig {
    pub classes: usize,
    pub identity_n: usize,
    pub checkpoints: Vec<usize>,
    /// The SDL trend compares the last checkpoint against this one.
    pub trend_from: usize,
    pub seeds: usize,
}

impl Default for MdlConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            identity_n: 200,
            checkpoints: vec![1, 10, 100, 1_000, 10_000],
            trend_from: 100,
            seeds: 20,
        }
    }
}

/// Online code length against the closed-form marginal likelihood, the SDL
/// trend, and boundedness of Bayesian MI over the same runs.
///
/// MDL at `N` is `sum_n H_theta(X | D_{n-1})` (the expected online code
/// length given the realised prefix) and SDL is MDL minus `N H(X)`.
pub fn check_mdl_sdl(config: &MdlConfig, options: &CheckOptions) -> Result<TheoremReport> {
    let id = TheoremId::Mdl;
    if config.checkpoints.len() < 2 || config.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("checkpoints must be strictly increasing".into()));
    }
    let lo = config
        .checkpoints
        .iter()
        .position(|&n| n == config.trend_from)
        .filter(|&i| i + 1 < config.checkpoints.len())
        .ok_or_else(|| Error::InvalidArgument("trend_from must be a checkpoint before the last".into()))?;
    let mut report = TheoremReport::new(id, options.seed, serde_json::to_value(config)?);
    let identity_tol = report.tolerance("chain_rule_identity", options.tol(1e-9));
    let trend_needed = report.tolerance("sdl_trend_fraction", 0.9);
    let mut rng = options.rng(id);
    let c = config.classes;

    // first symbol under the uniform binary predictive costs one bit
    let first = -DirichletCategoricalAgent::laplace(2)?.posterior_predictive().probs()[0].log2();
    report.measure("first_symbol_bits", first);
    report.require((first - 1.0).abs() < identity_tol, || json!({ "first_symbol_bits": first }));

    let source = random_distribution(&mut rng, c);
    let mut agent = DirichletCategoricalAgent::laplace(c)?;
    let mut chain = 0.0;
    for _ in 0..config.identity_n {
        let t = source.sample_index(&mut rng);
        chain -= agent.posterior_predictive().probs()[t].log2();
        agent.observe_index(t)?;
    }
    let closed = -agent.log_marginal_likelihood() / std::f64::consts::LN_2;
    report.measure("chain_rule_bits", chain);
    report.measure("marginal_likelihood_bits", closed);
    report.require((chain - closed).abs() < identity_tol, || json!({ "chain": chain, "closed_form": closed }));

    let n_max = *config.checkpoints.last().unwrap();
    let mut sdl_sums = vec![0.0; config.checkpoints.len()];
    let mut increasing = 0;
    let mut max_mi_over_h = f64::NEG_INFINITY;
    let mut negative_sdl = 0;
    for s in 0..config.seeds {
        let p = random_joint(&mut rng, c, c);
        let px = p.marginal_x();
        let hx = entropy(&px);
        let samples = p.sample(&mut rng, n_max);
        let mut x_agent = DirichletCategoricalAgent::laplace(c)?;
        let mut pair_agent = JointDirichletAgent::symmetric(c, c, 1.0)?;
        let mut sdl = 0.0;
        let mut sdl_at = Vec::with_capacity(config.checkpoints.len());
        let mut next = 0;
        for (i, &(y, x)) in samples.iter().enumerate() {
            sdl += kl_divergence(&px, &x_agent.posterior_predictive())?;
            x_agent.observe_index(x)?;
            pair_agent.observe_index(x, y)?;
            if i + 1 == config.checkpoints[next] {
                sdl_at.push(sdl);
                let mi = pair_agent.beliefs().mi_y_to_x(&p)?;
                max_mi_over_h = max_mi_over_h.max(mi - hx);
                report.require(mi <= hx, || json!({ "seed_index": s, "n": i + 1, "bayesian_mi": mi, "entropy": hx }));
                next += 1;
            }
        }
        if sdl_at.iter().any(|&v| v < 0.0) {
            negative_sdl += 1;
        }
        for (acc, v) in sdl_sums.iter_mut().zip(&sdl_at) {
            *acc += v / config.seeds as f64;
        }
        if sdl_at[sdl_at.len() - 1] > sdl_at[lo] {
            increasing += 1;
        }
    }
    for (n, v) in config.checkpoints.iter().zip(&sdl_sums) {
        report.measure(&format!("mean_sdl_bits_n{n}"), *v);
    }
    let fraction = increasing as f64 / config.seeds as f64;
    report.measure("sdl_increasing_fraction", fraction);
    report.measure("max_bayesian_mi_minus_entropy", max_mi_over_h);
    report.require(negative_sdl == 0, || json!({ "negative_sdl_runs": negative_sdl }));
    report.require(fraction >= trend_needed && sdl_sums[sdl_sums.len() - 1] > sdl_sums[lo], || {
        json!({ "sdl_increasing_fraction": fraction, "mean_sdl": sdl_sums })
    });
    Ok(report)
}
