//! The two fault-count regression models.
//!
//! M1 is a Poisson GLM with a log link on approach and experience. M2 adds
//! zero inflation (its own linear predictor on approach) and per-subject
//! intercepts, written non-centered: `alpha_subject = mu_s + sigma_s * z`.

use std::fmt;
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::{
    half_cauchy_lpdf, ln_factorial, normal_lpdf, poisson_logpmf_ln, softplus,
    zip_logpmf_ln, Probability, Rate,
};
use crate::error::{Error, Result};
use crate::sampler::LogDensity;

/// Number of M2 parameters that are not subject offsets.
pub const M2_POPULATION_DIM: usize = 7;
/// Position of `sigma_s` in the flat M2 layout.
pub const SIGMA_S_INDEX: usize = 6;

const POPULATION_NAMES: [&str; M2_POPULATION_DIM] =
    ["alpha", "beta_a", "beta_e", "alpha_p", "beta_p", "mu_s", "sigma_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    M1,
    M2,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::M1 => f.write_str("m1"),
            ModelKind::M2 => f.write_str("m2"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(ModelKind::M1),
            "m2" => Ok(ModelKind::M2),
            other => Err(Error::config(format!("unknown model '{other}', expected m1 or m2"))),
        }
    }
}

/// Link function for the zero-inflation probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZiLink {
    #[default]
    Logit,
    Log,
}

impl std::str::FromStr for ZiLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(ZiLink::Logit),
            "log" => Ok(ZiLink::Log),
            _ => Err(Error::config(format!("unknown zero-inflation link `{s}` (logit, log)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Prior sd of every location parameter.
    #[serde(default = "default_prior_sd")]
    pub prior_sd: f64,
    /// Half-Cauchy scale of the subject-intercept sd.
    #[serde(default = "default_sigma_scale")]
    pub sigma_scale: f64,
    #[serde(default)]
    pub zi_link: ZiLink,
}

fn default_prior_sd() -> f64 {
    1.5
}

fn default_sigma_scale() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec { kind, prior_sd: 1.5, sigma_scale: 1.0, zi_link: ZiLink::Logit }
    }

    pub fn m1() -> Self {
        Self::new(ModelKind::M1)
    }

    pub fn m2() -> Self {
        Self::new(ModelKind::M2)
    }

    pub fn with_link(mut self, link: ZiLink) -> Self {
        self.zi_link = link;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            return Err(Error::config(format!("prior sd must be positive, got {}", self.prior_sd)));
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(Error::config(format!(
                "half-Cauchy scale must be positive, got {}",
                self.sigma_scale
            )));
        }
        Ok(())
    }

    /// Length of the flat parameter vector.
    pub fn dim(&self, n_subjects: usize) -> usize {
        match self.kind {
            ModelKind::M1 => 3,
            ModelKind::M2 => M2_POPULATION_DIM + n_subjects,
        }
    }

    pub fn population_dim(&self) -> usize {
        match self.kind {
            ModelKind::M1 => 3,
            ModelKind::M2 => M2_POPULATION_DIM,
        }
    }

    pub fn param_names(&self, n_subjects: usize) -> Vec<String> {
        let mut names: Vec<String> =
            POPULATION_NAMES[..self.population_dim()].iter().map(|s| s.to_string()).collect();
        if self.kind == ModelKind::M2 {
            names.extend((0..n_subjects).map(|j| format!("z[{j}]")));
        }
        names
    }
}

/// One testing session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub subject: usize,
    /// 0 = exploratory, 1 = test-case based.
    pub approach: u8,
    /// 0 = low, 1 = high.
    pub experience: u8,
    pub faults: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    n_subjects: usize,
    ln_fact: Vec<f64>,
    /// Rows sharing subject and covariates, collapsed to sufficient statistics.
    groups: Vec<Group>,
    /// `subject_groups[j]..subject_groups[j + 1]` indexes subject j's groups.
    subject_groups: Vec<usize>,
    /// Mean (approach, experience) over each subject's rows.
    subject_covariates: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Group {
    subject: usize,
    approach: u8,
    experience: u8,
    zeros: f64,
    positives: f64,
    sum_faults: f64,
    sum_ln_fact: f64,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>, n_subjects: usize) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::input("dataset has no observations"));
        }
        if n_subjects == 0 || n_subjects > observations.len() {
            return Err(Error::input(format!(
                "n_subjects must be in 1..={}, got {n_subjects}",
                observations.len()
            )));
        }
        let mut seen = vec![false; n_subjects];
        for (i, o) in observations.iter().enumerate() {
            if o.approach > 1 || o.experience > 1 {
                return Err(Error::input(format!("observation {i}: indicators must be 0 or 1")));
            }
            if o.subject >= n_subjects {
                return Err(Error::input(format!(
                    "observation {i}: subject {} out of range 0..{n_subjects}",
                    o.subject
                )));
            }
            seen[o.subject] = true;
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::input(format!("subject {j} has no observations")));
        }
        // Canonical order makes every downstream sum independent of input order.
        let mut observations = observations;
        observations.sort_by_key(|o| (o.subject, o.approach, o.experience, o.faults));
        let ln_fact: Vec<f64> = observations.iter().map(|o| ln_factorial(o.faults)).collect();
        let mut groups: Vec<Group> = Vec::new();
        for (o, lf) in observations.iter().zip(&ln_fact) {
            let key = (o.subject, o.approach, o.experience);
            if groups.last().is_none_or(|g| (g.subject, g.approach, g.experience) != key) {
                groups.push(Group {
                    subject: o.subject,
                    approach: o.approach,
                    experience: o.experience,
                    zeros: 0.0,
                    positives: 0.0,
                    sum_faults: 0.0,
                    sum_ln_fact: 0.0,
                });
            }
            let g = groups.last_mut().expect("pushed above");
            if o.faults == 0 {
                g.zeros += 1.0;
            } else {
                g.positives += 1.0;
                g.sum_faults += o.faults as f64;
                g.sum_ln_fact += lf;
            }
        }
        let mut subject_groups = vec![0; n_subjects + 1];
        for g in &groups {
            subject_groups[g.subject + 1] += 1;
        }
        for j in 0..n_subjects {
            subject_groups[j + 1] += subject_groups[j];
        }
        let mut sums = vec![(0.0, 0.0, 0.0); n_subjects];
        for o in &observations {
            let s = &mut sums[o.subject];
            *s = (s.0 + o.approach as f64, s.1 + o.experience as f64, s.2 + 1.0);
        }
        let subject_covariates = sums.iter().map(|(a, e, n)| (a / n, e / n)).collect();
        Ok(Dataset { observations, n_subjects, ln_fact, groups, subject_groups, subject_covariates })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Fraction of observations with `approach = 1`.
    pub fn approach_share(&self) -> f64 {
        self.observations.iter().filter(|o| o.approach == 1).count() as f64 / self.len() as f64
    }

    /// Fraction of observations with `experience = 1`.
    pub fn experience_share(&self) -> f64 {
        self.observations.iter().filter(|o| o.experience == 1).count() as f64 / self.len() as f64
    }

    /// SHA-256 of the canonical CSV rendering.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for o in &self.observations {
            hasher.update(format!("{},{},{},{}\n", o.subject, o.approach, o.experience, o.faults));
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Model parameters in natural (constrained) form. M1 ignores every field
/// after `beta_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub alpha: f64,
    pub beta_a: f64,
    pub beta_e: f64,
    #[serde(default)]
    pub alpha_p: f64,
    #[serde(default)]
    pub beta_p: f64,
    #[serde(default)]
    pub mu_s: f64,
    #[serde(default = "default_sigma_s")]
    pub sigma_s: f64,
    #[serde(default)]
    pub z_subjects: Vec<f64>,
}

fn default_sigma_s() -> f64 {
    1.0
}

impl ParameterVector {
    pub fn m1(alpha: f64, beta_a: f64, beta_e: f64) -> Self {
        ParameterVector {
            alpha,
            beta_a,
            beta_e,
            alpha_p: 0.0,
            beta_p: 0.0,
            mu_s: 0.0,
            sigma_s: 1.0,
            z_subjects: Vec::new(),
        }
    }

    /// Posterior means reported for the original M2 fit; `mu_s` is not
    /// reported there and is set to 0.
    pub fn study_means() -> Self {
        ParameterVector {
            alpha: 1.95,
            beta_a: -1.47,
            beta_e: 0.33,
            alpha_p: -4.61,
            beta_p: 3.39,
            mu_s: 0.0,
            sigma_s: 0.29,
            z_subjects: Vec::new(),
        }
    }

    pub fn with_subjects(mut self, z: Vec<f64>) -> Self {
        self.z_subjects = z;
        self
    }

    pub fn to_flat(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut v = vec![self.alpha, self.beta_a, self.beta_e];
        if spec.kind == ModelKind::M2 {
            v.extend([self.alpha_p, self.beta_p, self.mu_s, self.sigma_s]);
            v.extend_from_slice(&self.z_subjects);
        }
        v
    }

    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        let pop = spec.population_dim();
        if flat.len() < pop {
            return Err(Error::input(format!(
                "{} parameter vector needs at least {pop} entries, got {}",
                spec.kind,
                flat.len()
            )));
        }
        match spec.kind {
            ModelKind::M1 => {
                if flat.len() != 3 {
                    return Err(Error::input(format!("m1 expects 3 parameters, got {}", flat.len())));
                }
                Ok(ParameterVector::m1(flat[0], flat[1], flat[2]))
            }
            ModelKind::M2 => Ok(ParameterVector {
                alpha: flat[0],
                beta_a: flat[1],
                beta_e: flat[2],
                alpha_p: flat[3],
                beta_p: flat[4],
                mu_s: flat[5],
                sigma_s: flat[6],
                z_subjects: flat[pop..].to_vec(),
            }),
        }
    }

    pub(crate) fn view(&self) -> ParamView<'_> {
        ParamView {
            alpha: self.alpha,
            beta_a: self.beta_a,
            beta_e: self.beta_e,
            alpha_p: self.alpha_p,
            beta_p: self.beta_p,
            mu_s: self.mu_s,
            sigma_s: self.sigma_s,
            z: &self.z_subjects,
        }
    }

    fn check_dims(&self, spec: &ModelSpec, n_subjects: usize) -> Result<()> {
        if spec.kind == ModelKind::M2 && self.z_subjects.len() != n_subjects {
            return Err(Error::input(format!(
                "m2 needs {n_subjects} subject offsets, got {}",
                self.z_subjects.len()
            )));
        }
        Ok(())
    }
}

/// Borrowed parameter view shared by the struct and flat-slice code paths.
#[derive(Clone, Copy)]
pub(crate) struct ParamView<'a> {
    pub alpha: f64,
    pub beta_a: f64,
    pub beta_e: f64,
    pub alpha_p: f64,
    pub beta_p: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub z: &'a [f64],
}

impl<'a> ParamView<'a> {
    /// `flat` must be in the constrained layout and of full length.
    pub(crate) fn from_flat(kind: ModelKind, flat: &'a [f64]) -> Self {
        match kind {
            ModelKind::M1 => ParamView {
                alpha: flat[0],
                beta_a: flat[1],
                beta_e: flat[2],
                alpha_p: 0.0,
                beta_p: 0.0,
                mu_s: 0.0,
                sigma_s: 1.0,
                z: &[],
            },
            ModelKind::M2 => ParamView {
                alpha: flat[0],
                beta_a: flat[1],
                beta_e: flat[2],
                alpha_p: flat[3],
                beta_p: flat[4],
                mu_s: flat[5],
                sigma_s: flat[6],
                z: &flat[M2_POPULATION_DIM..],
            },
        }
    }
}

/// Linear predictors of one observation, kept on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictors {
    pub ln_lambda: f64,
    pub ln_p: f64,
    pub ln_1m_p: f64,
}

impl Predictors {
    pub fn lambda(&self) -> f64 {
        self.ln_lambda.exp()
    }

    pub fn p(&self) -> f64 {
        self.ln_p.exp()
    }

    pub fn rate(&self) -> Result<Rate> {
        Rate::new(self.lambda())
    }

    pub fn probability(&self) -> Result<Probability> {
        Probability::new(self.p())
    }

    /// Expected count `(1 - p) * lambda`.
    pub fn expected_count(&self) -> f64 {
        (self.ln_1m_p + self.ln_lambda).exp()
    }
}

/// Rate and zero-inflation predictors for covariates, with an explicit
/// subject intercept (`None` for M1).
pub(crate) fn predictors_at(
    view: &ParamView<'_>,
    kind: ModelKind,
    link: ZiLink,
    approach: f64,
    experience: f64,
    subject_intercept: f64,
) -> Predictors {
    let mut ln_lambda = view.alpha + view.beta_a * approach + view.beta_e * experience;
    match kind {
        ModelKind::M1 => Predictors { ln_lambda, ln_p: f64::NEG_INFINITY, ln_1m_p: 0.0 },
        ModelKind::M2 => {
            ln_lambda += subject_intercept;
            let eta = view.alpha_p + view.beta_p * approach;
            let (ln_p, ln_1m_p) = match link {
                ZiLink::Logit => (-softplus(-eta), -softplus(eta)),
                ZiLink::Log => {
                    if eta > 0.0 {
                        // p > 1: outside the model's support
                        (f64::NAN, f64::NAN)
                    } else {
                        (eta, (-eta.exp_m1()).ln())
                    }
                }
            };
            Predictors { ln_lambda, ln_p, ln_1m_p }
        }
    }
}

#[inline]
fn observation_predictors(view: &ParamView<'_>, spec: &ModelSpec, obs: &Observation) -> Predictors {
    let intercept = match spec.kind {
        ModelKind::M1 => 0.0,
        ModelKind::M2 => view.mu_s + view.sigma_s * view.z[obs.subject],
    };
    predictors_at(view, spec.kind, spec.zi_link, obs.approach as f64, obs.experience as f64, intercept)
}

#[inline]
fn observation_loglik(p: &Predictors, kind: ModelKind, faults: u64, ln_fact: f64) -> f64 {
    match kind {
        ModelKind::M1 => poisson_logpmf_ln(faults, p.ln_lambda, ln_fact),
        ModelKind::M2 => {
            if p.ln_p.is_nan() {
                return f64::NEG_INFINITY;
            }
            zip_logpmf_ln(faults, p.ln_lambda, p.ln_p, p.ln_1m_p, ln_fact)
        }
    }
}

/// Log likelihood of every row in a group at once.
#[inline]
fn group_loglik(view: &ParamView<'_>, spec: &ModelSpec, g: &Group) -> f64 {
    let intercept = match spec.kind {
        ModelKind::M1 => 0.0,
        ModelKind::M2 => view.mu_s + view.sigma_s * view.z[g.subject],
    };
    let p = predictors_at(view, spec.kind, spec.zi_link, g.approach as f64, g.experience as f64, intercept);
    let n = g.zeros + g.positives;
    let poisson_part = g.sum_faults * p.ln_lambda - g.sum_ln_fact;
    match spec.kind {
        ModelKind::M1 => poisson_part - n * p.lambda(),
        ModelKind::M2 => {
            if p.ln_p.is_nan() {
                return f64::NEG_INFINITY;
            }
            let mut ll = 0.0;
            if g.zeros > 0.0 {
                ll += g.zeros * zip_logpmf_ln(0, p.ln_lambda, p.ln_p, p.ln_1m_p, 0.0);
            }
            if g.positives > 0.0 {
                if p.ln_1m_p == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                ll += g.positives * (p.ln_1m_p - p.lambda()) + poisson_part;
            }
            ll
        }
    }
}

/// `(lambda, p)` for one observation; `p = 0` under M1.
pub fn linear_predictors(params: &ParameterVector, obs: &Observation, spec: &ModelSpec) -> Predictors {
    observation_predictors(&params.view(), spec, obs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub total: f64,
    pub per_observation: Vec<f64>,
}

pub fn log_likelihood(params: &ParameterVector, data: &Dataset, spec: &ModelSpec) -> Result<LogLikelihood> {
    params.check_dims(spec, data.n_subjects())?;
    let view = params.view();
    let per_observation = pointwise(&view, data, spec);
    let total = per_observation.iter().sum();
    Ok(LogLikelihood { total, per_observation })
}

pub(crate) fn pointwise(view: &ParamView<'_>, data: &Dataset, spec: &ModelSpec) -> Vec<f64> {
    data.observations
        .iter()
        .zip(&data.ln_fact)
        .map(|(o, lf)| observation_loglik(&observation_predictors(view, spec, o), spec.kind, o.faults, *lf))
        .collect()
}

fn total_loglik(view: &ParamView<'_>, data: &Dataset, spec: &ModelSpec) -> f64 {
    let mut total = 0.0;
    for g in &data.groups {
        total += group_loglik(view, spec, g);
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    total
}

fn prior_of(view: &ParamView<'_>, spec: &ModelSpec) -> f64 {
    let sd = spec.prior_sd;
    let mut lp = normal_lpdf(view.alpha, 0.0, sd)
        + normal_lpdf(view.beta_a, 0.0, sd)
        + normal_lpdf(view.beta_e, 0.0, sd);
    if spec.kind == ModelKind::M2 {
        if !(view.sigma_s > 0.0) {
            return f64::NEG_INFINITY;
        }
        lp += normal_lpdf(view.alpha_p, 0.0, sd)
            + normal_lpdf(view.beta_p, 0.0, sd)
            + normal_lpdf(view.mu_s, 0.0, sd)
            + half_cauchy_lpdf(view.sigma_s, spec.sigma_scale);
        lp += view.z.iter().map(|z| normal_lpdf(*z, 0.0, 1.0)).sum::<f64>();
    }
    lp
}

/// Log prior density. Returns `-inf` when `sigma_s <= 0` under M2.
pub fn log_prior(params: &ParameterVector, spec: &ModelSpec) -> f64 {
    prior_of(&params.view(), spec)
}

/// Unnormalized log posterior: log prior plus total log likelihood.
pub fn log_posterior(params: &ParameterVector, data: &Dataset, spec: &ModelSpec) -> Result<f64> {
    params.check_dims(spec, data.n_subjects())?;
    let view = params.view();
    Ok(posterior_of(&view, data, spec))
}

fn posterior_of(view: &ParamView<'_>, data: &Dataset, spec: &ModelSpec) -> f64 {
    let lp = prior_of(view, spec);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + total_loglik(view, data, spec)
}

/// Sampling target for a model on a dataset.
///
/// The unconstrained coordinates equal the flat layout except that
/// `sigma_s` is stored as `ln sigma_s`; the log-Jacobian is added.
///
/// M2 is swept as: the population block; the population block again with
/// `z` moved along so every subject's rate predictor stays fixed; a shift
/// of `mu_s` against `alpha` (only their sum is in the likelihood); then each
/// `z[j]` alone, evaluated on subject j's rows only.
#[derive(Debug, Clone)]
pub struct ModelTarget<'a> {
    data: &'a Dataset,
    spec: ModelSpec,
}

const MU_S_INDEX: usize = 5;
const INTERWEAVE_BLOCK: usize = 1;
const RIDGE_BLOCK: usize = 2;
const FIRST_SUBJECT_BLOCK: usize = 3;

impl<'a> ModelTarget<'a> {
    pub fn new(data: &'a Dataset, spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(ModelTarget { data, spec })
    }

    fn subject_log_density(&self, x: &[f64], j: usize) -> f64 {
        let mut view = ParamView::from_flat(ModelKind::M2, x);
        view.sigma_s = x[SIGMA_S_INDEX].exp();
        let groups = &self.data.groups[self.data.subject_groups[j]..self.data.subject_groups[j + 1]];
        normal_lpdf(view.z[j], 0.0, 1.0) + groups.iter().map(|g| group_loglik(&view, &self.spec, g)).sum::<f64>()
    }
}

impl LogDensity for ModelTarget<'_> {
    fn dim(&self) -> usize {
        self.spec.dim(self.data.n_subjects())
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        match self.spec.kind {
            ModelKind::M1 => posterior_of(&ParamView::from_flat(ModelKind::M1, x), self.data, &self.spec),
            ModelKind::M2 => {
                let log_sigma = x[SIGMA_S_INDEX];
                let mut view = ParamView::from_flat(ModelKind::M2, x);
                view.sigma_s = log_sigma.exp();
                posterior_of(&view, self.data, &self.spec) + log_sigma
            }
        }
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        match self.spec.kind {
            ModelKind::M1 => vec![0..3],
            ModelKind::M2 => [0..M2_POPULATION_DIM, 0..M2_POPULATION_DIM, MU_S_INDEX..MU_S_INDEX + 1]
                .into_iter()
                .chain((M2_POPULATION_DIM..self.dim()).map(|i| i..i + 1))
                .collect(),
        }
    }

    fn block_log_density(&self, x: &[f64], block: usize) -> Option<f64> {
        if self.spec.kind != ModelKind::M2 {
            return None;
        }
        match block {
            RIDGE_BLOCK => {
                let sd = self.spec.prior_sd;
                Some(normal_lpdf(x[0], 0.0, sd) + normal_lpdf(x[MU_S_INDEX], 0.0, sd))
            }
            b if b >= FIRST_SUBJECT_BLOCK => Some(self.subject_log_density(x, b - FIRST_SUBJECT_BLOCK)),
            _ => None,
        }
    }

    fn transport(&self, block: usize, from: &[f64], to: &mut [f64]) -> Option<f64> {
        if self.spec.kind != ModelKind::M2 {
            return None;
        }
        if block == RIDGE_BLOCK {
            to[0] = from[0] + from[MU_S_INDEX] - to[MU_S_INDEX];
            return Some(0.0);
        }
        if block != INTERWEAVE_BLOCK {
            return None;
        }
        let (log_sigma, log_sigma_new) = (from[SIGMA_S_INDEX], to[SIGMA_S_INDEX]);
        let ratio = (log_sigma - log_sigma_new).exp();
        let inv_sigma_new = (-log_sigma_new).exp();
        let fixed = |x: &[f64], (a, e): (f64, f64)| x[0] + x[1] * a + x[2] * e + x[MU_S_INDEX];
        let (head, z_to) = to.split_at_mut(M2_POPULATION_DIM);
        for ((t, f), cov) in z_to.iter_mut().zip(&from[M2_POPULATION_DIM..]).zip(&self.data.subject_covariates) {
            *t = f * ratio + (fixed(from, *cov) - fixed(head, *cov)) * inv_sigma_new;
        }
        Some(self.data.n_subjects() as f64 * (log_sigma - log_sigma_new))
    }

    fn param_names(&self) -> Vec<String> {
        self.spec.param_names(self.data.n_subjects())
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        if self.spec.kind == ModelKind::M2 {
            out[SIGMA_S_INDEX] = x[SIGMA_S_INDEX].exp();
        }
        out
    }

    fn initial_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let pop = self.spec.population_dim();
        let mut x = Vec::with_capacity(self.dim());
        for i in 0..pop {
            if self.spec.kind == ModelKind::M2 && i == SIGMA_S_INDEX {
                x.push(rng.random_range(-2.0..0.0));
            } else {
                x.push(rng.random_range(-2.0..2.0));
            }
        }
        for _ in pop..self.dim() {
            let z: f64 = StandardNormal.sample(rng);
            x.push(0.1 * z);
        }
        x
    }
}
