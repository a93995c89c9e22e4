//! Fitted posteriors and the reports derived from them: parameter summaries,
//! marginal histograms and posterior-predictive fault distributions.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{draw_poisson, draw_zip};
use crate::error::{Error, Result};
use crate::model::{predictors_at, Dataset, ModelKind, ModelSpec, ModelTarget, ParamView, ParameterVector, SIGMA_S_INDEX};
use crate::sampler::{ess_bulk, run_mcmc, split_rhat, Draws, SamplerConfig};
use crate::stats::{mean, quantile_sorted, sd};

pub const DEFAULT_CI: f64 = 0.94;

/// What a posterior remembers about the data it was fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub fingerprint: String,
    pub n_subjects: usize,
    pub n_observations: usize,
    /// Fraction of test-case observations.
    pub approach_share: f64,
    /// Fraction of high-experience observations.
    pub experience_share: f64,
}

impl DataInfo {
    pub fn of(data: &Dataset) -> Self {
        DataInfo {
            fingerprint: data.fingerprint(),
            n_subjects: data.n_subjects(),
            n_observations: data.len(),
            approach_share: data.approach_share(),
            experience_share: data.experience_share(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    /// `None` when undefined (a single chain or zero variance).
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Posterior {
    draws: Draws,
    spec: ModelSpec,
    data: DataInfo,
    diagnostics: Vec<ParamDiagnostics>,
}

impl Posterior {
    pub fn new(draws: Draws, spec: ModelSpec, data: DataInfo) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_names(data.n_subjects);
        if draws.names() != expected.as_slice() {
            return Err(Error::input(format!(
                "draws have columns {:?}..., but a {} fit on {} subjects needs {} columns",
                &draws.names()[..draws.dim().min(3)],
                spec.kind,
                data.n_subjects,
                expected.len()
            )));
        }
        if spec.kind == ModelKind::M2 && draws.iter_draws().any(|d| !(d[SIGMA_S_INDEX] > 0.0)) {
            return Err(Error::input("sigma_s must be positive in every draw"));
        }
        let diagnostics = (0..draws.dim())
            .map(|i| ParamDiagnostics {
                name: draws.names()[i].clone(),
                rhat: split_rhat(&draws, i),
                ess_bulk: ess_bulk(&draws, i),
            })
            .collect();
        Ok(Posterior { draws, spec, data, diagnostics })
    }

    /// Samples the model's posterior on `data`.
    pub fn fit(data: &Dataset, spec: ModelSpec, config: &SamplerConfig) -> Result<Self> {
        let target = ModelTarget::new(data, spec)?;
        let draws = run_mcmc(&target, config)?;
        Posterior::new(draws, spec, DataInfo::of(data))
    }

    /// A posterior concentrated on one parameter vector (one chain, one draw).
    /// Subject offsets are kept only if `params.z_subjects` matches `data`.
    pub fn point_mass(params: &ParameterVector, spec: ModelSpec, data: DataInfo) -> Result<Self> {
        let mut params = params.clone();
        if params.z_subjects.len() != data.n_subjects {
            params.z_subjects = vec![0.0; data.n_subjects];
        }
        let draws = Draws::new(spec.param_names(data.n_subjects), 1, 1, params.to_flat(&spec))?;
        Posterior::new(draws, spec, data)
    }

    pub fn draws(&self) -> &Draws {
        &self.draws
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &DataInfo {
        &self.data
    }

    pub fn diagnostics(&self) -> &[ParamDiagnostics] {
        &self.diagnostics
    }

    pub fn population_dim(&self) -> usize {
        self.spec.population_dim()
    }

    /// Population parameters whose R̂ exceeds `threshold`.
    pub fn rhat_failures(&self, threshold: f64) -> Vec<&ParamDiagnostics> {
        self.diagnostics[..self.population_dim()]
            .iter()
            .filter(|d| d.rhat.is_some_and(|r| r > threshold))
            .collect()
    }

    pub(crate) fn view<'a>(&self, draw: &'a [f64]) -> ParamView<'a> {
        ParamView::from_flat(self.spec.kind, draw)
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.draws.index_of(name).ok_or_else(|| Error::config(format!("unknown parameter `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::config(format!("interval level must lie in (0, 1], got {level}")));
    }
    Ok(())
}

fn equal_tailed(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail))
}

fn summarize_values(name: &str, values: &mut [f64], level: f64) -> SummaryRow {
    values.sort_by(f64::total_cmp);
    let (ci_lo, ci_hi) = equal_tailed(values, level);
    SummaryRow { parameter: name.to_string(), mean: mean(values), sd: sd(values), ci_lo, ci_hi }
}

/// Mean, sd and equal-tailed interval of every column of pooled draws.
pub fn summarize_draws(draws: &Draws, ci_level: f64) -> Result<Vec<SummaryRow>> {
    check_level(ci_level)?;
    Ok((0..draws.dim()).map(|i| summarize_values(&draws.names()[i], &mut draws.pooled(i), ci_level)).collect())
}

/// Summary rows for the population-level parameters.
pub fn summarize(post: &Posterior, ci_level: f64) -> Result<Vec<SummaryRow>> {
    let mut rows = summarize_draws(&post.draws, ci_level)?;
    rows.truncate(post.population_dim());
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDensity {
    pub parameter: String,
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    /// Density heights; `sum(height * width) = 1`.
    pub heights: Vec<f64>,
    pub median: f64,
    pub band: (f64, f64),
    /// Fraction of draws strictly below zero.
    pub below_zero: f64,
}

pub fn histogram(name: &str, values: &[f64], bins: usize, ci_level: f64) -> Result<MarginalDensity> {
    if bins < 10 {
        return Err(Error::config(format!("need at least 10 bins, got {bins}")));
    }
    check_level(ci_level)?;
    if values.is_empty() {
        return Err(Error::input("no draws to histogram"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
    let mut counts = vec![0usize; bins];
    for v in &sorted {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = sorted.len() as f64;
    let heights = counts.iter().zip(edges.windows(2)).map(|(c, e)| *c as f64 / (n * (e[1] - e[0]))).collect();
    Ok(MarginalDensity {
        parameter: name.to_string(),
        edges,
        heights,
        median: quantile_sorted(&sorted, 0.5),
        band: equal_tailed(&sorted, ci_level),
        below_zero: sorted.iter().filter(|v| **v < 0.0).count() as f64 / n,
    })
}

pub fn marginal_density(post: &Posterior, parameter: &str, bins: usize, ci_level: f64) -> Result<MarginalDensity> {
    let i = post.param_index(parameter)?;
    histogram(parameter, &post.draws.pooled(i), bins, ci_level)
}

/// One covariate of a predictor setting: a fixed level or a mixture with
/// the given weight on level 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fixed(u8),
    Mixture(f64),
}

impl Level {
    fn weights(self) -> [f64; 2] {
        match self {
            Level::Fixed(0) => [1.0, 0.0],
            Level::Fixed(_) => [0.0, 1.0],
            Level::Mixture(w) => [1.0 - w, w],
        }
    }

    fn validate(self, what: &str) -> Result<()> {
        match self {
            Level::Fixed(v) if v > 1 => Err(Error::config(format!("{what} level must be 0 or 1, got {v}"))),
            Level::Mixture(w) if !(0.0..=1.0).contains(&w) => {
                Err(Error::config(format!("{what} mixture weight must lie in [0, 1], got {w}")))
            }
            _ => Ok(()),
        }
    }
}

/// Where predictions are made: approach (0 exploratory, 1 test-case) and
/// experience (0 low, 1 high).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub approach: Level,
    pub experience: Level,
}

/// Which experience mix "mixed" stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    /// Proportions of the fitted dataset.
    #[default]
    Dataset,
    /// 12 low- and 23 high-experience developers.
    TwelveLow,
    /// 23 low- and 12 high-experience developers.
    TwentyThreeLow,
}

impl Composition {
    pub fn experience_weight(self, data: &DataInfo) -> f64 {
        match self {
            Composition::Dataset => data.experience_share,
            Composition::TwelveLow => 23.0 / 35.0,
            Composition::TwentyThreeLow => 12.0 / 35.0,
        }
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset" => Ok(Composition::Dataset),
            "12-low" | "twelve-low" => Ok(Composition::TwelveLow),
            "23-low" | "twenty-three-low" => Ok(Composition::TwentyThreeLow),
            _ => Err(Error::config(format!("unknown composition `{s}` (dataset, 12-low, 23-low)"))),
        }
    }
}

impl Setting {
    pub fn fixed(approach: u8, experience: u8) -> Self {
        Setting { approach: Level::Fixed(approach), experience: Level::Fixed(experience) }
    }

    pub fn validate(&self) -> Result<()> {
        self.approach.validate("approach")?;
        self.experience.validate("experience")
    }

    /// Parses `<approach>+<experience>` where approach is `exploratory`,
    /// `testcase` or `mixed` and experience is `low`, `high` or `mixed`.
    /// Mixed levels use the posterior's data proportions (experience via
    /// `composition`).
    pub fn parse(name: &str, data: &DataInfo, composition: Composition) -> Result<Self> {
        let (a, e) = name
            .split_once('+')
            .ok_or_else(|| Error::config(format!("unknown setting `{name}`; expected <approach>+<experience>")))?;
        let approach = match a {
            "exploratory" => Level::Fixed(0),
            "testcase" | "test-case" => Level::Fixed(1),
            "mixed" => Level::Mixture(data.approach_share),
            _ => return Err(Error::config(format!("unknown approach `{a}` in setting `{name}`"))),
        };
        let experience = match e {
            "low" => Level::Fixed(0),
            "high" => Level::Fixed(1),
            "mixed" => Level::Mixture(composition.experience_weight(data)),
            _ => return Err(Error::config(format!("unknown experience `{e}` in setting `{name}`"))),
        };
        Ok(Setting { approach, experience })
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.approach {
            Level::Fixed(0) => "exploratory".to_string(),
            Level::Fixed(_) => "testcase".to_string(),
            Level::Mixture(w) => format!("mixed({w:.4})"),
        };
        let e = match self.experience {
            Level::Fixed(0) => "low".to_string(),
            Level::Fixed(_) => "high".to_string(),
            Level::Mixture(w) => format!("mixed({w:.4})"),
        };
        write!(f, "{a}+{e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictiveMode {
    /// Posterior of the expected count `(1 - p) * lambda`.
    #[default]
    Expectation,
    /// Simulated integer fault counts.
    Outcome,
}

impl FromStr for PredictiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expectation" => Ok(PredictiveMode::Expectation),
            "outcome" => Ok(PredictiveMode::Outcome),
            _ => Err(Error::config(format!("unknown predictive mode `{s}` (expectation, outcome)"))),
        }
    }
}

/// How M2's subject intercept enters a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectMode {
    /// A new subject: `mu_s + sigma_s * z`, `z ~ N(0, 1)` drawn afresh.
    #[default]
    Fresh,
    /// The average subject: intercept `mu_s`.
    Average,
}

impl FromStr for SubjectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(SubjectMode::Fresh),
            "average" => Ok(SubjectMode::Average),
            _ => Err(Error::config(format!("unknown subject mode `{s}` (fresh, average)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveRequest {
    pub setting: Setting,
    pub mode: PredictiveMode,
    pub subject: SubjectMode,
    /// Simulated counts per posterior draw (outcome mode only).
    pub n_rep: usize,
    pub seed: u64,
}

impl PredictiveRequest {
    pub fn new(setting: Setting, mode: PredictiveMode) -> Self {
        PredictiveRequest { setting, mode, subject: SubjectMode::Fresh, n_rep: 1, seed: 0 }
    }

    pub fn with_subject(mut self, subject: SubjectMode) -> Self {
        self.subject = subject;
        self
    }

    pub fn with_reps(mut self, n_rep: usize) -> Self {
        self.n_rep = n_rep;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictiveSamples {
    Expectation(Vec<f64>),
    Outcome(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub setting: Setting,
    pub samples: PredictiveSamples,
}

impl PredictiveDistribution {
    pub fn mode(&self) -> PredictiveMode {
        match self.samples {
            PredictiveSamples::Expectation(_) => PredictiveMode::Expectation,
            PredictiveSamples::Outcome(_) => PredictiveMode::Outcome,
        }
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            PredictiveSamples::Expectation(v) => v.len(),
            PredictiveSamples::Outcome(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<f64> {
        match &self.samples {
            PredictiveSamples::Expectation(v) => v.clone(),
            PredictiveSamples::Outcome(v) => v.iter().map(|c| *c as f64).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values())
    }
}

const CELLS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

pub fn posterior_predictive(post: &Posterior, req: &PredictiveRequest) -> Result<PredictiveDistribution> {
    req.setting.validate()?;
    if req.mode == PredictiveMode::Outcome && req.n_rep == 0 {
        return Err(Error::config("n_rep must be positive"));
    }
    let spec = post.spec;
    let (wa, we) = (req.setting.approach.weights(), req.setting.experience.weights());
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let intercept = |view: &ParamView<'_>, rng: &mut ChaCha8Rng| match (spec.kind, req.subject) {
        (ModelKind::M1, _) => 0.0,
        (ModelKind::M2, SubjectMode::Average) => view.mu_s,
        (ModelKind::M2, SubjectMode::Fresh) => {
            let z: f64 = StandardNormal.sample(rng);
            view.mu_s + view.sigma_s * z
        }
    };

    let samples = match req.mode {
        PredictiveMode::Expectation => {
            let mut out = Vec::with_capacity(post.draws.total_draws());
            for draw in post.draws.iter_draws() {
                let view = post.view(draw);
                let b = intercept(&view, &mut rng);
                let mut e = 0.0;
                for (a, x) in CELLS {
                    let w = wa[a] * we[x];
                    if w > 0.0 {
                        let pr = predictors_at(&view, spec.kind, spec.zi_link, a as f64, x as f64, b);
                        e += w * pr.expected_count();
                    }
                }
                if !e.is_finite() {
                    return Err(Error::domain("expected count is not finite"));
                }
                out.push(e);
            }
            PredictiveSamples::Expectation(out)
        }
        PredictiveMode::Outcome => {
            let mut out = Vec::with_capacity(post.draws.total_draws() * req.n_rep);
            for draw in post.draws.iter_draws() {
                let view = post.view(draw);
                for _ in 0..req.n_rep {
                    let a = pick(wa, &mut rng);
                    let x = pick(we, &mut rng);
                    let b = intercept(&view, &mut rng);
                    let pr = predictors_at(&view, spec.kind, spec.zi_link, a as f64, x as f64, b);
                    let (lambda, p) = (pr.lambda(), pr.p());
                    if !(lambda.is_finite() && (0.0..=1.0).contains(&p)) {
                        return Err(Error::domain(format!("invalid predictive rate {lambda} or probability {p}")));
                    }
                    out.push(match spec.kind {
                        ModelKind::M1 => draw_poisson(lambda, &mut rng) as u64,
                        ModelKind::M2 => draw_zip(lambda, p, &mut rng),
                    });
                }
            }
            PredictiveSamples::Outcome(out)
        }
    };
    Ok(PredictiveDistribution { setting: req.setting, samples })
}

/// Draws a level from `[w0, w1]`, consuming randomness only for true mixtures
/// so fixed settings keep the generator stream aligned.
fn pick(w: [f64; 2], rng: &mut ChaCha8Rng) -> usize {
    if w[1] <= 0.0 {
        0
    } else if w[0] <= 0.0 {
        1
    } else {
        use rand::Rng;
        (rng.random::<f64>() < w[1]) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveInterval {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
}

/// Equal-tailed interval and mean. Outcome samples use the inverse empirical
/// CDF so the endpoints are observed counts.
pub fn predictive_interval(pd: &PredictiveDistribution, level: f64) -> Result<PredictiveInterval> {
    check_level(level)?;
    if pd.is_empty() {
        return Err(Error::input("empty predictive distribution"));
    }
    let mut v = pd.values();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = match pd.mode() {
        PredictiveMode::Expectation => equal_tailed(&v, level),
        PredictiveMode::Outcome => {
            let tail = (1.0 - level) / 2.0;
            let n = v.len() as f64;
            let at = |q: f64| v[((q * n).ceil() as usize).clamp(1, v.len()) - 1];
            (at(tail), at(1.0 - tail))
        }
    };
    Ok(PredictiveInterval { lo, hi, mean: mean(&v) })
}
