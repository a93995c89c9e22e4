//! Manager decision scenarios evaluated end to end: posterior-predictive
//! fault counts, their monetary prospects and prospect-theory utilities.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cpt::{expected_utility, tail_breakdown, CostProfile, CostSelector, Prospect, TailEntry, WeightingParams, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::posterior::{
    posterior_predictive, Composition, Posterior, PredictiveMode, PredictiveRequest, PredictiveSamples, Setting,
    SubjectMode,
};
use crate::sampler::derive_seed;
use crate::stats::{mean, sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOption {
    pub label: String,
    /// Predictor setting name, e.g. `exploratory+mixed`.
    pub setting: String,
    pub cost: CostSelector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub options: Vec<ScenarioOption>,
}

fn option(label: &str, setting: &str, cost: CostSelector) -> ScenarioOption {
    ScenarioOption { label: label.into(), setting: setting.into(), cost }
}

impl Scenario {
    /// Exploratory vs test-case testing by a mixed pool at the mixed rate.
    pub fn approach() -> Self {
        Scenario {
            name: "approach".into(),
            options: vec![
                option("exploratory", "exploratory+mixed", CostSelector::Mixed),
                option("test-case", "testcase+mixed", CostSelector::Mixed),
            ],
        }
    }

    /// Low- vs high-experience developers using the observed mix of approaches.
    pub fn experience() -> Self {
        Scenario {
            name: "experience".into(),
            options: vec![
                option("low", "mixed+low", CostSelector::Low),
                option("high", "mixed+high", CostSelector::High),
            ],
        }
    }

    /// Low- vs high-experience developers, all testing exploratively.
    pub fn exploratory() -> Self {
        Scenario {
            name: "exploratory".into(),
            options: vec![
                option("low", "exploratory+low", CostSelector::Low),
                option("high", "exploratory+high", CostSelector::High),
            ],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "approach" => Ok(Scenario::approach()),
            "experience" => Ok(Scenario::experience()),
            "exploratory" => Ok(Scenario::exploratory()),
            _ => Err(Error::config(format!("unknown scenario `{name}` (approach, experience, exploratory)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::config(format!("scenario `{}` needs at least two options", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    /// Simulated counts per posterior draw.
    pub n_rep: usize,
    pub subject: SubjectMode,
    pub composition: Composition,
    /// Batches for the Monte-Carlo standard error.
    pub batches: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seed: 0, n_rep: 1, subject: SubjectMode::Fresh, composition: Composition::Dataset, batches: 20 }
    }
}

/// Stream id for an option's generator: options with the same setting share
/// predictive samples, so identical options get identical utilities.
fn setting_stream(setting: &str) -> u64 {
    setting.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Simulated fault counts for one setting, in posterior-draw order.
pub fn predictive_counts(post: &Posterior, setting: &str, cfg: &EvalConfig) -> Result<Vec<u64>> {
    let s = Setting::parse(setting, post.data(), cfg.composition)?;
    let req = PredictiveRequest::new(s, PredictiveMode::Outcome)
        .with_subject(cfg.subject)
        .with_reps(cfg.n_rep)
        .with_seed(derive_seed(cfg.seed, setting_stream(setting)));
    match posterior_predictive(post, &req)?.samples {
        PredictiveSamples::Outcome(c) => Ok(c),
        PredictiveSamples::Expectation(_) => unreachable!("outcome mode requested"),
    }
}

/// Empirical distribution of counts mapped to money.
pub fn prospect_from_counts(counts: &[u64], cost: CostSelector, profile: &CostProfile) -> Result<Prospect> {
    if counts.is_empty() {
        return Err(Error::input("no predictive samples"));
    }
    let mut freq = BTreeMap::new();
    for c in counts {
        *freq.entry(*c).or_insert(0usize) += 1;
    }
    let n = counts.len() as f64;
    Prospect::new(freq.into_iter().map(|(x, k)| (profile.value(x, cost), k as f64 / n)).collect())
}

pub fn build_prospect(
    post: &Posterior,
    setting: &str,
    cost: CostSelector,
    profile: &CostProfile,
    cfg: &EvalConfig,
) -> Result<Prospect> {
    profile.validate()?;
    prospect_from_counts(&predictive_counts(post, setting, cfg)?, cost, profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionReport {
    pub label: String,
    pub setting: String,
    pub cost: CostSelector,
    pub utility: f64,
    /// Batch-means Monte-Carlo standard error of `utility`.
    pub mc_se: f64,
    pub tails: [TailEntry; 3],
    /// Distinct fault counts in the prospect.
    pub prospect_size: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub scenario: String,
    pub options: Vec<OptionReport>,
    /// Label of the utility-maximizing option (first on ties).
    pub best: String,
    pub profile: CostProfile,
    pub weighting: WeightingParams,
    pub mode: PredictiveMode,
    pub config: EvalConfig,
}

impl UtilityReport {
    pub fn option(&self, label: &str) -> Option<&OptionReport> {
        self.options.iter().find(|o| o.label == label)
    }
}

fn batch_se(counts: &[u64], cost: CostSelector, profile: &CostProfile, weighting: &WeightingParams, batches: usize) -> Result<f64> {
    let b = batches.min(counts.len() / 2);
    if b < 2 {
        return Ok(f64::NAN);
    }
    let size = counts.len() / b;
    let utilities = (0..b)
        .map(|i| expected_utility(&prospect_from_counts(&counts[i * size..(i + 1) * size], cost, profile)?, weighting))
        .collect::<Result<Vec<_>>>()?;
    Ok(sd(&utilities) / (b as f64).sqrt())
}

fn report_option(
    opt: &ScenarioOption,
    counts: &[u64],
    profile: &CostProfile,
    weighting: &WeightingParams,
    cfg: &EvalConfig,
) -> Result<OptionReport> {
    let prospect = prospect_from_counts(counts, opt.cost, profile)?;
    Ok(OptionReport {
        label: opt.label.clone(),
        setting: opt.setting.clone(),
        cost: opt.cost,
        utility: expected_utility(&prospect, weighting)?,
        mc_se: batch_se(counts, opt.cost, profile, weighting, cfg.batches)?,
        tails: tail_breakdown(&prospect, DEFAULT_SPLIT)?,
        prospect_size: prospect.outcomes.len(),
        n_samples: counts.len(),
    })
}

fn scenario_counts(post: &Posterior, scenario: &Scenario, cfg: &EvalConfig) -> Result<Vec<Vec<u64>>> {
    scenario.validate()?;
    scenario.options.iter().map(|o| predictive_counts(post, &o.setting, cfg)).collect()
}

fn report_from_counts(
    scenario: &Scenario,
    counts: &[Vec<u64>],
    profile: &CostProfile,
    weighting: &WeightingParams,
    cfg: &EvalConfig,
) -> Result<UtilityReport> {
    profile.validate()?;
    weighting.validate()?;
    let options = scenario
        .options
        .iter()
        .zip(counts)
        .map(|(o, c)| report_option(o, c, profile, weighting, cfg))
        .collect::<Result<Vec<_>>>()?;
    let best = argmax(&options.iter().map(|o| o.utility).collect::<Vec<_>>());
    Ok(UtilityReport {
        scenario: scenario.name.clone(),
        best: options[best].label.clone(),
        options,
        profile: *profile,
        weighting: *weighting,
        mode: PredictiveMode::Outcome,
        config: *cfg,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate_scenario(
    post: &Posterior,
    scenario: &Scenario,
    profile: &CostProfile,
    weighting: &WeightingParams,
    cfg: &EvalConfig,
) -> Result<UtilityReport> {
    let counts = scenario_counts(post, scenario, cfg)?;
    report_from_counts(scenario, &counts, profile, weighting, cfg)
}

/// A cost-profile field that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostParam {
    #[serde(rename = "S")]
    Savings,
    #[serde(rename = "C-")]
    CostLow,
    #[serde(rename = "C+")]
    CostHigh,
    #[serde(rename = "Cbar")]
    CostMixed,
    #[serde(rename = "h")]
    Hours,
}

impl CostParam {
    pub fn set(self, profile: &mut CostProfile, value: f64) {
        match self {
            CostParam::Savings => profile.savings_per_fault = value,
            CostParam::CostLow => profile.hourly_cost_low = value,
            CostParam::CostHigh => profile.hourly_cost_high = value,
            CostParam::CostMixed => profile.hourly_cost_mixed = value,
            CostParam::Hours => profile.session_hours = value,
        }
    }
}

impl FromStr for CostParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "savings" => Ok(CostParam::Savings),
            "C-" | "Clow" | "cost_low" => Ok(CostParam::CostLow),
            "C+" | "Chigh" | "cost_high" => Ok(CostParam::CostHigh),
            "Cbar" | "Cmixed" | "cost_mixed" => Ok(CostParam::CostMixed),
            "h" | "hours" => Ok(CostParam::Hours),
            _ => Err(Error::config(format!("cannot sweep `{s}` (S, C-, C+, Cbar, h)"))),
        }
    }
}

impl fmt::Display for CostParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostParam::Savings => "S",
            CostParam::CostLow => "C-",
            CostParam::CostHigh => "C+",
            CostParam::CostMixed => "Cbar",
            CostParam::Hours => "h",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// One utility per option, in scenario order.
    pub utilities: Vec<f64>,
    pub best: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub scenario: String,
    pub parameter: CostParam,
    pub labels: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// One evaluation per value, all on the same predictive samples.
pub fn sensitivity_sweep(
    post: &Posterior,
    scenario: &Scenario,
    profile: &CostProfile,
    weighting: &WeightingParams,
    cfg: &EvalConfig,
    parameter: CostParam,
    values: &[f64],
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let counts = scenario_counts(post, scenario, cfg)?;
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut p = *profile;
        parameter.set(&mut p, *v);
        let report = report_from_counts(scenario, &counts, &p, weighting, cfg)?;
        rows.push(SweepRow { value: *v, utilities: report.options.iter().map(|o| o.utility).collect(), best: report.best });
    }
    Ok(SweepTable {
        scenario: scenario.name.clone(),
        parameter,
        labels: scenario.options.iter().map(|o| o.label.clone()).collect(),
        rows,
    })
}

/// Mean of the options' simulated counts, for quick inspection.
pub fn mean_counts(post: &Posterior, scenario: &Scenario, cfg: &EvalConfig) -> Result<Vec<f64>> {
    Ok(scenario_counts(post, scenario, cfg)?.iter().map(|c| mean(&c.iter().map(|v| *v as f64).collect::<Vec<_>>())).collect())
}
