//! Cumulative prospect theory: monetary values, Tversky-Kahneman probability
//! weighting, rank-dependent decision weights and tail breakdowns.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::Probability;
use crate::error::{Error, Result};

/// Below this exponent the weighting function stops being monotone.
pub const MIN_GAMMA: f64 = 0.28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostSelector {
    Low,
    High,
    Mixed,
}

impl FromStr for CostSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(CostSelector::Low),
            "high" => Ok(CostSelector::High),
            "mixed" => Ok(CostSelector::Mixed),
            _ => Err(Error::config(format!("unknown hourly cost `{s}` (low, high, mixed)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostProfile {
    /// Money saved per detected fault.
    pub savings_per_fault: f64,
    pub hourly_cost_low: f64,
    pub hourly_cost_high: f64,
    pub hourly_cost_mixed: f64,
    pub session_hours: f64,
}

impl Default for CostProfile {
    fn default() -> Self {
        CostProfile {
            savings_per_fault: 150.0,
            hourly_cost_low: 100.0,
            hourly_cost_high: 200.0,
            hourly_cost_mixed: 134.38,
            session_hours: 3.0,
        }
    }
}

impl CostProfile {
    pub fn validate(&self) -> Result<()> {
        let costs = [self.savings_per_fault, self.hourly_cost_low, self.hourly_cost_high, self.hourly_cost_mixed];
        if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::config("savings and hourly costs must be finite and nonnegative"));
        }
        if !(self.session_hours > 0.0 && self.session_hours.is_finite()) {
            return Err(Error::config("session hours must be positive"));
        }
        Ok(())
    }

    pub fn hourly(&self, which: CostSelector) -> f64 {
        match which {
            CostSelector::Low => self.hourly_cost_low,
            CostSelector::High => self.hourly_cost_high,
            CostSelector::Mixed => self.hourly_cost_mixed,
        }
    }

    pub fn value(&self, faults: u64, which: CostSelector) -> f64 {
        value(faults, self.savings_per_fault, self.hourly(which), self.session_hours)
    }
}

/// Net money of a session that found `faults` faults: `S x - C h`.
pub fn value(faults: u64, savings_per_fault: f64, hourly_cost: f64, hours: f64) -> f64 {
    savings_per_fault * faults as f64 - hourly_cost * hours
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    /// Rank-dependent weights from cumulative probabilities.
    #[default]
    Cumulative,
    /// Each outcome's own probability is weighted.
    Pointwise,
}

impl FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(WeightingMode::Cumulative),
            "pointwise" => Ok(WeightingMode::Pointwise),
            _ => Err(Error::config(format!("unknown weighting mode `{s}` (cumulative, pointwise)"))),
        }
    }
}

/// Transform applied to money before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ValueTransform {
    #[default]
    Linear,
    /// `x^alpha` for gains, `-lambda (-x)^alpha` for losses.
    Power { alpha: f64, loss_aversion: f64 },
}

impl ValueTransform {
    pub fn tversky_kahneman() -> Self {
        ValueTransform::Power { alpha: 0.88, loss_aversion: 2.25 }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            ValueTransform::Linear => x,
            ValueTransform::Power { alpha, loss_aversion } => {
                if x >= 0.0 {
                    x.powf(alpha)
                } else {
                    -loss_aversion * (-x).powf(alpha)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightingParams {
    pub gamma_gain: f64,
    pub gamma_loss: f64,
    pub mode: WeightingMode,
    pub value_transform: ValueTransform,
}

impl Default for WeightingParams {
    fn default() -> Self {
        WeightingParams {
            gamma_gain: 0.61,
            gamma_loss: 0.69,
            mode: WeightingMode::Cumulative,
            value_transform: ValueTransform::Linear,
        }
    }
}

impl WeightingParams {
    /// Identity weighting: decision weights equal probabilities.
    pub fn identity() -> Self {
        WeightingParams { gamma_gain: 1.0, gamma_loss: 1.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma_gain)?;
        check_gamma(self.gamma_loss)?;
        if let ValueTransform::Power { alpha, loss_aversion } = self.value_transform {
            if !(alpha > 0.0 && alpha <= 1.0 && loss_aversion > 0.0 && loss_aversion.is_finite()) {
                return Err(Error::config(format!(
                    "power value needs alpha in (0, 1] and positive loss aversion, got {alpha}, {loss_aversion}"
                )));
            }
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > MIN_GAMMA && gamma <= 1.0) {
        return Err(Error::domain(format!("weighting exponent must lie in ({MIN_GAMMA}, 1], got {gamma}")));
    }
    Ok(())
}

/// `w(p) = p^g / (p^g + (1 - p)^g)^(1/g)`.
pub fn tk_weight(p: Probability, gamma: f64) -> Result<Probability> {
    check_gamma(gamma)?;
    Probability::new(tk_weight_raw(p.get(), gamma).clamp(0.0, 1.0))
}

fn tk_weight_raw(p: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        return p.clamp(0.0, 1.0);
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let a = p.powf(gamma);
    a / (a + (1.0 - p).powf(gamma)).powf(1.0 / gamma)
}

/// Outcomes with probabilities and a reference point separating gains
/// from losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prospect {
    /// `(value, probability)` pairs.
    pub outcomes: Vec<(f64, f64)>,
    #[serde(default)]
    pub reference: f64,
}

impl Prospect {
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        let p = Prospect { outcomes, reference: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = reference;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcomes.is_empty() {
            return Err(Error::input("prospect has no outcomes"));
        }
        if !self.reference.is_finite() {
            return Err(Error::input("reference point must be finite"));
        }
        for (i, (v, p)) in self.outcomes.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::input(format!("outcome {i} has non-finite value {v}")));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(Error::input(format!("outcome {i} has probability {p} outside [0, 1]")));
            }
        }
        let total: f64 = self.outcomes.iter().map(|o| o.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Plain probability-weighted mean of `value - reference`.
    pub fn expectation(&self) -> f64 {
        self.outcomes.iter().map(|(v, p)| p * (v - self.reference)).sum()
    }
}

/// One decision weight per outcome, in the prospect's order.
pub fn decision_weights(prospect: &Prospect, params: &WeightingParams) -> Result<Vec<f64>> {
    prospect.validate()?;
    params.validate()?;
    let (gg, gl) = (params.gamma_gain, params.gamma_loss);
    let r = prospect.reference;
    let out = &prospect.outcomes;
    let mut weights = vec![0.0; out.len()];
    match params.mode {
        WeightingMode::Pointwise => {
            for (w, (v, p)) in weights.iter_mut().zip(out) {
                *w = tk_weight_raw(*p, if *v >= r { gg } else { gl });
            }
        }
        WeightingMode::Cumulative => {
            let mut order: Vec<usize> = (0..out.len()).collect();
            order.sort_by(|a, b| out[*a].0.total_cmp(&out[*b].0).then(a.cmp(b)));
            let split = order.iter().position(|i| out[*i].0 >= r).unwrap_or(order.len());
            // losses: from the worst outcome up, on lower-tail cumulative probabilities
            let rank_weight = |prev: f64, p: f64, g: f64| {
                if g == 1.0 {
                    p
                } else {
                    tk_weight_raw((prev + p).min(1.0), g) - tk_weight_raw(prev, g)
                }
            };
            let mut below = 0.0;
            for i in &order[..split] {
                weights[*i] = rank_weight(below, out[*i].1, gl);
                below += out[*i].1;
            }
            // gains: from the best outcome down, on upper-tail cumulative probabilities
            let mut above = 0.0;
            for i in order[split..].iter().rev() {
                weights[*i] = rank_weight(above, out[*i].1, gg);
                above += out[*i].1;
            }
        }
    }
    Ok(weights)
}

/// `sum_i weight_i * v(value_i - reference)`.
pub fn expected_utility(prospect: &Prospect, params: &WeightingParams) -> Result<f64> {
    let weights = decision_weights(prospect, params)?;
    Ok(weights
        .iter()
        .zip(&prospect.outcomes)
        .map(|(w, (v, _))| w * params.value_transform.apply(v - prospect.reference))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub probability: f64,
    /// Probability-weighted mean value over the segment.
    pub value: f64,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.03, 0.94, 0.03];

/// Lower tail, centre and upper tail of the value distribution. Outcomes
/// straddling a boundary contribute the share of their mass that falls in
/// each segment.
pub fn tail_breakdown(prospect: &Prospect, split: [f64; 3]) -> Result<[TailEntry; 3]> {
    prospect.validate()?;
    if split.iter().any(|s| !(*s > 0.0)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split {split:?} must be positive and sum to 1")));
    }
    let mut sorted = prospect.outcomes.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bounds = [0.0, split[0], split[0] + split[1], 1.0];
    let mut mass = [0.0; 3];
    let mut weighted = [0.0; 3];
    let mut start = 0.0;
    for (v, p) in &sorted {
        let end = start + p;
        for seg in 0..3 {
            let overlap = end.min(bounds[seg + 1]) - start.max(bounds[seg]);
            if overlap > 0.0 {
                mass[seg] += overlap;
                weighted[seg] += overlap * v;
            }
        }
        start = end;
    }
    // Rounding can leave a segment marginally short of mass; fall back to the nearest outcome.
    let edge = |seg: usize| if seg == 0 { sorted[0].0 } else { sorted[sorted.len() - 1].0 };
    Ok(std::array::from_fn(|seg| TailEntry {
        probability: split[seg],
        value: if mass[seg] > 0.0 { weighted[seg] / mass[seg] } else { edge(seg) },
    }))
}
