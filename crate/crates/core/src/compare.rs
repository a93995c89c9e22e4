//! Predictive model comparison by WAIC and Pareto-smoothed importance
//! sampling leave-one-out cross-validation.

use serde::{Deserialize, Serialize};

use crate::distributions::{log_mean_exp, log_sum_exp};
use crate::error::{Error, Result};
use crate::model::{pointwise, Dataset};
use crate::posterior::Posterior;
use crate::stats::{mean, sd};

/// Observations with a Pareto k above this are flagged as unreliable.
pub const K_THRESHOLD: f64 = 0.7;

/// Per-draw, per-observation log likelihood, stored draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikMatrix {
    pub label: String,
    n_draws: usize,
    n_obs: usize,
    values: Vec<f64>,
}

impl LogLikMatrix {
    pub fn new(label: impl Into<String>, n_draws: usize, n_obs: usize, values: Vec<f64>) -> Result<Self> {
        if n_draws == 0 || n_obs == 0 || values.len() != n_draws * n_obs {
            return Err(Error::input(format!(
                "log-likelihood matrix needs {n_draws} x {n_obs} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite log likelihood at draw {}, observation {}",
                i / n_obs,
                i % n_obs
            )));
        }
        Ok(LogLikMatrix { label: label.into(), n_draws, n_obs, values })
    }

    /// Log likelihood of every observation of `data` under every retained draw.
    pub fn from_posterior(label: impl Into<String>, post: &Posterior, data: &Dataset) -> Result<Self> {
        if post.data().fingerprint != data.fingerprint() {
            return Err(Error::input("dataset does not match the one the posterior was fitted to"));
        }
        let draws = post.draws();
        let mut values = Vec::with_capacity(draws.total_draws() * data.len());
        for d in draws.iter_draws() {
            values.extend(pointwise(&post.view(d), data, post.spec()));
        }
        LogLikMatrix::new(label, draws.total_draws(), data.len(), values)
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn get(&self, draw: usize, obs: usize) -> f64 {
        self.values[draw * self.n_obs + obs]
    }

    pub fn column(&self, obs: usize) -> Vec<f64> {
        (0..self.n_draws).map(|s| self.get(s, obs)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub elpd: f64,
    pub p_waic: f64,
    pub se: f64,
    pub pointwise: Vec<f64>,
    pub lppd: Vec<f64>,
}

fn total_se(pointwise: &[f64]) -> f64 {
    (pointwise.len() as f64).sqrt() * sd(pointwise)
}

pub fn waic(ll: &LogLikMatrix) -> Result<Waic> {
    if ll.n_draws < 2 {
        return Err(Error::input("WAIC needs at least 2 draws"));
    }
    let mut pw = Vec::with_capacity(ll.n_obs);
    let mut lppd = Vec::with_capacity(ll.n_obs);
    let mut p_total = 0.0;
    for i in 0..ll.n_obs {
        let col = ll.column(i);
        let l = log_mean_exp(&col);
        let p = sd(&col).powi(2);
        lppd.push(l);
        pw.push(l - p);
        p_total += p;
    }
    Ok(Waic { elpd: pw.iter().sum(), p_waic: p_total, se: total_se(&pw), pointwise: pw, lppd })
}

/// Generalized Pareto fit; `k > 0` is a heavy tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gpd {
    pub k: f64,
    pub sigma: f64,
}

impl Gpd {
    pub fn quantile(&self, p: f64) -> f64 {
        if self.k.abs() < 1e-12 {
            -self.sigma * (-p).ln_1p()
        } else {
            self.sigma * (-self.k * (-p).ln_1p()).exp_m1() / self.k
        }
    }
}

/// Zhang-Stephens profile estimator over a fixed grid, with the weakly
/// informative shrinkage of `k` toward 0.5 used by PSIS. `None` flags a
/// degenerate tail (all exceedances equal).
pub fn fit_generalized_pareto(tail: &[f64]) -> Result<Option<Gpd>> {
    let n = tail.len();
    if n < 5 {
        return Err(Error::input(format!("need at least 5 exceedances, got {n}")));
    }
    if tail.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::input("exceedances must be finite and nonnegative"));
    }
    let mut x = tail.to_vec();
    x.sort_by(f64::total_cmp);
    let (lo, hi) = (x[0], x[n - 1]);
    if !(hi > 0.0) || hi - lo <= 1e-12 * hi {
        return Ok(None);
    }

    let nf = n as f64;
    let m = 30 + (nf.sqrt() as usize);
    let prior = 3.0;
    let mut xstar = x[((nf / 4.0 + 0.5).floor() as usize).max(1) - 1];
    if !(xstar > 0.0) {
        xstar = *x.iter().find(|v| **v > 0.0).expect("hi > 0");
    }
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / hi + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let profile = |a: f64| {
        let k = mean(&x.iter().map(|v| (-a * v).ln_1p()).collect::<Vec<_>>());
        nf * ((-a / k).ln() - k - 1.0)
    };
    let l_theta: Vec<f64> = theta.iter().map(|a| profile(*a)).collect();
    let norm = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta.iter().zip(&l_theta).map(|(t, l)| t * (l - norm).exp()).sum();
    let k = mean(&x.iter().map(|v| (-theta_hat * v).ln_1p()).collect::<Vec<_>>());
    let sigma = -k / theta_hat;
    if !(k.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return Ok(None);
    }
    let k = (k * nf + 0.5 * 10.0) / (nf + 10.0);
    Ok(Some(Gpd { k, sigma }))
}

/// Smoothed importance weights for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    /// Log weights normalized to sum to one.
    pub log_weights: Vec<f64>,
    /// `None` when the tail was not estimable.
    pub k: Option<f64>,
    /// Log of the sum of smoothed ratios after shifting the largest raw
    /// ratio to zero; adding it back to `log_weights` gives those ratios.
    pub log_normalizer: f64,
}

/// Tail length for `s` draws: `ceil(min(0.2 s, 3 sqrt(s)))`.
pub fn tail_length(s: usize) -> usize {
    let s = s as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Pareto-smooths log importance ratios. Smoothed tail values never exceed
/// the largest raw ratio.
pub fn psis_smooth(log_ratios: &[f64]) -> Result<Smoothed> {
    let s = log_ratios.len();
    let m = tail_length(s);
    if s < 2 || m < 5 || m >= s {
        return Err(Error::input(format!("too few draws ({s}) for Pareto smoothing")));
    }
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|r| r - max).collect();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|a, b| lw[*a].total_cmp(&lw[*b]));
    let cutoff = lw[order[s - m - 1]];
    let exp_cutoff = cutoff.exp();
    let tail_idx = &order[s - m..];
    let exceed: Vec<f64> = tail_idx.iter().map(|i| (lw[*i].exp() - exp_cutoff).max(0.0)).collect();
    let k = match fit_generalized_pareto(&exceed)? {
        Some(gpd) => {
            for (rank, i) in tail_idx.iter().enumerate() {
                let q = gpd.quantile((rank as f64 + 0.5) / m as f64);
                lw[*i] = (q + exp_cutoff).ln().min(0.0);
            }
            Some(gpd.k)
        }
        None => None,
    };
    let norm = log_sum_exp(&lw);
    lw.iter_mut().for_each(|v| *v -= norm);
    Ok(Smoothed { log_weights: lw, k, log_normalizer: norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loo {
    pub elpd: f64,
    pub se: f64,
    pub p_loo: f64,
    pub pointwise: Vec<f64>,
    pub pareto_k: Vec<Option<f64>>,
}

impl Loo {
    /// Indices of observations whose k exceeds [`K_THRESHOLD`].
    pub fn flagged(&self) -> Vec<usize> {
        self.pareto_k.iter().enumerate().filter(|(_, k)| k.is_some_and(|k| k > K_THRESHOLD)).map(|(i, _)| i).collect()
    }

    pub fn max_k(&self) -> Option<f64> {
        self.pareto_k.iter().flatten().copied().reduce(f64::max)
    }
}

pub fn psis_loo(ll: &LogLikMatrix) -> Result<Loo> {
    if ll.n_draws < 100 {
        return Err(Error::input(format!("PSIS-LOO needs at least 100 draws, got {}", ll.n_draws)));
    }
    let mut pw = Vec::with_capacity(ll.n_obs);
    let mut ks = Vec::with_capacity(ll.n_obs);
    let mut p_loo = 0.0;
    for i in 0..ll.n_obs {
        let col = ll.column(i);
        let ratios: Vec<f64> = col.iter().map(|v| -v).collect();
        let sm = psis_smooth(&ratios)?;
        let terms: Vec<f64> = sm.log_weights.iter().zip(&col).map(|(w, l)| w + l).collect();
        let elpd_i = log_sum_exp(&terms);
        p_loo += log_mean_exp(&col) - elpd_i;
        pw.push(elpd_i);
        ks.push(sm.k);
    }
    Ok(Loo { elpd: pw.iter().sum(), se: total_se(&pw), p_loo, pointwise: pw, pareto_k: ks })
}

/// `elpd(a) - elpd(b)` and its standard error from pointwise differences.
pub fn elpd_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::input(format!("observation counts differ: {} vs {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok((d.iter().sum(), total_se(&d)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub label: String,
    pub rank: usize,
    pub loo: Loo,
    pub waic: Waic,
    /// Difference in elpd_loo to the top-ranked model (0 for the top model).
    pub elpd_diff: f64,
    pub diff_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    /// Best model first.
    pub models: Vec<ModelScore>,
}

impl ComparisonResult {
    pub fn best(&self) -> &ModelScore {
        &self.models[0]
    }

    pub fn get(&self, label: &str) -> Option<&ModelScore> {
        self.models.iter().find(|m| m.label == label)
    }
}

/// Ranks models by elpd_loo, ties broken by input order.
pub fn compare(models: &[&LogLikMatrix]) -> Result<ComparisonResult> {
    let first = models.first().ok_or_else(|| Error::input("nothing to compare"))?;
    if let Some(m) = models.iter().find(|m| m.n_obs != first.n_obs) {
        return Err(Error::input(format!(
            "model `{}` has {} observations, `{}` has {}",
            m.label, m.n_obs, first.label, first.n_obs
        )));
    }
    let mut scored: Vec<(String, Loo, Waic)> =
        models.iter().map(|m| Ok((m.label.clone(), psis_loo(m)?, waic(m)?))).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|a, b| scored[*b].1.elpd.total_cmp(&scored[*a].1.elpd).then(a.cmp(b)));
    let best = scored[order[0]].1.pointwise.clone();
    let mut out = Vec::with_capacity(scored.len());
    for (rank, i) in order.into_iter().enumerate() {
        let (label, loo, waic) = std::mem::replace(&mut scored[i], (String::new(), empty_loo(), empty_waic()));
        let (elpd_diff, diff_se) = elpd_difference(&loo.pointwise, &best)?;
        out.push(ModelScore { label, rank: rank + 1, loo, waic, elpd_diff, diff_se });
    }
    Ok(ComparisonResult { models: out })
}

fn empty_loo() -> Loo {
    Loo { elpd: 0.0, se: 0.0, p_loo: 0.0, pointwise: Vec::new(), pareto_k: Vec::new() }
}

fn empty_waic() -> Waic {
    Waic { elpd: 0.0, p_waic: 0.0, se: 0.0, pointwise: Vec::new(), lppd: Vec::new() }
}
