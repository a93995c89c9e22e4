//! Adaptive random-walk Metropolis over an unnormalized log density.
//!
//! Each iteration sweeps over the target's parameter blocks. During warmup
//! every block adapts a proposal covariance (dense for small blocks,
//! diagonal otherwise) over doubling windows, and a global proposal scale by
//! Robbins-Monro toward the target acceptance rate. Adaptation is frozen when
//! warmup ends, so retained draws come from a fixed Metropolis kernel.

mod diagnostics;

pub use diagnostics::{ess_bulk, ess_bulk_chains, split_rhat, split_rhat_chains};

use std::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INIT_ATTEMPTS: usize = 50;

/// A log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Unnormalized log density; `-inf` rejects a point.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Coordinate blocks updated jointly, in sweep order. Blocks may overlap
    /// but together must cover every coordinate.
    fn blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.dim()]
    }

    /// Log density of `x` up to terms that do not depend on the coordinates
    /// of block `block`, or `None` to use [`LogDensity::log_density`].
    fn block_log_density(&self, _x: &[f64], _block: usize) -> Option<f64> {
        None
    }

    /// Optional deterministic move applied after block `block` proposes
    /// `to` from `from`. It may rewrite coordinates outside the block and
    /// returns the log-Jacobian `ln |det dx'/dx|` of the induced map on
    /// the remaining coordinates, or `None` when nothing was changed.
    fn transport(&self, _block: usize, _from: &[f64], _to: &mut [f64]) -> Option<f64> {
        None
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Maps an unconstrained point to the reported parameterization.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn initial_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
    }
}

/// Adapts a closure into a [`LogDensity`].
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnDensity { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iterations: usize,
    pub retained_draws_per_chain: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    /// Block sweeps per iteration; each retained draw is the state after
    /// `thin` full sweeps. Random-walk moves on the subject offsets of M2
    /// need a few dozen sweeps per draw before σ_s decorrelates.
    pub thin: usize,
    /// Blocks up to this size adapt a dense covariance; larger ones a diagonal.
    pub dense_max_dim: usize,
    /// Run chains on separate threads.
    pub parallel: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup_iterations: 1000,
            retained_draws_per_chain: 1000,
            seed: 0,
            target_acceptance: 0.30,
            thin: 20,
            dense_max_dim: 10,
            parallel: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup_iterations == 0 || self.retained_draws_per_chain == 0 {
            return Err(Error::config("chains, warmup and draws must all be positive"));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::config(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        Ok(())
    }
}

/// Retained draws, stored chain-major: `values[(chain * n_draws + draw) * dim + param]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    names: Vec<String>,
    n_chains: usize,
    n_draws: usize,
    values: Vec<f64>,
    /// Per chain, per block acceptance rate over the retained iterations.
    pub acceptance: Vec<Vec<f64>>,
}

impl Draws {
    pub fn new(names: Vec<String>, n_chains: usize, n_draws: usize, values: Vec<f64>) -> Result<Self> {
        if names.is_empty() || n_chains == 0 || n_draws == 0 {
            return Err(Error::input("draws need at least one parameter, chain and draw"));
        }
        if values.len() != names.len() * n_chains * n_draws {
            return Err(Error::input(format!(
                "expected {} values for {n_chains} chains x {n_draws} draws x {} parameters, got {}",
                names.len() * n_chains * n_draws,
                names.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite draw value at flat index {i}")));
        }
        Ok(Draws { names, n_chains, n_draws, values, acceptance: vec![Vec::new(); n_chains] })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.n_draws
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        let d = self.dim();
        let start = (chain * self.n_draws + i) * d;
        &self.values[start..start + d]
    }

    /// All draws in chain-major order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim())
    }

    pub fn get(&self, chain: usize, i: usize, param: usize) -> f64 {
        self.draw(chain, i)[param]
    }

    pub fn chain_values(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_draws).map(|i| self.get(c, i, param)).collect())
            .collect()
    }

    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.iter_draws().map(|d| d[param]).collect()
    }
}

struct BlockState {
    range: Range<usize>,
    dense: bool,
    /// Lower-triangular Cholesky factor (dense) or per-coordinate sds (diagonal).
    factor: Vec<f64>,
    log_scale: f64,
    adapt_count: usize,
    window: Welford,
    accepted: usize,
    proposed: usize,
}

impl BlockState {
    fn new(range: Range<usize>, dense_max_dim: usize) -> Self {
        let d = range.len();
        let dense = d <= dense_max_dim;
        let factor = if dense { identity(d) } else { vec![1.0; d] };
        BlockState {
            range,
            dense,
            factor,
            log_scale: (0.1f64).ln(),
            adapt_count: 0,
            window: Welford::new(d, dense),
            accepted: 0,
            proposed: 0,
        }
    }

    fn dim(&self) -> usize {
        self.range.len()
    }

    /// Writes a proposal into `out[range]`; other coordinates are untouched.
    fn propose(&self, x: &[f64], out: &mut [f64], eps: &mut Vec<f64>, rng: &mut ChaCha8Rng) {
        let d = self.dim();
        let scale = self.log_scale.exp();
        eps.clear();
        eps.extend((0..d).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)));
        let base = self.range.start;
        if self.dense {
            for i in 0..d {
                let row = &self.factor[i * d..i * d + i + 1];
                let step: f64 = row.iter().zip(eps.iter()).map(|(l, e)| l * e).sum();
                out[base + i] = x[base + i] + scale * step;
            }
        } else {
            for i in 0..d {
                out[base + i] = x[base + i] + scale * self.factor[i] * eps[i];
            }
        }
    }

    fn adapt_scale(&mut self, accept_prob: f64, target: f64) {
        self.adapt_count += 1;
        let gain = (self.adapt_count as f64).powf(-0.6);
        self.log_scale += gain * (accept_prob - target);
    }

    /// Installs the window's covariance estimate and restarts scale adaptation.
    fn end_window(&mut self) {
        let d = self.dim();
        let n = self.window.n as f64;
        if self.window.n >= 3 {
            let shrink = 5.0 / (n + 5.0);
            if self.dense {
                let mut cov = self.window.covariance();
                for i in 0..d {
                    for j in 0..d {
                        cov[i * d + j] *= 1.0 - shrink;
                    }
                    cov[i * d + i] += 1e-3 * shrink + 1e-10;
                }
                if let Some(l) = cholesky(&cov, d) {
                    self.factor = l;
                    self.log_scale = (2.38 / (d as f64).sqrt()).ln();
                    self.adapt_count = 0;
                }
            } else {
                let var = self.window.variance();
                self.factor =
                    var.iter().map(|v| ((1.0 - shrink) * v + 1e-3 * shrink + 1e-10).sqrt()).collect();
                self.log_scale = (2.38 / (d as f64).sqrt()).ln();
                self.adapt_count = 0;
            }
        }
        self.window = Welford::new(d, self.dense);
    }
}

/// Running mean and (co)variance.
struct Welford {
    n: usize,
    dense: bool,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize, dense: bool) -> Self {
        Welford { n: 0, dense, mean: vec![0.0; d], m2: vec![0.0; if dense { d * d } else { d }] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let d = self.mean.len();
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for i in 0..d {
            self.mean[i] += delta[i] / self.n as f64;
        }
        if self.dense {
            for i in 0..d {
                let after_i = x[i] - self.mean[i];
                for j in 0..d {
                    self.m2[i * d + j] += delta[j] * after_i;
                }
            }
        } else {
            for i in 0..d {
                self.m2[i] += delta[i] * (x[i] - self.mean[i]);
            }
        }
    }

    fn covariance(&self) -> Vec<f64> {
        let denom = (self.n - 1) as f64;
        self.m2.iter().map(|v| v / denom).collect()
    }

    fn variance(&self) -> Vec<f64> {
        self.covariance()
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Cholesky factor of a symmetric positive definite row-major matrix.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = a[i * d + i] - s;
                if !(v > 0.0) || !v.is_finite() {
                    return None;
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Iterations at which a covariance window closes: an initial buffer, doubling
/// windows, and a terminal buffer for step-size adaptation only.
fn window_ends(warmup: usize) -> Vec<usize> {
    let (init, term, base) = if warmup >= 150 {
        (75, 50, 25)
    } else {
        let init = (0.15 * warmup as f64) as usize;
        let term = (0.1 * warmup as f64) as usize;
        (init, term, warmup.saturating_sub(init + term).max(1))
    };
    let slow_end = warmup.saturating_sub(term);
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = base;
    while start < slow_end {
        let mut end = start + size;
        // absorb a remainder too small for its own doubled window
        if end + 2 * size > slow_end {
            end = slow_end;
        }
        ends.push(end);
        start = end;
        size *= 2;
    }
    ends
}

/// Derives an independent 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct ChainOutput {
    values: Vec<f64>,
    acceptance: Vec<f64>,
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, chain as u64));
    let dim = target.dim();

    let mut x = Vec::new();
    let mut lp = f64::NEG_INFINITY;
    for _ in 0..INIT_ATTEMPTS {
        let candidate = target.initial_point(&mut rng);
        let v = target.log_density(&candidate);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteTarget { value: v, point: candidate });
        }
        if v > f64::NEG_INFINITY {
            x = candidate;
            lp = v;
            break;
        }
    }
    if lp == f64::NEG_INFINITY {
        return Err(Error::Initialization { attempts: INIT_ATTEMPTS });
    }

    let mut blocks: Vec<BlockState> =
        target.blocks().into_iter().map(|r| BlockState::new(r, config.dense_max_dim)).collect();
    let ends = window_ends(config.warmup_iterations);
    let first_window_start = match config.warmup_iterations {
        w if w >= 150 => 75,
        w => (0.15 * w as f64) as usize,
    };
    let slow_end = ends.last().copied().unwrap_or(0);

    let mut proposal = x.clone();
    let mut eps = Vec::new();
    let mut stale = false;
    let mut values = Vec::with_capacity(config.retained_draws_per_chain * dim);
    let total = config.warmup_iterations + config.retained_draws_per_chain;
    for iter in 0..total {
        let warmup = iter < config.warmup_iterations;
        if iter == config.warmup_iterations {
            for b in blocks.iter_mut() {
                b.accepted = 0;
                b.proposed = 0;
            }
        }
        for _ in 0..config.thin {
            for (bi, b) in blocks.iter_mut().enumerate() {
                let local = target.block_log_density(&x, bi);
                if local.is_none() && stale {
                    lp = target.log_density(&x);
                    stale = false;
                }
                b.propose(&x, &mut proposal, &mut eps, &mut rng);
                let jacobian = target.transport(bi, &x, &mut proposal);
                let (current, cand) = match local {
                    Some(c) => (c, target.block_log_density(&proposal, bi).unwrap_or(f64::NEG_INFINITY)),
                    None => (lp, target.log_density(&proposal)),
                };
                if cand.is_nan() || cand == f64::INFINITY {
                    return Err(Error::NonFiniteTarget { value: cand, point: proposal.clone() });
                }
                let log_ratio = if cand == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    cand - current + jacobian.unwrap_or(0.0)
                };
                let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
                let u: f64 = rng.random();
                b.proposed += 1;
                let accepted = u < accept_prob;
                let (src, dst) = if accepted { (&proposal, &mut x) } else { (&x, &mut proposal) };
                if jacobian.is_some() {
                    dst.copy_from_slice(src);
                } else {
                    dst[b.range.clone()].copy_from_slice(&src[b.range.clone()]);
                }
                if accepted {
                    b.accepted += 1;
                    if local.is_some() {
                        stale = true;
                    } else {
                        lp = cand;
                    }
                }
                if warmup {
                    b.adapt_scale(accept_prob, config.target_acceptance);
                }
            }
        }
        if warmup {
            if iter >= first_window_start && iter < slow_end {
                for b in blocks.iter_mut() {
                    let r = b.range.clone();
                    b.window.push(&x[r]);
                }
            }
            if ends.contains(&(iter + 1)) {
                for b in blocks.iter_mut() {
                    b.end_window();
                }
            }
        } else {
            values.extend(target.constrain(&x));
        }
    }
    let acceptance = blocks.iter().map(|b| b.accepted as f64 / b.proposed.max(1) as f64).collect();
    Ok(ChainOutput { values, acceptance })
}

/// Runs `config.chains` independent chains and returns the retained draws.
pub fn run_mcmc<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig) -> Result<Draws> {
    config.validate()?;
    let dim = target.dim();
    if dim == 0 {
        return Err(Error::config("target dimension must be at least 1"));
    }
    let mut covered = vec![false; dim];
    for r in target.blocks() {
        if r.is_empty() || r.end > dim {
            return Err(Error::config(format!("block {r:?} is empty or out of range for dimension {dim}")));
        }
        covered[r].iter_mut().for_each(|c| *c = true);
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(Error::config(format!("coordinate {i} belongs to no block")));
    }

    let outputs: Vec<Result<ChainOutput>> = if config.parallel && config.chains > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> =
                (0..config.chains).map(|c| s.spawn(move || run_chain(target, config, c))).collect();
            handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
        })
    } else {
        (0..config.chains).map(|c| run_chain(target, config, c)).collect()
    };

    let mut values = Vec::with_capacity(config.chains * config.retained_draws_per_chain * dim);
    let mut acceptance = Vec::with_capacity(config.chains);
    for out in outputs {
        let out = out?;
        values.extend(out.values);
        acceptance.push(out.acceptance);
    }
    let mut draws = Draws::new(target.param_names(), config.chains, config.retained_draws_per_chain, values)?;
    draws.acceptance = acceptance;
    Ok(draws)
}
