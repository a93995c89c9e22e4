//! Split-R̂ and effective sample size.
//!
//! Both work on split chains: every chain is halved (dropping the middle
//! draw when the length is odd) so that within-chain drift shows up as
//! between-chain variance. `None` marks an undefined diagnostic, e.g. zero
//! within-chain variance.

use super::Draws;

fn split(chains: &[&[f64]]) -> Option<Vec<Vec<f64>>> {
    let n = chains.iter().map(|c| c.len()).min()?;
    if n < 4 {
        return None;
    }
    let half = n / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let c = &c[..n];
        out.push(c[..half].to_vec());
        out.push(c[n - half..].to_vec());
    }
    Some(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Rank-free split-R̂ over raw chains.
pub fn split_rhat_chains(chains: &[&[f64]]) -> Option<f64> {
    if chains.is_empty() {
        return None;
    }
    let halves = split(chains)?;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let within = mean(&halves.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    if !(within > 0.0) || !within.is_finite() {
        return None;
    }
    let between = n * sample_var(&means);
    let var_plus = (n - 1.0) / n * within + between / n;
    Some((var_plus / within).sqrt())
}

/// Multi-chain effective sample size with Geyer's initial positive and
/// monotone sequence truncation of the autocorrelation sum.
pub fn ess_bulk_chains(chains: &[&[f64]]) -> Option<f64> {
    if chains.is_empty() {
        return None;
    }
    let halves = split(chains)?;
    let m = halves.len();
    let n = halves[0].len();
    let nf = n as f64;

    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let centered: Vec<Vec<f64>> =
        halves.iter().zip(&means).map(|(c, mu)| c.iter().map(|x| x - mu).collect()).collect();
    let acov = |lag: usize| -> f64 {
        let s: f64 = centered
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / nf)
            .sum();
        s / m as f64
    };

    let acov0 = acov(0);
    let within = acov0 * nf / (nf - 1.0);
    if !(within > 0.0) || !within.is_finite() {
        return None;
    }
    let mut var_plus = within * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&means);
    }
    let rho = |ac: f64| 1.0 - (within - ac) / var_plus;

    let mut tau_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let r0 = if lag == 0 { 1.0 } else { rho(acov(lag)) };
        let r1 = rho(acov(lag + 1));
        let mut pair = r0 + r1;
        if !(pair > 0.0) {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        prev_pair = pair;
        tau_sum += pair;
        lag += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * tau_sum).max(1.0 / total.log10());
    Some(total / tau)
}

pub fn split_rhat(draws: &Draws, param: usize) -> Option<f64> {
    if draws.n_chains() < 2 {
        return None;
    }
    let chains = draws.chain_values(param);
    let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
    split_rhat_chains(&refs)
}

pub fn ess_bulk(draws: &Draws, param: usize) -> Option<f64> {
    let chains = draws.chain_values(param);
    let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
    ess_bulk_chains(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    fn refs(c: &[Vec<f64>]) -> Vec<&[f64]> {
        c.iter().map(|v| v.as_slice()).collect()
    }

    #[test]
    fn rhat_of_iid_chains_is_near_one() {
        for seed in 0..5 {
            let c = iid(seed, 4, 1000);
            let r = split_rhat_chains(&refs(&c)).unwrap();
            assert!((0.99..=1.01).contains(&r), "{r}");
        }
    }

    #[test]
    fn rhat_detects_separated_chains() {
        let mut c = iid(1, 4, 1000);
        for chain in c.iter_mut().skip(2) {
            chain.iter_mut().for_each(|v| *v += 10.0);
        }
        assert!(split_rhat_chains(&refs(&c)).unwrap() > 1.2);
    }

    #[test]
    fn rhat_detects_within_chain_drift() {
        let c: Vec<Vec<f64>> = (0..2).map(|_| (0..1000).map(|i| i as f64 / 100.0).collect()).collect();
        assert!(split_rhat_chains(&refs(&c)).unwrap() > 1.5);
    }

    #[test]
    fn constant_chains_are_undefined() {
        let c = vec![vec![2.0; 100]; 4];
        assert_eq!(split_rhat_chains(&refs(&c)), None);
        assert_eq!(ess_bulk_chains(&refs(&c)), None);
        let short = vec![vec![1.0, 2.0, 3.0]; 4];
        assert_eq!(split_rhat_chains(&refs(&short)), None);
    }

    #[test]
    fn ess_of_iid_draws() {
        let c = iid(7, 4, 1000);
        let e = ess_bulk_chains(&refs(&c)).unwrap();
        assert!((3200.0..=4800.0).contains(&e), "{e}");
    }

    #[test]
    fn ess_of_ar1_matches_analytic_value() {
        // AR(1) with phi = 0.9 has integrated autocorrelation time (1+phi)/(1-phi).
        let phi = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (4, 5000);
        let chains: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let mut x: f64 = StandardNormal.sample(&mut rng);
                x /= (1.0 - phi * phi as f64).sqrt();
                (0..n)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = phi * x + e;
                        x
                    })
                    .collect()
            })
            .collect();
        let expected = (m * n) as f64 * (1.0 - phi) / (1.0 + phi);
        let e = ess_bulk_chains(&refs(&chains)).unwrap();
        assert!((e - expected).abs() / expected < 0.3, "{e} vs {expected}");
    }
}
