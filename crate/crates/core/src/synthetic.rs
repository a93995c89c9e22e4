//! Simulated fault-count datasets drawn from M1/M2 with known parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{draw_poisson, draw_zip};
use crate::error::{Error, Result};
use crate::model::{predictors_at, Dataset, ModelKind, ModelSpec, Observation, ParameterVector};
use crate::stats::quantile_sorted;

/// Number of subjects assigned to one (approach, experience) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub approach: u8,
    pub experience: u8,
    pub subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub cells: Vec<Cell>,
    #[serde(default = "one")]
    pub sessions_per_subject: usize,
}

fn one() -> usize {
    1
}

impl DesignSpec {
    /// 2x2 design over 12 low- and 23 high-experience developers, approach
    /// split as evenly as possible within each experience level.
    pub fn study() -> Self {
        Self::balanced(12, 23)
    }

    pub fn balanced(n_low: usize, n_high: usize) -> Self {
        let cells = vec![
            Cell { approach: 0, experience: 0, subjects: n_low - n_low / 2 },
            Cell { approach: 1, experience: 0, subjects: n_low / 2 },
            Cell { approach: 0, experience: 1, subjects: n_high - n_high / 2 },
            Cell { approach: 1, experience: 1, subjects: n_high / 2 },
        ];
        DesignSpec { cells, sessions_per_subject: 1 }
    }

    pub fn with_sessions(mut self, sessions: usize) -> Self {
        self.sessions_per_subject = sessions;
        self
    }

    pub fn n_subjects(&self) -> usize {
        self.cells.iter().map(|c| c.subjects).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects() == 0 {
            return Err(Error::config("design has no subjects"));
        }
        if self.sessions_per_subject == 0 {
            return Err(Error::config("sessions per subject must be positive"));
        }
        if self.cells.iter().any(|c| c.approach > 1 || c.experience > 1) {
            return Err(Error::config("design cell indicators must be 0 or 1"));
        }
        Ok(())
    }
}

/// A simulated dataset plus the subject offsets that generated it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    /// Realized `mu_s + sigma_s * z_j` per subject (all zero for M1).
    pub subject_intercepts: Vec<f64>,
}

fn validate_truth(truth: &ParameterVector, spec: &ModelSpec) -> Result<()> {
    let mut fields = vec![truth.alpha, truth.beta_a, truth.beta_e];
    if spec.kind == ModelKind::M2 {
        fields.extend([truth.alpha_p, truth.beta_p, truth.mu_s]);
        if !(truth.sigma_s > 0.0 && truth.sigma_s.is_finite()) {
            return Err(Error::input(format!("truth sigma_s must be positive, got {}", truth.sigma_s)));
        }
    }
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("truth parameters must be finite"));
    }
    Ok(())
}

pub fn generate(truth: &ParameterVector, design: &DesignSpec, spec: &ModelSpec, seed: u64) -> Result<Dataset> {
    Ok(generate_detailed(truth, design, spec, seed)?.data)
}

pub fn generate_detailed(
    truth: &ParameterVector,
    design: &DesignSpec,
    spec: &ModelSpec,
    seed: u64,
) -> Result<Simulated> {
    validate_truth(truth, spec)?;
    design.validate()?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let view = truth.view();
    let mut observations = Vec::with_capacity(design.n_subjects() * design.sessions_per_subject);
    let mut intercepts = Vec::with_capacity(design.n_subjects());
    let mut subject = 0;
    for cell in &design.cells {
        for _ in 0..cell.subjects {
            let intercept = match spec.kind {
                ModelKind::M1 => 0.0,
                ModelKind::M2 => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    truth.mu_s + truth.sigma_s * z
                }
            };
            intercepts.push(intercept);
            let pr = predictors_at(
                &view,
                spec.kind,
                spec.zi_link,
                cell.approach as f64,
                cell.experience as f64,
                intercept,
            );
            if pr.ln_p.is_nan() {
                return Err(Error::input("truth implies a zero-inflation probability above 1"));
            }
            for _ in 0..design.sessions_per_subject {
                let faults = match spec.kind {
                    ModelKind::M1 => draw_poisson(pr.lambda(), &mut rng) as u64,
                    ModelKind::M2 => draw_zip(pr.lambda(), pr.p(), &mut rng),
                };
                observations.push(Observation {
                    subject,
                    approach: cell.approach,
                    experience: cell.experience,
                    faults,
                });
            }
            subject += 1;
        }
    }
    let data = Dataset::new(observations, subject)?;
    Ok(Simulated { data, subject_intercepts: intercepts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    /// Sample (n - 1) sd; `None` for a single observation.
    pub sd: Option<f64>,
    pub min: u64,
    pub max: u64,
}

fn group_stats(group: &str, faults: &[u64]) -> Option<GroupStats> {
    if faults.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = faults.iter().map(|f| *f as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Some(GroupStats {
        group: group.to_string(),
        n,
        median: quantile_sorted(&sorted, 0.5),
        mean,
        sd,
        min: *faults.iter().min().unwrap(),
        max: *faults.iter().max().unwrap(),
    })
}

/// Per experience level plus overall, in that order; empty groups are skipped.
pub fn summary_stats(data: &Dataset) -> Vec<GroupStats> {
    let by = |e: Option<u8>| -> Vec<u64> {
        data.observations()
            .iter()
            .filter(|o| e.is_none_or(|e| o.experience == e))
            .map(|o| o.faults)
            .collect()
    };
    [("low", Some(0)), ("high", Some(1)), ("any", None)]
        .into_iter()
        .filter_map(|(name, e)| group_stats(name, &by(e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand::seq::SliceRandom;

    fn truth() -> ParameterVector {
        ParameterVector::study_means()
    }

    #[test]
    fn study_design_layout() {
        let d = DesignSpec::study();
        assert_eq!(d.n_subjects(), 35);
        let low: usize = d.cells.iter().filter(|c| c.experience == 0).map(|c| c.subjects).sum();
        assert_eq!(low, 12);
        let data = generate(&truth(), &d, &ModelSpec::m2(), 1).unwrap();
        assert_eq!(data.len(), 35);
        assert_eq!(data.n_subjects(), 35);
    }

    #[test]
    fn forced_zero_inflation_zeroes_the_test_case_arm() {
        let mut t = truth();
        t.alpha_p = -40.0;
        t.beta_p = 80.0;
        for seed in 0..5 {
            let data = generate(&t, &DesignSpec::study().with_sessions(3), &ModelSpec::m2(), seed).unwrap();
            assert!(data.observations().iter().filter(|o| o.approach == 1).all(|o| o.faults == 0));
            assert!(data.observations().iter().any(|o| o.approach == 0 && o.faults > 0));
        }
        // log link: eta = 0 is p = 1
        let mut t = truth();
        t.alpha_p = -30.0;
        t.beta_p = 30.0;
        let spec = ModelSpec::m2().with_link(crate::model::ZiLink::Log);
        let data = generate(&t, &DesignSpec::study(), &spec, 3).unwrap();
        assert!(data.observations().iter().filter(|o| o.approach == 1).all(|o| o.faults == 0));
    }

    #[test]
    fn zeros_concentrate_in_the_test_case_arm() {
        let (mut zeros, mut zeros_tc, mut total) = (0usize, 0usize, 0usize);
        for seed in 0..50 {
            let data = generate(&truth(), &DesignSpec::study(), &ModelSpec::m2(), seed).unwrap();
            for o in data.observations() {
                total += 1;
                if o.faults == 0 {
                    zeros += 1;
                    zeros_tc += (o.approach == 1) as usize;
                }
            }
        }
        let frac = zeros as f64 / total as f64;
        assert!(frac >= 0.10, "zero fraction {frac}");
        assert!(zeros_tc as f64 > 0.8 * zeros as f64, "{zeros_tc} of {zeros}");
    }

    #[test]
    fn mean_faults_match_the_observed_regime() {
        let mut sum = 0.0;
        let mut n = 0.0;
        for seed in 0..200 {
            let data = generate(&truth(), &DesignSpec::study(), &ModelSpec::m2(), seed).unwrap();
            sum += data.observations().iter().map(|o| o.faults as f64).sum::<f64>();
            n += data.len() as f64;
        }
        let mean = sum / n;
        assert!((mean - 4.9).abs() / 4.9 < 0.15, "{mean}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&truth(), &DesignSpec::study(), &ModelSpec::m2(), 11).unwrap();
        let b = generate(&truth(), &DesignSpec::study(), &ModelSpec::m2(), 11).unwrap();
        let c = generate(&truth(), &DesignSpec::study(), &ModelSpec::m2(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn intercepts_are_constant_within_subject() {
        // With p = 0 and 200 sessions each, a subject's mean count pins its intercept.
        let mut t = truth();
        t.alpha_p = -40.0;
        t.beta_p = 0.0;
        t.sigma_s = 1.0;
        let design = DesignSpec::balanced(2, 2).with_sessions(200);
        let sim = generate_detailed(&t, &design, &ModelSpec::m2(), 4).unwrap();
        assert_eq!(sim.subject_intercepts.len(), 4);
        for (j, b) in sim.subject_intercepts.iter().enumerate() {
            let rows: Vec<&Observation> = sim.data.observations().iter().filter(|o| o.subject == j).collect();
            assert_eq!(rows.len(), 200);
            let o = rows[0];
            assert!(rows.iter().all(|r| r.approach == o.approach && r.experience == o.experience));
            let lambda = (t.alpha + t.beta_a * o.approach as f64 + t.beta_e * o.experience as f64 + b).exp();
            let mean = rows.iter().map(|r| r.faults as f64).sum::<f64>() / 200.0;
            assert!((mean - lambda).abs() < 4.0 * (lambda / 200.0).sqrt(), "subject {j}: {mean} vs {lambda}");
        }
    }

    #[test]
    fn m1_generation_has_no_subject_effect() {
        let t = ParameterVector::m1(1.0, 0.0, 0.0);
        let sim = generate_detailed(&t, &DesignSpec::study(), &ModelSpec::m1(), 2).unwrap();
        assert!(sim.subject_intercepts.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn invalid_truth_and_design() {
        let mut t = truth();
        t.sigma_s = 0.0;
        assert!(generate(&t, &DesignSpec::study(), &ModelSpec::m2(), 0).is_err());
        let mut t = truth();
        t.alpha = f64::NAN;
        assert!(generate(&t, &DesignSpec::study(), &ModelSpec::m2(), 0).is_err());
        let mut t = truth();
        t.alpha_p = 1.0;
        t.beta_p = 0.0;
        let log = ModelSpec::m2().with_link(crate::model::ZiLink::Log);
        assert!(generate(&t, &DesignSpec::study(), &log, 0).is_err());
        assert!(generate(&truth(), &DesignSpec::study().with_sessions(0), &ModelSpec::m2(), 0).is_err());
        assert!(generate(&truth(), &DesignSpec::balanced(0, 0), &ModelSpec::m2(), 0).is_err());
    }

    fn one_obs(faults: u64) -> Dataset {
        Dataset::new(vec![Observation { subject: 0, approach: 0, experience: 1, faults }], 1).unwrap()
    }

    #[test]
    fn summary_of_single_observation() {
        let stats = summary_stats(&one_obs(4));
        assert_eq!(stats.len(), 2);
        assert_eq!(stats[0].group, "high");
        for s in &stats {
            assert_eq!((s.n, s.median, s.mean, s.min, s.max), (1, 4.0, 4.0, 4, 4));
            assert_eq!(s.sd, None);
        }
    }

    #[test]
    fn summary_layout_and_values() {
        let rows = [(0, 0, 0), (1, 0, 3), (2, 0, 6), (3, 1, 2), (4, 1, 5)];
        let obs = rows.iter().map(|&(s, e, f)| Observation { subject: s, approach: 0, experience: e, faults: f }).collect();
        let stats = summary_stats(&Dataset::new(obs, 5).unwrap());
        let names: Vec<&str> = stats.iter().map(|s| s.group.as_str()).collect();
        assert_eq!(names, ["low", "high", "any"]);
        assert_eq!((stats[0].median, stats[0].mean, stats[0].sd), (3.0, 3.0, Some(3.0)));
        assert_eq!((stats[1].n, stats[1].median, stats[1].min, stats[1].max), (2, 3.5, 2, 5));
        assert_eq!((stats[2].n, stats[2].mean), (5, 3.2));
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant(seed in 0u64..500, shuffle in 0u64..500) {
            let data = generate(&truth(), &DesignSpec::study(), &ModelSpec::m2(), seed).unwrap();
            let mut obs = data.observations().to_vec();
            obs.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
            let shuffled = Dataset::new(obs, data.n_subjects()).unwrap();
            prop_assert_eq!(summary_stats(&data), summary_stats(&shuffled));
        }
    }
}
