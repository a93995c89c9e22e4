//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any fails.
//! Run with `cargo test -p practsig-cli --test acceptance`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use practsig_core::compare::{compare, LogLikMatrix};
use practsig_core::cpt::{
    decision_weights, expected_utility, tk_weight, CostProfile, Prospect, WeightingParams,
};
use practsig_core::distributions::{
    half_cauchy_logpdf, inv_logit, ln_factorial, logit, normal_logpdf, poisson_logpmf, zip_logpmf, Probability, Rate,
};
use practsig_core::model::{Dataset, ModelSpec, ParameterVector};
use practsig_core::posterior::{
    posterior_predictive, summarize, Composition, DataInfo, Posterior, PredictiveMode, PredictiveRequest, Setting,
    SubjectMode, DEFAULT_CI,
};
use practsig_core::sampler::{run_mcmc, split_rhat, FnDensity, SamplerConfig};
use practsig_core::scenarios::{evaluate_scenario, EvalConfig, Scenario, UtilityReport};
use practsig_core::stats::{mean, sd};
use practsig_core::synthetic::{generate, DesignSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    check((got - want).abs() <= tol, format!("{name}: {got} vs {want}"))
}

fn rate(x: f64) -> Rate {
    Rate::new(x).unwrap()
}

fn prob(x: f64) -> Probability {
    Probability::new(x).unwrap()
}

fn densities() -> Outcome {
    let ln = f64::ln;
    let ln2pi = ln(2.0 * std::f64::consts::PI);
    let pi = std::f64::consts::PI;
    let mut n = 0;
    let mut eq = |name: &str, got: f64, want: f64| {
        n += 1;
        close(name, got, want, 1e-9)
    };
    eq("poisson(0; 1)", poisson_logpmf(0, rate(1.0)), -1.0)?;
    eq("poisson(3; 2)", poisson_logpmf(3, rate(2.0)), 3.0 * ln(2.0) - 2.0 - ln(6.0))?;
    let fact20: f64 = (1..=20).map(|i| ln(i as f64)).sum();
    eq("poisson(20; 7)", poisson_logpmf(20, rate(7.0)), 20.0 * ln(7.0) - 7.0 - fact20)?;
    eq("ln 20!", ln_factorial(20), ln(2_432_902_008_176_640_000.0))?;
    eq("zip(0; 5, 1)", zip_logpmf(0, rate(5.0), prob(1.0)), 0.0)?;
    eq("zip(0; 2, 0.3)", zip_logpmf(0, rate(2.0), prob(0.3)), ln(0.3 + 0.7 * (-2.0f64).exp()))?;
    eq("zip(0; 2, 0.3) as probability", zip_logpmf(0, rate(2.0), prob(0.3)).exp(), 0.3 + 0.7 * (-2.0f64).exp())?;
    eq("zip(2; 2, 0.3)", zip_logpmf(2, rate(2.0), prob(0.3)), ln(0.7) + 2.0 * ln(2.0) - 2.0 - ln(2.0))?;
    eq("normal(0; 0, 1)", normal_logpdf(0.0, 0.0, 1.0).unwrap(), -0.5 * ln2pi)?;
    eq("normal(0; 0, 1.5)", normal_logpdf(0.0, 0.0, 1.5).unwrap(), -ln(1.5) - 0.5 * ln2pi)?;
    eq(
        "normal one-sigma offset",
        normal_logpdf(3.5, 1.5, 2.0).unwrap() - normal_logpdf(1.5, 1.5, 2.0).unwrap(),
        -0.5,
    )?;
    eq("half-cauchy(0; 1)", half_cauchy_logpdf(0.0, 1.0).unwrap(), ln(2.0 / pi))?;
    eq("half-cauchy(1; 1)", half_cauchy_logpdf(1.0, 1.0).unwrap(), ln(1.0 / pi))?;
    eq("half-cauchy(0; 2.5)", half_cauchy_logpdf(0.0, 2.5).unwrap(), ln(2.0 / (pi * 2.5)))?;
    eq("inv_logit(0)", inv_logit(0.0).get(), 0.5)?;
    eq("inv_logit(-4.61)", inv_logit(-4.61).get(), 1.0 / (1.0 + 4.61f64.exp()))?;
    close("logit(inv_logit(2.5))", logit(inv_logit(2.5)).unwrap(), 2.5, 1e-12)?;
    // Printed decimals. Two are off in their last digit: zip(2; 2, 0.3) is
    // -1.663528 and normal(0; 0, 1.5) is -1.324404, so compare at 1e-4.
    let printed = [
        (poisson_logpmf(3, rate(2.0)), -1.7123),
        (zip_logpmf(0, rate(2.0), prob(0.3)), -0.9295),
        (zip_logpmf(0, rate(2.0), prob(0.3)).exp(), 0.39473),
        (zip_logpmf(2, rate(2.0), prob(0.3)), -1.6636),
        (normal_logpdf(0.0, 0.0, 1.0).unwrap(), -0.91894),
        (normal_logpdf(0.0, 0.0, 1.5).unwrap(), -1.32437),
        (half_cauchy_logpdf(0.0, 1.0).unwrap(), -0.45158),
        (half_cauchy_logpdf(1.0, 1.0).unwrap(), -1.14473),
        (inv_logit(-4.61).get(), 0.00985),
    ];
    let mut worst = 0.0f64;
    for (i, (got, want)) in printed.iter().enumerate() {
        close(&format!("printed value {i}"), *got, *want, 1e-4)?;
        worst = worst.max((got - want).abs());
    }
    Ok(format!("{n} closed forms to 1e-9; {} printed values, largest gap {worst:.1e}", printed.len()))
}

fn plug_in_predictions() -> Outcome {
    let data = generate(&ParameterVector::study_means(), &DesignSpec::study(), &ModelSpec::m2(), 1)
        .map_err(|e| e.to_string())?;
    let post = Posterior::point_mass(&ParameterVector::study_means(), ModelSpec::m2(), DataInfo::of(&data))
        .map_err(|e| e.to_string())?;
    let expect = |setting: Setting| {
        let req = PredictiveRequest::new(setting, PredictiveMode::Expectation).with_subject(SubjectMode::Average);
        posterior_predictive(&post, &req).map(|pd| pd.mean()).map_err(|e| e.to_string())
    };
    let rel = |got: f64, want: f64| (got - want).abs() / want;
    let low = expect(Setting::fixed(0, 0))?;
    let high = expect(Setting::fixed(0, 1))?;
    check(rel(low, 6.92) <= 0.05, format!("exploratory+low {low:.3} vs 6.92"))?;
    check(rel(high, 9.61) <= 0.05, format!("exploratory+high {high:.3} vs 9.61"))?;
    let mut mixed = Vec::new();
    for c in [Composition::TwelveLow, Composition::TwentyThreeLow] {
        let m = expect(Setting::parse("testcase+mixed", post.data(), c).map_err(|e| e.to_string())?)?;
        check(rel(m, 1.42) <= 0.15, format!("testcase+mixed ({c:?}) {m:.3} vs 1.42"))?;
        mixed.push(m);
    }
    Ok(format!("exploratory {low:.3} / {high:.3}, testcase mixed {:.3} / {:.3}", mixed[0], mixed[1]))
}

fn fit(data: &Dataset, spec: ModelSpec, seed: u64) -> Result<Posterior, String> {
    Posterior::fit(data, spec, &SamplerConfig { seed, ..Default::default() }).map_err(|e| e.to_string())
}

fn loglik(label: &str, post: &Posterior, data: &Dataset) -> Result<LogLikMatrix, String> {
    LogLikMatrix::from_posterior(label, post, data).map_err(|e| e.to_string())
}

/// Fits of the 20 M2-simulated datasets, shared by the calibration and
/// model-selection criteria.
struct Replication {
    data: Dataset,
    m2: Posterior,
}

const REPLICATIONS: u64 = 20;

fn replications() -> Result<Vec<Replication>, String> {
    (1..=REPLICATIONS)
        .map(|seed| {
            let data = generate(&ParameterVector::study_means(), &DesignSpec::study(), &ModelSpec::m2(), seed)
                .map_err(|e| e.to_string())?;
            let m2 = fit(&data, ModelSpec::m2(), seed)?;
            Ok(Replication { data, m2 })
        })
        .collect()
}

fn calibration(reps: &[Replication]) -> Outcome {
    let truth = ParameterVector::study_means();
    let (mut alpha, mut beta_a) = (0, 0);
    let (mut worst_rhat, mut worst_ess) = (0.0f64, f64::INFINITY);
    for (i, r) in reps.iter().enumerate() {
        let rows = summarize(&r.m2, DEFAULT_CI).map_err(|e| e.to_string())?;
        alpha += (rows[0].ci_lo < truth.alpha && truth.alpha < rows[0].ci_hi) as usize;
        beta_a += (rows[1].ci_lo < truth.beta_a && truth.beta_a < rows[1].ci_hi) as usize;
        for d in &r.m2.diagnostics()[..7] {
            let (rh, ess) = (d.rhat.unwrap_or(f64::INFINITY), d.ess_bulk.unwrap_or(0.0));
            worst_rhat = worst_rhat.max(rh);
            worst_ess = worst_ess.min(ess);
            check(rh < 1.05 && ess > 200.0, format!("replication {}: {} rhat {rh:.3} ess {ess:.0}", i + 1, d.name))?;
        }
    }
    let n = reps.len();
    check(alpha >= 16 && beta_a >= 16, format!("coverage alpha {alpha}/{n}, beta_a {beta_a}/{n}"))?;
    Ok(format!("coverage alpha {alpha}/{n}, beta_a {beta_a}/{n}; worst rhat {worst_rhat:.3}, worst ess {worst_ess:.0}"))
}

fn model_selection(reps: &[Replication]) -> Outcome {
    let mut agree_checked = 0;
    let mut agreement = |label: &str, score: &practsig_core::compare::ModelScore| -> Result<(), String> {
        if score.loo.max_k().is_some_and(|k| k < 0.7) {
            agree_checked += 1;
            let gap = (score.loo.elpd - score.waic.elpd).abs();
            check(gap < 2.0 * score.loo.se, format!("{label}: loo {} vs waic {}", score.loo.elpd, score.waic.elpd))?;
        }
        Ok(())
    };

    let mut m2_wins = 0;
    for (i, r) in reps.iter().enumerate() {
        let seed = i as u64 + 1;
        let m1 = fit(&r.data, ModelSpec::m1(), seed)?;
        let ll = [loglik("m1", &m1, &r.data)?, loglik("m2", &r.m2, &r.data)?];
        let result = compare(&[&ll[0], &ll[1]]).map_err(|e| e.to_string())?;
        m2_wins += (result.best().label == "m2") as usize;
        for m in &result.models {
            agreement(&format!("zip data {seed} {}", m.label), m)?;
        }
    }

    let poisson_truth = ParameterVector::m1(1.95, -1.47, 0.33);
    let mut ties = 0;
    for seed in 101..101 + REPLICATIONS {
        let data = generate(&poisson_truth, &DesignSpec::study(), &ModelSpec::m1(), seed).map_err(|e| e.to_string())?;
        let ll = [
            loglik("m1", &fit(&data, ModelSpec::m1(), seed)?, &data)?,
            loglik("m2", &fit(&data, ModelSpec::m2(), seed)?, &data)?,
        ];
        let result = compare(&[&ll[0], &ll[1]]).map_err(|e| e.to_string())?;
        let other = &result.models[1];
        ties += (other.elpd_diff.abs() < 2.0 * other.diff_se) as usize;
        for m in &result.models {
            agreement(&format!("poisson data {seed} {}", m.label), m)?;
        }
    }
    let n = REPLICATIONS;
    let detail = format!("m2 preferred {m2_wins}/{n}, poisson ties {ties}/{n}, waic agreement on {agree_checked} fits");
    check(m2_wins >= 18 && ties >= 14, detail.clone())?;
    Ok(detail)
}

fn random_prospect(rng: &mut ChaCha8Rng) -> Prospect {
    let n = rng.random_range(1..30);
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let total: f64 = raw.iter().sum();
    let mut outcomes: Vec<(f64, f64)> = raw.iter().map(|r| (rng.random_range(-2000.0..2000.0), r / total)).collect();
    let drift: f64 = outcomes.iter().map(|o| o.1).sum::<f64>() - 1.0;
    outcomes[0].1 -= drift;
    Prospect::new(outcomes).unwrap()
}

fn cpt_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let identity = WeightingParams { gamma_gain: 1.0, gamma_loss: 1.0, ..Default::default() };
    for i in 0..100 {
        let p = random_prospect(&mut rng);
        let eu = expected_utility(&p, &identity).map_err(|e| e.to_string())?;
        close(&format!("identity prospect {i}"), eu, p.expectation(), 1e-10)?;
    }

    let crossing = |x: f64| tk_weight(prob(x), 0.61).unwrap().get() - x;
    check(crossing(0.3) > 0.0 && crossing(0.4) < 0.0, "gamma 0.61 weighting does not cross the diagonal in (0.3, 0.4)")?;
    let (mut lo, mut hi) = (0.3, 0.4);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if crossing(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let params = WeightingParams::default();
    for i in 0..100 {
        let mut p = random_prospect(&mut rng);
        p.outcomes.iter_mut().for_each(|o| o.0 = o.0.abs());
        let w: f64 = decision_weights(&p, &params).map_err(|e| e.to_string())?.iter().sum();
        close(&format!("gains-only weights {i}"), w, 1.0, 1e-9)?;
    }

    for i in 0..100 {
        let p = random_prospect(&mut rng);
        let mut q = p.clone();
        for o in q.outcomes.iter_mut() {
            if rng.random::<bool>() {
                o.0 += rng.random_range(0.0..500.0);
            }
        }
        let (up, uq) = (expected_utility(&p, &params).unwrap(), expected_utility(&q, &params).unwrap());
        check(uq >= up - 1e-9, format!("dominance pair {i}: {uq} < {up}"))?;
    }
    Ok(format!("identity, weight sums and dominance on 100 prospects each; crossover at {lo:.4}"))
}

fn scenario_ordering() -> Outcome {
    let seed = 2024;
    let design = DesignSpec::balanced(720, 1380).with_sessions(10);
    let data =
        generate(&ParameterVector::study_means(), &design, &ModelSpec::m2(), seed).map_err(|e| e.to_string())?;
    let cfg = SamplerConfig { seed, chains: 2, warmup_iterations: 400, retained_draws_per_chain: 500, thin: 5, ..Default::default() };
    let post = Posterior::fit(&data, ModelSpec::m2(), &cfg).map_err(|e| e.to_string())?;
    let eval = EvalConfig { seed, n_rep: 4000 / post.draws().total_draws(), subject: SubjectMode::Average, ..Default::default() };
    let weighting = WeightingParams::default();
    let run = |name: &str, profile: &CostProfile| -> Result<UtilityReport, String> {
        let scenario = Scenario::preset(name).map_err(|e| e.to_string())?;
        evaluate_scenario(&post, &scenario, profile, &weighting, &eval).map_err(|e| e.to_string())
    };
    let u = |r: &UtilityReport, label: &str| r.option(label).unwrap().utility;
    let se = |r: &UtilityReport, a: &str, b: &str| {
        (r.option(a).unwrap().mc_se.powi(2) + r.option(b).unwrap().mc_se.powi(2)).sqrt()
    };

    let costs = CostProfile::default();
    let approach = run("approach", &costs)?;
    let gap = u(&approach, "exploratory") - u(&approach, "test-case");
    let ses = gap / se(&approach, "exploratory", "test-case");
    check(ses > 3.0, format!("(a) exploratory - testcase = {gap:.1}, {ses:.1} se"))?;

    check(costs.savings_per_fault == 150.0, "default savings are not 150")?;
    let experience = run("experience", &costs)?;
    let (bl, bh) = (u(&experience, "low"), u(&experience, "high"));
    check(bl > bh, format!("(b) at S=150 low {bl:.1} <= high {bh:.1}"))?;

    let rich = CostProfile { savings_per_fault: 1000.0, ..costs };
    let flipped = run("experience", &rich)?;
    check(flipped.best == "high", format!("(c) at S=1000 the best option is {}", flipped.best))?;

    let exploratory = run("exploratory", &costs)?;
    let (dl, dh) = (u(&exploratory, "low"), u(&exploratory, "high"));
    let relative = (dh - dl) / dl.abs();
    check(dh > dl && relative < 0.5, format!("(d) exploratory high {dh:.1} vs low {dl:.1}, relative gap {relative:.2}"))?;

    Ok(format!(
        "(a) {ses:.1} se, (b) {bl:.0} > {bh:.0}, (c) best {}, (d) gap {:.0}%; {} draws, {} predictive samples",
        flipped.best,
        100.0 * relative,
        post.draws().total_draws(),
        eval.n_rep * post.draws().total_draws()
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_practsig")).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    cli(&["simulate", "--seed", "17", "--out", &p("data.csv")])?;
    cli(&["fit", "--data", &p("data.csv"), "--seed", "17", "--out", &p("draws.csv")])?;
    cli(&["summarize", "--draws", &p("draws.csv"), "--hist", &p("hist.csv"), "--out", &p("summary.csv")])?;
    cli(&["utility", "--draws", &p("draws.csv"), "--scenario", "experience", "--seed", "17", "--out", &p("utility.csv")])?;
    cli(&[
        "utility", "--draws", &p("draws.csv"), "--scenario", "experience", "--sweep", "S=150,1000", "--seed", "17",
        "--out", &p("sweep.csv"),
    ])?;
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .map(|path| (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap()))
        .collect();
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (pipeline(a.path())?, pipeline(b.path())?);
    check(fa.len() == fb.len(), "different sets of output files")?;
    for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
        check(na == nb && ca == cb, format!("{na} differs between runs"))?;
    }
    Ok(format!("{} output files byte-identical across two runs", fa.len()))
}

fn sampler_targets() -> Outcome {
    let cfg = |seed: u64, draws: usize| SamplerConfig { seed, retained_draws_per_chain: draws, ..Default::default() };
    let normal = FnDensity::new(1, |x: &[f64]| -0.5 * x[0] * x[0]);
    let d = run_mcmc(&normal, &cfg(11, 2000)).map_err(|e| e.to_string())?;
    let v = d.pooled(0);
    check(mean(&v).abs() <= 0.05 && (0.95..=1.05).contains(&sd(&v)), format!("normal mean {} sd {}", mean(&v), sd(&v)))?;
    let rhat = split_rhat(&d, 0).unwrap_or(f64::INFINITY);
    check(rhat < 1.01, format!("normal rhat {rhat}"))?;

    let gauss = FnDensity::new(5, |x: &[f64]| x.iter().map(|v| -0.5 * ((v - 3.0) / 2.0).powi(2)).sum());
    let d = run_mcmc(&gauss, &cfg(5, 1000)).map_err(|e| e.to_string())?;
    for i in 0..5 {
        let v = d.pooled(i);
        check((mean(&v) - 3.0).abs() < 0.1, format!("5-d dim {i} mean {}", mean(&v)))?;
        check((sd(&v) - 2.0).abs() < 0.15, format!("5-d dim {i} sd {}", sd(&v)))?;
    }

    let well = |x: f64| -(x * x - 1.0).powi(2);
    let mass = |a: f64, b: f64| {
        let n = 2000;
        let h = (b - a) / n as f64;
        let f = |x: f64| well(x).exp();
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        (f(a) + f(b) + inner) * h / 3.0
    };
    let target = FnDensity::new(1, move |x: &[f64]| well(x[0]));
    let v = run_mcmc(&target, &cfg(3, 5000)).map_err(|e| e.to_string())?.pooled(0);
    let mut bounds = vec![-6.0];
    bounds.extend((0..19).map(|i| -1.8 + 0.2 * i as f64));
    bounds.push(6.0);
    let z = mass(-6.0, 6.0);
    let n = v.len() as f64;
    let stat: f64 = bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let observed = v.iter().filter(|x| (i == 0 || **x >= w[0]) && (i == 19 || **x < w[1])).count() as f64;
            let expected = n * mass(w[0], w[1]) / z;
            (observed - expected).powi(2) / expected
        })
        .sum();
    // chi-squared 0.999 quantile with 19 degrees of freedom
    let critical = 43.82019596451753;
    check(stat < critical, format!("double-well chi-squared {stat:.2} >= {critical:.2}"))?;
    Ok(format!("normal and 5-d moments within tolerance; double-well chi-squared {stat:.2} < {critical:.2}"))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = f();
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("criterion {n} {name} ... PASS ({detail}; {secs:.1}s)"),
        Err(why) => println!("criterion {n} {name} ... FAIL ({why}; {secs:.1}s)"),
    }
    result.is_ok()
}

fn main() -> ExitCode {
    // optional criterion numbers select a subset, e.g. `-- 1 6`
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut passed = Vec::new();
    if want(1) {
        passed.push(report(1, "density oracles", densities));
    }
    if want(2) {
        passed.push(report(2, "plug-in prediction anchor", plug_in_predictions));
    }
    if want(3) || want(4) {
        let start = Instant::now();
        match replications() {
            Ok(reps) => {
                println!("(fitted {} replications in {:.1}s)", reps.len(), start.elapsed().as_secs_f64());
                if want(3) {
                    passed.push(report(3, "calibration", || calibration(&reps)));
                }
                if want(4) {
                    passed.push(report(4, "model selection", || model_selection(&reps)));
                }
            }
            Err(e) => {
                for (n, name) in [(3, "calibration"), (4, "model selection")].into_iter().filter(|c| want(c.0)) {
                    println!("criterion {n} {name} ... FAIL ({e})");
                    passed.push(false);
                }
            }
        }
    }
    let rest: [(usize, &str, fn() -> Outcome); 4] = [
        (5, "prospect-theory properties", cpt_properties),
        (6, "scenario ordering", scenario_ordering),
        (7, "determinism", determinism),
        (8, "sampler correctness", sampler_targets),
    ];
    for (n, name, f) in rest {
        if want(n) {
            passed.push(report(n, name, f));
        }
    }
    let n_pass = passed.iter().filter(|p| **p).count();
    println!("{n_pass}/{} criteria passed", passed.len());
    if n_pass == passed.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
