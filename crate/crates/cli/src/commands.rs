use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use practsig_core::compare::{compare as compare_models, LogLikMatrix};
use practsig_core::cpt::{CostProfile, ValueTransform, WeightingMode, WeightingParams};
use practsig_core::io;
use practsig_core::model::{ModelKind, ModelSpec, ParameterVector, ZiLink};
use practsig_core::posterior::{
    marginal_density, posterior_predictive, predictive_interval, summarize as summarize_posterior, Composition,
    Posterior, PredictiveMode, PredictiveRequest, Setting, SubjectMode,
};
use practsig_core::sampler::derive_seed;
use practsig_core::scenarios::{evaluate_scenario, sensitivity_sweep, CostParam, EvalConfig};
use practsig_core::synthetic::{generate, DesignSpec};

use crate::config::{check_distinct, RunConfig};
use crate::Failure;

const RHAT_LIMIT: f64 = 1.05;

fn text_path(out: &Path) -> PathBuf {
    out.with_extension("txt")
}

/// Writes the CSV to `out` and the text rendering next to it, and echoes the text.
fn write_report(out: &Path, csv: &str, text: &str) -> Result<(), Failure> {
    fs::write(out, csv)?;
    fs::write(text_path(out), text)?;
    print!("{text}");
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &str, what: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {what} file {path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("bad {what} file {path}: {e}")))
}

fn load_posterior(path: &Path) -> Result<Posterior, Failure> {
    Ok(io::read_posterior(path)?.0)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `study` (12 low, 23 high experience) or a JSON design file.
    #[arg(long, default_value = "study")]
    design: String,
    /// `study-means` or a JSON parameter file.
    #[arg(long, default_value = "study-means")]
    truth: String,
    /// Generating model.
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    zi_link: Option<ZiLink>,
    /// Sessions per subject (overrides the design).
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let out = cfg.out(a.out)?;
    let seed = cfg.seed(a.seed)?;
    let mut design = match a.design.as_str() {
        "study" => DesignSpec::study(),
        path => read_json(path, "design")?,
    };
    if let Some(s) = a.sessions {
        design = design.with_sessions(s);
    }
    let truth: ParameterVector = match a.truth.as_str() {
        "study-means" => ParameterVector::study_means(),
        path => read_json(path, "truth")?,
    };
    let spec = ModelSpec::new(a.model.or(cfg.model).unwrap_or(ModelKind::M2))
        .with_link(a.zi_link.or(cfg.zi_link).unwrap_or_default());
    let data = generate(&truth, &design, &spec, seed)?;
    let mut buf = Vec::new();
    io::write_dataset(&data, &mut buf)?;
    fs::write(&out, buf)?;
    println!("wrote {} rows for {} subjects to {}", data.len(), data.n_subjects(), out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV with columns subject,approach,experience,faults.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    zi_link: Option<ZiLink>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    /// Block sweeps per retained draw.
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Draws CSV; the metadata goes to the same name with `.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn fit(a: FitArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let out = cfg.out(a.out)?;
    let data_path = a.data.or(cfg.data.clone()).ok_or_else(|| Failure::input("--data is required"))?;
    check_distinct(&[&data_path, &out, &io::metadata_path(&out)])?;
    let mut sampler = cfg.sampler;
    sampler.seed = cfg.seed(a.seed)?;
    sampler.chains = a.chains.unwrap_or(sampler.chains);
    sampler.warmup_iterations = a.warmup.unwrap_or(sampler.warmup_iterations);
    sampler.retained_draws_per_chain = a.draws.unwrap_or(sampler.retained_draws_per_chain);
    sampler.thin = a.thin.unwrap_or(sampler.thin);
    let spec = ModelSpec::new(a.model.or(cfg.model).unwrap_or(ModelKind::M2))
        .with_link(a.zi_link.or(cfg.zi_link).unwrap_or_default());
    let data = io::read_dataset(&data_path)?;
    if sampler.chains == 1 {
        eprintln!("warning: R-hat is undefined with a single chain; convergence is not checked");
    }
    let post = Posterior::fit(&data, spec, &sampler)?;
    io::write_posterior(&post, &sampler, &out)?;
    print!("{}", io::summary_table(&summarize_posterior(&post, cfg.ci)?, cfg.ci, post.diagnostics()));
    let failures = post.rhat_failures(RHAT_LIMIT);
    if !failures.is_empty() {
        let list: Vec<String> =
            failures.iter().map(|d| format!("{} ({:.3})", d.name, d.rhat.unwrap_or(f64::NAN))).collect();
        return Err(Failure::Diagnostic(format!("R-hat above {RHAT_LIMIT} for: {}", list.join(", "))));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    draws: Option<PathBuf>,
    /// Equal-tailed interval level in (0, 1].
    #[arg(long)]
    ci: Option<f64>,
    /// Histogram CSV of every population-level marginal.
    #[arg(long)]
    hist: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn single_draws(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.draws.first().cloned()).ok_or_else(|| Failure::input("--draws is required"))
}

pub fn summarize(a: SummarizeArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let out = cfg.out(a.out)?;
    let draws = single_draws(a.draws, &cfg)?;
    let mut paths = vec![draws.as_path(), out.as_path()];
    let txt = text_path(&out);
    paths.push(&txt);
    if let Some(h) = &a.hist {
        paths.push(h);
    }
    check_distinct(&paths)?;
    let ci = a.ci.unwrap_or(cfg.ci);
    let post = load_posterior(&draws)?;
    let rows = summarize_posterior(&post, ci)?;
    write_report(&out, &io::summary_csv(&rows)?, &io::summary_table(&rows, ci, post.diagnostics()))?;
    if let Some(h) = a.hist {
        let marginals = rows
            .iter()
            .map(|r| marginal_density(&post, &r.parameter, a.bins, ci))
            .collect::<Result<Vec<_>, _>>()?;
        fs::write(h, io::histogram_csv(&marginals)?)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Draws CSV of one fitted model; repeat for each model.
    #[arg(long)]
    draws: Vec<PathBuf>,
    /// The dataset every model was fitted to.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn label_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn compare(a: CompareArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let out = cfg.out(a.out)?;
    let draws = if a.draws.is_empty() { cfg.draws.clone() } else { a.draws };
    if draws.len() < 2 {
        return Err(Failure::input("compare needs at least two --draws files"));
    }
    let data_path = a.data.or(cfg.data.clone()).ok_or_else(|| Failure::input("--data is required"))?;
    let txt = text_path(&out);
    let mut paths: Vec<&Path> = draws.iter().map(PathBuf::as_path).collect();
    paths.extend([data_path.as_path(), out.as_path(), txt.as_path()]);
    check_distinct(&paths)?;
    let data = io::read_dataset(&data_path)?;
    let mut labels: Vec<String> = draws.iter().map(|p| label_of(p)).collect();
    if (1..labels.len()).any(|i| labels[..i].contains(&labels[i])) {
        labels = draws.iter().map(|p| p.display().to_string()).collect();
    }
    let matrices = draws
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let post = load_posterior(p)?;
            LogLikMatrix::from_posterior(l, &post, &data).map_err(Failure::from)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let result = compare_models(&matrices.iter().collect::<Vec<_>>())?;
    write_report(&out, &io::comparison_csv(&result)?, &io::comparison_table(&result))
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    draws: Option<PathBuf>,
    /// `<exploratory|testcase|mixed>+<low|high|mixed>`; repeatable.
    #[arg(long)]
    setting: Vec<String>,
    /// `expectation` (rate per draw) or `outcome` (simulated counts).
    #[arg(long)]
    mode: Option<PredictiveMode>,
    /// `fresh` (new subject per draw) or `average` (subject intercept at its mean).
    #[arg(long)]
    subject: Option<SubjectMode>,
    /// Experience mix for `mixed`: `dataset`, `12-low` or `23-low`.
    #[arg(long)]
    composition: Option<Composition>,
    /// Simulated counts per posterior draw in outcome mode.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    ci: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Every predictive sample as CSV.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Interval table CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

const DEFAULT_SETTINGS: [&str; 6] = [
    "exploratory+low",
    "exploratory+high",
    "testcase+low",
    "testcase+high",
    "exploratory+mixed",
    "testcase+mixed",
];

pub fn predict(a: PredictArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let out = cfg.out(a.out)?;
    let draws = single_draws(a.draws, &cfg)?;
    let txt = text_path(&out);
    let mut paths = vec![draws.as_path(), out.as_path(), txt.as_path()];
    if let Some(s) = &a.samples {
        paths.push(s);
    }
    check_distinct(&paths)?;
    let seed = cfg.seed(a.seed)?;
    let ci = a.ci.unwrap_or(cfg.ci);
    let post = load_posterior(&draws)?;
    let settings: Vec<String> =
        if a.setting.is_empty() { DEFAULT_SETTINGS.iter().map(|s| s.to_string()).collect() } else { a.setting };
    let composition = a.composition.unwrap_or(cfg.composition);
    let mut rows = Vec::new();
    let mut samples = String::new();
    for (i, name) in settings.iter().enumerate() {
        let setting = Setting::parse(name, post.data(), composition)?;
        let req = PredictiveRequest::new(setting, a.mode.unwrap_or(cfg.predictive_mode))
            .with_subject(a.subject.unwrap_or(cfg.subject))
            .with_reps(a.reps.unwrap_or(cfg.n_rep))
            .with_seed(derive_seed(seed, i as u64));
        let pd = posterior_predictive(&post, &req)?;
        rows.push((name.clone(), predictive_interval(&pd, ci)?));
        if a.samples.is_some() {
            let csv = io::predictive_csv(&pd)?;
            // keep one header for the concatenated file
            samples.push_str(if i == 0 { &csv } else { csv.split_once('\n').map_or("", |x| x.1) });
        }
    }
    if let Some(s) = a.samples {
        fs::write(s, samples)?;
    }
    write_report(&out, &io::interval_csv(&rows)?, &io::interval_table(&rows, ci))
}

#[derive(Debug, Args)]
pub struct UtilityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    draws: Option<PathBuf>,
    /// `approach`, `experience`, `exploratory`, or a scenario named in the config.
    #[arg(long)]
    scenario: String,
    /// Sweep one cost, e.g. `S=150,1000` (S, C-, C+, Cbar, h).
    #[arg(long)]
    sweep: Option<String>,
    /// Savings per detected fault.
    #[arg(long)]
    savings: Option<f64>,
    #[arg(long)]
    cost_low: Option<f64>,
    #[arg(long)]
    cost_high: Option<f64>,
    #[arg(long)]
    cost_mixed: Option<f64>,
    /// Hours per testing session.
    #[arg(long)]
    hours: Option<f64>,
    #[arg(long)]
    gamma_gain: Option<f64>,
    #[arg(long)]
    gamma_loss: Option<f64>,
    /// `cumulative` or `pointwise` probability weighting.
    #[arg(long)]
    weighting: Option<WeightingMode>,
    /// Apply the power value function (0.88, loss aversion 2.25).
    #[arg(long)]
    power_value: bool,
    #[arg(long)]
    subject: Option<SubjectMode>,
    #[arg(long)]
    composition: Option<Composition>,
    /// Simulated counts per posterior draw.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_sweep(spec: &str) -> Result<(CostParam, Vec<f64>), Failure> {
    let (name, values) =
        spec.split_once('=').ok_or_else(|| Failure::input(format!("bad sweep `{spec}`; expected e.g. S=150,1000")))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::input(format!("bad sweep value `{v}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.trim().parse()?, values))
}

pub fn utility(a: UtilityArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let out = cfg.out(a.out)?;
    let draws = single_draws(a.draws, &cfg)?;
    check_distinct(&[&draws, &out, &text_path(&out)])?;
    let seed = cfg.seed(a.seed)?;
    let scenario = cfg.scenario(&a.scenario)?;
    let sweep = a.sweep.as_deref().map(parse_sweep).transpose()?;

    let mut profile: CostProfile = cfg.cost;
    for (param, v) in [
        (CostParam::Savings, a.savings),
        (CostParam::CostLow, a.cost_low),
        (CostParam::CostHigh, a.cost_high),
        (CostParam::CostMixed, a.cost_mixed),
        (CostParam::Hours, a.hours),
    ] {
        if let Some(v) = v {
            param.set(&mut profile, v);
        }
    }
    let mut weighting: WeightingParams = cfg.weighting;
    weighting.gamma_gain = a.gamma_gain.unwrap_or(weighting.gamma_gain);
    weighting.gamma_loss = a.gamma_loss.unwrap_or(weighting.gamma_loss);
    weighting.mode = a.weighting.unwrap_or(weighting.mode);
    if a.power_value {
        weighting.value_transform = ValueTransform::tversky_kahneman();
    }
    let eval = EvalConfig {
        seed,
        n_rep: a.reps.unwrap_or(cfg.n_rep),
        subject: a.subject.unwrap_or(cfg.subject),
        composition: a.composition.unwrap_or(cfg.composition),
        ..Default::default()
    };

    let post = load_posterior(&draws)?;
    match sweep {
        Some((param, values)) => {
            let table = sensitivity_sweep(&post, &scenario, &profile, &weighting, &eval, param, &values)?;
            write_report(&out, &io::sweep_csv(&table)?, &io::sweep_table(&table))
        }
        None => {
            let report = evaluate_scenario(&post, &scenario, &profile, &weighting, &eval)?;
            write_report(&out, &io::utility_csv(&report)?, &io::utility_table(&report))
        }
    }
}
