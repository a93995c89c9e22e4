//! File formats: dataset and draws CSV, fit metadata, and the CSV and text
//! renderings of every report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compare::ComparisonResult;
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, Observation};
use crate::posterior::{DataInfo, MarginalDensity, ParamDiagnostics, Posterior, PredictiveDistribution, PredictiveInterval, SummaryRow};
use crate::sampler::{Draws, SamplerConfig};
use crate::scenarios::{SweepTable, UtilityReport};

pub const DATASET_HEADER: [&str; 4] = ["subject", "approach", "experience", "faults"];

/// Full-precision float for CSV output (17 significant digits).
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn parse_indicator(field: &str, names: [&str; 2], row: usize, column: &str) -> Result<u8> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        f if f.eq_ignore_ascii_case(names[0]) => Ok(0),
        f if f.eq_ignore_ascii_case(names[1]) => Ok(1),
        f => Err(Error::input(format!(
            "row {row}: {column} must be 0, 1, {} or {}, got `{f}`",
            names[0], names[1]
        ))),
    }
}

/// Parses a dataset CSV. Subject labels are arbitrary strings, numbered in
/// sorted order (numerically when every label is an integer).
pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("missing column `{name}` (expected {})", DATASET_HEADER.join(","))))
    };
    let idx = [col("subject")?, col("approach")?, col("experience")?, col("faults")?];
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let approach = parse_indicator(field(1), ["exploratory", "testcase"], row, "approach")?;
        let experience = parse_indicator(field(2), ["low", "high"], row, "experience")?;
        let raw = field(3);
        let faults: i64 = raw
            .parse()
            .map_err(|_| Error::input(format!("row {row}: faults must be a whole number, got `{raw}`")))?;
        if faults < 0 {
            return Err(Error::input(format!("row {row}: faults must be non-negative, got {faults}")));
        }
        rows.push((field(0).to_string(), approach, experience, faults as u64));
    }
    if rows.is_empty() {
        return Err(Error::input("dataset has no rows"));
    }
    let numeric: Option<Vec<i64>> = rows.iter().map(|r| r.0.parse().ok()).collect();
    let mut labels: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    match numeric {
        Some(_) => labels.sort_by_key(|l| l.parse::<i64>().expect("checked numeric")),
        None => labels.sort(),
    }
    labels.dedup();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let observations = rows
        .iter()
        .map(|(s, approach, experience, faults)| Observation {
            subject: index[s.as_str()],
            approach: *approach,
            experience: *experience,
            faults: *faults,
        })
        .collect();
    Dataset::new(observations, labels.len())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(open(path)?)
}

pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DATASET_HEADER)?;
    for o in data.observations() {
        w.write_record([
            o.subject.to_string(),
            ["exploratory", "testcase"][o.approach as usize].to_string(),
            ["low", "high"][o.experience as usize].to_string(),
            o.faults.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))
}

/// Draws CSV: `chain,iteration,<parameter names...>`, one row per draw.
pub fn write_draws<W: Write>(draws: &Draws, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(draws.names().iter().cloned());
    w.write_record(&header)?;
    for c in 0..draws.n_chains() {
        for i in 0..draws.n_draws() {
            let mut rec = vec![c.to_string(), i.to_string()];
            rec.extend(draws.draw(c, i).iter().map(|v| fmt_float(*v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn parse_draws<R: Read>(reader: R) -> Result<Draws> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "chain" || &headers[1] != "iteration" {
        return Err(Error::input("draws CSV must start with `chain,iteration` and name at least one parameter"));
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut per_chain: Vec<usize> = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let chain: usize = rec[0].parse().map_err(|_| Error::input(format!("row {row}: bad chain index")))?;
        if chain == per_chain.len() {
            per_chain.push(0);
        } else if chain + 1 != per_chain.len() {
            return Err(Error::input(format!("row {row}: chains must be contiguous and in order")));
        }
        per_chain[chain] += 1;
        for f in rec.iter().skip(2) {
            values.push(f.parse::<f64>().map_err(|_| Error::input(format!("row {row}: bad value `{f}`")))?);
        }
    }
    let n_draws = *per_chain.first().ok_or_else(|| Error::input("draws CSV has no rows"))?;
    if per_chain.iter().any(|n| *n != n_draws) {
        return Err(Error::input("every chain must have the same number of draws"));
    }
    Draws::new(names, per_chain.len(), n_draws, values)
}

/// Everything besides the draws needed to rebuild a posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub model: ModelSpec,
    pub data: DataInfo,
    pub sampler: SamplerConfig,
    pub diagnostics: Vec<ParamDiagnostics>,
}

/// `fit.csv` -> `fit.meta.json`.
pub fn metadata_path(draws_path: &Path) -> PathBuf {
    draws_path.with_extension("meta.json")
}

pub fn write_posterior(post: &Posterior, sampler: &SamplerConfig, draws_path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_draws(post.draws(), &mut buf)?;
    fs::write(draws_path, buf)?;
    let meta = FitMetadata {
        model: *post.spec(),
        data: post.data().clone(),
        sampler: *sampler,
        diagnostics: post.diagnostics().to_vec(),
    };
    fs::write(metadata_path(draws_path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_posterior(draws_path: &Path) -> Result<(Posterior, FitMetadata)> {
    let draws = parse_draws(open(draws_path)?)?;
    let meta_path = metadata_path(draws_path);
    let meta: FitMetadata = serde_json::from_reader(open(&meta_path)?)
        .map_err(|e| Error::input(format!("bad metadata {}: {e}", meta_path.display())))?;
    let post = Posterior::new(draws, meta.model, meta.data.clone())?;
    Ok((post, meta))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn ci_labels(level: f64) -> (String, String) {
    let tail = (1.0 - level) / 2.0 * 100.0;
    (format!("{}%", trim_pct(tail)), format!("{}%", trim_pct(100.0 - tail)))
}

fn trim_pct(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    csv_string(
        &["parameter", "mean", "sd", "ci_lo", "ci_hi"],
        rows.iter().map(|r| vec![r.parameter.clone(), fmt_float(r.mean), fmt_float(r.sd), fmt_float(r.ci_lo), fmt_float(r.ci_hi)]),
    )
}

/// Parameter table at two decimals, with R-hat and bulk ESS when known.
pub fn summary_table(rows: &[SummaryRow], level: f64, diagnostics: &[ParamDiagnostics]) -> String {
    let (lo, hi) = ci_labels(level);
    let mut out = format!("{:<10} {:>8} {:>8} {:>8} {:>8} {:>7} {:>8}\n", "parameter", "mean", "sd", lo, hi, "r_hat", "ess_bulk");
    for r in rows {
        let d = diagnostics.iter().find(|d| d.name == r.parameter);
        let rhat = d.and_then(|d| d.rhat).map_or("-".to_string(), |v| format!("{v:.3}"));
        let ess = d.and_then(|d| d.ess_bulk).map_or("-".to_string(), |v| format!("{v:.0}"));
        let _ = writeln!(
            out,
            "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>7} {:>8}",
            r.parameter, r.mean, r.sd, r.ci_lo, r.ci_hi, rhat, ess
        );
    }
    out
}

pub fn histogram_csv(densities: &[MarginalDensity]) -> Result<String> {
    csv_string(
        &["parameter", "bin_lo", "bin_hi", "density"],
        densities.iter().flat_map(|m| {
            m.edges.windows(2).zip(&m.heights).map(move |(e, h)| {
                vec![m.parameter.clone(), fmt_float(e[0]), fmt_float(e[1]), fmt_float(*h)]
            })
        }),
    )
}

pub fn comparison_csv(result: &ComparisonResult) -> Result<String> {
    csv_string(
        &[
            "model", "rank", "elpd_loo", "se_loo", "p_loo", "elpd_waic", "se_waic", "p_waic", "elpd_diff", "diff_se",
            "max_pareto_k", "n_k_above_0.7",
        ],
        result.models.iter().map(|m| {
            vec![
                m.label.clone(),
                m.rank.to_string(),
                fmt_float(m.loo.elpd),
                fmt_float(m.loo.se),
                fmt_float(m.loo.p_loo),
                fmt_float(m.waic.elpd),
                fmt_float(m.waic.se),
                fmt_float(m.waic.p_waic),
                fmt_float(m.elpd_diff),
                fmt_float(m.diff_se),
                fmt_opt(m.loo.max_k()),
                m.loo.flagged().len().to_string(),
            ]
        }),
    )
}

pub fn comparison_table(result: &ComparisonResult) -> String {
    let mut out = format!(
        "{:<4} {:<10} {:>10} {:>8} {:>8} {:>10} {:>10} {:>8} {:>6}\n",
        "rank", "model", "elpd_loo", "se", "p_loo", "elpd_waic", "elpd_diff", "diff_se", "k>0.7"
    );
    for m in &result.models {
        let _ = writeln!(
            out,
            "{:<4} {:<10} {:>10.2} {:>8.2} {:>8.2} {:>10.2} {:>10.2} {:>8.2} {:>6}",
            m.rank,
            m.label,
            m.loo.elpd,
            m.loo.se,
            m.loo.p_loo,
            m.waic.elpd,
            m.elpd_diff,
            m.diff_se,
            m.loo.flagged().len()
        );
    }
    out
}

pub fn predictive_csv(pd: &PredictiveDistribution) -> Result<String> {
    let setting = pd.setting.to_string();
    let values = pd.values();
    csv_string(
        &["setting", "sample", "value"],
        values.iter().enumerate().map(|(i, v)| vec![setting.clone(), i.to_string(), fmt_float(*v)]),
    )
}

pub fn interval_table(rows: &[(String, PredictiveInterval)], level: f64) -> String {
    let (lo, hi) = ci_labels(level);
    let mut out = format!("{:<20} {:>8} {:>8} {:>8}\n", "setting", "mean", lo, hi);
    for (s, iv) in rows {
        let _ = writeln!(out, "{s:<20} {:>8.2} {:>8.2} {:>8.2}", iv.mean, iv.lo, iv.hi);
    }
    out
}

pub fn interval_csv(rows: &[(String, PredictiveInterval)]) -> Result<String> {
    csv_string(
        &["setting", "mean", "lo", "hi"],
        rows.iter().map(|(s, iv)| vec![s.clone(), fmt_float(iv.mean), fmt_float(iv.lo), fmt_float(iv.hi)]),
    )
}

pub fn utility_csv(report: &UtilityReport) -> Result<String> {
    csv_string(
        &[
            "option", "utility", "mc_se", "tail_lo_value", "tail_lo_p", "central_value", "central_p", "tail_hi_value",
            "tail_hi_p",
        ],
        report.options.iter().map(|o| {
            let mut r = vec![o.label.clone(), fmt_float(o.utility), fmt_float(o.mc_se)];
            for t in &o.tails {
                r.push(fmt_float(t.value));
                r.push(fmt_float(t.probability));
            }
            r
        }),
    )
}

/// Money at two decimals.
pub fn utility_table(report: &UtilityReport) -> String {
    let mut out = format!(
        "scenario: {}\n{:<12} {:<20} {:>11} {:>8} {:>11} {:>11} {:>11}\n",
        report.scenario, "option", "setting", "E_U", "mc_se", "low 3%", "mid 94%", "high 3%"
    );
    for o in &report.options {
        let _ = writeln!(
            out,
            "{:<12} {:<20} {:>11.2} {:>8.2} {:>11.2} {:>11.2} {:>11.2}",
            o.label, o.setting, o.utility, o.mc_se, o.tails[0].value, o.tails[1].value, o.tails[2].value
        );
    }
    let _ = writeln!(out, "best: {}", report.best);
    out
}

pub fn sweep_csv(table: &SweepTable) -> Result<String> {
    let mut header = vec![table.parameter.to_string()];
    header.extend(table.labels.iter().cloned());
    header.push("best".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(
        &header,
        table.rows.iter().map(|r| {
            let mut rec = vec![fmt_float(r.value)];
            rec.extend(r.utilities.iter().map(|u| fmt_float(*u)));
            rec.push(r.best.clone());
            rec
        }),
    )
}

pub fn sweep_table(table: &SweepTable) -> String {
    let name = table.parameter.to_string();
    let mut out = format!("scenario: {} (sweep over {name})\n{name:>10}", table.scenario);
    for l in &table.labels {
        let _ = write!(out, " {l:>12}");
    }
    out.push_str("  best\n");
    for r in &table.rows {
        let _ = write!(out, "{:>10.2}", r.value);
        for u in &r.utilities {
            let _ = write!(out, " {u:>12.2}");
        }
        let _ = writeln!(out, "  {}", r.best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParameterVector;
    use crate::synthetic::{generate, DesignSpec};

    #[test]
    fn dataset_round_trip() {
        let d = generate(&ParameterVector::study_means(), &DesignSpec::study(), &ModelSpec::m2(), 4).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 36);
        assert_eq!(parse_dataset(&buf[..]).unwrap(), d);
    }

    #[test]
    fn dataset_aliases_and_labels() {
        let csv = "subject,approach,experience,faults\nb,testcase,HIGH,2\na,0,1,5\nb,1,high,0\n";
        let d = parse_dataset(csv.as_bytes()).unwrap();
        assert_eq!(d.n_subjects(), 2);
        let o = d.observations();
        assert_eq!((o[0].subject, o[0].approach, o[0].experience, o[0].faults), (0, 0, 1, 5));
        assert_eq!(o.iter().filter(|o| o.subject == 1).count(), 2);
        // numeric labels sort numerically
        let d = parse_dataset("subject,approach,experience,faults\n10,0,0,1\n9,0,0,2\n".as_bytes()).unwrap();
        assert_eq!(d.observations()[0].faults, 2);
    }

    #[test]
    fn dataset_errors_name_the_row() {
        let neg = "subject,approach,experience,faults\n1,0,0,3\n2,1,1,-1\n";
        let msg = parse_dataset(neg.as_bytes()).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("non-negative"), "{msg}");
        let bad = "subject,approach,experience,faults\n1,manual,0,3\n";
        assert!(parse_dataset(bad.as_bytes()).unwrap_err().to_string().contains("row 1"));
        assert!(parse_dataset("subject,approach,faults\n1,0,3\n".as_bytes()).is_err());
        assert!(parse_dataset("subject,approach,experience,faults\n".as_bytes()).is_err());
        assert!(parse_dataset("subject,approach,experience,faults\n1,0,0,2.5\n".as_bytes()).is_err());
    }

    #[test]
    fn draws_round_trip_bitwise() {
        let values: Vec<f64> = (0..12).map(|i| (i as f64).sin() * 1e-3 + 1.0 / 3.0).collect();
        let d = Draws::new(vec!["a".into(), "b".into()], 2, 3, values).unwrap();
        let mut buf = Vec::new();
        write_draws(&d, &mut buf).unwrap();
        assert_eq!(parse_draws(&buf[..]).unwrap(), d);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("chain,iteration,a,b\n0,0,"));
    }

    #[test]
    fn draws_shape_errors() {
        assert!(parse_draws("chain,iteration,a\n0,0,1\n0,1,1\n1,0,1\n".as_bytes()).is_err());
        assert!(parse_draws("chain,iteration,a\n1,0,1\n".as_bytes()).is_err());
        assert!(parse_draws("c,i,a\n0,0,1\n".as_bytes()).is_err());
        assert!(parse_draws("chain,iteration,a\n0,0,x\n".as_bytes()).is_err());
    }

    #[test]
    fn posterior_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate(&ParameterVector::study_means(), &DesignSpec::study(), &ModelSpec::m1(), 1).unwrap();
        let cfg = SamplerConfig { chains: 2, warmup_iterations: 200, retained_draws_per_chain: 100, thin: 1, ..Default::default() };
        let post = Posterior::fit(&d, ModelSpec::m1(), &cfg).unwrap();
        let path = dir.path().join("m1.csv");
        write_posterior(&post, &cfg, &path).unwrap();
        assert!(metadata_path(&path).ends_with("m1.meta.json"));
        let (back, meta) = read_posterior(&path).unwrap();
        assert_eq!(back.draws().names(), post.draws().names());
        assert!(back.draws().iter_draws().eq(post.draws().iter_draws()));
        assert_eq!(meta.sampler, cfg);
        assert_eq!(back.diagnostics(), post.diagnostics());
    }

    #[test]
    fn ci_column_labels() {
        assert_eq!(ci_labels(0.94), ("3%".to_string(), "97%".to_string()));
        assert_eq!(ci_labels(0.95), ("2.5%".to_string(), "97.5%".to_string()));
        assert_eq!(ci_labels(1.0), ("0%".to_string(), "100%".to_string()));
    }

    #[test]
    fn csv_outputs_parse_back() {
        let rows = vec![SummaryRow { parameter: "alpha".into(), mean: 1.0, sd: 0.1, ci_lo: 0.8, ci_hi: 1.2 }];
        let text = summary_csv(&rows).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rec = rdr.records().next().unwrap().unwrap();
        assert_eq!(rec[1].parse::<f64>().unwrap(), 1.0);
        assert!(summary_table(&rows, 0.94, &[]).contains("    1.00"));
    }
}
