//! `eval`: solve every hour with AC and the requested linear models, persist
//! the raw solutions, then derive every report from the persisted files.
//!
//! Output layout under the run directory:
//!
//! ```text
//! eval.json                      run summary (hours, failures, options)
//! raw/hour_NNN/<model>.json      solution records, AC included
//! tables/hour_NNN/<table>.{csv,md}
//! tables/multi_hour.{csv,md}
//! series/hour_NNN.json           tables plus per-branch error series
//! series/multi_hour.json
//! report.md                      everything above in one document
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_coefficients, thread_pool, write_text, CliError, ManifestBuilder};
use crate::ac_solver::{solve_ac, AcOptions};
use crate::case_io::{load_case, CaseFormat};
use crate::linear_models::{solve_linear, LinearModel, ModelCoefficients};
use crate::metrics::{
    compare, hour_metrics, multi_hour_report, ComparisonReport, HourMetrics, ReportOptions,
};
use crate::records::{SolutionModel, SolutionRecord};
use crate::scenarios::{ScenarioManifest, SCENARIO_MANIFEST};

pub const EVAL_SUMMARY: &str = "eval.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Md,
    Json,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Scenario directory or a single case file.
    pub cases: PathBuf,
    pub coeffs: Option<PathBuf>,
    pub models: Vec<LinearModel>,
    pub formats: Vec<ReportFormat>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub ac: AcOptions,
    pub report: ReportOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourResult {
    pub hour: usize,
    pub case: String,
    pub case_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Record files relative to the run directory; empty on failure.
    pub records: BTreeMap<SolutionModel, String>,
    /// Which step failed: `load`, `ac`, or a model name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl HourResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    fn tag(&self) -> String {
        format!("hour_{:03}", self.hour)
    }
}

/// Persisted description of an eval run; everything needed to rebuild the
/// reports from the raw files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub models: Vec<LinearModel>,
    pub coefficients: Option<ModelCoefficients>,
    pub report: ReportOptions,
    pub formats: Vec<ReportFormat>,
    pub hours: Vec<HourResult>,
    pub succeeded: usize,
    pub failed: usize,
}

struct CaseJob {
    hour: usize,
    case: String,
    path: PathBuf,
    lambda: Option<f64>,
}

fn discover(cases: &Path) -> Result<Vec<CaseJob>, CliError> {
    if cases.is_file() {
        return Ok(vec![CaseJob {
            hour: 1,
            case: super::case_name(cases),
            path: cases.to_path_buf(),
            lambda: None,
        }]);
    }
    let scenario = cases.join(SCENARIO_MANIFEST);
    if scenario.is_file() {
        let text = std::fs::read_to_string(&scenario).map_err(|e| CliError::io(&scenario, e))?;
        let m: ScenarioManifest = serde_json::from_str(&text).map_err(|e| {
            CliError::input(format!("{}: malformed scenario manifest: {e}", scenario.display()))
        })?;
        return Ok(m
            .hours
            .into_iter()
            .map(|h| CaseJob {
                hour: h.hour,
                case: super::case_name(Path::new(&h.file)),
                path: cases.join(&h.file),
                lambda: Some(h.lambda),
            })
            .collect());
    }
    let entries = std::fs::read_dir(cases).map_err(|e| CliError::io(cases, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            let ext = p.extension().and_then(|e| e.to_str());
            matches!(ext, Some("json") | Some("m"))
                && name != super::MANIFEST_FILE
                && name != SCENARIO_MANIFEST
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::input(format!("{}: no case files found", cases.display())));
    }
    Ok(paths
        .into_iter()
        .enumerate()
        .map(|(i, path)| CaseJob {
            hour: i + 1,
            case: super::case_name(&path),
            path,
            lambda: None,
        })
        .collect())
}

struct HourOutput {
    result: HourResult,
    written: Vec<PathBuf>,
}

fn solve_hour(
    job: &CaseJob,
    cfg: &EvalConfig,
    coeffs: &ModelCoefficients,
) -> Result<HourOutput, CliError> {
    let mut result = HourResult {
        hour: job.hour,
        case: job.case.clone(),
        case_path: job.path.display().to_string(),
        lambda: job.lambda,
        records: BTreeMap::new(),
        failed_stage: None,
        error: None,
    };
    let fail = |mut r: HourResult, stage: &str, e: String| {
        r.failed_stage = Some(stage.to_string());
        r.error = Some(e);
        Ok(HourOutput {
            result: r,
            written: Vec::new(),
        })
    };
    let net = match load_case(&job.path, CaseFormat::from_path(&job.path)) {
        Ok(n) => n,
        Err(e) => return fail(result, "load", e.to_string()),
    };
    let ac = match solve_ac(&net, &cfg.ac) {
        Ok(s) => s,
        Err(e) => return fail(result, "ac", e.to_string()),
    };
    let mut records = vec![SolutionRecord::from_ac(&net, &job.case, &ac)];
    let identity = ModelCoefficients::identity();
    for &m in &cfg.models {
        let c = if m.is_data_driven() { coeffs } else { &identity };
        match solve_linear(&net, m, c) {
            Ok(s) => records.push(SolutionRecord::from_linear(&net, &job.case, &s)),
            Err(e) => return fail(result, m.as_str(), e.to_string()),
        }
    }
    let mut written = Vec::with_capacity(records.len());
    for r in &records {
        let rel = format!("raw/{}/{}.json", result.tag(), r.model);
        let path = cfg.out.join(&rel);
        write_text(&path, &r.to_json())?;
        result.records.insert(r.model, rel);
        written.push(path);
    }
    Ok(HourOutput { result, written })
}

pub fn run_eval(cfg: &EvalConfig) -> Result<EvalSummary, CliError> {
    let needed: Vec<&str> = cfg
        .models
        .iter()
        .filter(|m| m.is_data_driven())
        .map(|m| m.as_str())
        .collect();
    let coeffs = load_coefficients(cfg.coeffs.as_deref(), &needed)?;
    if cfg.models.is_empty() {
        return Err(CliError::input("at least one model is required"));
    }
    let jobs = discover(&cfg.cases)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;

    let used = coeffs.clone().unwrap_or_else(ModelCoefficients::identity);
    let pool = thread_pool(cfg.threads)?;
    // Hours are independent; collect() keeps them in hour order.
    let outputs: Vec<HourOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|job| solve_hour(job, cfg, &used))
            .collect::<Result<_, _>>()
    })?;

    let succeeded = outputs.iter().filter(|o| o.result.ok()).count();
    let summary = EvalSummary {
        models: cfg.models.clone(),
        coefficients: coeffs,
        report: cfg.report.clone(),
        formats: cfg.formats.clone(),
        failed: outputs.len() - succeeded,
        succeeded,
        hours: outputs.iter().map(|o| o.result.clone()).collect(),
    };
    let summary_path = cfg.out.join(EVAL_SUMMARY);
    write_text(
        &summary_path,
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;

    // Reports are built only from what was just persisted.
    let reports = recompute_reports(&cfg.out)?;
    let mut m = ManifestBuilder::new("eval");
    m.input(&cfg.cases);
    if let Some(c) = &cfg.coeffs {
        m.input(c);
    }
    m.option("models", &cfg.models)
        .option("formats", &cfg.formats)
        .option("report", &cfg.report)
        .option("tol", cfg.ac.tol);
    for o in &outputs {
        for p in &o.written {
            m.output(p.clone());
        }
    }
    m.output(summary_path);
    for (rel, text) in &reports {
        let path = cfg.out.join(rel);
        write_text(&path, text)?;
        m.output(path);
    }
    m.finish(&cfg.out)?;

    if succeeded == 0 {
        let failures: Vec<_> = summary
            .hours
            .iter()
            .map(|h| json!({ "hour": h.hour, "stage": h.failed_stage, "error": h.error }))
            .collect();
        return Err(CliError::Numerical {
            kind: "NoHourSucceeded".into(),
            message: format!("all {} hours failed", summary.hours.len()),
            details: json!({ "failures": failures }),
        });
    }
    Ok(summary)
}

pub fn load_summary(out: &Path) -> Result<EvalSummary, CliError> {
    let path = out.join(EVAL_SUMMARY);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: malformed eval summary: {e}", path.display())))
}

#[derive(Serialize)]
struct HourSeries<'a> {
    hour: usize,
    case: &'a str,
    lambda: Option<f64>,
    report: &'a ComparisonReport,
    metrics: &'a HourMetrics,
}

#[derive(Serialize)]
struct MultiHourSeries<'a> {
    hours: &'a [HourMetrics],
    table: &'a crate::metrics::Table,
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

/// Rebuilds every report file of an eval run from `eval.json` and the raw
/// solution records. Returns `(path relative to the run directory, text)`
/// pairs in a fixed order.
pub fn recompute_reports(out: &Path) -> Result<Vec<(PathBuf, String)>, CliError> {
    let summary = load_summary(out)?;
    let has = |f: ReportFormat| summary.formats.contains(&f);
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut per_hour_md = String::new();
    let mut metrics = Vec::new();

    for h in summary.hours.iter().filter(|h| h.ok()) {
        let path = Path::new(&h.case_path);
        let net = load_case(path, CaseFormat::from_path(path))
            .map_err(|e| super::with_path(e, path))?;
        let record = |model: SolutionModel| -> Result<SolutionRecord, CliError> {
            let rel = h.records.get(&model).ok_or_else(|| {
                CliError::input(format!("hour {}: no {model} record listed", h.hour))
            })?;
            Ok(SolutionRecord::load(&out.join(rel))?)
        };
        let ac = record(SolutionModel::Ac)?;
        let models = summary
            .models
            .iter()
            .map(|&m| record(m.into()))
            .collect::<Result<Vec<_>, _>>()?;
        let report = compare(&net, &ac, &models, &summary.report)
            .map_err(|e| CliError::from(e).context(&format!("hour {}", h.hour)))?;
        let hm = hour_metrics(h.hour, &ac, &models, summary.report.q_hourly_tol_mvar)?;

        let tag = h.tag();
        per_hour_md.push_str(&format!("## Hour {} — {}", h.hour, h.case));
        if let Some(l) = h.lambda {
            per_hour_md.push_str(&format!(" (λ = {l:.4})"));
        }
        per_hour_md.push_str("\n\n");
        for t in report.tables() {
            if has(ReportFormat::Csv) {
                files.push((
                    PathBuf::from(format!("tables/{tag}/{}.csv", t.name)),
                    t.to_csv(),
                ));
            }
            let md = t.to_markdown();
            if has(ReportFormat::Md) {
                files.push((PathBuf::from(format!("tables/{tag}/{}.md", t.name)), md.clone()));
            }
            per_hour_md.push_str(&md);
            per_hour_md.push('\n');
        }
        if has(ReportFormat::Json) {
            files.push((
                PathBuf::from(format!("series/{tag}.json")),
                pretty(&HourSeries {
                    hour: h.hour,
                    case: &h.case,
                    lambda: h.lambda,
                    report: &report,
                    metrics: &hm,
                }),
            ));
        }
        metrics.push(hm);
    }

    let multi = multi_hour_report(&metrics);
    if has(ReportFormat::Csv) {
        files.push((PathBuf::from("tables/multi_hour.csv"), multi.to_csv()));
    }
    if has(ReportFormat::Md) {
        files.push((PathBuf::from("tables/multi_hour.md"), multi.to_markdown()));
    }
    if has(ReportFormat::Json) {
        files.push((
            PathBuf::from("series/multi_hour.json"),
            pretty(&MultiHourSeries {
                hours: &metrics,
                table: &multi,
            }),
        ));
    }
    if has(ReportFormat::Md) {
        let mut doc = format!(
            "# Linear model evaluation\n\nModels: {}. Hours evaluated: {} of {}.\n\n",
            summary
                .models
                .iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()
                .join(", "),
            summary.succeeded,
            summary.hours.len()
        );
        if let Some(c) = &summary.coefficients {
            doc.push_str(&format!(
                "Coefficients: k_d = {}, k_a = [{}].\n\n",
                c.k_d,
                c.k_a.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
            ));
        }
        if summary.failed > 0 {
            doc.push_str("## Failed hours\n\n| hour | case | stage | error |\n|---|---|---|---|\n");
            for h in summary.hours.iter().filter(|h| !h.ok()) {
                doc.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    h.hour,
                    h.case,
                    h.failed_stage.as_deref().unwrap_or(""),
                    h.error.as_deref().unwrap_or("").replace('|', "\\|")
                ));
            }
            doc.push('\n');
        }
        doc.push_str("## All hours\n\n");
        doc.push_str(&multi.to_markdown());
        doc.push('\n');
        doc.push_str(&per_hour_md);
        files.push((PathBuf::from("report.md"), doc));
    }
    Ok(files)
}
