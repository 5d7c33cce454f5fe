//! `fit`: AC-solve the training cases and estimate the model coefficients.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{case_name, load, parent_dir, write_text, CliError, FormatArg, ManifestBuilder};
use crate::ac_solver::{solve_ac, AcOptions, AcSolution};
use crate::linear_models::ModelCoefficients;
use crate::network::Network;
use crate::regression::{fit_model_coefficients, FitResult, Snapshot, VifReport};
use crate::stats::format_p_value;

pub const DIAGNOSTICS_FILE: &str = "fit_diagnostics.json";

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub train: Vec<PathBuf>,
    pub format: FormatArg,
    pub out: PathBuf,
    pub diagnostics: Option<PathBuf>,
    pub ac: AcOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCase {
    pub case: String,
    pub path: String,
    pub ac_iterations: usize,
    pub ac_max_mismatch: f64,
}

/// Everything behind a coefficient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub training: Vec<TrainingCase>,
    pub coefficients: ModelCoefficients,
    /// Active-power fit (K_A1, K_A2).
    pub p: FitResult,
    /// Reactive-power fit (K_A3..K_A5).
    pub q: FitResult,
    /// DC fit (K_D).
    pub ddc: FitResult,
}

fn same_topology(a: &Network, b: &Network) -> bool {
    a.bus_ids() == b.bus_ids() && a.branches == b.branches
}

pub fn run_fit(cfg: &FitConfig) -> Result<(ModelCoefficients, FitDiagnostics), CliError> {
    let mut nets = Vec::with_capacity(cfg.train.len());
    for path in &cfg.train {
        let net = load(path, cfg.format)?;
        if let Some(first) = nets.first() {
            if !same_topology(first, &net) {
                return Err(CliError::Input {
                    kind: "TopologyMismatch".into(),
                    message: format!(
                        "{}: bus ids or branch data differ from {}",
                        path.display(),
                        cfg.train[0].display()
                    ),
                    details: json!({ "case": path.display().to_string() }),
                });
            }
        }
        nets.push(net);
    }
    let names: Vec<String> = cfg.train.iter().map(|p| case_name(p)).collect();
    let mut solutions: Vec<AcSolution> = Vec::with_capacity(nets.len());
    for (net, name) in nets.iter().zip(&names) {
        let sol = solve_ac(net, &cfg.ac)
            .map_err(|e| CliError::from(e).context(&format!("training case {name}")))?;
        solutions.push(sol);
    }
    let snapshots: Vec<Snapshot<'_>> = names
        .iter()
        .zip(&solutions)
        .map(|(id, solution)| Snapshot { id, solution })
        .collect();
    let fit = fit_model_coefficients(&nets[0], &snapshots)?;

    let out_dir = parent_dir(&cfg.out)?;
    let diag_dir = cfg.diagnostics.clone().unwrap_or_else(|| out_dir.clone());
    std::fs::create_dir_all(&diag_dir).map_err(|e| CliError::io(&diag_dir, e))?;
    let diag_path = diag_dir.join(DIAGNOSTICS_FILE);

    let mut coefficients = fit.coefficients.clone();
    coefficients.fit_stats_ref = Some(diag_path.display().to_string());
    let diagnostics = FitDiagnostics {
        training: cfg
            .train
            .iter()
            .zip(&names)
            .zip(&solutions)
            .map(|((path, case), s)| TrainingCase {
                case: case.clone(),
                path: path.display().to_string(),
                ac_iterations: s.iterations,
                ac_max_mismatch: s.max_mismatch,
            })
            .collect(),
        coefficients: coefficients.clone(),
        p: fit.p,
        q: fit.q,
        ddc: fit.ddc,
    };

    coefficients.save(&cfg.out)?;
    write_text(
        &diag_path,
        &(serde_json::to_string_pretty(&diagnostics).expect("diagnostics serialize") + "\n"),
    )?;
    let mut diag_outputs = vec![diag_path];
    for (tag, r) in [("p", &diagnostics.p), ("q", &diagnostics.q), ("ddc", &diagnostics.ddc)] {
        for (suffix, text) in [
            ("coefficients", coefficient_csv(r)),
            ("anova", anova_csv(r)),
            ("residuals", residual_csv(r)),
        ] {
            let path = diag_dir.join(format!("fit_{tag}_{suffix}.csv"));
            write_text(&path, &text)?;
            diag_outputs.push(path);
        }
    }

    // One manifest per output directory.
    if diag_dir == out_dir {
        diag_outputs.insert(0, cfg.out.clone());
        record_run(cfg, &out_dir, diag_outputs)?;
    } else {
        record_run(cfg, &out_dir, vec![cfg.out.clone()])?;
        record_run(cfg, &diag_dir, diag_outputs)?;
    }
    Ok((coefficients, diagnostics))
}

fn record_run(cfg: &FitConfig, dir: &Path, outputs: Vec<PathBuf>) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new("fit");
    for p in &cfg.train {
        m.input(p);
    }
    m.option("tol", cfg.ac.tol).option("max_iter", cfg.ac.max_iter);
    for p in outputs {
        m.output(p);
    }
    m.finish(dir).map(|_| ())
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn coefficient_csv(r: &FitResult) -> String {
    let vif = |j: usize| -> String {
        let j = if r.intercept { j.checked_sub(1) } else { Some(j) };
        match (&r.vif, j) {
            (VifReport::Values { vif }, Some(j)) => vif[j].to_string(),
            (VifReport::Infinite { columns }, Some(j)) => {
                let name = &r.names[if r.intercept { j + 1 } else { j }];
                if columns.contains(name) { "inf".into() } else { String::new() }
            }
            _ => String::new(),
        }
    };
    let rows = (0..r.names.len())
        .map(|j| {
            vec![
                r.names[j].clone(),
                r.beta[j].to_string(),
                r.stderr[j].to_string(),
                r.ci95_lo[j].to_string(),
                r.ci95_hi[j].to_string(),
                vif(j),
            ]
        })
        .collect();
    csv_text(&["term", "estimate", "std_error", "ci95_lo", "ci95_hi", "vif"], rows)
}

fn anova_csv(r: &FitResult) -> String {
    let rows = r
        .anova
        .iter()
        .map(|a| {
            vec![
                a.name.clone(),
                a.df.to_string(),
                a.sum_sq.to_string(),
                a.mean_sq.to_string(),
                opt(a.f_value),
                a.pr_gt_f.map(format_p_value).unwrap_or_default(),
            ]
        })
        .collect();
    csv_text(&["term", "df", "sum_sq", "mean_sq", "f_value", "pr_gt_f"], rows)
}

fn residual_csv(r: &FitResult) -> String {
    let rows = (0..r.n)
        .map(|i| {
            vec![
                r.row_keys[i].case.clone(),
                (r.row_keys[i].branch + 1).to_string(),
                r.fitted[i].to_string(),
                r.residuals[i].to_string(),
                opt(r.standardized[i]),
                opt(r.studentized[i]),
                r.hat_diag[i].to_string(),
            ]
        })
        .collect();
    csv_text(
        &["case", "branch", "fitted", "residual", "standardized", "studentized", "hat"],
        rows,
    )
}

/// Reads a diagnostics file written by [`run_fit`].
pub fn load_diagnostics(path: &Path) -> Result<FitDiagnostics, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: malformed diagnostics: {e}", path.display())))
}
