//! Acceptance criteria C1–C9, one PASS/FAIL line each.
//!
//! C1–C6 and C9 are exact properties of the implementation; any failure
//! among them makes this target exit non-zero. C7 and C8 are directional
//! comparisons against published behaviour on a different system: their
//! outcome depends on the public test data, so they are measured and
//! reported faithfully but do not fail the build.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dlac::ac_solver::{solve_ac, AcOptions};
use dlac::cli::{recompute_reports, run_eval, run_fit, EvalConfig, EvalSummary, FitConfig, FormatArg, ReportFormat};
use dlac::linear_models::{LinearModel, ModelCoefficients};
use dlac::metrics::{abs_dev_stats, filtered_mape_with_zero, ReportOptions, ZERO_AC_PU};
use dlac::network::Network;
use dlac::records::{SolutionModel, SolutionRecord};
use dlac::scenarios::{generate_hourly_cases, write_scenarios, ScenarioSpec};

use common::{
    check_ddc_equivalence, check_lac_identity, check_recovery, first_order_ratio, load, BUNDLED,
};

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    title: &'static str,
    /// Whether a failure fails the target.
    exact: bool,
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn mean_vm(net: &Network) -> f64 {
    let s = solve_ac(net, &AcOptions::default()).unwrap();
    s.vm.iter().sum::<f64>() / s.vm.len() as f64
}

fn c1_ac_oracle() -> Outcome {
    let mut worst_iter = 0;
    let mut worst_mismatch: f64 = 0.0;
    let mut worst_balance: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for name in BUNDLED {
        let net = load(name);
        let t = Instant::now();
        let s = solve_ac(&net, &AcOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let dt = t.elapsed();
        let (ps, _) = net.scheduled_injections();
        let slack = net.slack_index();
        let injected: f64 = ps
            .iter()
            .enumerate()
            .map(|(i, p)| if i == slack { s.p_inj[i] } else { *p })
            .sum();
        let losses: f64 = s.flows.iter().map(|f| f.p_from + f.p_to).sum();
        let shunts: f64 = net
            .buses()
            .iter()
            .zip(&s.vm)
            .map(|(b, v)| v * v * b.g_shunt)
            .sum();
        let balance = (injected - losses - shunts).abs();
        if s.iterations > 10 || s.max_mismatch >= 1e-8 || balance >= 1e-8 || dt.as_secs_f64() >= 1.0 {
            return Err(format!(
                "{name}: {} iterations, mismatch {:e}, balance {balance:e}, {dt:?}",
                s.iterations, s.max_mismatch
            ));
        }
        worst_iter = worst_iter.max(s.iterations);
        worst_mismatch = worst_mismatch.max(s.max_mismatch);
        worst_balance = worst_balance.max(balance);
        slowest = slowest.max(dt);
    }
    Ok(format!(
        "{} cases; ≤ {worst_iter} iterations, mismatch ≤ {worst_mismatch:.1e}, balance ≤ {worst_balance:.1e} p.u., slowest {:.1} ms",
        BUNDLED.len(),
        slowest.as_secs_f64() * 1e3
    ))
}

fn c2_ddc() -> Outcome {
    for name in BUNDLED {
        check_ddc_equivalence(&load(name), name);
    }
    Ok(format!("k_d ∈ {{0.5, 1.12, 2.0}} on {} cases within 1e-10", BUNDLED.len()))
}

fn c3_identity() -> Outcome {
    for name in BUNDLED {
        check_lac_identity(&load(name), name);
    }
    Ok(format!(
        "DLAC(1) = LAC and LAC balance residual ≤ 1e-12 on {} cases",
        BUNDLED.len()
    ))
}

fn c4_first_order() -> Outcome {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for name in BUNDLED {
        let net = load(name);
        for seed in 0..5 {
            let r = first_order_ratio(&net, seed, 1e-2);
            if !(3.5..=4.5).contains(&r) {
                return Err(format!("{name} seed {seed}: ratio {r}"));
            }
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok(format!("error(1e-2)/error(5e-3) ∈ [{lo:.3}, {hi:.3}] over 35 perturbations"))
}

fn c5_recovery() -> Outcome {
    for name in BUNDLED {
        let net = load(name);
        for seed in 0..5 {
            check_recovery(&net, name, seed);
        }
    }
    Ok("K_A1..K_A5 and K_D recovered to 1e-8, R² ≥ 1 − 1e-12, 35 draws".into())
}

fn c6_regression() -> Outcome {
    common::check_reference_fits();
    common::check_reference_vif_and_single_regressor();
    Ok("β, stderr, CI, R², d, t, h, VIF, ANOVA within 1e-8; single regressor VIF NotApplicable".into())
}

/// A 72-hour synthetic suite: scenarios, fit on hour 1, eval of all models.
struct Suite {
    name: &'static str,
    out: PathBuf,
    coeffs: ModelCoefficients,
    summary: EvalSummary,
    eval_time: Duration,
}

fn run_suite(name: &'static str, root: &Path) -> Result<Suite, String> {
    let base = load(name);
    let spec = ScenarioSpec::default();
    let cases = generate_hourly_cases(&base, &spec).map_err(|e| e.to_string())?;
    let sc = root.join(name).join("scenarios");
    write_scenarios(&sc, name, &spec, &cases, None).map_err(|e| e.to_string())?;
    let coeff_path = root.join(name).join("coeffs.json");
    let (coeffs, _) = run_fit(&FitConfig {
        train: vec![sc.join("hour_001.json")],
        format: FormatArg::Native,
        out: coeff_path.clone(),
        diagnostics: None,
        ac: AcOptions::default(),
    })
    .map_err(|e| format!("{name} fit: {e}"))?;
    let out = root.join(name).join("eval");
    let t = Instant::now();
    let summary = run_eval(&EvalConfig {
        cases: sc,
        coeffs: Some(coeff_path),
        models: LinearModel::ALL.to_vec(),
        formats: vec![ReportFormat::Csv, ReportFormat::Md, ReportFormat::Json],
        out: out.clone(),
        threads: None,
        ac: AcOptions::default(),
        report: ReportOptions::default(),
    })
    .map_err(|e| format!("{name} eval: {e}"))?;
    Ok(Suite {
        name,
        out,
        coeffs,
        summary,
        eval_time: t.elapsed(),
    })
}

fn record(suite: &Suite, hour: usize, model: SolutionModel) -> SolutionRecord {
    let h = &suite.summary.hours[hour];
    SolutionRecord::load(&suite.out.join(&h.records[&model])).unwrap()
}

/// Cells of a CSV table row, parsed exactly.
fn csv_row(path: &Path, label: &str) -> Vec<Option<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[0] == label {
            return rec
                .iter()
                .skip(1)
                .map(|c| (!c.is_empty()).then(|| c.parse().unwrap()))
                .collect();
        }
    }
    panic!("{}: no row '{label}'", path.display());
}

fn csv_header(path: &Path) -> Vec<String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    let rec = rdr.records().next().unwrap().unwrap();
    rec.iter().skip(1).map(str::to_string).collect()
}

/// Per-hour LAC/DLAC voltage γ and the mean η row of the multi-hour table.
fn multi_hour(suite: &Suite) -> (Vec<(f64, f64)>, f64, f64) {
    let path = suite.out.join("tables/multi_hour.csv");
    let gammas = suite
        .summary
        .hours
        .iter()
        .filter(|h| h.ok())
        .map(|h| {
            let row = csv_row(&path, &format!("hour {:03}", h.hour));
            (row[0].unwrap(), row[1].unwrap())
        })
        .collect();
    let mean = csv_row(&path, "mean");
    (gammas, mean[2].unwrap(), mean[5].unwrap())
}

fn c7_directional(suites: &BTreeMap<&str, Suite>) -> Outcome {
    let mut notes = Vec::new();
    for name in ["case14", "case39"] {
        notes.push(format!("{name} mean V {:.4}", mean_vm(&load(name))));
    }
    let s = &suites["case39"];
    let (gammas, eta_v, eta_q) = multi_hour(s);
    let wins = gammas.iter().filter(|(lac, dlac)| dlac < lac).count();
    let share = wins as f64 / gammas.len() as f64;
    let (g14, v14, q14) = multi_hour(&suites["case14"]);
    let wins14 = g14.iter().filter(|(lac, dlac)| dlac < lac).count();
    let detail = format!(
        "case39: k_d {:.4}, DLAC γ_V < LAC on {wins}/{} hours, mean η_V {:.1}%, mean η_Q {:.1}% \
         [case14 (small): k_d {:.4}, {wins14}/{} hours, η_V {:.1}%, η_Q {:.1}%] ({})",
        s.coeffs.k_d,
        gammas.len(),
        eta_v * 100.0,
        eta_q * 100.0,
        suites["case14"].coeffs.k_d,
        g14.len(),
        v14 * 100.0,
        q14 * 100.0,
        notes.join(", ")
    );
    if s.coeffs.k_d > 1.0 && share >= 0.8 && eta_v > 0.0 && eta_q > 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c8_active_power(suites: &BTreeMap<&str, Suite>) -> Outcome {
    let mut parts = Vec::new();
    let mut failing = Vec::new();
    for (name, s) in suites {
        let (mut dc, mut lac, mut n) = (0.0, 0.0, 0.0);
        for h in s.summary.hours.iter().filter(|h| h.ok()) {
            let path = s.out.join(format!("tables/hour_{:03}/flow_p.csv", h.hour));
            let j = csv_header(&path).iter().position(|c| c == ">= 10 MW").unwrap();
            dc += csv_row(&path, "ε P_ij (dc)")[j].unwrap();
            lac += csv_row(&path, "ε P_ij (lac)")[j].unwrap();
            n += 1.0;
        }
        let (dc, lac) = (dc / n, lac / n);
        parts.push(format!("{name} {:.2}% vs {:.2}%", lac * 100.0, dc * 100.0));
        if lac > dc {
            failing.push(*name);
        }
    }
    let detail = format!("mean ε P_ij @10 MW, LAC vs DC: {}", parts.join("; "));
    if failing.is_empty() {
        Ok(detail)
    } else {
        Err(format!("LAC worse on {}: {detail}", failing.join(", ")))
    }
}

fn c9_end_to_end(suite: &Suite) -> Outcome {
    let s = suite;
    if s.eval_time >= Duration::from_secs(60) {
        return Err(format!("eval took {:?}", s.eval_time));
    }
    let ok: Vec<_> = s.summary.hours.iter().filter(|h| h.ok()).collect();
    let mut expected = vec![
        "tables/multi_hour.csv".to_string(),
        "tables/multi_hour.md".into(),
        "series/multi_hour.json".into(),
        "report.md".into(),
    ];
    for h in &ok {
        for t in ["flow_p", "flow_q", "voltage", "complex_power"] {
            for ext in ["csv", "md"] {
                expected.push(format!("tables/hour_{:03}/{t}.{ext}", h.hour));
            }
        }
        expected.push(format!("series/hour_{:03}.json", h.hour));
    }
    if let Some(missing) = expected.iter().find(|p| !s.out.join(p).is_file()) {
        return Err(format!("missing report file {missing}"));
    }

    // Every report file regenerates byte-for-byte from the raw solutions.
    let files = recompute_reports(&s.out).map_err(|e| e.to_string())?;
    for (rel, text) in &files {
        let on_disk = std::fs::read(s.out.join(rel)).map_err(|e| format!("{}: {e}", rel.display()))?;
        if on_disk != text.as_bytes() {
            return Err(format!("{} differs on recompute", rel.display()));
        }
    }

    // Spot cells against the metric primitives applied to the raw records.
    let mut cells = 0;
    let gamma_path = s.out.join("tables/multi_hour.csv");
    for (i, h) in s.summary.hours.iter().enumerate().filter(|(_, h)| h.ok()) {
        let ac = record(s, i, SolutionModel::Ac);
        let path = s.out.join(format!("tables/hour_{:03}/flow_p.csv", h.hour));
        let header = csv_header(&path);
        for model in [SolutionModel::Dc, SolutionModel::Dlac] {
            let m = record(s, i, model);
            let row = csv_row(&path, &format!("ε P_ij ({model})"));
            for (j, tol) in s.summary.report.p_tolerances_mw.iter().enumerate() {
                assert_eq!(header[j], format!(">= {tol} MW"));
                let want = filtered_mape_with_zero(
                    &m.p_from(),
                    &ac.p_from(),
                    &ac.p_from(),
                    *tol,
                    ZERO_AC_PU * ac.base_mva,
                )
                .ok()
                .map(|r| r.eps);
                if row[j].map(f64::to_bits) != want.map(f64::to_bits) {
                    return Err(format!("hour {} {model} @{tol} MW: {:?} vs {want:?}", h.hour, row[j]));
                }
                cells += 1;
            }
        }
        let lac = record(s, i, SolutionModel::Lac);
        let want = abs_dev_stats(&lac.vm, &ac.vm, &vec![true; ac.vm.len()]).unwrap().gamma;
        let got = csv_row(&gamma_path, &format!("hour {:03}", h.hour))[0].unwrap();
        if got.to_bits() != want.to_bits() {
            return Err(format!("hour {} γ_V(lac): {got} vs {want}", h.hour));
        }
        cells += 1;
    }
    Ok(format!(
        "{}: {}/{} hours in {:.2} s; {} report files regenerate identically; {cells} cells match raw records bit-for-bit",
        s.name,
        ok.len(),
        s.summary.hours.len(),
        s.eval_time.as_secs_f64(),
        files.len()
    ))
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let criteria = [
        Criterion { id: "C1", title: "AC oracle", exact: true },
        Criterion { id: "C2", title: "DDC equivalence", exact: true },
        Criterion { id: "C3", title: "identity reduction", exact: true },
        Criterion { id: "C4", title: "first-order accuracy", exact: true },
        Criterion { id: "C5", title: "coefficient recovery", exact: true },
        Criterion { id: "C6", title: "regression diagnostics oracle", exact: true },
        Criterion { id: "C7", title: "fitted coefficients improve voltage and reactive power (directional)", exact: false },
        Criterion { id: "C8", title: "LAC active power vs DC (directional)", exact: false },
        Criterion { id: "C9", title: "end-to-end eval", exact: true },
    ];

    let root = tempfile::tempdir().expect("temp dir");
    let suites: Result<BTreeMap<&str, Suite>, String> =
        panic::catch_unwind(AssertUnwindSafe(|| {
            BUNDLED
                .iter()
                .map(|&name| run_suite(name, root.path()).map(|s| (name, s)))
                .collect()
        }))
        .unwrap_or_else(|_| Err("suite construction panicked".into()));

    let mut results: Vec<Outcome> = vec![
        guarded(c1_ac_oracle),
        guarded(c2_ddc),
        guarded(c3_identity),
        guarded(c4_first_order),
        guarded(c5_recovery),
        guarded(c6_regression),
    ];
    match &suites {
        Ok(s) => {
            results.push(guarded(|| c7_directional(s)));
            results.push(guarded(|| c8_active_power(s)));
            results.push(guarded(|| c9_end_to_end(&s["case300"])));
        }
        Err(e) => {
            for _ in 0..3 {
                results.push(Err(format!("scenario suites failed: {e}")));
            }
        }
    }

    let mut fatal = 0;
    let mut failed = Vec::new();
    for (c, r) in criteria.iter().zip(&results) {
        match r {
            Ok(d) => println!("{} PASS  {} — {d}", c.id, c.title),
            Err(d) => {
                println!("{} FAIL  {} — {d}", c.id, c.title);
                failed.push(c.id);
                if c.exact {
                    fatal += 1;
                }
            }
        }
    }
    let passed = criteria.len() - failed.len();
    println!(
        "acceptance: {passed}/{} PASS{}",
        criteria.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" (FAIL: {})", failed.join(", "))
        }
    );
    if fatal > 0 {
        std::process::exit(1);
    }
}
