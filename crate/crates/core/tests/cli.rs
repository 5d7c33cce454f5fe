use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dlac::case_io::{load_case, CaseFormat};
use dlac::cli::{load_diagnostics, load_summary, read_manifest, DIAGNOSTICS_FILE};
use dlac::linear_models::ModelCoefficients;
use dlac::records::{SolutionModel, SolutionRecord};
use serde_json::Value;

fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cases")
}

fn dlac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlac"))
        .args(args)
        .env_remove("DLAC_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).expect("stderr carries JSON")
}

fn two_bus(dir: &Path, load_mw: f64) -> PathBuf {
    let path = dir.join(format!("two_bus_{load_mw}.m"));
    let text = format!(
        "function mpc = two_bus\n\
         mpc.version = '2';\n\
         mpc.baseMVA = 100;\n\
         mpc.bus = [\n\
         \t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;\n\
         \t2\t1\t{load_mw}\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;\n\
         ];\n\
         mpc.gen = [\n\
         \t1\t0\t0\t999\t-999\t1\t100\t1\t999\t0;\n\
         ];\n\
         mpc.branch = [\n\
         \t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\
         ];\n"
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn solve_dc_two_bus() {
    let dir = tempfile::tempdir().unwrap();
    let case = two_bus(dir.path(), 100.0);
    let out = dir.path().join("sol/dc.json");
    let o = dlac(&["solve", "--case", s(&case), "--model", "dc", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = SolutionRecord::load(&out).unwrap();
    assert_eq!(rec.model, SolutionModel::Dc);
    assert!((rec.va_rad[1] + 0.1).abs() < 1e-14);
    assert!((rec.flows[0].p_from_mw - 100.0).abs() < 1e-10);

    let runs = read_manifest(&dir.path().join("sol")).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].command, "solve");
    assert_eq!(runs[0].artifacts.len(), 1);
    assert_eq!(runs[0].artifacts["dc.json"], dlac::cli::sha256_file(&out).unwrap());

    // A second run appends rather than replacing.
    let o = dlac(&["solve", "--case", s(&case), "--model", "lac", "--out", s(&dir.path().join("sol/lac.json"))]);
    assert!(o.status.success());
    assert_eq!(read_manifest(&dir.path().join("sol")).unwrap().len(), 2);
}

#[test]
fn data_driven_models_need_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let case = two_bus(dir.path(), 100.0);
    let o = dlac(&["solve", "--case", s(&case), "--model", "dlac", "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_json(&o);
    assert_eq!(e["error"], "MissingCoefficients");
    assert!(e["message"].as_str().unwrap().contains("coefficients required"));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let case = two_bus(dir.path(), 1000.0);
    let o = dlac(&["solve", "--case", s(&case), "--model", "ac", "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "Divergence");
    assert_eq!(e["exit_code"], 2);
    assert!(e["details"]["iterations"].as_u64().unwrap() > 0);
}

#[test]
fn solve_with_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let case = two_bus(dir.path(), 100.0);
    let coeffs = dir.path().join("k.json");
    ModelCoefficients {
        k_d: 1.12,
        ..ModelCoefficients::identity()
    }
    .save(&coeffs)
    .unwrap();
    let out = dir.path().join("ddc.json");
    let o = dlac(&["solve", "--case", s(&case), "--model", "ddc", "--coeffs", s(&coeffs), "--out", s(&out)]);
    assert!(o.status.success());
    let rec = SolutionRecord::load(&out).unwrap();
    assert!((rec.va_rad[1] + 0.1 / 1.12).abs() < 1e-14);
    assert!((rec.flows[0].p_from_mw - 100.0).abs() < 1e-10);
}

#[test]
fn convert_case9() {
    let dir = tempfile::tempdir().unwrap();
    let src = cases_dir().join("case9.m");
    let out = dir.path().join("case9.json");
    let o = dlac(&["convert", "--in", s(&src), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = load_case(&src, CaseFormat::Matpower).unwrap();
    let b = load_case(&out, CaseFormat::Native).unwrap();
    assert_eq!(a, b);
    // Published case data.
    assert_eq!(b.n_buses(), 9);
    assert_eq!(b.buses()[4].p_load, 0.9);
    assert_eq!(b.buses()[8].q_load, 0.5);
    assert_eq!(b.branches[1].r, 0.017);
    assert_eq!(b.branches[1].b_charging, 0.158);
    assert_eq!(b.generators[1].p_gen, 1.63);

    // Native to native is the identity.
    let again = dir.path().join("again.json");
    let o = dlac(&["convert", "--in", s(&out), "--format", "native", "--out", s(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn convert_reports_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.m");
    std::fs::write(
        &bad,
        "mpc.baseMVA = 100;\nmpc.bus = [\n\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;\n\t2\t1\tabc\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;\n];\n",
    )
    .unwrap();
    let o = dlac(&["convert", "--in", s(&bad), "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_json(&o);
    assert_eq!(e["error"], "ParseError");
    assert_eq!(e["details"]["line"], 4);
}

#[test]
fn scenarios_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let base = cases_dir().join("case14.m");
    for run in ["a", "b"] {
        let o = dlac(&[
            "scenarios", "--base", s(&base), "--out", s(&dir.path().join(run)),
            "--hours", "6", "--seed", "5",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for h in 1..=6 {
        let name = format!("hour_{h:03}.json");
        assert_eq!(
            std::fs::read(dir.path().join("a").join(&name)).unwrap(),
            std::fs::read(dir.path().join("b").join(&name)).unwrap()
        );
    }
    assert_eq!(
        std::fs::read(dir.path().join("a/scenario.json")).unwrap(),
        std::fs::read(dir.path().join("b/scenario.json")).unwrap()
    );
    let m: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/scenario.json")).unwrap()).unwrap();
    assert_eq!(m["hours"].as_array().unwrap().len(), 6);
    assert_eq!(m["hours"][0]["ac"]["status"], "feasible");
    assert_eq!(read_manifest(&dir.path().join("a")).unwrap()[0].artifacts.len(), 7);
}

#[test]
fn fit_writes_coefficients_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let case = cases_dir().join("case14.m");
    let coeffs = dir.path().join("k/coeffs.json");
    let diag = dir.path().join("diag");
    let o = dlac(&["fit", "--train", s(&case), "--out", s(&coeffs), "--diagnostics", s(&diag)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let k = ModelCoefficients::load(&coeffs).unwrap();
    // Healthy voltages above 1 p.u. push the DC scale factor above one.
    assert!(k.k_d > 1.0, "{}", k.k_d);
    assert_eq!(k.trained_on, vec!["case14".to_string()]);
    let d = load_diagnostics(&diag.join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(d.coefficients, k);
    assert_eq!(d.ddc.beta[0], k.k_d);
    assert_eq!(d.p.n, d.q.n);
    assert_eq!(d.p.anova.last().unwrap().name, "Residuals");
    // Re-serializing the parsed diagnostics reproduces the file.
    let text = std::fs::read_to_string(diag.join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(serde_json::to_string_pretty(&d).unwrap() + "\n", text);
    for f in ["fit_p_coefficients.csv", "fit_q_anova.csv", "fit_ddc_residuals.csv"] {
        assert!(diag.join(f).is_file(), "{f}");
    }
    let res = std::fs::read_to_string(diag.join("fit_p_residuals.csv")).unwrap();
    assert_eq!(res.lines().count(), d.p.n + 1);
    assert_eq!(read_manifest(&diag).unwrap().len(), 1);
    assert_eq!(read_manifest(&dir.path().join("k")).unwrap().len(), 1);
}

#[test]
fn fit_names_divergent_training_case() {
    let dir = tempfile::tempdir().unwrap();
    let case = two_bus(dir.path(), 1000.0);
    let o = dlac(&["fit", "--train", s(&case), "--out", s(&dir.path().join("k.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert!(e["message"].as_str().unwrap().contains("training case two_bus_1000"));
}

fn cell(table: &str, row: &str) -> Vec<String> {
    let line = table
        .lines()
        .find(|l| l.starts_with(&format!("{row},")) || l.starts_with(&format!("\"{row}\",")))
        .unwrap_or_else(|| panic!("row {row} missing in\n{table}"));
    line.split(',').skip(1).map(str::to_string).collect()
}

fn parse(cells: &[String]) -> Vec<Option<f64>> {
    cells
        .iter()
        .map(|c| (!c.is_empty()).then(|| c.parse().unwrap()))
        .collect()
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    }
}

#[test]
fn eval_dc_and_ddc_agree_on_flows() {
    let dir = tempfile::tempdir().unwrap();
    let coeffs = dir.path().join("k.json");
    ModelCoefficients {
        k_d: 1.12,
        ..ModelCoefficients::identity()
    }
    .save(&coeffs)
    .unwrap();
    let out = dir.path().join("ev");
    let o = dlac(&[
        "eval", "--cases", s(&cases_dir().join("case30.m")), "--coeffs", s(&coeffs),
        "--models", "dc,ddc", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = std::fs::read_to_string(out.join("tables/hour_001/flow_p.csv")).unwrap();
    let dc = parse(&cell(&t, "ε P_ij (dc)"));
    let ddc = parse(&cell(&t, "ε P_ij (ddc)"));
    assert!(dc.iter().any(Option::is_some));
    for (a, b) in dc.iter().zip(&ddc) {
        assert!(close(*a, *b), "{a:?} vs {b:?}");
    }
    // Angles do differ.
    assert_ne!(cell(&t, "ε θ_ij (dc)"), cell(&t, "ε θ_ij (ddc)"));
}

#[test]
fn eval_identity_dlac_matches_lac() {
    let dir = tempfile::tempdir().unwrap();
    let coeffs = dir.path().join("k.json");
    ModelCoefficients::identity().save(&coeffs).unwrap();
    let out = dir.path().join("ev");
    let o = dlac(&[
        "eval", "--cases", s(&cases_dir().join("case14.m")), "--coeffs", s(&coeffs),
        "--models", "lac,dlac", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for (table, rows) in [
        ("flow_p", vec!["P_ij", "θ_ij"]),
        ("flow_q", vec!["Q_ij"]),
        ("voltage", vec!["V_i"]),
    ] {
        let t = std::fs::read_to_string(out.join(format!("tables/hour_001/{table}.csv"))).unwrap();
        for q in rows {
            let prefix = if table == "voltage" { "γ" } else { "ε" };
            let unit = if table == "voltage" { " [p.u.]" } else { "" };
            let a = parse(&cell(&t, &format!("{prefix} {q} (lac){unit}")));
            let b = parse(&cell(&t, &format!("{prefix} {q} (dlac){unit}")));
            assert!(a.iter().any(Option::is_some), "{table} {q}");
            for (x, y) in a.iter().zip(&b) {
                assert!(close(*x, *y), "{table} {q}: {x:?} vs {y:?}");
            }
        }
    }
}

#[test]
fn eval_isolates_failed_hours_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases");
    std::fs::create_dir_all(&cases).unwrap();
    two_bus(&cases, 50.0);
    two_bus(&cases, 1000.0);
    let mut outs = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(run);
        let o = dlac(&[
            "eval", "--cases", s(&cases), "--models", "dc,lac", "--out", s(&out),
            "--threads", threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("1 of 2 hours"));
        outs.push(out);
    }
    let summary = load_summary(&outs[0]).unwrap();
    assert_eq!((summary.succeeded, summary.failed), (1, 1));
    let failed = &summary.hours[0];
    assert_eq!(failed.case, "two_bus_1000");
    assert_eq!(failed.failed_stage.as_deref(), Some("ac"));
    assert!(summary.hours[1].ok());
    let report = std::fs::read_to_string(outs[0].join("report.md")).unwrap();
    assert!(report.contains("Failed hours"));
    assert!(report.contains("two_bus_1000"));

    // Identical inputs give identical artifacts regardless of thread count.
    let a = &read_manifest(&outs[0]).unwrap()[0].artifacts;
    let b = &read_manifest(&outs[1]).unwrap()[0].artifacts;
    assert_eq!(a, b);
    assert!(a.contains_key("tables/multi_hour.csv"));
    assert!(a.contains_key("series/hour_002.json"));
    assert!(a.contains_key("raw/hour_002/ac.json"));
}

#[test]
fn eval_with_no_successful_hour_fails() {
    let dir = tempfile::tempdir().unwrap();
    let case = two_bus(dir.path(), 1000.0);
    let o = dlac(&["eval", "--cases", s(&case), "--models", "dc", "--out", s(&dir.path().join("ev"))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "NoHourSucceeded");
    assert!(dir.path().join("ev/eval.json").is_file());
}
