use std::path::PathBuf;

use dlac::ac_solver::{solve_ac, solve_ac_from, AcOptions};
use dlac::case_io::{load_case, CaseFormat};
use serde_json::Value;

fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("data/cases/{name}.m"))
}

const CASES: [&str; 7] = ["case9", "case14", "case30", "case39", "case57", "case118", "case300"];

#[test]
fn bundled_cases_converge_from_flat_start() {
    for name in CASES {
        let net = load_case(&case_path(name), CaseFormat::Matpower).unwrap();
        let sol = solve_ac(&net, &AcOptions::default()).unwrap();
        assert!(sol.iterations <= 10, "{name}: {} iterations", sol.iterations);
        assert!(sol.max_mismatch < 1e-8, "{name}");

        let losses: f64 = sol.flows.iter().map(|f| f.active_loss()).sum();
        let shunt: f64 = net
            .buses()
            .iter()
            .zip(&sol.vm)
            .map(|(b, v)| v * v * b.g_shunt)
            .sum();
        let injected: f64 = sol.p_inj.iter().sum();
        assert!((injected - losses - shunt).abs() < 1e-8, "{name}");
        for fl in &sol.flows {
            if net.branches[fl.branch].r >= 0.0 {
                assert!(fl.active_loss() >= -1e-9, "{name}: branch {}", fl.branch);
            }
        }
        assert_eq!(sol.va[net.slack_index()], 0.0);
    }
}

#[test]
fn matches_independent_reference_solutions() {
    let text = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pypower_ac_reference.json"),
    )
    .unwrap();
    let reference: Value = serde_json::from_str(&text).unwrap();
    for name in ["case9", "case14", "case30"] {
        let net = load_case(&case_path(name), CaseFormat::Matpower).unwrap();
        let sol = solve_ac(&net, &AcOptions { tol: 1e-11, ..AcOptions::default() }).unwrap();
        let r = &reference[name];
        let slack = net.slack_index();
        let va_ref0 = r["va_deg"][slack].as_f64().unwrap().to_radians();
        for i in 0..net.n_buses() {
            let vm = r["vm"][i].as_f64().unwrap();
            let va = r["va_deg"][i].as_f64().unwrap().to_radians() - va_ref0;
            assert!((sol.vm[i] - vm).abs() < 1e-8, "{name} bus {i}: {} vs {vm}", sol.vm[i]);
            assert!((sol.va[i] - va).abs() < 1e-8, "{name} bus {i}");
        }
        for fl in &sol.flows {
            let k = fl.branch;
            let pf = r["pf_mw"][k].as_f64().unwrap() / net.base_mva;
            let qt = r["qt_mvar"][k].as_f64().unwrap() / net.base_mva;
            assert!((fl.p_from - pf).abs() < 1e-7, "{name} branch {k}");
            assert!((fl.q_to - qt).abs() < 1e-7, "{name} branch {k}");
        }
    }
}

#[test]
fn convergence_is_quadratic_near_the_solution() {
    for name in ["case14", "case30", "case57"] {
        let net = load_case(&case_path(name), CaseFormat::Matpower).unwrap();
        let sol = solve_ac(&net, &AcOptions { tol: 1e-12, ..AcOptions::default() }).unwrap();
        let h = &sol.mismatch_history;
        for w in h.windows(2) {
            if w[0] < 1e-2 && w[1] > 1e-13 {
                assert!(w[1] <= 10.0 * w[0] * w[0], "{name}: {h:?}");
            }
        }
    }
}

#[test]
fn solution_is_a_fixed_point() {
    for name in ["case30", "case118"] {
        let net = load_case(&case_path(name), CaseFormat::Matpower).unwrap();
        let opts = AcOptions::default();
        let sol = solve_ac(&net, &opts).unwrap();
        let again = solve_ac_from(&net, &opts, &sol.vm, &sol.va).unwrap();
        assert!(again.iterations <= 1, "{name}");
    }
}
