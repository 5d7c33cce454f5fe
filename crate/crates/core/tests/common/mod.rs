//! Shared oracle checks used by the integration tests and the acceptance
//! suite. Each check panics with a description on the first mismatch.
#![allow(dead_code)]

use std::path::PathBuf;

use dlac::regression::{anova_sequential, ols_fit, variance_inflation_factors, DesignMatrix, VifReport};
use nalgebra::DMatrix;
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn corpus() -> (DMatrix<f64>, Vec<f64>) {
    let mut rdr = csv::Reader::from_path(fixture("regression_corpus.csv")).unwrap();
    let rows: Vec<[f64; 3]> = rdr.deserialize().map(|r| r.unwrap()).collect();
    let x = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
    (x, rows.iter().map(|r| r[2]).collect())
}

fn reference() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("regression_reference.json")).unwrap())
        .unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn close(got: &[f64], want: &[f64], what: &str) {
    assert_eq!(got.len(), want.len(), "{what}");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= 1e-8 * w.abs().max(1.0), "{what}[{i}]: {g} vs {w}");
    }
}

fn names() -> Vec<String> {
    vec!["x1".into(), "x2".into()]
}

pub fn check_reference_fits() {
    let (x, y) = corpus();
    let r = reference();
    for (key, intercept) in [("no_intercept", false), ("intercept", true)] {
        let d = DesignMatrix::new(x.clone(), y.clone(), names()).with_intercept(intercept);
        let fit = ols_fit(&d).unwrap();
        let want = &r[key];
        close(&fit.beta, &floats(&want["beta"]), "beta");
        close(&fit.stderr, &floats(&want["stderr"]), "stderr");
        close(&fit.ci95_lo, &floats(&want["ci_lo"]), "ci_lo");
        close(&fit.ci95_hi, &floats(&want["ci_hi"]), "ci_hi");
        close(&[fit.r2()], &[want["r2"].as_f64().unwrap()], "r2");
        close(&[fit.ms_res], &[want["ms_res"].as_f64().unwrap()], "ms_res");
        close(&fit.residuals, &floats(&want["resid"]), "resid");
        let d: Vec<f64> = fit.standardized.iter().map(|v| v.unwrap()).collect();
        close(&d, &floats(&want["d"]), "d");
        let t: Vec<f64> = fit.studentized.iter().map(|v| v.unwrap()).collect();
        close(&t, &floats(&want["t"]), "t");
        close(&fit.hat_diag, &floats(&want["h"]), "h");

        let anova = anova_sequential(&DesignMatrix::new(x.clone(), y.clone(), names()).with_intercept(intercept))
            .unwrap();
        let a = &want["anova"];
        let names: Vec<&str> = anova.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["x1", "x2", "Residuals"]);
        close(&anova.iter().map(|r| r.df as f64).collect::<Vec<_>>(), &floats(&a["df"]), "df");
        close(&anova.iter().map(|r| r.sum_sq).collect::<Vec<_>>(), &floats(&a["sum_sq"]), "sum_sq");
        close(&anova.iter().map(|r| r.mean_sq).collect::<Vec<_>>(), &floats(&a["mean_sq"]), "mean_sq");
        for (i, row) in anova.iter().take(2).enumerate() {
            close(&[row.f_value.unwrap()], &[a["f"][i].as_f64().unwrap()], "f");
            let p = a["p"][i].as_f64().unwrap();
            let got = row.pr_gt_f.unwrap();
            assert!((got - p).abs() <= 1e-8 * p, "p[{i}]: {got} vs {p}");
        }
        assert!(anova[2].f_value.is_none());
    }
}

pub fn check_reference_vif_and_single_regressor() {
    let (x, y) = corpus();
    let r = reference();
    match variance_inflation_factors(&x, &names()).unwrap() {
        VifReport::Values { vif } => close(&vif, &floats(&r["vif"]), "vif"),
        other => panic!("{other:?}"),
    }
    let single = DesignMatrix::new(x.columns(0, 1).into_owned(), y.clone(), vec!["x1".into()]);
    let fit = ols_fit(&single).unwrap();
    close(&fit.beta, &floats(&r["single"]["beta"]), "single beta");
    close(&[fit.r2()], &[r["single"]["r2"].as_f64().unwrap()], "single r2");
    assert_eq!(fit.vif, VifReport::NotApplicable);

    let fit = ols_fit(&DesignMatrix::new(x, y, names())).unwrap();
    close(
        &[fit.r2_centered],
        &[r["r2_centered_no_intercept"].as_f64().unwrap()],
        "centered r2",
    );
    close(&[fit.r2_uncentered], &[0.999_590_050_085_661_5], "uncentered r2");
}

use dlac::ac_solver::{compute_branch_flows_ac, solve_ac, AcOptions, BranchFlow};
use dlac::case_io::{load_case, CaseFormat};
use dlac::linear_models::{
    eval_flows_lac, solve_dc_family, solve_linear, LinearModel, ModelCoefficients,
};
use dlac::network::{BusKind, Network};
use dlac::regression::{assemble_ddc_dataset, assemble_p_dataset, assemble_q_dataset, Snapshot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BUNDLED: [&str; 7] = [
    "case9", "case14", "case30", "case39", "case57", "case118", "case300",
];

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data/cases")
        .join(format!("{name}.m"))
}

pub fn load(name: &str) -> Network {
    load_case(&case_path(name), CaseFormat::Matpower).unwrap()
}

/// DDC flows equal DC flows and DDC angles equal DC angles over `k_d`.
pub fn check_ddc_equivalence(net: &Network, name: &str) {
    let dc = solve_dc_family(net, 1.0).unwrap();
    for k in [0.5, 1.12, 2.0] {
        let ddc = solve_dc_family(net, k).unwrap();
        for (a, b) in dc.flows.iter().zip(&ddc.flows) {
            assert!(
                (a.p_from - b.p_from).abs() < 1e-10 && (a.p_to - b.p_to).abs() < 1e-10,
                "{name} k_d {k}: branch {} flow {} vs {}",
                a.branch + 1,
                a.p_from,
                b.p_from
            );
        }
        for (i, (a, b)) in dc.va.iter().zip(&ddc.va).enumerate() {
            assert!((a / k - b).abs() < 1e-10, "{name} k_d {k}: bus {i} angle {b} vs {}", a / k);
        }
    }
}

/// Largest nodal imbalance of a LAC state, evaluated from the branch flow
/// equations and the linearized shunt terms rather than the solver's own
/// matrix.
pub fn lac_balance_residual(net: &Network, vm: &[f64], va: &[f64]) -> f64 {
    let flows = eval_flows_lac(net, vm, va, &ModelCoefficients::identity()).unwrap();
    let n = net.n_buses();
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    for ((_, f, t, _), fl) in net.in_service_branches().zip(&flows) {
        p[f] += fl.p_from;
        p[t] += fl.p_to;
        q[f] += fl.q_from.unwrap();
        q[t] += fl.q_to.unwrap();
    }
    let (ps, qs) = net.scheduled_injections();
    let mut worst: f64 = 0.0;
    for (i, b) in net.buses().iter().enumerate() {
        let lin = 2.0 * vm[i] - 1.0;
        if b.kind != BusKind::Slack {
            worst = worst.max((p[i] + lin * b.g_shunt - ps[i]).abs());
        }
        if b.kind == BusKind::PQ {
            worst = worst.max((q[i] - lin * b.b_shunt - qs[i]).abs());
        }
    }
    worst
}

/// DLAC at unit coefficients reproduces LAC, and LAC satisfies its own
/// balance equations with fixed voltages at the setpoints.
pub fn check_lac_identity(net: &Network, name: &str) {
    let one = ModelCoefficients::identity();
    let lac = solve_linear(net, LinearModel::Lac, &one).unwrap();
    let dlac = solve_linear(net, LinearModel::Dlac, &one).unwrap();
    let pairs = lac
        .va
        .iter()
        .zip(&dlac.va)
        .chain(lac.vm.iter().zip(&dlac.vm))
        .map(|(a, b)| (*a, *b))
        .chain(lac.flows.iter().zip(&dlac.flows).flat_map(|(a, b)| {
            [
                (a.p_from, b.p_from),
                (a.p_to, b.p_to),
                (a.q_from.unwrap(), b.q_from.unwrap()),
                (a.q_to.unwrap(), b.q_to.unwrap()),
            ]
        }));
    for (a, b) in pairs {
        assert!((a - b).abs() <= 1e-12, "{name}: DLAC(1) {b} vs LAC {a}");
    }
    let r = lac_balance_residual(net, &lac.vm, &lac.va);
    assert!(r <= 1e-12, "{name}: LAC balance residual {r:e}");
    for (i, v) in net.voltage_setpoints().iter().enumerate() {
        if let Some(v) = v {
            assert_eq!(lac.vm[i], *v, "{name}: bus {i} off its setpoint");
        }
    }
    assert_eq!(lac.va[net.slack_index()], 0.0);
}

fn max_flow_gap(ac: &[BranchFlow], lac: &[dlac::linear_models::LinearFlow]) -> f64 {
    ac.iter()
        .zip(lac)
        .flat_map(|(a, l)| {
            [
                (a.p_from - l.p_from).abs(),
                (a.p_to - l.p_to).abs(),
                (a.q_from - l.q_from.unwrap()).abs(),
                (a.q_to - l.q_to.unwrap()).abs(),
            ]
        })
        .fold(0.0, f64::max)
}

/// Ratio of the LAC flow error at perturbation size `eps` to the error at
/// `eps / 2`, around the flat state along a random direction.
pub fn first_order_ratio(net: &Network, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.n_buses();
    let du: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dt: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let err = |e: f64| {
        let vm: Vec<f64> = du.iter().map(|u| 1.0 + e * u).collect();
        let va: Vec<f64> = dt.iter().map(|t| e * t).collect();
        let ac = compute_branch_flows_ac(net, &vm, &va).unwrap();
        let lac = eval_flows_lac(net, &vm, &va, &ModelCoefficients::identity()).unwrap();
        max_flow_gap(&ac, &lac)
    };
    err(eps) / err(eps / 2.0)
}

/// Responses generated exactly by the model equations with random
/// coefficients are recovered by the regressions.
pub fn check_recovery(net: &Network, name: &str, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k_a = [0.0; 5];
    for k in &mut k_a {
        *k = rng.random_range(0.5..1.5);
    }
    let k_d: f64 = rng.random_range(0.5..1.5);
    let coeffs = ModelCoefficients {
        k_d,
        k_a,
        ..ModelCoefficients::identity()
    };
    let ac = solve_ac(net, &AcOptions::default()).unwrap();

    let mut lac_state = ac.clone();
    let lac = eval_flows_lac(net, &ac.vm, &ac.va, &coeffs).unwrap();
    for (f, l) in lac_state.flows.iter_mut().zip(&lac) {
        f.p_from = l.p_from;
        f.q_from = l.q_from.unwrap();
    }
    let mut dc_state = ac.clone();
    for (f, (_, i, j, br)) in dc_state.flows.iter_mut().zip(net.in_service_branches()) {
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        f.p_from = k_d * (ac.va[i] - ac.va[j]) / (br.x * tap);
    }
    let lac_snap = [Snapshot { id: name, solution: &lac_state }];
    let dc_snap = [Snapshot { id: name, solution: &dc_state }];

    let p = dlac::regression::ols_fit(&assemble_p_dataset(net, &lac_snap).unwrap()).unwrap();
    let q = dlac::regression::ols_fit(&assemble_q_dataset(net, &lac_snap).unwrap()).unwrap();
    let d = dlac::regression::ols_fit(&assemble_ddc_dataset(net, &dc_snap).unwrap()).unwrap();
    let got = [p.beta[0], p.beta[1], q.beta[0], q.beta[1], q.beta[2], d.beta[0]];
    let want = [k_a[0], k_a[1], k_a[2], k_a[3], k_a[4], k_d];
    for (j, (g, w)) in got.iter().zip(&want).enumerate() {
        assert!((g - w).abs() < 1e-8, "{name} seed {seed}: coefficient {j} {g} vs {w}");
    }
    for (what, r2) in [("P", p.r2()), ("Q", q.r2()), ("DDC", d.r2())] {
        assert!(r2 >= 1.0 - 1e-12, "{name}: {what} R² {r2}");
    }
}
