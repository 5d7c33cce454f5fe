//! DC, DDC, LAC and DLAC network models.
//!
//! Each model is one sparse linear solve. The DC family keeps only active
//! power and angles; the LAC family adds voltage magnitudes and reactive
//! power, linearized around the flat state. The data-driven variants scale
//! individual terms by fitted coefficients; at unit coefficients they reduce
//! exactly to their classical counterparts.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{pi_equivalent, BusKind, Network, NetworkError, PiEquivalent};
use crate::sparse::{solve_refined, SparseError, Triplets};

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("linear system is singular (islanded network or degenerate branch data)")]
    SingularSystem,
    #[error("branch {branch}: phase shift {shift} rad is not supported by linear models")]
    UnsupportedPhaseShift { branch: usize, shift: f64 },
    #[error("branch {branch}: {reason}")]
    InvalidBranch { branch: usize, reason: String },
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("coefficient file {path}: {message}")]
    CoefficientFile { path: String, message: String },
    #[error(transparent)]
    Network(NetworkError),
}

impl From<NetworkError> for LinearError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::UnsupportedPhaseShift { branch, shift } => {
                LinearError::UnsupportedPhaseShift { branch, shift }
            }
            NetworkError::InvalidBranch { branch, reason } => {
                LinearError::InvalidBranch { branch, reason }
            }
            other => LinearError::Network(other),
        }
    }
}

impl From<SparseError> for LinearError {
    fn from(_: SparseError) -> Self {
        LinearError::SingularSystem
    }
}

/// Which linear model produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearModel {
    Dc,
    Ddc,
    Lac,
    Dlac,
}

impl LinearModel {
    pub const ALL: [LinearModel; 4] = [Self::Dc, Self::Ddc, Self::Lac, Self::Dlac];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dc => "dc",
            Self::Ddc => "ddc",
            Self::Lac => "lac",
            Self::Dlac => "dlac",
        }
    }

    pub fn is_dc_family(self) -> bool {
        matches!(self, Self::Dc | Self::Ddc)
    }

    pub fn is_data_driven(self) -> bool {
        matches!(self, Self::Ddc | Self::Dlac)
    }
}

impl fmt::Display for LinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinearModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Self::Dc),
            "ddc" => Ok(Self::Ddc),
            "lac" => Ok(Self::Lac),
            "dlac" => Ok(Self::Dlac),
            other => Err(format!("unknown model '{other}' (expected dc, ddc, lac or dlac)")),
        }
    }
}

/// Fitted scale factors for the data-driven models.
///
/// `k_a[0..2]` scale the angle and voltage terms of active flow; `k_a[2..5]`
/// scale the shunt, angle and voltage terms of reactive flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    pub k_d: f64,
    pub k_a: [f64; 5],
    /// Identifiers of the cases the coefficients were fitted on.
    #[serde(default)]
    pub trained_on: Vec<String>,
    /// Where the fit diagnostics were written, if anywhere.
    #[serde(default)]
    pub fit_stats_ref: Option<String>,
}

impl Default for ModelCoefficients {
    fn default() -> Self {
        Self::identity()
    }
}

impl ModelCoefficients {
    /// Unit coefficients: the classical DC and LAC models.
    pub fn identity() -> Self {
        ModelCoefficients {
            k_d: 1.0,
            k_a: [1.0; 5],
            trained_on: Vec::new(),
            fit_stats_ref: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.k_d == 1.0 && self.k_a.iter().all(|&k| k == 1.0)
    }

    pub fn validate(&self) -> Result<(), LinearError> {
        if !(self.k_d > 0.0 && self.k_d.is_finite()) {
            return Err(LinearError::InvalidCoefficients(format!(
                "k_d must be positive and finite, got {}",
                self.k_d
            )));
        }
        if let Some(k) = self.k_a.iter().find(|k| !k.is_finite()) {
            return Err(LinearError::InvalidCoefficients(format!(
                "k_a entries must be finite, got {k}"
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LinearError> {
        let file_err = |message: String| LinearError::CoefficientFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let coeffs: Self = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn save(&self, path: &Path) -> Result<(), LinearError> {
        let text = serde_json::to_string_pretty(self).expect("coefficients serialize");
        std::fs::write(path, text + "\n").map_err(|e| LinearError::CoefficientFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Linearized flows on one in-service branch, per-unit. Reactive entries are
/// absent for the DC family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFlow {
    pub branch: usize,
    pub p_from: f64,
    pub q_from: Option<f64>,
    pub p_to: f64,
    pub q_to: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub model: LinearModel,
    pub va: Vec<f64>,
    /// Fixed at 1.0 for the DC family.
    pub vm: Vec<f64>,
    pub flows: Vec<LinearFlow>,
    /// Net injection per bus implied by the flows (and linearized shunts).
    pub p_inj: Vec<f64>,
    /// `None` for the DC family.
    pub q_inj: Option<Vec<f64>>,
    /// Largest nodal balance violation at the solved state.
    pub max_residual: f64,
}

/// `th·θ + vi·V_near + vj·V_far + c`, one linearized directional flow.
#[derive(Debug, Clone, Copy, Default)]
struct Affine {
    th: f64,
    vi: f64,
    vj: f64,
    c: f64,
}

impl Affine {
    fn at(&self, theta: f64, v_near: f64, v_far: f64) -> f64 {
        // Grouped so that mirrored ends of a unit-tap branch cancel exactly.
        self.th * theta + (self.vi * v_near + self.vj * v_far) + self.c
    }
}

/// Linearized (P, Q) for both ends: `[p_from, q_from, p_to, q_to]`.
fn lac_terms(pi: &PiEquivalent, k: &[f64; 5]) -> [Affine; 4] {
    let [k1, k2, k3, k4, k5] = *k;
    let side = |g_end: f64, b_end: f64| {
        let p = Affine {
            th: -k1 * pi.b,
            vi: k2 * (pi.g + 2.0 * g_end),
            vj: -k2 * pi.g,
            c: -g_end,
        };
        let q = Affine {
            th: -k4 * pi.g,
            vi: -2.0 * k3 * b_end - k5 * pi.b,
            vj: k5 * pi.b,
            c: b_end,
        };
        (p, q)
    };
    let (pf, qf) = side(pi.g_from, pi.b_end_from());
    let (pt, qt) = side(pi.g_to, pi.b_end_to());
    [pf, qf, pt, qt]
}

fn linear_pi(net: &Network, k: usize) -> Result<PiEquivalent, LinearError> {
    pi_equivalent(&net.branches[k]).map_err(|e| e.at_branch(k).into())
}

/// LAC-family flows at an arbitrary state.
pub fn eval_flows_lac(
    net: &Network,
    vm: &[f64],
    va: &[f64],
    coeffs: &ModelCoefficients,
) -> Result<Vec<LinearFlow>, LinearError> {
    net.in_service_branches()
        .map(|(k, f, t, _)| {
            let [pf, qf, pt, qt] = lac_terms(&linear_pi(net, k)?, &coeffs.k_a);
            let theta = va[f] - va[t];
            Ok(LinearFlow {
                branch: k,
                p_from: pf.at(theta, vm[f], vm[t]),
                q_from: Some(qf.at(theta, vm[f], vm[t])),
                p_to: pt.at(-theta, vm[t], vm[f]),
                q_to: Some(qt.at(-theta, vm[t], vm[f])),
            })
        })
        .collect()
}

/// Per-branch DC susceptance `1/(x·t)`.
fn dc_susceptance(net: &Network, k: usize) -> Result<f64, LinearError> {
    let br = &net.branches[k];
    if br.shift != 0.0 {
        return Err(LinearError::UnsupportedPhaseShift {
            branch: k + 1,
            shift: br.shift,
        });
    }
    if br.x == 0.0 || !br.x.is_finite() {
        return Err(LinearError::InvalidBranch {
            branch: k + 1,
            reason: "zero reactance is not allowed in the DC model".into(),
        });
    }
    Ok(1.0 / (br.x * br.tap))
}

/// DC model scaled by `k_d`; `k_d = 1` is the classical DC model.
pub fn solve_dc_family(net: &Network, k_d: f64) -> Result<LinearSolution, LinearError> {
    net.check()?;
    if !(k_d > 0.0 && k_d.is_finite()) {
        return Err(LinearError::InvalidCoefficients(format!(
            "k_d must be positive and finite, got {k_d}"
        )));
    }
    let n = net.n_buses();
    let slack = net.slack_index();
    let idx = |i: usize| if i < slack { i } else { i - 1 };
    let (p_sched, _) = net.scheduled_injections();

    let mut a = Triplets::new(n - 1);
    let mut susceptances = Vec::new();
    for (k, f, t, _) in net.in_service_branches() {
        let y = k_d * dc_susceptance(net, k)?;
        susceptances.push((k, f, t, y));
        for (i, j) in [(f, t), (t, f)] {
            if i == slack {
                continue;
            }
            a.push(idx(i), idx(i), y);
            if j != slack {
                a.push(idx(i), idx(j), -y);
            }
        }
    }
    let rhs: Vec<f64> = (0..n).filter(|&i| i != slack).map(|i| p_sched[i]).collect();
    let solved = solve_refined(&a, &rhs)?;

    let mut va = vec![0.0; n];
    for i in (0..n).filter(|&i| i != slack) {
        va[i] = solved.x[idx(i)];
    }
    let mut p_inj = vec![0.0; n];
    let flows: Vec<LinearFlow> = susceptances
        .into_iter()
        .map(|(k, f, t, y)| {
            let p = y * (va[f] - va[t]);
            p_inj[f] += p;
            p_inj[t] -= p;
            LinearFlow {
                branch: k,
                p_from: p,
                q_from: None,
                p_to: -p,
                q_to: None,
            }
        })
        .collect();
    let max_residual = (0..n)
        .filter(|&i| i != slack)
        .fold(0.0f64, |m, i| m.max((p_inj[i] - p_sched[i]).abs()));

    Ok(LinearSolution {
        model: if k_d == 1.0 { LinearModel::Dc } else { LinearModel::Ddc },
        va,
        vm: vec![1.0; n],
        flows,
        p_inj,
        q_inj: None,
        max_residual,
    })
}

#[derive(Clone, Copy)]
enum Var {
    Theta(usize),
    V(usize),
}

/// Column layout of the LAC system: angles at non-slack buses, then
/// magnitudes at PQ buses. Fixed quantities carry their known values.
struct LacLayout {
    theta_col: Vec<Option<usize>>,
    v_col: Vec<Option<usize>>,
    v_fixed: Vec<f64>,
    dim: usize,
}

impl LacLayout {
    fn new(net: &Network) -> Self {
        let setpoints = net.voltage_setpoints();
        let mut dim = 0;
        let mut theta_col = Vec::with_capacity(net.n_buses());
        for b in net.buses() {
            if b.kind == BusKind::Slack {
                theta_col.push(None);
            } else {
                theta_col.push(Some(dim));
                dim += 1;
            }
        }
        let mut v_col = Vec::with_capacity(net.n_buses());
        let mut v_fixed = Vec::with_capacity(net.n_buses());
        for (b, sp) in net.buses().iter().zip(setpoints) {
            if b.kind == BusKind::PQ {
                v_col.push(Some(dim));
                v_fixed.push(f64::NAN);
                dim += 1;
            } else {
                v_col.push(None);
                v_fixed.push(sp.expect("non-PQ buses carry a setpoint"));
            }
        }
        LacLayout {
            theta_col,
            v_col,
            v_fixed,
            dim,
        }
    }

    /// Adds `coef·var` to equation `row`, or moves it to the right-hand side
    /// when `var` is fixed.
    fn add(&self, a: &mut Triplets, rhs: &mut [f64], row: usize, var: Var, coef: f64) {
        match var {
            Var::Theta(i) => {
                if let Some(c) = self.theta_col[i] {
                    a.push(row, c, coef);
                }
            }
            Var::V(i) => match self.v_col[i] {
                Some(c) => a.push(row, c, coef),
                None => rhs[row] -= coef * self.v_fixed[i],
            },
        }
    }
}

/// LAC model scaled by `coeffs.k_a`; unit coefficients give the classical
/// LAC model.
pub fn solve_lac_family(
    net: &Network,
    coeffs: &ModelCoefficients,
) -> Result<LinearSolution, LinearError> {
    net.check()?;
    coeffs.validate()?;
    let n = net.n_buses();
    let layout = LacLayout::new(net);
    let (p_sched, q_sched) = net.scheduled_injections();

    let mut a = Triplets::new(layout.dim);
    let mut rhs = vec![0.0; layout.dim];
    for i in 0..n {
        if let Some(r) = layout.theta_col[i] {
            rhs[r] = p_sched[i];
        }
        if let Some(r) = layout.v_col[i] {
            rhs[r] = q_sched[i];
        }
    }

    // An equation row for bus i's active balance is keyed by its angle
    // column, its reactive balance by its magnitude column.
    let mut stamp = |row: Option<usize>, f: &Affine, near: usize, far: usize| {
        let Some(row) = row else { return };
        layout.add(&mut a, &mut rhs, row, Var::Theta(near), f.th);
        layout.add(&mut a, &mut rhs, row, Var::Theta(far), -f.th);
        layout.add(&mut a, &mut rhs, row, Var::V(near), f.vi);
        layout.add(&mut a, &mut rhs, row, Var::V(far), f.vj);
        rhs[row] -= f.c;
    };
    for (k, f, t, _) in net.in_service_branches() {
        let [pf, qf, pt, qt] = lac_terms(&linear_pi(net, k)?, &coeffs.k_a);
        stamp(layout.theta_col[f], &pf, f, t);
        stamp(layout.v_col[f], &qf, f, t);
        stamp(layout.theta_col[t], &pt, t, f);
        stamp(layout.v_col[t], &qt, t, f);
    }
    for (i, b) in net.buses().iter().enumerate() {
        let p_sh = Affine {
            vi: 2.0 * b.g_shunt,
            c: -b.g_shunt,
            ..Affine::default()
        };
        let q_sh = Affine {
            vi: -2.0 * b.b_shunt,
            c: b.b_shunt,
            ..Affine::default()
        };
        stamp(layout.theta_col[i], &p_sh, i, i);
        stamp(layout.v_col[i], &q_sh, i, i);
    }

    let solved = solve_refined(&a, &rhs)?;
    let mut va = vec![0.0; n];
    let mut vm = layout.v_fixed.clone();
    for i in 0..n {
        if let Some(c) = layout.theta_col[i] {
            va[i] = solved.x[c];
        }
        if let Some(c) = layout.v_col[i] {
            vm[i] = solved.x[c];
        }
    }

    let flows = eval_flows_lac(net, &vm, &va, coeffs)?;
    let (p_inj, q_inj) = lac_injections(net, &vm, &flows);
    let mut max_residual: f64 = 0.0;
    for (i, b) in net.buses().iter().enumerate() {
        if b.kind != BusKind::Slack {
            max_residual = max_residual.max((p_inj[i] - p_sched[i]).abs());
        }
        if b.kind == BusKind::PQ {
            max_residual = max_residual.max((q_inj[i] - q_sched[i]).abs());
        }
    }

    Ok(LinearSolution {
        model: if coeffs.k_a.iter().all(|&k| k == 1.0) {
            LinearModel::Lac
        } else {
            LinearModel::Dlac
        },
        va,
        vm,
        flows,
        p_inj,
        q_inj: Some(q_inj),
        max_residual,
    })
}

/// Bus injections from LAC flows plus linearized bus shunts.
fn lac_injections(net: &Network, vm: &[f64], flows: &[LinearFlow]) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = net
        .buses()
        .iter()
        .zip(vm)
        .map(|(b, v)| (2.0 * v - 1.0) * b.g_shunt)
        .collect();
    let mut q: Vec<f64> = net
        .buses()
        .iter()
        .zip(vm)
        .map(|(b, v)| -(2.0 * v - 1.0) * b.b_shunt)
        .collect();
    for fl in flows {
        let br = &net.branches[fl.branch];
        let f = net.bus_index(br.from).expect("validated");
        let t = net.bus_index(br.to).expect("validated");
        p[f] += fl.p_from;
        p[t] += fl.p_to;
        q[f] += fl.q_from.unwrap_or(0.0);
        q[t] += fl.q_to.unwrap_or(0.0);
    }
    (p, q)
}

/// Solves the named model. The classical models ignore `coeffs`; the
/// returned solution is tagged with `model` even when fitted coefficients
/// happen to be exactly one.
pub fn solve_linear(
    net: &Network,
    model: LinearModel,
    coeffs: &ModelCoefficients,
) -> Result<LinearSolution, LinearError> {
    let mut sol = match model {
        LinearModel::Dc => solve_dc_family(net, 1.0)?,
        LinearModel::Ddc => solve_dc_family(net, coeffs.k_d)?,
        LinearModel::Lac => solve_lac_family(net, &ModelCoefficients::identity())?,
        LinearModel::Dlac => solve_lac_family(net, coeffs)?,
    };
    sol.model = model;
    Ok(sol)
}
