//! Full AC power flow by Newton-Raphson in polar coordinates.
//!
//! The solved state is the reference every linear model is scored against,
//! so the solver favours accuracy: full analytic Jacobian, sparse LU per
//! iteration, and a convergence certificate recomputed from branch flows.

use num_complex::Complex64;
use thiserror::Error;

use crate::network::{BusKind, Network, NetworkError, PiEquivalent};
use crate::sparse::{inf_norm, SparseLu, Triplets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcError {
    #[error("Newton-Raphson diverged after {iterations} iterations (max mismatch {last_mismatch:e} p.u.)")]
    Divergence {
        iterations: usize,
        last_mismatch: f64,
    },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcOptions {
    /// Infinity-norm mismatch tolerance in per-unit.
    pub tol: f64,
    pub max_iter: usize,
    /// `V = 1` at PQ buses, setpoints elsewhere, all angles zero. When
    /// false, the case's stored voltages are used as the initial point.
    pub flat_start: bool,
    /// PV to PQ switching on generator reactive limits. Off by default.
    pub enforce_q_limits: bool,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions {
            tol: 1e-8,
            max_iter: 30,
            flat_start: true,
            enforce_q_limits: false,
        }
    }
}

/// Directional flows on one in-service branch, per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    /// Index into `Network::branches`.
    pub branch: usize,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl BranchFlow {
    pub fn active_loss(&self) -> f64 {
        self.p_from + self.p_to
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Net injection (generation minus load) per bus.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub flows: Vec<BranchFlow>,
    pub iterations: usize,
    /// Certificate recomputed from `vm`/`va` through branch flows.
    pub max_mismatch: f64,
    /// Newton mismatch norm before each update, then at the solution.
    pub mismatch_history: Vec<f64>,
}

/// Flows on every in-service branch at the given state.
pub fn compute_branch_flows_ac(
    net: &Network,
    vm: &[f64],
    va: &[f64],
) -> Result<Vec<BranchFlow>, NetworkError> {
    net.in_service_branches()
        .map(|(k, f, t, br)| {
            let pi = PiEquivalent::of(br).map_err(|e| e.at_branch(k))?;
            Ok(pi_flows(k, &pi, vm[f], vm[t], va[f] - va[t]))
        })
        .collect()
}

fn pi_flows(branch: usize, pi: &PiEquivalent, vi: f64, vj: f64, theta_ij: f64) -> BranchFlow {
    let vv = vi * vj;
    let a = theta_ij - pi.shift;
    let c = -theta_ij + pi.shift;
    let (sa, ca) = a.sin_cos();
    let (sc, cc) = c.sin_cos();
    BranchFlow {
        branch,
        p_from: vi * vi * (pi.g + pi.g_from) - vv * (pi.g * ca + pi.b * sa),
        q_from: -vi * vi * (pi.b + pi.b_sh_from + pi.b_from) + vv * (pi.b * ca - pi.g * sa),
        p_to: vj * vj * (pi.g + pi.g_to) - vv * (pi.g * cc + pi.b * sc),
        q_to: -vj * vj * (pi.b + pi.b_sh_to + pi.b_to) + vv * (pi.b * cc - pi.g * sc),
    }
}

/// Net bus injections implied by the state: branch outflows plus shunt
/// consumption.
pub fn bus_injections(net: &Network, vm: &[f64], flows: &[BranchFlow]) -> (Vec<f64>, Vec<f64>) {
    let n = net.n_buses();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (i, b) in net.buses().iter().enumerate() {
        p[i] = vm[i] * vm[i] * b.g_shunt;
        q[i] = -vm[i] * vm[i] * b.b_shunt;
    }
    for fl in flows {
        let br = &net.branches[fl.branch];
        let f = net.bus_index(br.from).expect("validated");
        let t = net.bus_index(br.to).expect("validated");
        p[f] += fl.p_from;
        q[f] += fl.q_from;
        p[t] += fl.p_to;
        q[t] += fl.q_to;
    }
    (p, q)
}

/// Largest nodal balance violation: active at non-slack buses, reactive at
/// PQ buses.
pub fn nodal_mismatch(net: &Network, p_inj: &[f64], q_inj: &[f64]) -> f64 {
    let (p_sched, q_sched) = net.scheduled_injections();
    let mut worst: f64 = 0.0;
    for (i, b) in net.buses().iter().enumerate() {
        if b.kind != BusKind::Slack {
            worst = worst.max((p_inj[i] - p_sched[i]).abs());
        }
        if b.kind == BusKind::PQ {
            worst = worst.max((q_inj[i] - q_sched[i]).abs());
        }
    }
    worst
}

/// Bus admittance matrix as per-row adjacency lists.
struct Ybus {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl Ybus {
    fn build(net: &Network) -> Result<Self, NetworkError> {
        let n = net.n_buses();
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        let mut add = |i: usize, k: usize, y: Complex64| {
            match rows[i].iter_mut().find(|(c, _)| *c == k) {
                Some((_, v)) => *v += y,
                None => rows[i].push((k, y)),
            }
        };
        for (i, b) in net.buses().iter().enumerate() {
            add(i, i, Complex64::new(b.g_shunt, b.b_shunt));
        }
        for (k, f, t, br) in net.in_service_branches() {
            let z2 = br.r * br.r + br.x * br.x;
            if z2 == 0.0 {
                return Err(NetworkError::InvalidBranch {
                    branch: k + 1,
                    reason: "zero impedance".into(),
                });
            }
            let ys = Complex64::new(br.r / z2, -br.x / z2);
            let ratio = Complex64::from_polar(br.tap, br.shift);
            let ytt = ys + Complex64::new(0.0, br.b_charging / 2.0);
            let yff = ytt / (br.tap * br.tap);
            let yft = -ys / ratio.conj();
            let ytf = -ys / ratio;
            add(f, f, yff);
            add(t, t, ytt);
            add(f, t, yft);
            add(t, f, ytf);
        }
        Ok(Ybus { rows })
    }

    fn currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, y)| y * v[k]).sum())
            .collect()
    }
}

/// Unknown layout: angles at non-slack buses, magnitudes at PQ buses.
struct StateIndex {
    theta: Vec<Option<usize>>,
    vm: Vec<Option<usize>>,
    dim: usize,
}

impl StateIndex {
    fn new(kinds: &[BusKind]) -> Self {
        let mut theta = vec![None; kinds.len()];
        let mut vm = vec![None; kinds.len()];
        let mut next = 0;
        for (i, k) in kinds.iter().enumerate() {
            if *k != BusKind::Slack {
                theta[i] = Some(next);
                next += 1;
            }
        }
        for (i, k) in kinds.iter().enumerate() {
            if *k == BusKind::PQ {
                vm[i] = Some(next);
                next += 1;
            }
        }
        StateIndex {
            theta,
            vm,
            dim: next,
        }
    }
}

pub fn solve_ac(net: &Network, options: &AcOptions) -> Result<AcSolution, AcError> {
    let setpoints = net.voltage_setpoints();
    let slack = net.slack_index();
    let (vm0, va0): (Vec<f64>, Vec<f64>) = if options.flat_start {
        (
            setpoints.iter().map(|s| s.unwrap_or(1.0)).collect(),
            vec![0.0; net.n_buses()],
        )
    } else {
        let a_ref = net.buses()[slack].a_init;
        net.buses()
            .iter()
            .zip(&setpoints)
            .map(|(b, s)| (s.unwrap_or(b.v_init), b.a_init - a_ref))
            .unzip()
    };
    solve_ac_from(net, options, &vm0, &va0)
}

/// Newton-Raphson from an explicit initial state. Magnitudes at PV and
/// slack buses are reset to their setpoints and the slack angle to zero.
pub fn solve_ac_from(
    net: &Network,
    options: &AcOptions,
    vm0: &[f64],
    va0: &[f64],
) -> Result<AcSolution, AcError> {
    if !options.enforce_q_limits {
        return newton(net, options, vm0, va0);
    }

    let mut work = net.clone();
    let mut sol = newton(&work, options, vm0, va0)?;
    loop {
        let gens = work.bus_generation();
        let mut switched = false;
        for i in 0..work.n_buses() {
            if work.buses()[i].kind != BusKind::PV {
                continue;
            }
            let q_gen = sol.q_inj[i] + work.buses()[i].q_load;
            let limit = if q_gen > gens[i].q_max + options.tol {
                Some(true)
            } else if q_gen < gens[i].q_min - options.tol {
                Some(false)
            } else {
                None
            };
            if let Some(upper) = limit {
                let id = work.buses()[i].id;
                work.buses_mut()[i].kind = BusKind::PQ;
                for g in work.generators.iter_mut().filter(|g| g.in_service && g.bus == id) {
                    g.q_gen = if upper { g.q_max } else { g.q_min };
                }
                switched = true;
            }
        }
        if !switched {
            break;
        }
        let (vm, va) = (sol.vm.clone(), sol.va.clone());
        sol = newton(&work, options, &vm, &va)?;
    }
    Ok(sol)
}

fn newton(
    net: &Network,
    options: &AcOptions,
    vm0: &[f64],
    va0: &[f64],
) -> Result<AcSolution, AcError> {
    let n = net.n_buses();
    let ybus = Ybus::build(net)?;
    let kinds: Vec<BusKind> = net.buses().iter().map(|b| b.kind).collect();
    let idx = StateIndex::new(&kinds);
    let setpoints = net.voltage_setpoints();
    let slack = net.slack_index();
    let (p_sched, q_sched) = net.scheduled_injections();

    let mut vm: Vec<f64> = (0..n).map(|i| setpoints[i].unwrap_or(vm0[i])).collect();
    let mut va = va0.to_vec();
    let a_ref = va[slack];
    va.iter_mut().for_each(|a| *a -= a_ref);

    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
        let current = ybus.currents(&v);
        let s: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj()).collect();

        let mut f = vec![0.0; idx.dim];
        for i in 0..n {
            if let Some(r) = idx.theta[i] {
                f[r] = s[i].re - p_sched[i];
            }
            if let Some(r) = idx.vm[i] {
                f[r] = s[i].im - q_sched[i];
            }
        }
        let norm = inf_norm(&f);
        history.push(norm);
        if !norm.is_finite() || norm > 1e10 {
            return Err(AcError::Divergence {
                iterations,
                last_mismatch: norm,
            });
        }
        if norm <= options.tol {
            let flows = compute_branch_flows_ac(net, &vm, &va)?;
            let (p_inj, q_inj) = bus_injections(net, &vm, &flows);
            let certificate = nodal_mismatch(net, &p_inj, &q_inj);
            if certificate <= options.tol {
                return Ok(AcSolution {
                    vm,
                    va,
                    p_inj,
                    q_inj,
                    flows,
                    iterations,
                    max_mismatch: certificate,
                    mismatch_history: history,
                });
            }
        }
        if iterations >= options.max_iter {
            return Err(AcError::Divergence {
                iterations,
                last_mismatch: norm,
            });
        }

        let jac = jacobian(&ybus, &idx, &v, &vm, &current);
        let lu = SparseLu::factor(&jac).map_err(|_| AcError::SingularJacobian {
            iteration: iterations + 1,
        })?;
        let dx = lu.solve(&f);
        for i in 0..n {
            if let Some(c) = idx.theta[i] {
                va[i] -= dx[c];
            }
            if let Some(c) = idx.vm[i] {
                vm[i] -= dx[c];
            }
        }
        iterations += 1;
    }
}

/// Polar Jacobian `d[P; Q] / d[theta; |V|]` restricted to the unknowns.
fn jacobian(
    ybus: &Ybus,
    idx: &StateIndex,
    v: &[Complex64],
    vm: &[f64],
    current: &[Complex64],
) -> Triplets {
    let j = Complex64::i();
    let mut jac = Triplets::new(idx.dim);
    for (i, row) in ybus.rows.iter().enumerate() {
        let (p_row, q_row) = (idx.theta[i], idx.vm[i]);
        if p_row.is_none() && q_row.is_none() {
            continue;
        }
        let mut put = |col_theta: Option<usize>, col_vm: Option<usize>, ds_da: Complex64, ds_dv: Complex64| {
            if let Some(c) = col_theta {
                if let Some(r) = p_row {
                    jac.push(r, c, ds_da.re);
                }
                if let Some(r) = q_row {
                    jac.push(r, c, ds_da.im);
                }
            }
            if let Some(c) = col_vm {
                if let Some(r) = p_row {
                    jac.push(r, c, ds_dv.re);
                }
                if let Some(r) = q_row {
                    jac.push(r, c, ds_dv.im);
                }
            }
        };
        for &(k, y) in row {
            let yv = y * v[k];
            let mut ds_da = -j * v[i] * yv.conj();
            let mut ds_dv = v[i] * (yv / vm[k]).conj();
            if k == i {
                ds_da += j * v[i] * current[i].conj();
                ds_dv += current[i].conj() * v[i] / vm[i];
            }
            put(idx.theta[k], idx.vm[k], ds_da, ds_dv);
        }
    }
    jac
}
