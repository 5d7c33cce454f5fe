//! Network model: buses, generators and branches in per-unit on the system base.
//!
//! Internally every power quantity is per-unit and every angle is in radians.
//! MW/MVAr and degrees only appear at file boundaries (see [`crate::case_io`]).

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid branch {branch}: {reason}")]
    InvalidBranch { branch: usize, reason: String },
    #[error("branch {branch}: phase shift {shift} rad is not supported by linear models")]
    UnsupportedPhaseShift { branch: usize, shift: f64 },
    #[error("invalid network: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("unknown bus id {0}")]
    UnknownBus(u32),
}

impl NetworkError {
    /// Tags a branch-level error with its 1-based branch number.
    pub fn at_branch(self, index: usize) -> Self {
        match self {
            NetworkError::InvalidBranch { reason, .. } => NetworkError::InvalidBranch {
                branch: index + 1,
                reason,
            },
            NetworkError::UnsupportedPhaseShift { shift, .. } => {
                NetworkError::UnsupportedPhaseShift {
                    branch: index + 1,
                    shift,
                }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    #[serde(rename = "pv")]
    PV,
    #[serde(rename = "pq")]
    PQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    /// Shunt conductance consumed at V = 1.
    pub g_shunt: f64,
    /// Shunt susceptance at V = 1 (positive = capacitive).
    pub b_shunt: f64,
    pub base_kv: f64,
    pub v_init: f64,
    pub a_init: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: u32,
    pub p_gen: f64,
    pub q_gen: f64,
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance; half is lumped at each end.
    pub b_charging: f64,
    /// Off-nominal turns ratio at the from end (1.0 = none).
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Thermal rating in MVA (0 = unlimited).
    pub rate_a: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn line(from: u32, to: u32, r: f64, x: f64, b_charging: f64) -> Self {
        Branch {
            from,
            to,
            r,
            x,
            b_charging,
            tap: 1.0,
            shift: 0.0,
            rate_a: 0.0,
            in_service: true,
        }
    }

    /// Per-end charging susceptance `b_sh = b_charging / 2`.
    pub fn b_sh(&self) -> f64 {
        self.b_charging / 2.0
    }
}

/// Series admittance `1 / (r + jx)` split into conductance and susceptance.
pub fn series_admittance(branch: &Branch) -> Result<(f64, f64), NetworkError> {
    let z2 = branch.r * branch.r + branch.x * branch.x;
    if z2 == 0.0 {
        return Err(NetworkError::InvalidBranch {
            branch: 0,
            reason: "zero impedance".into(),
        });
    }
    Ok((branch.r / z2, -branch.x / z2))
}

/// Pi-equivalent of a branch after normalizing the real tap ratio.
///
/// `g, b` is the equivalent series admittance `y / t`. The end shunts
/// `(g_from, b_from)` and `(g_to, b_to)` are the tap-induced parts only;
/// line charging is kept separately in `b_sh_from` / `b_sh_to` so the
/// charging term can be addressed on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiEquivalent {
    pub g: f64,
    pub b: f64,
    pub g_from: f64,
    pub b_from: f64,
    pub g_to: f64,
    pub b_to: f64,
    pub b_sh_from: f64,
    pub b_sh_to: f64,
    pub shift: f64,
}

impl PiEquivalent {
    /// Pi-equivalent including the phase shift, for the AC solver.
    pub fn of(branch: &Branch) -> Result<Self, NetworkError> {
        let (g0, b0) = series_admittance(branch)?;
        let t = branch.tap;
        if !(t > 0.0) {
            return Err(NetworkError::InvalidBranch {
                branch: 0,
                reason: format!("tap {t} must be positive"),
            });
        }
        let half = branch.b_sh();
        let from_scale = (1.0 - t) / (t * t);
        let to_scale = (t - 1.0) / t;
        Ok(PiEquivalent {
            g: g0 / t,
            b: b0 / t,
            g_from: g0 * from_scale,
            b_from: b0 * from_scale,
            g_to: g0 * to_scale,
            b_to: b0 * to_scale,
            b_sh_from: half / (t * t),
            b_sh_to: half,
            shift: branch.shift,
        })
    }

    /// Total from-end shunt susceptance (tap part plus charging).
    pub fn b_end_from(&self) -> f64 {
        self.b_from + self.b_sh_from
    }

    pub fn b_end_to(&self) -> f64 {
        self.b_to + self.b_sh_to
    }
}

/// Pi-equivalent for a linear-model caller; phase shifters are rejected.
pub fn pi_equivalent(branch: &Branch) -> Result<PiEquivalent, NetworkError> {
    if branch.shift != 0.0 {
        return Err(NetworkError::UnsupportedPhaseShift {
            branch: 0,
            shift: branch.shift,
        });
    }
    PiEquivalent::of(branch)
}

/// Aggregated in-service generation at one bus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BusGeneration {
    pub p: f64,
    pub q: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Setpoint of the first in-service unit at the bus.
    pub v_set: Option<f64>,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub base_mva: f64,
    buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    index: HashMap<u32, usize>,
}

impl Network {
    /// Builds a network with buses ordered by ascending external id.
    /// No validation is run; see [`Network::validate`].
    pub fn new(
        base_mva: f64,
        mut buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Self {
        buses.sort_by_key(|b| b.id);
        let index = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        Network {
            base_mva,
            buses,
            generators,
            branches,
            index,
        }
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    /// Mutable bus access; ids must not be changed through this.
    pub fn buses_mut(&mut self) -> &mut [Bus] {
        &mut self.buses
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus_ids(&self) -> Vec<u32> {
        self.buses.iter().map(|b| b.id).collect()
    }

    /// Index of the slack bus. Panics on networks that have not been validated.
    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// In-service branches as `(branch index, from index, to index, branch)`.
    pub fn in_service_branches(&self) -> impl Iterator<Item = (usize, usize, usize, &Branch)> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| br.in_service)
            .filter_map(move |(k, br)| {
                let f = self.bus_index(br.from)?;
                let t = self.bus_index(br.to)?;
                Some((k, f, t, br))
            })
    }

    /// Per-bus aggregation of in-service generators.
    pub fn bus_generation(&self) -> Vec<BusGeneration> {
        let mut out = vec![BusGeneration::default(); self.buses.len()];
        for g in self.generators.iter().filter(|g| g.in_service) {
            let Some(i) = self.bus_index(g.bus) else { continue };
            let agg = &mut out[i];
            agg.p += g.p_gen;
            agg.q += g.q_gen;
            agg.q_min += g.q_min;
            agg.q_max += g.q_max;
            if agg.v_set.is_none() {
                agg.v_set = Some(g.v_set);
            }
            agg.units += 1;
        }
        out
    }

    /// Voltage magnitude held at each bus: the generator setpoint at PV and
    /// slack buses, `None` at PQ buses.
    pub fn voltage_setpoints(&self) -> Vec<Option<f64>> {
        let gens = self.bus_generation();
        self.buses
            .iter()
            .zip(gens)
            .map(|(b, g)| match b.kind {
                BusKind::PQ => None,
                _ => Some(g.v_set.unwrap_or(b.v_init)),
            })
            .collect()
    }

    /// Scheduled net injection `P_g - P_d`, `Q_g - Q_d` per bus.
    pub fn scheduled_injections(&self) -> (Vec<f64>, Vec<f64>) {
        let gens = self.bus_generation();
        let p = self
            .buses
            .iter()
            .zip(&gens)
            .map(|(b, g)| g.p - b.p_load)
            .collect();
        let q = self
            .buses
            .iter()
            .zip(&gens)
            .map(|(b, g)| g.q - b.q_load)
            .collect();
        (p, q)
    }

    /// Checks every type invariant plus connectivity. An empty list means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.base_mva > 0.0) {
            v.push(format!("base_mva {} must be positive", self.base_mva));
        }
        if self.buses.is_empty() {
            v.push("network has no buses".into());
            return v;
        }
        for w in self.buses.windows(2) {
            if w[0].id == w[1].id {
                v.push(format!("duplicate bus id {}", w[0].id));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        match slacks {
            0 => v.push("no slack bus".into()),
            1 => {}
            _ => v.push("multiple slack buses".into()),
        }
        for b in &self.buses {
            if !(b.base_kv > 0.0) {
                v.push(format!("bus {}: base_kv must be positive", b.id));
            }
            if !(b.v_init > 0.0) {
                v.push(format!("bus {}: v_init must be positive", b.id));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            let n = k + 1;
            if self.bus_index(g.bus).is_none() {
                v.push(format!("generator {n}: unknown bus {}", g.bus));
            }
            if g.q_min > g.q_max {
                v.push(format!("generator {n}: q_min exceeds q_max"));
            }
            if !(g.v_set > 0.0) {
                v.push(format!("generator {n}: v_set must be positive"));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            let n = k + 1;
            if self.bus_index(br.from).is_none() {
                v.push(format!("branch {n}: unknown from-bus {}", br.from));
            }
            if self.bus_index(br.to).is_none() {
                v.push(format!("branch {n}: unknown to-bus {}", br.to));
            }
            if br.from == br.to {
                v.push(format!("branch {n}: from-bus equals to-bus"));
            }
            if br.r == 0.0 && br.x == 0.0 {
                v.push(format!("branch {n}: zero impedance"));
            }
            if !(br.tap > 0.0) {
                v.push(format!("branch {n}: tap must be positive"));
            }
        }

        let gens = self.bus_generation();
        for (i, b) in self.buses.iter().enumerate() {
            if b.kind == BusKind::Slack && gens[i].units == 0 {
                v.push(format!("slack bus {}: no in-service generator", b.id));
            }
            if b.kind == BusKind::PV && gens[i].units == 0 {
                v.push(format!("pv bus {}: no in-service generator", b.id));
            }
        }
        let mut first_set: HashMap<u32, f64> = HashMap::new();
        let mut reported = Vec::new();
        for g in self.generators.iter().filter(|g| g.in_service) {
            match first_set.get(&g.bus) {
                None => {
                    first_set.insert(g.bus, g.v_set);
                }
                Some(&vs) if (vs - g.v_set).abs() > 1e-9 && !reported.contains(&g.bus) => {
                    reported.push(g.bus);
                    v.push(format!(
                        "bus {}: conflicting generator voltage setpoints",
                        g.bus
                    ));
                }
                _ => {}
            }
        }

        if !self.is_connected() {
            v.push("network not connected".into());
        }
        v
    }

    /// Returns `Ok(())` or the list of violations as an error.
    pub fn check(&self) -> Result<(), NetworkError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(NetworkError::Validation(v))
        }
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for (_, f, t, _) in self.in_service_branches() {
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }
}
