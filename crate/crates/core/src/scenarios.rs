//! Synthetic hourly operating cases derived from a base case.
//!
//! A single system-wide load multiplier follows a daily sinusoid plus seeded
//! Gaussian noise. Loads scale at constant power factor; non-slack
//! generation absorbs the load change in proportion to its base dispatch so
//! the slack only picks up losses. Setpoints and topology never change.
//!
//! Noise comes from ChaCha8 seeded with the 64-bit seed (`rand_chacha`) and
//! is mapped to standard normal deviates with the ziggurat sampler of
//! `rand_distr`, one draw per hour in hour order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_io::{save_case, CaseError};
use crate::network::Network;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub hours: usize,
    /// Daily swing as a fraction of base load.
    pub amplitude: f64,
    /// Hour of the daily peak.
    pub phase_hours: f64,
    pub noise_sd: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            hours: 72,
            amplitude: 0.15,
            phase_hours: 18.0,
            noise_sd: 0.01,
            lambda_min: 0.7,
            lambda_max: 1.3,
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidSpec(m));
        if self.hours < 1 {
            return bad("hours must be at least 1".into());
        }
        if !(self.amplitude >= 0.0 && self.amplitude < 1.0) {
            return bad(format!("amplitude must lie in [0, 1), got {}", self.amplitude));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be non-negative, got {}", self.noise_sd));
        }
        if !(self.lambda_min <= 1.0 && 1.0 <= self.lambda_max && self.lambda_min > 0.0) {
            return bad(format!(
                "bounds must satisfy 0 < min <= 1 <= max, got ({}, {})",
                self.lambda_min, self.lambda_max
            ));
        }
        if !self.phase_hours.is_finite() {
            return bad("phase_hours must be finite".into());
        }
        Ok(())
    }
}

/// Load multipliers for hours `1..=hours`.
pub fn lambda_sequence(spec: &ScenarioSpec) -> Result<Vec<f64>, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((1..=spec.hours)
        .map(|h| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let angle = 2.0 * std::f64::consts::PI * (h as f64 - spec.phase_hours) / 24.0;
            let lambda = 1.0 + spec.amplitude * angle.sin() + spec.noise_sd * z;
            lambda.clamp(spec.lambda_min, spec.lambda_max)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct HourCase {
    /// 1-based.
    pub hour: usize,
    pub lambda: f64,
    pub network: Network,
}

impl HourCase {
    pub fn file_name(&self) -> String {
        format!("hour_{:03}.json", self.hour)
    }
}

/// Base case with loads scaled by `lambda` and non-slack generation
/// redispatched to cover the load change.
pub fn scale_case(base: &Network, lambda: f64) -> Network {
    let mut net = base.clone();
    let total_load: f64 = base.buses().iter().map(|b| b.p_load).sum();
    let slack_id = base.buses()[base.slack_index()].id;
    let non_slack_gen: f64 = base
        .generators
        .iter()
        .filter(|g| g.in_service && g.bus != slack_id)
        .map(|g| g.p_gen)
        .sum();
    for b in net.buses_mut() {
        b.p_load *= lambda;
        b.q_load *= lambda;
    }
    if non_slack_gen > 0.0 {
        let factor = 1.0 + (lambda - 1.0) * total_load / non_slack_gen;
        for g in net
            .generators
            .iter_mut()
            .filter(|g| g.in_service && g.bus != slack_id)
        {
            g.p_gen = (g.p_gen * factor).max(0.0);
        }
    }
    net
}

pub fn generate_hourly_cases(
    base: &Network,
    spec: &ScenarioSpec,
) -> Result<Vec<HourCase>, ScenarioError> {
    Ok(lambda_sequence(spec)?
        .into_iter()
        .enumerate()
        .map(|(i, lambda)| HourCase {
            hour: i + 1,
            lambda,
            network: scale_case(base, lambda),
        })
        .collect())
}

/// Per-hour outcome of the AC feasibility check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HourStatus {
    Feasible { iterations: usize },
    Infeasible { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourEntry {
    pub hour: usize,
    pub file: String,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac: Option<HourStatus>,
}

/// Written next to the hourly cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub base_case: String,
    pub spec: ScenarioSpec,
    pub hours: Vec<HourEntry>,
}

pub const SCENARIO_MANIFEST: &str = "scenario.json";

/// Writes `hour_NNN.json` files and the scenario manifest into `dir`.
pub fn write_scenarios(
    dir: &Path,
    base_case: &str,
    spec: &ScenarioSpec,
    cases: &[HourCase],
    statuses: Option<&[HourStatus]>,
) -> Result<ScenarioManifest, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut hours = Vec::with_capacity(cases.len());
    for (i, c) in cases.iter().enumerate() {
        save_case(&c.network, &dir.join(c.file_name()))?;
        hours.push(HourEntry {
            hour: c.hour,
            file: c.file_name(),
            lambda: c.lambda,
            ac: statuses.map(|s| s[i].clone()),
        });
    }
    let manifest = ScenarioManifest {
        base_case: base_case.to_string(),
        spec: spec.clone(),
        hours,
    };
    let path = dir.join(SCENARIO_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(manifest)
}

/// True when both networks have the same bus types and voltage setpoints.
pub fn same_setpoints(a: &Network, b: &Network) -> bool {
    a.voltage_setpoints() == b.voltage_setpoints()
        && a.buses().iter().zip(b.buses()).all(|(x, y)| x.kind == y.kind)
}
