//! Persisted solution files.
//!
//! Every report is derived from these records after they have been written
//! and read back, so any table can be audited from the files alone. Flows
//! are stored in MW/MVAr; floats round-trip exactly through the JSON text.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ac_solver::AcSolution;
use crate::linear_models::{LinearModel, LinearSolution};
use crate::network::Network;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: malformed solution record: {message}")]
    Parse { path: String, message: String },
}

/// Which solver produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionModel {
    Ac,
    Dc,
    Ddc,
    Lac,
    Dlac,
}

impl SolutionModel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ac => "ac",
            Self::Dc => "dc",
            Self::Ddc => "ddc",
            Self::Lac => "lac",
            Self::Dlac => "dlac",
        }
    }

    pub fn linear(self) -> Option<LinearModel> {
        match self {
            Self::Ac => None,
            Self::Dc => Some(LinearModel::Dc),
            Self::Ddc => Some(LinearModel::Ddc),
            Self::Lac => Some(LinearModel::Lac),
            Self::Dlac => Some(LinearModel::Dlac),
        }
    }
}

impl From<LinearModel> for SolutionModel {
    fn from(m: LinearModel) -> Self {
        match m {
            LinearModel::Dc => Self::Dc,
            LinearModel::Ddc => Self::Ddc,
            LinearModel::Lac => Self::Lac,
            LinearModel::Dlac => Self::Dlac,
        }
    }
}

impl fmt::Display for SolutionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolutionModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("ac") {
            return Ok(Self::Ac);
        }
        s.parse::<LinearModel>()
            .map(Self::from)
            .map_err(|_| format!("unknown model '{s}' (expected ac, dc, ddc, lac or dlac)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRecord {
    /// 1-based position in the case's branch list.
    pub branch: usize,
    pub p_from_mw: f64,
    pub q_from_mvar: Option<f64>,
    pub p_to_mw: f64,
    pub q_to_mvar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub case: String,
    pub model: SolutionModel,
    pub base_mva: f64,
    pub bus_ids: Vec<u32>,
    pub vm: Vec<f64>,
    pub va_rad: Vec<f64>,
    pub flows: Vec<FlowRecord>,
    /// Newton iterations (AC only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Largest nodal balance violation, per-unit.
    pub max_mismatch: f64,
}

impl SolutionRecord {
    pub fn from_ac(net: &Network, case: &str, sol: &AcSolution) -> Self {
        let base = net.base_mva;
        SolutionRecord {
            case: case.to_string(),
            model: SolutionModel::Ac,
            base_mva: base,
            bus_ids: net.bus_ids(),
            vm: sol.vm.clone(),
            va_rad: sol.va.clone(),
            flows: sol
                .flows
                .iter()
                .map(|f| FlowRecord {
                    branch: f.branch + 1,
                    p_from_mw: f.p_from * base,
                    q_from_mvar: Some(f.q_from * base),
                    p_to_mw: f.p_to * base,
                    q_to_mvar: Some(f.q_to * base),
                })
                .collect(),
            iterations: Some(sol.iterations),
            max_mismatch: sol.max_mismatch,
        }
    }

    pub fn from_linear(net: &Network, case: &str, sol: &LinearSolution) -> Self {
        let base = net.base_mva;
        SolutionRecord {
            case: case.to_string(),
            model: sol.model.into(),
            base_mva: base,
            bus_ids: net.bus_ids(),
            vm: sol.vm.clone(),
            va_rad: sol.va.clone(),
            flows: sol
                .flows
                .iter()
                .map(|f| FlowRecord {
                    branch: f.branch + 1,
                    p_from_mw: f.p_from * base,
                    q_from_mvar: f.q_from.map(|q| q * base),
                    p_to_mw: f.p_to * base,
                    q_to_mvar: f.q_to.map(|q| q * base),
                })
                .collect(),
            iterations: None,
            max_mismatch: sol.max_residual,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), RecordError> {
        std::fs::write(path, self.to_json()).map_err(|e| RecordError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(path).map_err(|e| RecordError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| RecordError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn p_from(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.p_from_mw).collect()
    }

    /// From-side reactive flows, if the model produces them.
    pub fn q_from(&self) -> Option<Vec<f64>> {
        self.flows.iter().map(|f| f.q_from_mvar).collect()
    }

    /// From-side apparent power magnitudes in MVA.
    pub fn s_from(&self) -> Option<Vec<f64>> {
        self.flows
            .iter()
            .map(|f| f.q_from_mvar.map(|q| f.p_from_mw.hypot(q)))
            .collect()
    }

    /// Angle difference across each branch, using `net` for endpoints.
    pub fn theta(&self, net: &Network) -> Vec<f64> {
        self.flows
            .iter()
            .map(|f| {
                let br = &net.branches[f.branch - 1];
                let i = net.bus_index(br.from).expect("validated");
                let j = net.bus_index(br.to).expect("validated");
                self.va_rad[i] - self.va_rad[j]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ac_solver::{solve_ac, AcOptions};
    use crate::linear_models::{solve_dc_family, solve_lac_family, ModelCoefficients};
    use crate::network::tests::triangle;

    fn loaded() -> Network {
        let mut net = triangle();
        net.buses_mut()[2].p_load = 0.9;
        net.buses_mut()[2].q_load = 0.2;
        net
    }

    #[test]
    fn round_trip_is_exact() {
        let net = loaded();
        let ac = solve_ac(&net, &AcOptions::default()).unwrap();
        let rec = SolutionRecord::from_ac(&net, "tri", &ac);
        let back: SolutionRecord = serde_json::from_str(&rec.to_json()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.flows[0].branch, 1);
        assert!((back.flows[2].p_from_mw - ac.flows[2].p_from * 100.0).abs() < 1e-12);

        let dc = solve_dc_family(&net, 1.0).unwrap();
        let rec = SolutionRecord::from_linear(&net, "tri", &dc);
        let text = rec.to_json();
        assert!(text.contains("\"model\": \"dc\""));
        assert!(text.contains("\"q_from_mvar\": null"));
        let back: SolutionRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.q_from(), None);
    }

    #[test]
    fn derived_series() {
        let net = loaded();
        let lac = solve_lac_family(&net, &ModelCoefficients::identity()).unwrap();
        let rec = SolutionRecord::from_linear(&net, "tri", &lac);
        let s = rec.s_from().unwrap();
        let q = rec.q_from().unwrap();
        for ((s, q), p) in s.iter().zip(&q).zip(rec.p_from()) {
            assert!((s * s - p * p - q * q).abs() < 1e-9);
        }
        let theta = rec.theta(&net);
        assert!((theta[2] - (lac.va[0] - lac.va[2])).abs() < 1e-15);
    }

    #[test]
    fn model_names_parse() {
        assert_eq!("AC".parse::<SolutionModel>().unwrap(), SolutionModel::Ac);
        assert_eq!("dlac".parse::<SolutionModel>().unwrap(), SolutionModel::Dlac);
        assert!("xyz".parse::<SolutionModel>().is_err());
    }
}
