//! Case-file ingestion: the native JSON schema and a MATPOWER importer.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Branch, Bus, BusKind, Generator, Network, NetworkError};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}{}: {message}", .field.as_ref().map(|f| format!(" ({f})")).unwrap_or_default())]
    Parse {
        line: usize,
        field: Option<String>,
        message: String,
    },
    #[error("unsupported matrix '{0}'")]
    Unsupported(String),
    #[error(transparent)]
    Invalid(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Native,
    Matpower,
}

impl CaseFormat {
    /// `.m` files are MATPOWER, everything else native JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("m") => CaseFormat::Matpower,
            _ => CaseFormat::Native,
        }
    }
}

/// Reads, converts and validates a case file.
pub fn load_case(path: &Path, format: CaseFormat) -> Result<Network, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let net = match format {
        CaseFormat::Native => parse_native(&text)?,
        CaseFormat::Matpower => parse_matpower(&text)?,
    };
    net.check()?;
    Ok(net)
}

pub fn save_case(net: &Network, path: &Path) -> Result<(), CaseError> {
    let text = serde_json::to_string_pretty(&NativeCase::from_network(net))
        .expect("native case serializes");
    std::fs::write(path, text + "\n").map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn default_base() -> f64 {
    100.0
}
fn one() -> f64 {
    1.0
}
fn in_service() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativeCase {
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub buses: Vec<NativeBus>,
    #[serde(default)]
    pub generators: Vec<NativeGenerator>,
    #[serde(default)]
    pub branches: Vec<NativeBranch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativeBus {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<BusKind>,
    #[serde(default)]
    pub p_load_mw: f64,
    #[serde(default)]
    pub q_load_mvar: f64,
    #[serde(default)]
    pub gs_mw: f64,
    #[serde(default)]
    pub bs_mvar: f64,
    pub base_kv: f64,
    #[serde(default = "one")]
    pub vm: f64,
    #[serde(default)]
    pub va_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativeGenerator {
    pub bus: u32,
    #[serde(default)]
    pub pg_mw: f64,
    #[serde(default)]
    pub qg_mvar: f64,
    #[serde(default = "one")]
    pub v_set: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
    #[serde(default = "in_service")]
    pub status: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativeBranch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one")]
    pub tap: f64,
    #[serde(default)]
    pub shift_deg: f64,
    #[serde(default)]
    pub rate_a_mva: f64,
    #[serde(default = "in_service")]
    pub status: u8,
}

impl NativeCase {
    pub fn from_network(net: &Network) -> Self {
        let base = net.base_mva;
        NativeCase {
            base_mva: base,
            buses: net
                .buses()
                .iter()
                .map(|b| NativeBus {
                    id: b.id,
                    kind: Some(b.kind),
                    p_load_mw: b.p_load * base,
                    q_load_mvar: b.q_load * base,
                    gs_mw: b.g_shunt * base,
                    bs_mvar: b.b_shunt * base,
                    base_kv: b.base_kv,
                    vm: b.v_init,
                    va_deg: b.a_init.to_degrees(),
                })
                .collect(),
            generators: net
                .generators
                .iter()
                .map(|g| NativeGenerator {
                    bus: g.bus,
                    pg_mw: g.p_gen * base,
                    qg_mvar: g.q_gen * base,
                    v_set: g.v_set,
                    q_min_mvar: g.q_min * base,
                    q_max_mvar: g.q_max * base,
                    status: g.in_service as u8,
                })
                .collect(),
            branches: net
                .branches
                .iter()
                .map(|br| NativeBranch {
                    from: br.from,
                    to: br.to,
                    r: br.r,
                    x: br.x,
                    b: br.b_charging,
                    tap: br.tap,
                    shift_deg: br.shift.to_degrees(),
                    rate_a_mva: br.rate_a,
                    status: br.in_service as u8,
                })
                .collect(),
        }
    }

    pub fn into_network(self) -> Network {
        let base = self.base_mva;
        let gen_buses: Vec<u32> = self
            .generators
            .iter()
            .filter(|g| g.status != 0)
            .map(|g| g.bus)
            .collect();
        let buses = self
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                kind: b.kind.unwrap_or(if gen_buses.contains(&b.id) {
                    BusKind::PV
                } else {
                    BusKind::PQ
                }),
                p_load: b.p_load_mw / base,
                q_load: b.q_load_mvar / base,
                g_shunt: b.gs_mw / base,
                b_shunt: b.bs_mvar / base,
                base_kv: b.base_kv,
                v_init: b.vm,
                a_init: b.va_deg.to_radians(),
            })
            .collect();
        let generators = self
            .generators
            .into_iter()
            .map(|g| Generator {
                bus: g.bus,
                p_gen: g.pg_mw / base,
                q_gen: g.qg_mvar / base,
                v_set: g.v_set,
                q_min: g.q_min_mvar / base,
                q_max: g.q_max_mvar / base,
                in_service: g.status != 0,
            })
            .collect();
        let branches = self
            .branches
            .into_iter()
            .map(|br| Branch {
                from: br.from,
                to: br.to,
                r: br.r,
                x: br.x,
                b_charging: br.b,
                tap: br.tap,
                shift: br.shift_deg.to_radians(),
                rate_a: br.rate_a_mva,
                in_service: br.status != 0,
            })
            .collect();
        Network::new(base, buses, generators, branches)
    }
}

pub fn parse_native(text: &str) -> Result<Network, CaseError> {
    let case: NativeCase = serde_json::from_str(text).map_err(|e| CaseError::Parse {
        line: e.line(),
        field: None,
        message: e.to_string(),
    })?;
    Ok(case.into_network())
}

/// One numeric row of a MATPOWER matrix with its source line.
struct Row {
    line: usize,
    values: Vec<f64>,
}

struct Matrix {
    line: usize,
    rows: Vec<Row>,
}

const BUS_COLUMNS: [&str; 10] = [
    "BUS_I", "BUS_TYPE", "PD", "QD", "GS", "BS", "BUS_AREA", "VM", "VA", "BASE_KV",
];
const GEN_COLUMNS: [&str; 8] = [
    "GEN_BUS", "PG", "QG", "QMAX", "QMIN", "VG", "MBASE", "GEN_STATUS",
];
const BRANCH_COLUMNS: [&str; 11] = [
    "F_BUS", "T_BUS", "BR_R", "BR_X", "BR_B", "RATE_A", "RATE_B", "RATE_C", "TAP", "SHIFT",
    "BR_STATUS",
];

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    tok.parse::<f64>().map_err(|_| CaseError::Parse {
        line,
        field: None,
        message: format!("invalid number '{tok}'"),
    })
}

/// Splits MATPOWER text into `mpc.<name>` scalar assignments and matrices.
fn scan_matpower(text: &str) -> Result<(Option<f64>, Vec<(String, Matrix)>), CaseError> {
    let mut base = None;
    let mut matrices = Vec::new();
    let mut current: Option<(String, Matrix)> = None;
    let mut skipping_cell = false;

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if skipping_cell {
            if line.contains('}') {
                skipping_cell = false;
            }
            continue;
        }
        let mut body = line;
        if current.is_none() {
            let Some(rest) = line.strip_prefix("mpc.") else { continue };
            let Some((name, value)) = rest.split_once('=') else {
                return Err(CaseError::Parse {
                    line: line_no,
                    field: None,
                    message: format!("expected assignment, found '{line}'"),
                });
            };
            let name = name.trim().to_string();
            let value = value.trim();
            if let Some(inner) = value.strip_prefix('[') {
                current = Some((
                    name,
                    Matrix {
                        line: line_no,
                        rows: Vec::new(),
                    },
                ));
                body = inner;
            } else if value.starts_with('{') {
                skipping_cell = !value.contains('}');
                continue;
            } else {
                if name == "baseMVA" {
                    let v = value.trim_end_matches(';').trim();
                    base = Some(parse_number(v, line_no)?);
                }
                continue;
            }
        }

        let (content, closes) = match body.find(']') {
            Some(pos) => (&body[..pos], true),
            None => (body, false),
        };
        let (_, matrix) = current.as_mut().expect("inside a matrix");
        for chunk in content.split(';') {
            let toks: Vec<&str> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if toks.is_empty() {
                continue;
            }
            let values = toks
                .iter()
                .map(|t| parse_number(t, line_no))
                .collect::<Result<Vec<_>, _>>()?;
            matrix.rows.push(Row {
                line: line_no,
                values,
            });
        }
        if closes {
            matrices.push(current.take().expect("inside a matrix"));
        }
    }
    if let Some((name, m)) = current {
        return Err(CaseError::Parse {
            line: m.line,
            field: Some(name),
            message: "matrix is not terminated".into(),
        });
    }
    Ok((base, matrices))
}

fn check_columns(
    matrix: &str,
    rows: &[Row],
    columns: &[&str],
) -> Result<(), CaseError> {
    for row in rows {
        if row.values.len() < columns.len() {
            return Err(CaseError::Parse {
                line: row.line,
                field: Some(format!("{matrix}.{}", columns[row.values.len()])),
                message: format!(
                    "{matrix} row has {} columns, expected at least {}",
                    row.values.len(),
                    columns.len()
                ),
            });
        }
    }
    Ok(())
}

fn as_id(v: f64, line: usize, field: &str) -> Result<u32, CaseError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(CaseError::Parse {
            line,
            field: Some(field.into()),
            message: format!("'{v}' is not a positive integer id"),
        })
    }
}

/// Parses a MATPOWER version-2 case (`mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
/// `mpc.branch`). Angles are converted to radians and powers to per-unit.
pub fn parse_matpower(text: &str) -> Result<Network, CaseError> {
    let (base, matrices) = scan_matpower(text)?;
    let base = base.ok_or_else(|| CaseError::Parse {
        line: 0,
        field: Some("baseMVA".into()),
        message: "missing mpc.baseMVA".into(),
    })?;
    for (name, _) in &matrices {
        if name == "dcline" {
            return Err(CaseError::Unsupported(name.clone()));
        }
    }
    let find = |name: &str| -> Result<&Matrix, CaseError> {
        matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| CaseError::Parse {
                line: 0,
                field: Some(name.into()),
                message: format!("missing mpc.{name}"),
            })
    };
    let bus_m = find("bus")?;
    let gen_m = find("gen")?;
    let branch_m = find("branch")?;
    check_columns("bus", &bus_m.rows, &BUS_COLUMNS)?;
    check_columns("gen", &gen_m.rows, &GEN_COLUMNS)?;
    check_columns("branch", &branch_m.rows, &BRANCH_COLUMNS)?;

    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for row in &gen_m.rows {
        let v = &row.values;
        generators.push(Generator {
            bus: as_id(v[0], row.line, "gen.GEN_BUS")?,
            p_gen: v[1] / base,
            q_gen: v[2] / base,
            q_max: v[3] / base,
            q_min: v[4] / base,
            v_set: v[5],
            in_service: v[7] > 0.0,
        });
    }

    let mut buses = Vec::with_capacity(bus_m.rows.len());
    for row in &bus_m.rows {
        let v = &row.values;
        let id = as_id(v[0], row.line, "bus.BUS_I")?;
        let has_gen = generators.iter().any(|g| g.in_service && g.bus == id);
        let kind = match v[1] as i64 {
            1 => BusKind::PQ,
            2 if has_gen => BusKind::PV,
            2 => BusKind::PQ,
            3 => BusKind::Slack,
            other => {
                return Err(CaseError::Parse {
                    line: row.line,
                    field: Some("bus.BUS_TYPE".into()),
                    message: format!("unsupported bus type {other}"),
                })
            }
        };
        buses.push(Bus {
            id,
            kind,
            p_load: v[2] / base,
            q_load: v[3] / base,
            g_shunt: v[4] / base,
            b_shunt: v[5] / base,
            v_init: v[7],
            a_init: v[8].to_radians(),
            base_kv: v[9],
        });
    }

    let mut branches = Vec::with_capacity(branch_m.rows.len());
    for row in &branch_m.rows {
        let v = &row.values;
        branches.push(Branch {
            from: as_id(v[0], row.line, "branch.F_BUS")?,
            to: as_id(v[1], row.line, "branch.T_BUS")?,
            r: v[2],
            x: v[3],
            b_charging: v[4],
            rate_a: v[5],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            shift: v[9].to_radians(),
            in_service: v[10] > 0.0,
        });
    }
    Ok(Network::new(base, buses, generators, branches))
}
