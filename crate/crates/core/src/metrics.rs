//! Accuracy metrics for linear models against the AC reference, and the
//! report tables built from them.
//!
//! Tables are views: every cell is one call to a primitive ([`filtered_mape`],
//! [`improvement`], [`abs_dev_stats`]) on series taken from persisted
//! [`SolutionRecord`]s.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;
use crate::records::{SolutionModel, SolutionRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no observations pass the filter")]
    EmptyFilter,
    #[error("improvement is undefined for a zero baseline error")]
    Undefined,
    #[error("solution '{0}' does not match the reference topology")]
    TopologyMismatch(String),
}

/// AC values at or below this magnitude (per-unit) are excluded from
/// percentage errors.
pub const ZERO_AC_PU: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub eps: f64,
    pub included: usize,
    /// Passed the tolerance filter but had a near-zero AC value.
    pub zero_excluded: usize,
}

/// Mean of `|model − ac|/|ac|` over entries with `|filter| ≥ tol` and
/// `|ac| > ZERO_AC_PU`.
pub fn filtered_mape(
    model: &[f64],
    ac: &[f64],
    filter: &[f64],
    tol: f64,
) -> Result<Mape, MetricsError> {
    filtered_mape_with_zero(model, ac, filter, tol, ZERO_AC_PU)
}

/// [`filtered_mape`] with an explicit near-zero threshold, for series in
/// physical units.
pub fn filtered_mape_with_zero(
    model: &[f64],
    ac: &[f64],
    filter: &[f64],
    tol: f64,
    zero: f64,
) -> Result<Mape, MetricsError> {
    same_len(model, ac)?;
    same_len(ac, filter)?;
    let mut sum = 0.0;
    let mut included = 0;
    let mut zero_excluded = 0;
    for ((m, a), f) in model.iter().zip(ac).zip(filter) {
        if f.abs() < tol {
            continue;
        }
        if a.abs() <= zero {
            zero_excluded += 1;
            continue;
        }
        sum += (m - a).abs() / a.abs();
        included += 1;
    }
    if included == 0 {
        return Err(MetricsError::EmptyFilter);
    }
    Ok(Mape {
        eps: sum / included as f64,
        included,
        zero_excluded,
    })
}

/// Relative improvement of model b over model a.
pub fn improvement(eps_a: f64, eps_b: f64) -> Result<f64, MetricsError> {
    if eps_a == 0.0 {
        return Err(MetricsError::Undefined);
    }
    Ok((eps_a - eps_b) / eps_a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsDev {
    /// Sum of absolute deviations.
    pub sad: f64,
    /// Mean absolute deviation.
    pub gamma: f64,
    pub n: usize,
}

pub fn abs_dev_stats(model: &[f64], ac: &[f64], filter: &[bool]) -> Result<AbsDev, MetricsError> {
    same_len(model, ac)?;
    if filter.len() != ac.len() {
        return Err(MetricsError::LengthMismatch(filter.len(), ac.len()));
    }
    let mut sad = 0.0;
    let mut n = 0;
    for ((m, a), keep) in model.iter().zip(ac).zip(filter) {
        if *keep {
            sad += (m - a).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyFilter);
    }
    Ok(AbsDev {
        sad,
        gamma: sad / n as f64,
        n,
    })
}

fn same_len(a: &[f64], b: &[f64]) -> Result<(), MetricsError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(MetricsError::LengthMismatch(a.len(), b.len()))
    }
}

/// How a row's (or column's) numbers are printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Count,
    /// Stored as a fraction, printed as a percentage.
    Percent,
    PerUnit,
    Mva,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub kind: CellKind,
    /// `None` marks an empty cell (nothing passed the filter).
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File stem used when the table is written out.
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    /// Per-column print format; overrides the row kind when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub column_kinds: Vec<CellKind>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    fn kind_at(&self, row: &TableRow, col: usize) -> CellKind {
        self.column_kinds.get(col).copied().unwrap_or(row.kind)
    }

    /// Full-precision CSV; empty cells are blank.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            rec.extend(
                row.cells
                    .iter()
                    .map(|c| c.map(|v| format!("{v}")).unwrap_or_default()),
            );
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n| |", self.title);
        for c in &self.columns {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.label));
            for (j, cell) in row.cells.iter().enumerate() {
                let text = match cell {
                    None => "—".to_string(),
                    Some(v) => match self.kind_at(row, j) {
                        CellKind::Count => format!("{v:.0}"),
                        CellKind::Percent => format!("{:.2}%", v * 100.0),
                        CellKind::PerUnit => format!("{v:.5}"),
                        CellKind::Mva => format!("{v:.2}"),
                    },
                };
                out.push_str(&format!(" {text} |"));
            }
            out.push('\n');
        }
        out
    }
}

/// Voltage level band `[min_kv, max_kv)`; no upper bound when `max_kv` is
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvBand {
    pub label: String,
    pub min_kv: f64,
    pub max_kv: Option<f64>,
}

impl KvBand {
    pub fn new(label: &str, min_kv: f64, max_kv: f64) -> Self {
        KvBand {
            label: label.to_string(),
            min_kv,
            max_kv: max_kv.is_finite().then_some(max_kv),
        }
    }

    pub fn contains(&self, kv: f64) -> bool {
        kv >= self.min_kv && self.max_kv.is_none_or(|hi| kv < hi)
    }

    pub fn defaults() -> Vec<KvBand> {
        vec![
            KvBand::new("all", 0.0, f64::INFINITY),
            KvBand::new(">= 200 kV", 200.0, f64::INFINITY),
            KvBand::new("100-200 kV", 100.0, 200.0),
            KvBand::new("20-100 kV", 20.0, 100.0),
            KvBand::new("< 20 kV", 0.0, 20.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub p_tolerances_mw: Vec<f64>,
    pub q_tolerances_mvar: Vec<f64>,
    pub kv_bands: Vec<KvBand>,
    pub s_tol_mva: f64,
    /// Tolerance for the reactive ε tracked across hours.
    pub q_hourly_tol_mvar: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            p_tolerances_mw: vec![1.0, 5.0, 10.0, 50.0],
            q_tolerances_mvar: vec![1.0, 5.0, 10.0, 50.0],
            kv_bands: KvBand::defaults(),
            s_tol_mva: 10.0,
            q_hourly_tol_mvar: 10.0,
        }
    }
}

/// Data-driven model paired with the classical model it refines.
pub const IMPROVEMENT_PAIRS: [(SolutionModel, SolutionModel); 2] = [
    (SolutionModel::Dc, SolutionModel::Ddc),
    (SolutionModel::Lac, SolutionModel::Dlac),
];

fn check_topology(ac: &SolutionRecord, models: &[SolutionRecord]) -> Result<(), MetricsError> {
    for m in models {
        let same = m.flows.len() == ac.flows.len()
            && m.vm.len() == ac.vm.len()
            && m.flows.iter().zip(&ac.flows).all(|(a, b)| a.branch == b.branch);
        if !same {
            return Err(MetricsError::TopologyMismatch(format!("{}/{}", m.case, m.model)));
        }
    }
    Ok(())
}

fn zero_mw(ac: &SolutionRecord) -> f64 {
    ZERO_AC_PU * ac.base_mva
}

/// Which directional quantity a flow table scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowQuantity {
    P,
    Q,
}

/// Tolerance-filtered flow errors. Branches are included by the AC
/// from-side magnitude of the scored quantity; for active power the angle
/// errors are scored on the same branch subsets.
pub fn flow_error_table(
    net: &Network,
    ac: &SolutionRecord,
    models: &[SolutionRecord],
    tolerances: &[f64],
    quantity: FlowQuantity,
) -> Result<Table, MetricsError> {
    check_topology(ac, models)?;
    let zero = zero_mw(ac);
    let series = |r: &SolutionRecord| match quantity {
        FlowQuantity::P => Some(r.p_from()),
        FlowQuantity::Q => r.q_from(),
    };
    let ac_vals = series(ac).expect("AC records carry both quantities");
    let scored: Vec<(&SolutionRecord, Vec<f64>)> = models
        .iter()
        .filter_map(|m| series(m).map(|s| (m, s)))
        .collect();
    let (sym, unit) = match quantity {
        FlowQuantity::P => ("P_ij", "MW"),
        FlowQuantity::Q => ("Q_ij", "MVAr"),
    };

    let cell = |model: &[f64], ac: &[f64], tol: f64, zero: f64| {
        filtered_mape_with_zero(model, ac, &ac_vals, tol, zero).ok()
    };
    let mut rows = Vec::new();
    rows.push(TableRow {
        label: "# of branches".into(),
        kind: CellKind::Count,
        cells: tolerances
            .iter()
            .map(|&t| Some(ac_vals.iter().filter(|v| v.abs() >= t).count() as f64))
            .collect(),
    });
    rows.push(TableRow {
        label: "near-zero AC excluded".into(),
        kind: CellKind::Count,
        cells: tolerances
            .iter()
            .map(|&t| {
                Some(
                    ac_vals
                        .iter()
                        .filter(|v| v.abs() >= t && v.abs() <= zero)
                        .count() as f64,
                )
            })
            .collect(),
    });
    let mut eps_by_model: BTreeMap<SolutionModel, Vec<Option<f64>>> = BTreeMap::new();
    for (m, vals) in &scored {
        let cells: Vec<Option<f64>> = tolerances
            .iter()
            .map(|&t| cell(vals, &ac_vals, t, zero).map(|r| r.eps))
            .collect();
        eps_by_model.insert(m.model, cells.clone());
        rows.push(TableRow {
            label: format!("ε {sym} ({})", m.model),
            kind: CellKind::Percent,
            cells,
        });
    }
    if quantity == FlowQuantity::P {
        let ac_theta = ac.theta(net);
        for (m, _) in &scored {
            let th = m.theta(net);
            rows.push(TableRow {
                label: format!("ε θ_ij ({})", m.model),
                kind: CellKind::Percent,
                cells: tolerances
                    .iter()
                    .map(|&t| cell(&th, &ac_theta, t, ZERO_AC_PU).map(|r| r.eps))
                    .collect(),
            });
        }
    }
    for (a, b) in IMPROVEMENT_PAIRS {
        if let (Some(ea), Some(eb)) = (eps_by_model.get(&a), eps_by_model.get(&b)) {
            rows.push(TableRow {
                label: format!("η {sym} ({a} → {b})"),
                kind: CellKind::Percent,
                cells: ea
                    .iter()
                    .zip(eb)
                    .map(|(x, y)| match (x, y) {
                        (Some(x), Some(y)) => improvement(*x, *y).ok(),
                        _ => None,
                    })
                    .collect(),
            });
        }
    }
    let name = match quantity {
        FlowQuantity::P => "flow_p",
        FlowQuantity::Q => "flow_q",
    };
    Ok(Table {
        name: name.into(),
        title: format!("{} — errors of {sym} by tolerance in {unit}", ac.case),
        columns: tolerances.iter().map(|t| format!(">= {t} {unit}")).collect(),
        column_kinds: Vec::new(),
        rows,
    })
}

/// Voltage magnitude errors by voltage level. All buses are included.
pub fn voltage_error_table(
    net: &Network,
    ac: &SolutionRecord,
    models: &[SolutionRecord],
    bands: &[KvBand],
) -> Result<Table, MetricsError> {
    check_topology(ac, models)?;
    let kv: Vec<f64> = net.buses().iter().map(|b| b.base_kv).collect();
    let masks: Vec<Vec<bool>> = bands
        .iter()
        .map(|band| kv.iter().map(|&k| band.contains(k)).collect())
        .collect();
    let mut rows = vec![TableRow {
        label: "# of buses".into(),
        kind: CellKind::Count,
        cells: masks
            .iter()
            .map(|m| Some(m.iter().filter(|&&x| x).count() as f64))
            .collect(),
    }];
    let mut eps_by_model = BTreeMap::new();
    for m in models {
        rows.push(TableRow {
            label: format!("γ V_i ({}) [p.u.]", m.model),
            kind: CellKind::PerUnit,
            cells: masks
                .iter()
                .map(|mask| abs_dev_stats(&m.vm, &ac.vm, mask).ok().map(|d| d.gamma))
                .collect(),
        });
    }
    for m in models {
        let cells: Vec<Option<f64>> = masks
            .iter()
            .map(|mask| {
                let filter: Vec<f64> = mask.iter().map(|&x| f64::from(u8::from(x))).collect();
                filtered_mape(&m.vm, &ac.vm, &filter, 1.0).ok().map(|r| r.eps)
            })
            .collect();
        eps_by_model.insert(m.model, cells.clone());
        rows.push(TableRow {
            label: format!("ε V_i ({})", m.model),
            kind: CellKind::Percent,
            cells,
        });
    }
    for (a, b) in IMPROVEMENT_PAIRS {
        if let (Some(ea), Some(eb)) = (eps_by_model.get(&a), eps_by_model.get(&b)) {
            rows.push(TableRow {
                label: format!("η V_i ({a} → {b})"),
                kind: CellKind::Percent,
                cells: ea
                    .iter()
                    .zip(eb)
                    .map(|(x, y)| match (x, y) {
                        (Some(x), Some(y)) => improvement(*x, *y).ok(),
                        _ => None,
                    })
                    .collect(),
            });
        }
    }
    Ok(Table {
        name: "voltage".into(),
        title: format!("{} — voltage magnitude errors by voltage level", ac.case),
        columns: bands.iter().map(|b| b.label.clone()).collect(),
        column_kinds: Vec::new(),
        rows,
    })
}

/// Percent error of each model on one branch's apparent power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSeriesPoint {
    pub branch: usize,
    pub ac_mva: f64,
    pub pct_error: BTreeMap<SolutionModel, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexPowerReport {
    pub table: Table,
    /// Sorted by the DLAC error when present, else by the last model.
    pub series: Vec<BranchSeriesPoint>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Sample standard deviation (n − 1 denominator); `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Apparent-power statistics over branches with AC from-side `|S| ≥ tol`,
/// for models that produce reactive flows.
pub fn complex_power_report(
    ac: &SolutionRecord,
    models: &[SolutionRecord],
    tol_mva: f64,
) -> Result<ComplexPowerReport, MetricsError> {
    check_topology(ac, models)?;
    let ac_s = ac.s_from().expect("AC records carry reactive flows");
    let mask: Vec<bool> = ac_s.iter().map(|s| *s >= tol_mva).collect();
    let mut kept: Vec<f64> = ac_s.iter().zip(&mask).filter(|(_, k)| **k).map(|(s, _)| *s).collect();
    if kept.is_empty() {
        return Err(MetricsError::EmptyFilter);
    }
    kept.sort_by(f64::total_cmp);
    let base = ac.base_mva;
    let stat = |label: &str, v: Option<f64>, kind| TableRow {
        label: label.into(),
        kind,
        cells: vec![v],
    };
    let mut rows = vec![
        stat("# of branches", Some(kept.len() as f64), CellKind::Count),
        stat("AC |S| min [MVA]", Some(kept[0]), CellKind::Mva),
        stat("AC |S| max [MVA]", Some(kept[kept.len() - 1]), CellKind::Mva),
        stat("AC |S| mean [MVA]", mean(&kept), CellKind::Mva),
        stat("AC |S| median [MVA]", Some(median(&kept)), CellKind::Mva),
        stat("AC |S| std [MVA]", sample_std(&kept), CellKind::Mva),
    ];
    let scored: Vec<(SolutionModel, Vec<f64>)> = models
        .iter()
        .filter_map(|m| m.s_from().map(|s| (m.model, s)))
        .collect();
    let mut eps = BTreeMap::new();
    for (model, s) in &scored {
        let e = filtered_mape_with_zero(s, &ac_s, &ac_s, tol_mva, ZERO_AC_PU * base)?;
        let d = abs_dev_stats(s, &ac_s, &mask)?;
        eps.insert(*model, e.eps);
        rows.push(stat(&format!("ε |S| ({model})"), Some(e.eps), CellKind::Percent));
        rows.push(stat(&format!("SADCP ({model}) [MVA]"), Some(d.sad), CellKind::Mva));
        rows.push(stat(&format!("SADCP ({model}) [p.u.]"), Some(d.sad / base), CellKind::PerUnit));
        rows.push(stat(&format!("γ |S| ({model}) [MVA]"), Some(d.gamma), CellKind::Mva));
    }
    for (a, b) in IMPROVEMENT_PAIRS {
        if let (Some(ea), Some(eb)) = (eps.get(&a), eps.get(&b)) {
            rows.push(stat(
                &format!("η |S| ({a} → {b})"),
                improvement(*ea, *eb).ok(),
                CellKind::Percent,
            ));
        }
    }

    let mut series: Vec<BranchSeriesPoint> = ac
        .flows
        .iter()
        .zip(&ac_s)
        .enumerate()
        .filter(|(i, _)| mask[*i])
        .map(|(i, (f, s))| BranchSeriesPoint {
            branch: f.branch,
            ac_mva: *s,
            pct_error: scored
                .iter()
                .map(|(m, vals)| (*m, 100.0 * (vals[i] - s).abs() / s))
                .collect(),
        })
        .collect();
    let sort_model = if eps.contains_key(&SolutionModel::Dlac) {
        Some(SolutionModel::Dlac)
    } else {
        scored.last().map(|(m, _)| *m)
    };
    if let Some(m) = sort_model {
        series.sort_by(|a, b| a.pct_error[&m].total_cmp(&b.pct_error[&m]));
    }

    Ok(ComplexPowerReport {
        table: Table {
            name: "complex_power".into(),
            title: format!("{} — branch complex power, |S| >= {tol_mva} MVA", ac.case),
            columns: vec!["value".into()],
            column_kinds: Vec::new(),
            rows,
        },
        series,
    })
}

/// The per-hour quantities tracked across a scenario suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourMetrics {
    pub hour: usize,
    pub case: String,
    /// Mean absolute voltage deviation over all buses, per-unit.
    pub voltage_gamma: BTreeMap<SolutionModel, f64>,
    /// Reactive flow ε at the hourly tolerance.
    pub reactive_eps: BTreeMap<SolutionModel, Option<f64>>,
}

pub fn hour_metrics(
    hour: usize,
    ac: &SolutionRecord,
    models: &[SolutionRecord],
    q_tol_mvar: f64,
) -> Result<HourMetrics, MetricsError> {
    check_topology(ac, models)?;
    let all = vec![true; ac.vm.len()];
    let ac_q = ac.q_from().expect("AC records carry reactive flows");
    let mut voltage_gamma = BTreeMap::new();
    let mut reactive_eps = BTreeMap::new();
    for m in models {
        voltage_gamma.insert(m.model, abs_dev_stats(&m.vm, &ac.vm, &all)?.gamma);
        if let Some(q) = m.q_from() {
            let e = filtered_mape_with_zero(&q, &ac_q, &ac_q, q_tol_mvar, zero_mw(ac));
            reactive_eps.insert(m.model, e.ok().map(|r| r.eps));
        }
    }
    Ok(HourMetrics {
        hour,
        case: ac.case.clone(),
        voltage_gamma,
        reactive_eps,
    })
}

/// LAC versus DLAC hour by hour, with the mean and sample standard
/// deviation of every column.
pub fn multi_hour_report(hours: &[HourMetrics]) -> Table {
    let (a, b) = (SolutionModel::Lac, SolutionModel::Dlac);
    let columns = vec![
        format!("γ V ({a}) [p.u.]"),
        format!("γ V ({b}) [p.u.]"),
        "η V".to_string(),
        format!("ε Q ({a})"),
        format!("ε Q ({b})"),
        "η Q".to_string(),
    ];
    let column_kinds = vec![
        CellKind::PerUnit,
        CellKind::PerUnit,
        CellKind::Percent,
        CellKind::Percent,
        CellKind::Percent,
        CellKind::Percent,
    ];
    let mut rows: Vec<TableRow> = hours
        .iter()
        .map(|h| {
            let ga = h.voltage_gamma.get(&a).copied();
            let gb = h.voltage_gamma.get(&b).copied();
            let qa = h.reactive_eps.get(&a).copied().flatten();
            let qb = h.reactive_eps.get(&b).copied().flatten();
            let eta = |x: Option<f64>, y: Option<f64>| match (x, y) {
                (Some(x), Some(y)) => improvement(x, y).ok(),
                _ => None,
            };
            TableRow {
                label: format!("hour {:03}", h.hour),
                kind: CellKind::Percent,
                cells: vec![ga, gb, eta(ga, gb), qa, qb, eta(qa, qb)],
            }
        })
        .collect();
    let column = |j: usize| -> Vec<f64> { rows.iter().filter_map(|r| r.cells[j]).collect() };
    let means = (0..columns.len()).map(|j| mean(&column(j))).collect();
    let stds = (0..columns.len()).map(|j| sample_std(&column(j))).collect();
    rows.push(TableRow {
        label: "mean".into(),
        kind: CellKind::Percent,
        cells: means,
    });
    rows.push(TableRow {
        label: "std".into(),
        kind: CellKind::Percent,
        cells: stds,
    });
    Table {
        name: "multi_hour".into(),
        title: format!("{a} vs {b} across {} hours", hours.len()),
        columns,
        column_kinds,
        rows,
    }
}

/// All single-hour tables for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub case: String,
    pub flow_p: Table,
    pub flow_q: Table,
    pub voltage: Table,
    /// Absent when no model produces reactive flows or nothing passes the
    /// filter.
    pub complex_power: Option<ComplexPowerReport>,
}

impl ComparisonReport {
    pub fn tables(&self) -> Vec<&Table> {
        let mut out = vec![&self.flow_p, &self.flow_q, &self.voltage];
        if let Some(c) = &self.complex_power {
            out.push(&c.table);
        }
        out
    }
}

pub fn compare(
    net: &Network,
    ac: &SolutionRecord,
    models: &[SolutionRecord],
    opts: &ReportOptions,
) -> Result<ComparisonReport, MetricsError> {
    let lac_family: Vec<SolutionRecord> =
        models.iter().filter(|m| m.q_from().is_some()).cloned().collect();
    let complex_power = if lac_family.is_empty() {
        None
    } else {
        match complex_power_report(ac, &lac_family, opts.s_tol_mva) {
            Ok(r) => Some(r),
            Err(MetricsError::EmptyFilter) => None,
            Err(e) => return Err(e),
        }
    };
    Ok(ComparisonReport {
        case: ac.case.clone(),
        flow_p: flow_error_table(net, ac, models, &opts.p_tolerances_mw, FlowQuantity::P)?,
        flow_q: flow_error_table(net, ac, models, &opts.q_tolerances_mvar, FlowQuantity::Q)?,
        voltage: voltage_error_table(net, ac, models, &opts.kv_bands)?,
        complex_power,
    })
}
