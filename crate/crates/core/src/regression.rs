//! Regression datasets from AC snapshots, OLS fitting and diagnostics.
//!
//! Fits go through a Householder QR of the column-scaled design matrix: the
//! regressors span several orders of magnitude, so the normal equations are
//! never formed. Leverages and sequential sums of squares come from the same
//! factorization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ac_solver::AcSolution;
use crate::linear_models::{LinearError, ModelCoefficients};
use crate::network::{pi_equivalent, Network, NetworkError, PiEquivalent};
use crate::stats::{f_sf, t_quantile, StatsError};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("no solutions supplied")]
    NoSolutions,
    #[error("solution '{id}' does not match the network topology: {reason}")]
    TopologyMismatch { id: String, reason: String },
    #[error("{n} observations are too few for {p} fitted columns")]
    TooFewObservations { n: usize, p: usize },
    #[error("design matrix is rank deficient at column '{0}'")]
    RankDeficient(String),
    #[error("non-finite value in column '{0}'")]
    NonFinite(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// Identifies the observation behind a row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowKey {
    pub case: String,
    /// Index into `Network::branches`.
    pub branch: usize,
}

/// Regressors, raw response and the fixed offset removed from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    /// Subtracted from `y` before fitting.
    pub offset: Vec<f64>,
    pub row_keys: Vec<RowKey>,
    /// Fit a free scalar intercept in addition to the regressors.
    pub intercept: bool,
}

impl DesignMatrix {
    /// Dataset with zero offset and synthetic row keys.
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, names: Vec<String>) -> Self {
        let n = y.len();
        DesignMatrix {
            x,
            y,
            names,
            offset: vec![0.0; n],
            row_keys: (0..n)
                .map(|i| RowKey {
                    case: String::new(),
                    branch: i,
                })
                .collect(),
            intercept: false,
        }
    }

    pub fn with_intercept(mut self, on: bool) -> Self {
        self.intercept = on;
        self
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Response after removing the offset.
    pub fn response(&self) -> Vec<f64> {
        self.y.iter().zip(&self.offset).map(|(y, o)| y - o).collect()
    }

    /// Regressors with the intercept column prepended when enabled.
    fn full_columns(&self) -> (DMatrix<f64>, Vec<String>) {
        if !self.intercept {
            return (self.x.clone(), self.names.clone());
        }
        let n = self.n_obs();
        let mut x = DMatrix::from_element(n, self.x.ncols() + 1, 1.0);
        x.columns_mut(1, self.x.ncols()).copy_from(&self.x);
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(self.names.iter().cloned());
        (x, names)
    }

    /// Appends the rows of `other`, which must have the same columns.
    pub fn stack(&mut self, other: DesignMatrix) {
        assert_eq!(self.names, other.names, "stacking datasets with different columns");
        let n = self.n_obs();
        let m = other.n_obs();
        let mut x = DMatrix::zeros(n + m, self.x.ncols());
        x.rows_mut(0, n).copy_from(&self.x);
        x.rows_mut(n, m).copy_from(&other.x);
        self.x = x;
        self.y.extend(other.y);
        self.offset.extend(other.offset);
        self.row_keys.extend(other.row_keys);
    }
}

pub const INTERCEPT: &str = "(Intercept)";

/// A solved case and the identifier used in row keys and provenance.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub id: &'a str,
    pub solution: &'a AcSolution,
}

/// Per-branch quantities shared by the three assemblers.
struct Observation<'a> {
    key: RowKey,
    k: usize,
    pi: PiEquivalent,
    theta: f64,
    vi: f64,
    vj: f64,
    flow: &'a crate::ac_solver::BranchFlow,
}

fn observations<'a>(
    net: &Network,
    snapshots: &[Snapshot<'a>],
) -> Result<Vec<Observation<'a>>, RegressionError> {
    if snapshots.is_empty() {
        return Err(RegressionError::NoSolutions);
    }
    let branches: Vec<(usize, usize, usize)> =
        net.in_service_branches().map(|(k, f, t, _)| (k, f, t)).collect();
    let mut pis = Vec::with_capacity(branches.len());
    for &(k, _, _) in &branches {
        pis.push(pi_equivalent(&net.branches[k]).map_err(|e| e.at_branch(k))?);
    }
    let mut out = Vec::with_capacity(branches.len() * snapshots.len());
    for snap in snapshots {
        let sol = snap.solution;
        let mismatch = |reason: String| RegressionError::TopologyMismatch {
            id: snap.id.to_string(),
            reason,
        };
        if sol.vm.len() != net.n_buses() || sol.va.len() != net.n_buses() {
            return Err(mismatch(format!(
                "{} buses in solution, {} in network",
                sol.vm.len(),
                net.n_buses()
            )));
        }
        if sol.flows.len() != branches.len() {
            return Err(mismatch(format!(
                "{} branch flows in solution, {} in-service branches in network",
                sol.flows.len(),
                branches.len()
            )));
        }
        for ((&(k, f, t), flow), pi) in branches.iter().zip(&sol.flows).zip(&pis) {
            if flow.branch != k {
                return Err(mismatch(format!(
                    "flow for branch {} where branch {} was expected",
                    flow.branch + 1,
                    k + 1
                )));
            }
            out.push(Observation {
                key: RowKey {
                    case: snap.id.to_string(),
                    branch: k,
                },
                k,
                pi: *pi,
                theta: sol.va[f] - sol.va[t],
                vi: sol.vm[f],
                vj: sol.vm[t],
                flow,
            });
        }
    }
    Ok(out)
}

fn build(
    obs: Vec<Observation<'_>>,
    names: &[&str],
    row: impl Fn(&Observation<'_>) -> Result<(Vec<f64>, f64, f64), RegressionError>,
) -> Result<DesignMatrix, RegressionError> {
    let n = obs.len();
    let k = names.len();
    let mut x = DMatrix::zeros(n, k);
    let mut y = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    let mut row_keys = Vec::with_capacity(n);
    for (i, o) in obs.into_iter().enumerate() {
        let (cols, yi, off) = row(&o)?;
        for (j, v) in cols.into_iter().enumerate() {
            x[(i, j)] = v;
        }
        y.push(yi);
        offset.push(off);
        row_keys.push(o.key);
    }
    Ok(DesignMatrix {
        x,
        y,
        names: names.iter().map(|s| s.to_string()).collect(),
        offset,
        row_keys,
        intercept: false,
    })
}

pub const P_COLUMNS: [&str; 2] = ["theta_ij*b_ij", "(V_i-V_j)*g_ij"];
pub const Q_COLUMNS: [&str; 3] = ["V_i*b_sh", "theta_ij*g_ij", "(V_i-V_j)*b_ij"];
pub const DDC_COLUMNS: [&str; 1] = ["theta_ij/(x_ij*t_ij)"];

/// Active-flow dataset: `[−θ·b, (V_i−V_j)·g + 2·V_i·g_from]` against the
/// from-side AC flow. The tap end-shunt constant `−g_from` is the offset
/// (zero on unit-tap branches).
pub fn assemble_p_dataset(
    net: &Network,
    snapshots: &[Snapshot<'_>],
) -> Result<DesignMatrix, RegressionError> {
    build(observations(net, snapshots)?, &P_COLUMNS, |o| {
        let p = &o.pi;
        Ok((
            vec![
                -o.theta * p.b,
                (o.vi - o.vj) * p.g + 2.0 * o.vi * p.g_from,
            ],
            o.flow.p_from,
            -p.g_from,
        ))
    })
}

/// Reactive-flow dataset: `[−2·V_i·b_sh, −θ·g, −(V_i−V_j)·b]` against the
/// from-side AC flow, with the end shunt `b_sh` as offset.
pub fn assemble_q_dataset(
    net: &Network,
    snapshots: &[Snapshot<'_>],
) -> Result<DesignMatrix, RegressionError> {
    build(observations(net, snapshots)?, &Q_COLUMNS, |o| {
        let p = &o.pi;
        let b_sh = p.b_end_from();
        Ok((
            vec![
                -2.0 * o.vi * b_sh,
                -o.theta * p.g,
                -(o.vi - o.vj) * p.b,
            ],
            o.flow.q_from,
            b_sh,
        ))
    })
}

/// DC dataset: `θ/(x·t)` against the from-side AC active flow.
pub fn assemble_ddc_dataset(
    net: &Network,
    snapshots: &[Snapshot<'_>],
) -> Result<DesignMatrix, RegressionError> {
    build(observations(net, snapshots)?, &DDC_COLUMNS, |o| {
        let br = &net.branches[o.k];
        if br.x == 0.0 {
            return Err(RegressionError::Network(NetworkError::InvalidBranch {
                branch: o.k + 1,
                reason: "zero reactance is not allowed in the DC model".into(),
            }));
        }
        Ok((vec![o.theta / (br.x * br.tap)], o.flow.p_from, 0.0))
    })
}

/// Variance inflation factors, or why they are unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VifReport {
    /// Fewer than two regressors.
    NotApplicable,
    Values { vif: Vec<f64> },
    /// Perfect collinearity among the named columns.
    Infinite { columns: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub name: String,
    pub df: usize,
    pub sum_sq: f64,
    pub mean_sq: f64,
    /// Absent on the residual row.
    pub f_value: Option<f64>,
    pub pr_gt_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub intercept: bool,
    pub beta: Vec<f64>,
    pub stderr: Vec<f64>,
    pub ci95_lo: Vec<f64>,
    pub ci95_hi: Vec<f64>,
    pub ss_res: f64,
    pub ms_res: f64,
    pub r2_uncentered: f64,
    pub r2_centered: f64,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `e / √MS_res`; undefined when the fit is exact.
    pub standardized: Vec<Option<f64>>,
    /// Externally studentized residuals; undefined at leverage one.
    pub studentized: Vec<Option<f64>>,
    pub hat_diag: Vec<f64>,
    /// Observation behind each residual.
    pub row_keys: Vec<RowKey>,
    pub vif: VifReport,
    pub anova: Vec<AnovaRow>,
    pub n: usize,
    /// Number of fitted columns, including the intercept.
    pub k: usize,
}

impl FitResult {
    /// Uncentered R² without an intercept, centered with one.
    pub fn r2(&self) -> f64 {
        if self.intercept {
            self.r2_centered
        } else {
            self.r2_uncentered
        }
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.beta[j])
    }
}

/// Relative size of a QR pivot below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

struct Factored {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    scale: Vec<f64>,
}

/// QR of `x` after scaling every column to unit norm.
fn factor(x: &DMatrix<f64>, names: &[String]) -> Result<Factored, RegressionError> {
    let mut xs = x.clone();
    let mut scale = Vec::with_capacity(x.ncols());
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::NonFinite(names[j].clone()));
        }
        let norm = col.norm();
        if norm == 0.0 {
            return Err(RegressionError::RankDeficient(names[j].clone()));
        }
        col /= norm;
        scale.push(norm);
    }
    let qr = xs.qr();
    let r = qr.r();
    for j in 0..r.ncols() {
        if r[(j, j)].abs() <= RANK_TOL {
            return Err(RegressionError::RankDeficient(names[j].clone()));
        }
    }
    Ok(Factored {
        q: qr.q(),
        r,
        scale,
    })
}

/// Ordinary least squares of `y − offset` on the regressors.
pub fn ols_fit(d: &DesignMatrix) -> Result<FitResult, RegressionError> {
    let (x, names) = d.full_columns();
    let n = d.n_obs();
    let p = x.ncols();
    if n <= p {
        return Err(RegressionError::TooFewObservations { n, p });
    }
    let z = DVector::from_vec(d.response());
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite(format!("response row {}", i + 1)));
    }
    let fac = factor(&x, &names)?;

    let effects = fac.q.tr_mul(&z);
    let beta_s = fac
        .r
        .solve_upper_triangular(&effects)
        .ok_or_else(|| RegressionError::RankDeficient(names[p - 1].clone()))?;
    let beta: Vec<f64> = beta_s.iter().zip(&fac.scale).map(|(b, s)| b / s).collect();

    let fitted_v = &x * DVector::from_column_slice(&beta);
    let residuals: Vec<f64> = z.iter().zip(fitted_v.iter()).map(|(z, f)| z - f).collect();
    let fitted: Vec<f64> = fitted_v.iter().copied().collect();
    let ss_res: f64 = residuals.iter().map(|e| e * e).sum();
    let df_res = n - p;
    let ms_res = ss_res / df_res as f64;

    let hat_diag: Vec<f64> = fac
        .q
        .row_iter()
        .map(|row| row.norm_squared().min(1.0))
        .collect();

    // Unscaled covariance diagonal from R⁻¹R⁻ᵀ.
    let r_inv = fac
        .r
        .clone()
        .try_inverse()
        .ok_or_else(|| RegressionError::RankDeficient(names[p - 1].clone()))?;
    let t_crit = t_quantile(0.975, df_res as f64)?;
    let mut stderr = Vec::with_capacity(p);
    let mut ci95_lo = Vec::with_capacity(p);
    let mut ci95_hi = Vec::with_capacity(p);
    for j in 0..p {
        let var = r_inv.row(j).norm_squared() / (fac.scale[j] * fac.scale[j]);
        let se = (ms_res * var).sqrt();
        stderr.push(se);
        ci95_lo.push(beta[j] - t_crit * se);
        ci95_hi.push(beta[j] + t_crit * se);
    }

    let ss_total_raw: f64 = z.iter().map(|v| v * v).sum();
    let mean = z.mean();
    let ss_total_centered: f64 = z.iter().map(|v| (v - mean) * (v - mean)).sum();
    // Residuals at roundoff level count as an exact fit.
    let exact = ss_res <= 1e-20 * ss_total_raw;
    let r2_of = |total: f64| {
        if exact || ss_res <= 1e-20 * total {
            1.0
        } else {
            1.0 - ss_res / total
        }
    };

    let standardized = residuals
        .iter()
        .map(|e| (!exact && ms_res > 0.0).then(|| e / ms_res.sqrt()))
        .collect();
    let studentized = residuals
        .iter()
        .zip(&hat_diag)
        .map(|(e, h)| if exact { None } else { studentize(*e, *h, ms_res, df_res) })
        .collect();

    let vif = if d.x.ncols() < 2 {
        VifReport::NotApplicable
    } else {
        variance_inflation_factors(&d.x, &d.names)?
    };

    let mut anova = Vec::with_capacity(p + 1);
    let first = usize::from(d.intercept);
    for j in first..p {
        let ss = effects[j] * effects[j];
        let f = ss / ms_res;
        anova.push(AnovaRow {
            name: names[j].clone(),
            df: 1,
            sum_sq: ss,
            mean_sq: ss,
            f_value: Some(f),
            pr_gt_f: Some(f_sf(f, 1.0, df_res as f64)?),
        });
    }
    anova.push(AnovaRow {
        name: "Residuals".into(),
        df: df_res,
        sum_sq: ss_res,
        mean_sq: ms_res,
        f_value: None,
        pr_gt_f: None,
    });

    Ok(FitResult {
        names,
        intercept: d.intercept,
        beta,
        stderr,
        ci95_lo,
        ci95_hi,
        ss_res,
        ms_res,
        r2_uncentered: r2_of(ss_total_raw),
        r2_centered: r2_of(ss_total_centered),
        fitted,
        residuals,
        standardized,
        studentized,
        hat_diag,
        row_keys: d.row_keys.clone(),
        vif,
        anova,
        n,
        k: p,
    })
}

/// Externally studentized residual.
fn studentize(e: f64, h: f64, ms_res: f64, df_res: usize) -> Option<f64> {
    if df_res < 2 || 1.0 - h <= 1e-12 {
        return None;
    }
    let s2 = (df_res as f64 * ms_res - e * e / (1.0 - h)) / (df_res - 1) as f64;
    (s2 > 0.0).then(|| e / (s2 * (1.0 - h)).sqrt())
}

/// `1/(1−R_j²)` with `R_j²` from regressing column `j` on the others plus an
/// intercept.
pub fn variance_inflation_factors(
    x: &DMatrix<f64>,
    names: &[String],
) -> Result<VifReport, RegressionError> {
    let k = x.ncols();
    if k < 2 {
        return Ok(VifReport::NotApplicable);
    }
    let n = x.nrows();
    let mut vif = Vec::with_capacity(k);
    for j in 0..k {
        let others: Vec<usize> = (0..k).filter(|&c| c != j).collect();
        let xo = x.select_columns(&others);
        let onames: Vec<String> = others.iter().map(|&c| names[c].clone()).collect();
        let d = DesignMatrix::new(xo, x.column(j).iter().copied().collect(), onames)
            .with_intercept(true);
        if n <= k {
            return Err(RegressionError::TooFewObservations { n, p: k });
        }
        let ss_tot: f64 = {
            let m = x.column(j).mean();
            x.column(j).iter().map(|v| (v - m) * (v - m)).sum()
        };
        let fit = match ols_core_ss_res(&d) {
            Ok(ss) => ss,
            Err(RegressionError::RankDeficient(_)) => {
                return Ok(VifReport::Infinite {
                    columns: collinear_columns(x, names),
                })
            }
            Err(e) => return Err(e),
        };
        if ss_tot == 0.0 || fit <= 1e-24 * ss_tot {
            return Ok(VifReport::Infinite {
                columns: collinear_columns(x, names),
            });
        }
        vif.push(ss_tot / fit);
    }
    Ok(VifReport::Values { vif })
}

/// Residual sum of squares only; avoids recursing into diagnostics.
fn ols_core_ss_res(d: &DesignMatrix) -> Result<f64, RegressionError> {
    let (x, names) = d.full_columns();
    let fac = factor(&x, &names)?;
    let z = DVector::from_vec(d.response());
    let effects = fac.q.tr_mul(&z);
    Ok((z.norm_squared() - effects.norm_squared()).max(0.0))
}

/// Columns that are exact linear combinations (with a constant) of earlier
/// columns, together with the earlier columns involved.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let n = x.nrows();
    let with_const = |cols: &[usize]| {
        let mut m = DMatrix::from_element(n, cols.len() + 1, 1.0);
        for (c, &src) in cols.iter().enumerate() {
            m.set_column(c + 1, &x.column(src));
        }
        let labels: Vec<String> = std::iter::once(INTERCEPT.to_string())
            .chain(cols.iter().map(|&c| names[c].clone()))
            .collect();
        (m, labels)
    };
    let mut kept: Vec<usize> = Vec::new();
    let mut involved = vec![false; x.ncols()];
    for j in 0..x.ncols() {
        let mut cols = kept.clone();
        cols.push(j);
        let (m, labels) = with_const(&cols);
        if factor(&m, &labels).is_ok() {
            kept.push(j);
            continue;
        }
        involved[j] = true;
        // Which earlier columns carry weight in the dependency.
        let (base, base_labels) = with_const(&kept);
        if let Ok(fac) = factor(&base, &base_labels) {
            let target = DVector::from_iterator(n, x.column(j).iter().copied());
            if let Some(coef) = fac.r.solve_upper_triangular(&fac.q.tr_mul(&target)) {
                let size = target.norm().max(f64::MIN_POSITIVE);
                for (c, &src) in kept.iter().enumerate() {
                    if coef[c + 1].abs() > 1e-8 * size {
                        involved[src] = true;
                    }
                }
            }
        }
    }
    names
        .iter()
        .zip(involved)
        .filter(|(_, hit)| *hit)
        .map(|(name, _)| name.clone())
        .collect()
}

/// Type-I (sequential) analysis of variance in column order.
pub fn anova_sequential(d: &DesignMatrix) -> Result<Vec<AnovaRow>, RegressionError> {
    Ok(ols_fit(d)?.anova)
}

/// Coefficients plus the three fits they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub coefficients: ModelCoefficients,
    pub p: FitResult,
    pub q: FitResult,
    pub ddc: FitResult,
}

/// Fits K_A1..K_A5 and K_D on the training snapshots.
pub fn fit_model_coefficients(
    net: &Network,
    training: &[Snapshot<'_>],
) -> Result<ModelFit, RegressionError> {
    let p = ols_fit(&assemble_p_dataset(net, training)?)?;
    let q = ols_fit(&assemble_q_dataset(net, training)?)?;
    let ddc = ols_fit(&assemble_ddc_dataset(net, training)?)?;
    let coefficients = ModelCoefficients {
        k_d: ddc.beta[0],
        k_a: [p.beta[0], p.beta[1], q.beta[0], q.beta[1], q.beta[2]],
        trained_on: training.iter().map(|s| s.id.to_string()).collect(),
        fit_stats_ref: None,
    };
    coefficients.validate()?;
    Ok(ModelFit {
        coefficients,
        p,
        q,
        ddc,
    })
}
