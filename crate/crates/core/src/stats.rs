//! Student-t and F tail probabilities on top of the regularized incomplete
//! beta function.

use statrs::function::beta::checked_beta_reg;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    NumericalError(String),
}

fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    let v = checked_beta_reg(a, b, x)
        .map_err(|e| StatsError::InvalidArgument(format!("I_x({a}, {b}) at x = {x}: {e}")))?;
    if v.is_finite() && (-1e-12..=1.0 + 1e-12).contains(&v) {
        Ok(v.clamp(0.0, 1.0))
    } else {
        Err(StatsError::NumericalError(format!(
            "incomplete beta I_x({a}, {b}) at x = {x} did not converge ({v})"
        )))
    }
}

fn check_df(df: f64) -> Result<(), StatsError> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(StatsError::InvalidArgument(format!(
            "degrees of freedom must be positive, got {df}"
        )))
    }
}

/// `P(T ≤ t)` for Student's t with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df(df)?;
    if t.is_nan() {
        return Err(StatsError::InvalidArgument("t is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t))?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Inverse of [`t_cdf`] by bisection.
pub fn t_quantile(p: f64, df: f64) -> Result<f64, StatsError> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut hi: f64 = 1.0;
    while t_cdf(hi, df)? < p.max(1.0 - p) {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(StatsError::NumericalError(format!(
                "t quantile for p = {p}, df = {df} out of range"
            )));
        }
    }
    // Solve for the upper-tail quantile, then reflect.
    let target = p.max(1.0 - p);
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    let q = 0.5 * (lo + hi);
    Ok(if p > 0.5 { q } else { -q })
}

/// `P(F > f)` for the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_df(d1)?;
    check_df(d2)?;
    if f.is_nan() {
        return Err(StatsError::InvalidArgument("F is NaN".into()));
    }
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Smallest p-value printed as a number; anything below is shown as
/// `< 2.2e-16`.
pub const P_VALUE_FLOOR: f64 = 2.2e-16;

pub fn format_p_value(p: f64) -> String {
    if p < P_VALUE_FLOOR {
        "< 2.2e-16".to_string()
    } else {
        format!("{p:.4e}")
    }
}
