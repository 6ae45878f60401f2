//! Least-squares power-law fits `value ≈ e^{intercept} · t^{slope}`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Log-log regression result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    /// Natural-log intercept.
    pub intercept: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Coefficient of determination in log space.
    pub r2: f64,
    pub points: usize,
}

impl ExponentFit {
    pub fn predict(&self, t: f64) -> f64 {
        (self.intercept + self.slope * t.ln()).exp()
    }
}

/// Fits `ln value = intercept + slope · ln t` over all points.
pub fn fit_power_law(t: &[f64], value: &[f64]) -> Result<ExponentFit> {
    if t.len() != value.len() {
        return Err(LabError::Data(format!(
            "fit needs matching lengths, got {} times and {} values",
            t.len(),
            value.len()
        )));
    }
    if t.len() < 2 {
        return Err(LabError::Data("fit needs at least two points".into()));
    }
    if let Some((ti, vi)) = t.iter().zip(value).find(|(ti, vi)| !(**ti > 0.0 && **vi > 0.0)) {
        return Err(LabError::Data(format!(
            "log-log fit needs positive times and values, got ({ti}, {vi})"
        )));
    }
    let xs: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = value.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LabError::Data("fit needs at least two distinct times".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let t_min = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        slope,
        intercept,
        t_min,
        t_max,
        r2,
        points: t.len(),
    })
}

/// Fits the points of `series` lying in `window` (default: the last decade
/// `[t_max/10, t_max]`). Requires at least five points in the window.
pub fn fit_spreading_exponent(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<ExponentFit> {
    if series.is_empty() {
        return Err(LabError::Data("empty series".into()));
    }
    let t_last = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = window.unwrap_or((t_last / 10.0, t_last));
    if !(lo < hi) {
        return Err(LabError::Data(format!("empty fit window [{lo}, {hi}]")));
    }
    let tol = 1e-9 * hi.abs().max(1.0);
    let (t, v): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(t, _)| *t >= lo - tol && *t <= hi + tol)
        .cloned()
        .unzip();
    if t.len() < 5 {
        return Err(LabError::Data(format!(
            "fit window [{lo}, {hi}] holds {} points; at least 5 are needed",
            t.len()
        )));
    }
    fit_power_law(&t, &v)
}
