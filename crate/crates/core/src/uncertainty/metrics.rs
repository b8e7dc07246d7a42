use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub comparison: String,
    /// `+inf` when `mse == 0`.
    pub psnr: f64,
    pub mse: f64,
    pub nmse: f64,
}

fn check(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            lhs: vec![pred.len()],
            rhs: vec![reference.len()],
        });
    }
    Ok(())
}

pub fn mse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check(pred, reference)?;
    let sq: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok(sq / pred.len() as f64)
}

/// `Σ(pred − ref)² / Σ ref²`.
pub fn nmse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check(pred, reference)?;
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::Domain("nmse is undefined for an all-zero reference".into()));
    }
    Ok(num / den)
}

/// PSNR, MSE and NMSE of `pred` against `reference` over a flattened
/// evaluation set. The PSNR peak is `max |ref|`.
pub fn metrics(comparison: &str, pred: &[f64], reference: &[f64]) -> Result<MetricRow> {
    let mse = mse(pred, reference)?;
    let nmse = nmse(pred, reference)?;
    let peak = reference.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    Ok(MetricRow {
        comparison: comparison.to_string(),
        psnr,
        mse,
        nmse,
    })
}

/// Variance comparisons are made on standard deviations.
pub fn variance_metrics(comparison: &str, pred_var: &[f64], reference_var: &[f64]) -> Result<MetricRow> {
    let sd = |v: &[f64]| v.iter().map(|x| x.max(0.0).sqrt()).collect::<Vec<_>>();
    metrics(comparison, &sd(pred_var), &sd(reference_var))
}
