use crate::error::{Error, Result};

/// Default floor of the SMAPE denominator, µg/m³.
pub const DEFAULT_EPSILON: f64 = 1.0;

fn check_pairs(preds: &[f64], truths: &[f64]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::contract("metric over no pairs"));
    }
    Ok(())
}

/// One SMAPE term, `2|p - y| / max(|p| + |y|, eps)`.
pub fn smape_term(p: f64, y: f64, eps: f64) -> f64 {
    2.0 * (p - y).abs() / (p.abs() + y.abs()).max(eps)
}

/// Mean SMAPE over all pairs.
pub fn smape_metric(preds: &[f64], truths: &[f64], eps: f64) -> Result<f64> {
    check_pairs(preds, truths)?;
    let s: f64 = preds
        .iter()
        .zip(truths)
        .map(|(&p, &y)| smape_term(p, y, eps))
        .sum();
    Ok(s / preds.len() as f64)
}

pub fn rmse_metric(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_pairs(preds, truths)?;
    let s: f64 = preds
        .iter()
        .zip(truths)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum();
    Ok((s / preds.len() as f64).sqrt())
}
