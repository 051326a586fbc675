use crate::error::{AcnnError, Result};

/// Squared sample Pearson correlation.
pub fn pearson_r2(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(AcnnError::DegenerateInput(format!(
            "length mismatch {} vs {}",
            pred.len(),
            actual.len()
        )));
    }
    if pred.len() < 2 {
        return Err(AcnnError::DegenerateInput("need at least two points".into()));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&p, &a) in pred.iter().zip(actual) {
        let dp = p - mp;
        let da = a - ma;
        sxy += dp * da;
        sxx += dp * dp;
        syy += da * da;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AcnnError::DegenerateInput("constant vector".into()));
    }
    Ok(sxy * sxy / (sxx * syy))
}

/// Mean unsigned error.
pub fn mue(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(AcnnError::DegenerateInput(format!(
            "need equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64)
}
