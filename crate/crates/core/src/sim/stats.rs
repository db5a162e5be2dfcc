use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Per-method mean cost divided by the largest per-method mean. A method
/// whose mean is the largest scores exactly 1; if every mean is zero all
/// scores are zero.
pub fn normalized_cost<K: Ord + Clone>(costs: &BTreeMap<K, Vec<f64>>) -> Result<BTreeMap<K, f64>> {
    let mut means = BTreeMap::new();
    for (k, v) in costs {
        if v.is_empty() {
            return Err(Error::InvalidArgument("every method needs at least one run".into()));
        }
        means.insert(k.clone(), v.iter().sum::<f64>() / v.len() as f64);
    }
    let max = means.values().cloned().fold(0.0, f64::max);
    Ok(means
        .into_iter()
        .map(|(k, m)| (k, if max > 0.0 { m / max } else { 0.0 }))
        .collect())
}

pub fn cost_normalized_error(norm_cost: f64, sum_sq_error: f64) -> Result<f64> {
    if !(norm_cost >= 0.0 && sum_sq_error >= 0.0) {
        return Err(Error::InvalidArgument("normalized cost and error must be non-negative".into()));
    }
    Ok(norm_cost * sum_sq_error)
}

/// Two-sided `(1 - alpha)` envelope for the run-average NEES of a
/// `dim`-dimensional error over `runs` Monte Carlo runs.
pub fn chi_square_envelope(dim: usize, runs: usize, alpha: f64) -> Result<(f64, f64)> {
    if dim == 0 || runs == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("invalid chi-square envelope parameters".into()));
    }
    let dof = (dim * runs) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let lo = chi.inverse_cdf(alpha / 2.0) / runs as f64;
    let hi = chi.inverse_cdf(1.0 - alpha / 2.0) / runs as f64;
    Ok((lo, hi))
}
