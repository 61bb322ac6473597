//! The plug-in parameter functional, its first-order canonical gradient,
//! and the second- and third-order remainder terms used as simulation
//! diagnostics when the true nuisances are known.

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::math;
use crate::nuisance::{NuisancePair, Predictor, Truncation};

/// Plug-in mean: the outcome regression averaged over the empirical
/// covariate distribution.
pub fn plugin_mean(dataset: &Dataset, qbar: &dyn Predictor) -> Result<f64> {
    if dataset.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let total = math::sum(dataset.iter().map(|o| qbar.predict(o.covariates())));
    Ok(total / dataset.n() as f64)
}

/// Value-level canonical gradient:
/// `(a / g)(y - qbar) + qbar - psi`, with the inverse-weighted term absent
/// for unobserved units.
#[inline]
pub fn eif_value(a: bool, y: f64, qbar_w: f64, g_w: f64, psi: f64) -> f64 {
    let correction = if a { (y - qbar_w) / g_w } else { 0.0 };
    correction + qbar_w - psi
}

/// Canonical gradient of the mean-outcome functional at one observation,
/// evaluated with the truncated nuisances.
pub fn eif_d1(
    obs: &Observation,
    nuisance: &NuisancePair,
    psi: f64,
    trunc: &Truncation,
) -> Result<f64> {
    let w = obs.covariates();
    let qbar_w = nuisance.qbar_at(w);
    let g_w = nuisance.g_at(w, trunc);
    if g_w <= 0.0 {
        return Err(Error::Positivity(format!("score {g_w} at w = {w:?}")));
    }
    let y = if obs.observed() {
        obs.outcome().ok_or(Error::MissingOutcome)?
    } else {
        0.0
    };
    Ok(eif_value(obs.observed(), y, qbar_w, g_w, psi))
}

/// Second-order remainder of the first-order expansion, evaluated as a
/// weighted average over the supplied covariate points:
/// `(1 - g0/g)(qbar - qbar0)`. Requires the truth, so this is a
/// simulation-only diagnostic.
pub fn remainder_r2(
    points: &[Vec<f64>],
    weights: &[f64],
    nuisance: &NuisancePair,
    truth: &NuisancePair,
) -> Result<f64> {
    weighted_average(points, weights, |w| {
        let g = nuisance.g.predict(w);
        if g <= 0.0 {
            return Err(Error::Positivity(format!("score {g} at w = {w:?}")));
        }
        let g0 = truth.g.predict(w);
        let dq = nuisance.qbar.predict(w) - truth.qbar.predict(w);
        Ok((1.0 - g0 / g) * dq)
    })
}

/// Third-order remainder of the second-order expansion:
/// `(1 - g0 q0 / (g q))(1 - g0/g)(qbar - qbar0)`, with the density ratio
/// `q0/q` supplied as an opaque callable so either reading of the marginal
/// density (covariate density or density of the score values) plugs in.
pub fn remainder_r3(
    points: &[Vec<f64>],
    weights: &[f64],
    nuisance: &NuisancePair,
    density_ratio: &dyn Fn(&[f64]) -> f64,
    truth: &NuisancePair,
) -> Result<f64> {
    weighted_average(points, weights, |w| {
        let g = nuisance.g.predict(w);
        if g <= 0.0 {
            return Err(Error::Positivity(format!("score {g} at w = {w:?}")));
        }
        let g0 = truth.g.predict(w);
        let dq = nuisance.qbar.predict(w) - truth.qbar.predict(w);
        Ok((1.0 - (g0 / g) * density_ratio(w)) * (1.0 - g0 / g) * dq)
    })
}

fn weighted_average(
    points: &[Vec<f64>],
    weights: &[f64],
    f: impl Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if points.len() != weights.len() {
        return Err(Error::InvalidData("points/weights length mismatch".into()));
    }
    let mut values = Vec::with_capacity(points.len());
    for (w, &wt) in points.iter().zip(weights) {
        values.push(wt * f(w)?);
    }
    let total_weight = math::sum(weights.iter().copied());
    if total_weight <= 0.0 {
        return Err(Error::InvalidData("nonpositive total weight".into()));
    }
    Ok(math::sum(values) / total_weight)
}
