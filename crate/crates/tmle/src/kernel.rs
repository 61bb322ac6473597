//! Kernel primitives: product kernels over the covariate space, the
//! Nadaraya-Watson regression of the missingness indicator (on covariates
//! or on estimated score values), and kernel density estimation.
//!
//! Single-point and batch entry points share the same per-pair arithmetic,
//! so batch results match pointwise queries bitwise.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::Predictor;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Squared scaled distance beyond which a Gaussian-type weight is treated
/// as zero (exp(-80) < 2e-35, far below accumulation noise).
const Z_CUTOFF: f64 = 160.0;

/// Univariate kernel families. The product of univariate kernels is used
/// in several dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// Standard normal density; order 1.
    Gaussian,
    /// 0.75 (1 - u^2) on [-1, 1]; order 1.
    Epanechnikov,
    /// Fourth-order Gaussian 0.5 (3 - u^2) phi(u); orthogonal to u^2 and
    /// u^3, so order 3. Takes negative values.
    GaussianOrder4,
    /// Exact-match indicator 1{u = 0}; turns the kernel regression into
    /// empirical means within strata. Ignores the bandwidth.
    Discrete,
}

/// A kernel family together with its polynomial order (the highest power
/// the kernel is orthogonal to).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    /// Highest polynomial degree the kernel is orthogonal to; `None` for
    /// the discrete kernel, which is exact rather than smoothing.
    pub fn order(&self) -> Option<u32> {
        match self.family {
            KernelFamily::Gaussian | KernelFamily::Epanechnikov => Some(1),
            KernelFamily::GaussianOrder4 => Some(3),
            KernelFamily::Discrete => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::GaussianOrder4 => "gaussian4",
            KernelFamily::Discrete => "discrete",
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::new(KernelFamily::Gaussian)
    }
}

/// Positive smoothing bandwidth: one entry for scalar smoothing or one per
/// covariate dimension. Validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    values: Vec<f64>,
}

impl Bandwidth {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::NonpositiveBandwidth);
        }
        Ok(Self { values })
    }

    pub fn scalar(h: f64) -> Result<Self> {
        Self::new(vec![h])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reciprocals broadcast to dimension `d` (a scalar bandwidth applies
    /// to every dimension).
    pub fn reciprocals(&self, d: usize) -> Result<Vec<f64>> {
        if self.values.len() == 1 {
            Ok(vec![1.0 / self.values[0]; d])
        } else if self.values.len() == d {
            Ok(self.values.iter().map(|h| 1.0 / h).collect())
        } else {
            Err(Error::InvalidData(format!(
                "bandwidth has {} entries but the smoothing dimension is {d}",
                self.values.len()
            )))
        }
    }

    /// Scalar summary used for ordering candidate bandwidths (geometric
    /// mean across dimensions).
    pub fn magnitude(&self) -> f64 {
        let log_sum: f64 = self.values.iter().map(|h| h.ln()).sum();
        (log_sum / self.values.len() as f64).exp()
    }

    /// Multiply every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|h| h * c).collect())
    }
}

#[inline]
fn univariate_unnormalized(family: KernelFamily, t: f64) -> f64 {
    match family {
        KernelFamily::Gaussian => {
            let z = t * t;
            if z > Z_CUTOFF {
                0.0
            } else {
                (-0.5 * z).exp()
            }
        }
        KernelFamily::Epanechnikov => {
            let z = t * t;
            if z >= 1.0 {
                0.0
            } else {
                1.0 - z
            }
        }
        KernelFamily::GaussianOrder4 => {
            let z = t * t;
            if z > Z_CUTOFF {
                0.0
            } else {
                (3.0 - z) * (-0.5 * z).exp()
            }
        }
        KernelFamily::Discrete => {
            if t == 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Per-dimension normalizing constant of the univariate kernel.
#[inline]
fn univariate_constant(family: KernelFamily) -> f64 {
    match family {
        KernelFamily::Gaussian => INV_SQRT_2PI,
        KernelFamily::Epanechnikov => 0.75,
        KernelFamily::GaussianOrder4 => 0.5 * INV_SQRT_2PI,
        KernelFamily::Discrete => 1.0,
    }
}

/// Unnormalized product weight between two points, given reciprocal
/// bandwidths. This is the quantity shared by every kernel pass; the
/// Nadaraya-Watson ratio uses it directly since constants cancel.
#[inline]
pub(crate) fn pair_weight(family: KernelFamily, a: &[f64], b: &[f64], inv_h: &[f64]) -> f64 {
    match family {
        KernelFamily::Gaussian => {
            let mut z = 0.0;
            for k in 0..a.len() {
                let t = (a[k] - b[k]) * inv_h[k];
                z += t * t;
            }
            if z > Z_CUTOFF {
                0.0
            } else {
                (-0.5 * z).exp()
            }
        }
        _ => {
            let mut w = 1.0;
            for k in 0..a.len() {
                let t = (a[k] - b[k]) * inv_h[k];
                w *= univariate_unnormalized(family, t);
                if w == 0.0 {
                    return 0.0;
                }
            }
            w
        }
    }
}

/// Normalizing factor turning the unnormalized product weight into the
/// kernel value `prod_j (1/h_j) k(u_j / h_j)`. The discrete kernel carries
/// no bandwidth scaling.
#[inline]
pub(crate) fn normalizing_constant(family: KernelFamily, inv_h: &[f64]) -> f64 {
    if family == KernelFamily::Discrete {
        return 1.0;
    }
    let c = univariate_constant(family);
    inv_h.iter().map(|&r| c * r).product()
}

/// Evaluate the (normalized) product kernel at displacement `u`.
pub fn kernel_eval(u: &[f64], spec: &KernelSpec, h: &Bandwidth) -> Result<f64> {
    let inv_h = h.reciprocals(u.len())?;
    let zero = vec![0.0; u.len()];
    let w = pair_weight(spec.family, u, &zero, &inv_h);
    Ok(normalizing_constant(spec.family, &inv_h) * w)
}

/// Outcome of a Nadaraya-Watson query: the estimate and whether the
/// zero-mass fallback (global mean of the indicator) was taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwOutput {
    pub value: f64,
    pub fallback: bool,
}

/// Batch of Nadaraya-Watson estimates at every sample point.
#[derive(Debug, Clone)]
pub struct NwBatch {
    pub values: Vec<f64>,
    pub fallbacks: usize,
}

#[inline]
fn nw_ratio(num: f64, den: f64, fallback_value: f64) -> NwOutput {
    if den > 0.0 {
        NwOutput {
            value: (num / den).clamp(0.0, 1.0),
            fallback: false,
        }
    } else {
        NwOutput {
            value: fallback_value,
            fallback: true,
        }
    }
}

/// Kernel regression of the missingness indicator on the covariates,
/// evaluated at `w`. With the discrete kernel this is the empirical mean
/// of the indicator in the stratum `{W_i = w}`.
pub fn nw_regress_covariates(
    w: &[f64],
    dataset: &Dataset,
    spec: &KernelSpec,
    h: &Bandwidth,
) -> Result<NwOutput> {
    let inv_h = h.reciprocals(dataset.dim())?;
    if w.len() != dataset.dim() {
        return Err(Error::InvalidData("query dimension mismatch".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for o in dataset.iter() {
        let wt = pair_weight(spec.family, w, o.covariates(), &inv_h);
        den += wt;
        if o.observed() {
            num += wt;
        }
    }
    Ok(nw_ratio(num, den, dataset.observed_fraction()))
}

/// Kernel regression of the indicator on estimated score values: the
/// smoothing distance is `ghat(w) - ghat(W_i)`, univariate regardless of
/// the covariate dimension.
pub fn nw_regress_score(
    w: &[f64],
    ghat: &dyn Predictor,
    dataset: &Dataset,
    spec: &KernelSpec,
    h: &Bandwidth,
) -> Result<NwOutput> {
    let scores: Vec<f64> = dataset.iter().map(|o| ghat.predict(o.covariates())).collect();
    let a = dataset.indicator_vector();
    nw_scalar(ghat.predict(w), &scores, &a, spec, h)
}

/// Univariate Nadaraya-Watson on precomputed scalar values.
pub fn nw_scalar(
    query: f64,
    values: &[f64],
    indicators: &[f64],
    spec: &KernelSpec,
    h: &Bandwidth,
) -> Result<NwOutput> {
    let inv_h = h.reciprocals(1)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&v, &a) in values.iter().zip(indicators) {
        let wt = pair_weight(spec.family, &[query], &[v], &inv_h);
        den += wt;
        num += wt * a;
    }
    let global = crate::math::sum(indicators.iter().copied()) / indicators.len() as f64;
    Ok(nw_ratio(num, den, global))
}

/// Nadaraya-Watson estimates at every sample covariate point. Rows are
/// independent; each row sums over the full sample in index order, so the
/// result is identical at any worker count.
pub fn nw_covariates_all(dataset: &Dataset, spec: &KernelSpec, h: &Bandwidth) -> Result<NwBatch> {
    let d = dataset.dim();
    let inv_h = h.reciprocals(d)?;
    let x = dataset.covariate_matrix();
    let a = dataset.indicator_vector();
    let n = dataset.n();
    let global = dataset.observed_fraction();
    let family = spec.family;

    let rows = crate::exec::indexed_map(n, |i| {
        let wi = &x[i * d..(i + 1) * d];
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let wt = pair_weight(family, wi, &x[j * d..(j + 1) * d], &inv_h);
            den += wt;
            num += wt * a[j];
        }
        nw_ratio(num, den, global)
    });
    Ok(collect_batch(rows))
}

/// Univariate batch version of [`nw_scalar`] at every sample value.
pub fn nw_scalar_all(
    values: &[f64],
    indicators: &[f64],
    spec: &KernelSpec,
    h: &Bandwidth,
) -> Result<NwBatch> {
    let inv_h = h.reciprocals(1)?;
    let global = crate::math::sum(indicators.iter().copied()) / indicators.len() as f64;
    let family = spec.family;
    let n = values.len();

    let rows = crate::exec::indexed_map(n, |i| {
        let q = values[i];
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let wt = pair_weight(family, &[q], &[values[j]], &inv_h);
            den += wt;
            num += wt * indicators[j];
        }
        nw_ratio(num, den, global)
    });
    Ok(collect_batch(rows))
}

fn collect_batch(rows: Vec<NwOutput>) -> NwBatch {
    let fallbacks = rows.iter().filter(|r| r.fallback).count();
    NwBatch {
        values: rows.into_iter().map(|r| r.value).collect(),
        fallbacks,
    }
}

/// Kernel density estimate at `w`, clamped below at `delta_q`.
pub fn kde_density(
    w: &[f64],
    dataset: &Dataset,
    spec: &KernelSpec,
    h: &Bandwidth,
    delta_q: f64,
) -> Result<f64> {
    let inv_h = h.reciprocals(dataset.dim())?;
    let c = normalizing_constant(spec.family, &inv_h);
    let mut s = 0.0;
    for o in dataset.iter() {
        s += c * pair_weight(spec.family, w, o.covariates(), &inv_h);
    }
    Ok((s / dataset.n() as f64).max(delta_q))
}
