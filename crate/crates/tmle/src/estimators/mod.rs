//! The four estimators of the mean outcome under missingness at random:
//! the first-order targeted estimator, two targeted variants that add a
//! kernel-smoothed contrast covariate (smoothing on the covariates or on
//! the estimated score values), and a one-step second-order comparator
//! that corrects the plug-in directly instead of updating it.

mod ate;
mod bootstrap;

pub use ate::{ate, scale_outcome, unscale, AteData, AteReport, AteRow, ScaledOutcome};
pub use bootstrap::{bootstrap_se, BootstrapOutcome};

use std::sync::Arc;

use crate::bandwidth::{self, BandwidthTarget};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fluctuation::{
    fit_fluctuation, update_qbar, CovariateFn, FluctuationMode, FluctuationProblem,
    DEFAULT_FLUCTUATION_MAX_ITER, DEFAULT_FLUCTUATION_TOL,
};
use crate::influence::eif_value;
use crate::kernel::{self, Bandwidth, KernelSpec};
use crate::learners::LearnerPair;
use crate::math::{expit, logit, mean, normal_quantile, sample_variance};
use crate::nuisance::{NuisancePair, Predictor, PredictorRef, Truncation};

/// Which estimator a report came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorName {
    Tmle1,
    Tmle1Star,
    Tmle2,
    Robins2,
}

impl EstimatorName {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorName::Tmle1 => "tmle1",
            EstimatorName::Tmle1Star => "tmle1star",
            EstimatorName::Tmle2 => "tmle2",
            EstimatorName::Robins2 => "robins2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tmle1" => Ok(EstimatorName::Tmle1),
            "tmle1star" => Ok(EstimatorName::Tmle1Star),
            "tmle2" => Ok(EstimatorName::Tmle2),
            "robins2" => Ok(EstimatorName::Robins2),
            other => Err(Error::InvalidConfig(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for EstimatorName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the smoothing bandwidth is chosen.
#[derive(Debug, Clone)]
pub enum BandwidthPolicy {
    /// Scott-type plug-in rule on the smoothed values.
    DefaultRule,
    /// Cross-validated selection over a grid of multiples of the default
    /// rule.
    CvSelect { folds: usize },
    Fixed(Bandwidth),
}

/// How the standard error is obtained.
#[derive(Debug, Clone)]
pub enum VarianceMode {
    /// Sample variance of the influence values divided by n.
    Influence,
    /// Externally supplied variance of the estimator (used by the
    /// simulation harness to isolate bias from variance estimation).
    Known(f64),
    /// Nonparametric resample-and-refit bootstrap. With `refit_nuisance`
    /// the whole pipeline including the initial fits is re-run per
    /// resample (requires [`estimate_with_learners`]); otherwise only the
    /// targeting step is refitted.
    Bootstrap {
        replicates: usize,
        refit_nuisance: bool,
    },
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub estimator: EstimatorName,
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthPolicy,
    pub fluctuation: FluctuationMode,
    pub truncation: Truncation,
    pub ci_level: f64,
    pub variance: VarianceMode,
    /// Seed for the bootstrap resamples and the cross-validation folds.
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorName::Tmle1,
            kernel: KernelSpec::default(),
            bandwidth: BandwidthPolicy::DefaultRule,
            fluctuation: FluctuationMode::Covariate,
            truncation: Truncation::default(),
            ci_level: 0.95,
            variance: VarianceMode::Influence,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci level {} outside (0,1)",
                self.ci_level
            )));
        }
        if let VarianceMode::Bootstrap { replicates, .. } = self.variance {
            if replicates < 100 {
                return Err(Error::InvalidConfig(format!(
                    "bootstrap needs at least 100 replicates, got {replicates}"
                )));
            }
        }
        if let BandwidthPolicy::CvSelect { folds } = self.bandwidth {
            if folds < 2 {
                return Err(Error::InvalidConfig("cv needs at least 2 folds".into()));
            }
        }
        if !(0.0 < self.truncation.delta_g && self.truncation.delta_g < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "score truncation {} outside (0, 0.5)",
                self.truncation.delta_g
            )));
        }
        Ok(())
    }

    fn with_variance(&self, variance: VarianceMode) -> Self {
        let mut c = self.clone();
        c.variance = variance;
        c
    }
}

/// Diagnostics attached to every report.
#[derive(Debug, Clone, Default)]
pub struct ReportFlags {
    /// The raw score dropped below the truncation bound somewhere.
    pub positivity: bool,
    /// Point estimate left [0, 1] (possible only for the one-step
    /// comparator, which is not a substitution estimator).
    pub out_of_range: bool,
    /// The smoothed contrast column was collinear with the inverse score
    /// and was dropped, degrading the update to first order.
    pub collinear_dropped: bool,
    /// Kernel regression queries that fell back to the global mean.
    pub nw_fallbacks: usize,
    /// Density evaluations clamped at the lower bound (comparator only).
    pub kde_clamped: usize,
    /// Value of the pairwise second-order correction sum (comparator only).
    pub pn2_d2: Option<f64>,
    /// Contribution of the diagonal pairs to the correction (comparator
    /// only; reported because the diagonal is O(K_h(0)/n)).
    pub pn2_d2_diagonal: Option<f64>,
    /// Bootstrap replicates that failed and were dropped.
    pub bootstrap_failures: usize,
}

/// A point estimate with its uncertainty and fitted targeting state.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub estimator: EstimatorName,
    pub psi: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub epsilon: Vec<f64>,
    pub score_residuals: Vec<f64>,
    pub bandwidth_used: Option<Bandwidth>,
    pub flags: ReportFlags,
}

/// Which values the smoothed contrast covariate is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SmoothingKind {
    Covariates,
    ScoreValues,
}

/// First-order targeted estimator: single inverse-score covariate.
pub fn tmle1(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    tmle_pipeline(dataset, nuisance, config, EstimatorName::Tmle1, None)
}

/// Targeted estimator with a second covariate built from kernel smoothing
/// of the indicator on the covariate vector.
pub fn tmle2(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    tmle_pipeline(
        dataset,
        nuisance,
        config,
        EstimatorName::Tmle2,
        Some(SmoothingKind::Covariates),
    )
}

/// Targeted estimator whose second covariate smooths on the estimated
/// score values instead of the covariates, so the smoothing is univariate
/// in any dimension.
pub fn tmle1star(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    tmle_pipeline(
        dataset,
        nuisance,
        config,
        EstimatorName::Tmle1Star,
        Some(SmoothingKind::ScoreValues),
    )
}

/// Dispatch on the configured estimator.
pub fn estimate(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    match config.estimator {
        EstimatorName::Tmle1 => tmle1(dataset, nuisance, config),
        EstimatorName::Tmle1Star => tmle1star(dataset, nuisance, config),
        EstimatorName::Tmle2 => tmle2(dataset, nuisance, config),
        EstimatorName::Robins2 => robins_so(dataset, nuisance, config),
    }
}

/// Fit the initial nuisances with the supplied learners, then estimate.
/// This is the entry point that supports the full-refit bootstrap.
pub fn estimate_with_learners(
    dataset: &Dataset,
    learners: &LearnerPair,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    config.validate()?;
    let nuisance = learners.fit(dataset)?;
    match config.variance {
        VarianceMode::Bootstrap {
            replicates,
            refit_nuisance: true,
        } => {
            let mut report = estimate(dataset, &nuisance, &config.with_variance(VarianceMode::Influence))?;
            let inner = config.with_variance(VarianceMode::Known(0.0));
            let pipeline = move |ds: &Dataset| -> Result<f64> {
                let nu = learners.fit(ds)?;
                Ok(estimate(ds, &nu, &inner)?.psi)
            };
            let boot = bootstrap_se(dataset, &pipeline, replicates, config.seed, config.ci_level)?;
            report.se = boot.se;
            report.ci_lower = boot.ci_lower;
            report.ci_upper = boot.ci_upper;
            report.flags.bootstrap_failures = boot.failures;
            Ok(report)
        }
        _ => estimate(dataset, &nuisance, config),
    }
}

/// Sandwich variance of the plug-in: sample variance of the canonical
/// gradient divided by n.
pub fn influence_variance(
    dataset: &Dataset,
    qbar_star: &dyn Predictor,
    g: &dyn Predictor,
    psi: f64,
    trunc: &Truncation,
) -> Result<f64> {
    let n = dataset.n();
    if n < 2 {
        return Err(Error::InvalidData(
            "influence variance needs at least 2 observations".into(),
        ));
    }
    let values: Vec<f64> = dataset
        .iter()
        .map(|o| {
            let w = o.covariates();
            let q = qbar_star.predict(w).clamp(
                crate::nuisance::QBAR_EPS,
                1.0 - crate::nuisance::QBAR_EPS,
            );
            let gv = g.predict(w).clamp(trunc.delta_g, 1.0);
            eif_value(o.observed(), o.outcome().unwrap_or(0.0), q, gv, psi)
        })
        .collect();
    Ok(sample_variance(&values) / n as f64)
}

/// Everything the targeting step produces, including a predictor usable at
/// points outside the fitted sample (the cross-validation selector needs
/// this to score validation folds).
pub(crate) struct TargetedFit {
    pub psi: f64,
    pub epsilon: Vec<f64>,
    pub score_residuals: Vec<f64>,
    pub qstar_values: Vec<f64>,
    pub collinear_dropped: bool,
    pub nw_fallbacks: usize,
}

impl TargetedFit {
    /// Build the updated outcome regression as a standalone predictor.
    pub fn predictor(
        &self,
        dataset: &Dataset,
        nuisance: &NuisancePair,
        kernel: &KernelSpec,
        bandwidth: Option<&Bandwidth>,
        kind: Option<SmoothingKind>,
        trunc: &Truncation,
        mode: FluctuationMode,
    ) -> PredictorRef {
        let g = nuisance.g.clone();
        let trunc = *trunc;
        let columns = self.epsilon.len();
        let h_fn: CovariateFn = match (kind, mode) {
            (_, FluctuationMode::Weighted) => Arc::new(|_w: &[f64]| vec![1.0]),
            (None, _) => {
                let g = g.clone();
                Arc::new(move |w: &[f64]| vec![1.0 / g.predict(w).clamp(trunc.delta_g, 1.0)])
            }
            (Some(SmoothingKind::Covariates), _) => {
                let g = g.clone();
                let data = dataset.clone();
                let spec = *kernel;
                let h = bandwidth.expect("smoothing requires a bandwidth").clone();
                Arc::new(move |w: &[f64]| {
                    let gv = g.predict(w).clamp(trunc.delta_g, 1.0);
                    let h1 = 1.0 / gv;
                    if columns < 2 {
                        return vec![h1];
                    }
                    let gh = kernel::nw_regress_covariates(w, &data, &spec, &h)
                        .map(|o| o.value)
                        .unwrap_or(gv);
                    vec![h1, h1 * (1.0 - gh / gv)]
                })
            }
            (Some(SmoothingKind::ScoreValues), _) => {
                let g = g.clone();
                let spec = *kernel;
                let h = bandwidth.expect("smoothing requires a bandwidth").clone();
                let scores: Vec<f64> = dataset
                    .iter()
                    .map(|o| g.predict(o.covariates()).clamp(trunc.delta_g, 1.0))
                    .collect();
                let indicators = dataset.indicator_vector();
                Arc::new(move |w: &[f64]| {
                    let gv = g.predict(w).clamp(trunc.delta_g, 1.0);
                    let h1 = 1.0 / gv;
                    if columns < 2 {
                        return vec![h1];
                    }
                    let gh = kernel::nw_scalar(gv, &scores, &indicators, &spec, &h)
                        .map(|o| o.value)
                        .unwrap_or(gv);
                    vec![h1, h1 * (1.0 - gh / gv)]
                })
            }
        };
        update_qbar(nuisance.qbar.clone(), self.epsilon.clone(), h_fn)
    }
}

/// Run the targeting step and evaluate the plug-in. Shared by the three
/// targeted estimators and the cross-validation selector.
pub(crate) fn targeted_fit(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    kernel: &KernelSpec,
    bandwidth: Option<&Bandwidth>,
    kind: Option<SmoothingKind>,
    trunc: &Truncation,
    mode: FluctuationMode,
) -> Result<TargetedFit> {
    if mode == FluctuationMode::Weighted && kind.is_some() {
        return Err(Error::InvalidConfig(
            "the weighted fluctuation applies only to the single-covariate update".into(),
        ));
    }
    let n = dataset.n();
    let mut qhat = Vec::with_capacity(n);
    let mut ghat = Vec::with_capacity(n);
    for o in dataset.iter() {
        qhat.push(nuisance.qbar_at(o.covariates()));
        ghat.push(nuisance.g_at(o.covariates(), trunc));
    }
    let h1: Vec<f64> = ghat.iter().map(|g| 1.0 / g).collect();

    let (h2, nw_fallbacks) = match kind {
        None => (None, 0),
        Some(SmoothingKind::Covariates) => {
            let h = bandwidth.ok_or_else(|| {
                Error::InvalidConfig("covariate smoothing requires a bandwidth".into())
            })?;
            let batch = kernel::nw_covariates_all(dataset, kernel, h)?;
            let col: Vec<f64> = (0..n)
                .map(|i| h1[i] * (1.0 - batch.values[i] / ghat[i]))
                .collect();
            (Some(col), batch.fallbacks)
        }
        Some(SmoothingKind::ScoreValues) => {
            let h = bandwidth.ok_or_else(|| {
                Error::InvalidConfig("score smoothing requires a bandwidth".into())
            })?;
            let indicators = dataset.indicator_vector();
            let batch = kernel::nw_scalar_all(&ghat, &indicators, kernel, h)?;
            let col: Vec<f64> = (0..n)
                .map(|i| h1[i] * (1.0 - batch.values[i] / ghat[i]))
                .collect();
            (Some(col), batch.fallbacks)
        }
    };

    // targeting rows: observed units only
    let mut offsets = Vec::new();
    let mut outcomes = Vec::new();
    let mut col1 = Vec::new();
    let mut col2 = Vec::new();
    for (i, o) in dataset.iter().enumerate() {
        if o.observed() {
            offsets.push(logit(qhat[i]));
            outcomes.push(o.outcome().ok_or(Error::MissingOutcome)?);
            col1.push(h1[i]);
            if let Some(h2) = &h2 {
                col2.push(h2[i]);
            }
        }
    }
    let mut columns = vec![col1];
    if !col2.is_empty() {
        columns.push(col2);
    }
    let problem = FluctuationProblem::new(offsets, columns, outcomes, mode)?;
    let collinear_dropped = problem.collinear_dropped();
    let fit = fit_fluctuation(&problem, DEFAULT_FLUCTUATION_TOL, DEFAULT_FLUCTUATION_MAX_ITER)?;
    let eps = &fit.epsilon;

    let qstar_values: Vec<f64> = (0..n)
        .map(|i| {
            let mut eta = logit(qhat[i]);
            match mode {
                FluctuationMode::Weighted => eta += eps[0],
                FluctuationMode::Covariate => {
                    eta += eps[0] * h1[i];
                    if eps.len() == 2 {
                        eta += eps[1] * h2.as_ref().expect("two columns imply a contrast")[i];
                    }
                }
            }
            expit(eta)
        })
        .collect();
    let psi = mean(&qstar_values);

    Ok(TargetedFit {
        psi,
        epsilon: fit.epsilon,
        score_residuals: fit.score_residuals,
        qstar_values,
        collinear_dropped,
        nw_fallbacks,
    })
}

fn resolve_bandwidth(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
    kind: SmoothingKind,
    name: EstimatorName,
) -> Result<Bandwidth> {
    match &config.bandwidth {
        BandwidthPolicy::Fixed(h) => Ok(h.clone()),
        BandwidthPolicy::DefaultRule => match kind {
            SmoothingKind::Covariates => {
                bandwidth::default_bandwidth(dataset, BandwidthTarget::Covariates)
            }
            SmoothingKind::ScoreValues => {
                let scores: Vec<f64> = dataset
                    .iter()
                    .map(|o| nuisance.g_at(o.covariates(), &config.truncation))
                    .collect();
                bandwidth::default_bandwidth(dataset, BandwidthTarget::ScoreValues(&scores))
            }
        },
        BandwidthPolicy::CvSelect { folds } => {
            let selection = bandwidth::cv_bandwidth(
                dataset,
                nuisance,
                &bandwidth::default_candidate_grid(dataset, nuisance, config, kind)?,
                *folds,
                name,
                config,
            )?;
            Ok(selection.bandwidth)
        }
    }
}

fn tmle_pipeline(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
    name: EstimatorName,
    kind: Option<SmoothingKind>,
) -> Result<EstimateReport> {
    config.validate()?;
    let trunc = &config.truncation;
    let bandwidth = match kind {
        Some(k) => Some(resolve_bandwidth(dataset, nuisance, config, k, name)?),
        None => None,
    };
    let fit = targeted_fit(
        dataset,
        nuisance,
        &config.kernel,
        bandwidth.as_ref(),
        kind,
        trunc,
        config.fluctuation,
    )?;

    let positivity = dataset
        .iter()
        .any(|o| nuisance.g_raw(o.covariates()) < trunc.delta_g);
    let mut flags = ReportFlags {
        positivity,
        collinear_dropped: fit.collinear_dropped,
        nw_fallbacks: fit.nw_fallbacks,
        ..ReportFlags::default()
    };

    let (se, ci_lower, ci_upper) = match &config.variance {
        VarianceMode::Influence => {
            let ghat: Vec<f64> = dataset
                .iter()
                .map(|o| nuisance.g_at(o.covariates(), trunc))
                .collect();
            let values: Vec<f64> = dataset
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    eif_value(
                        o.observed(),
                        o.outcome().unwrap_or(0.0),
                        fit.qstar_values[i],
                        ghat[i],
                        fit.psi,
                    )
                })
                .collect();
            let se = (sample_variance(&values) / dataset.n() as f64).sqrt();
            let z = normal_quantile(1.0 - (1.0 - config.ci_level) / 2.0);
            (se, fit.psi - z * se, fit.psi + z * se)
        }
        VarianceMode::Known(v) => {
            let se = v.max(0.0).sqrt();
            let z = normal_quantile(1.0 - (1.0 - config.ci_level) / 2.0);
            (se, fit.psi - z * se, fit.psi + z * se)
        }
        VarianceMode::Bootstrap {
            replicates,
            refit_nuisance,
        } => {
            if *refit_nuisance {
                return Err(Error::InvalidConfig(
                    "the full-refit bootstrap needs the learners; call estimate_with_learners"
                        .into(),
                ));
            }
            let inner = config.with_variance(VarianceMode::Known(0.0));
            let nuisance = nuisance.clone();
            let pipeline = move |ds: &Dataset| -> Result<f64> {
                Ok(tmle_pipeline(ds, &nuisance, &inner, name, kind)?.psi)
            };
            let boot = bootstrap_se(dataset, &pipeline, *replicates, config.seed, config.ci_level)?;
            flags.bootstrap_failures = boot.failures;
            (boot.se, boot.ci_lower, boot.ci_upper)
        }
    };

    Ok(EstimateReport {
        estimator: name,
        psi: fit.psi,
        se,
        ci_lower,
        ci_upper,
        epsilon: fit.epsilon,
        score_residuals: fit.score_residuals,
        bandwidth_used: bandwidth,
        flags,
    })
}

/// One-step second-order comparator: the plug-in at the initial fit plus
/// the empirical first-order correction plus half the pairwise
/// kernel-approximated second-order correction. Not a substitution
/// estimator, so the result can leave [0, 1] (flagged when it does). The
/// pairwise term inverse-weights by a kernel density estimate of the
/// covariate distribution.
pub fn robins_so(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    config.validate()?;
    if matches!(config.bandwidth, BandwidthPolicy::CvSelect { .. }) {
        return Err(Error::InvalidConfig(
            "cross-validated bandwidth selection applies to the targeted variants".into(),
        ));
    }
    let trunc = &config.truncation;
    let n = dataset.n();
    let d = dataset.dim();
    let bw = match &config.bandwidth {
        BandwidthPolicy::Fixed(h) => h.clone(),
        _ => bandwidth::default_bandwidth(dataset, BandwidthTarget::Covariates)?,
    };
    let inv_h = bw.reciprocals(d)?;
    let norm_const = kernel::normalizing_constant(config.kernel.family, &inv_h);
    let x = dataset.covariate_matrix();

    let mut qhat = Vec::with_capacity(n);
    let mut ghat = Vec::with_capacity(n);
    for o in dataset.iter() {
        qhat.push(nuisance.qbar_at(o.covariates()));
        ghat.push(nuisance.g_at(o.covariates(), trunc));
    }

    // density estimate at every sample point, clamped below
    let mut kde_clamped = 0usize;
    let qdens: Vec<f64> = (0..n)
        .map(|i| {
            let wi = &x[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..n {
                s += norm_const * kernel::pair_weight(config.kernel.family, wi, &x[j * d..(j + 1) * d], &inv_h);
            }
            let v = s / n as f64;
            if v < trunc.delta_q {
                kde_clamped += 1;
                trunc.delta_q
            } else {
                v
            }
        })
        .collect();

    let plugin = mean(&qhat);
    let pn_d1 = mean(
        &dataset
            .iter()
            .enumerate()
            .map(|(i, o)| {
                if o.observed() {
                    (o.outcome().unwrap_or(0.0) - qhat[i]) / ghat[i]
                } else {
                    0.0
                }
            })
            .collect::<Vec<f64>>(),
    );

    // double sum over ordered pairs, diagonal included; a plain sequential
    // accumulator so the brute-force pair enumeration reproduces it exactly
    let a: Vec<f64> = dataset.indicator_vector();
    let mut total = 0.0f64;
    let mut diagonal = 0.0f64;
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        let wi = &x[i * d..(i + 1) * d];
        let y1 = dataset.observations()[i].outcome().ok_or(Error::MissingOutcome)?;
        let g1 = ghat[i];
        let q1 = qdens[i];
        let qb1 = qhat[i];
        for j in 0..n {
            let k = norm_const
                * kernel::pair_weight(config.kernel.family, wi, &x[j * d..(j + 1) * d], &inv_h);
            let term = 2.0 * a[i] * k / (g1 * q1) * (1.0 - a[j] / g1) * (y1 - qb1);
            total += term;
            if i == j {
                diagonal += term;
            }
        }
    }
    let n2 = (n * n) as f64;
    let pn2_d2 = total / n2;
    let psi = plugin + pn_d1 + 0.5 * pn2_d2;

    let positivity = dataset
        .iter()
        .any(|o| nuisance.g_raw(o.covariates()) < trunc.delta_g);
    let flags = ReportFlags {
        positivity,
        out_of_range: !(0.0..=1.0).contains(&psi),
        kde_clamped,
        pn2_d2: Some(pn2_d2),
        pn2_d2_diagonal: Some(diagonal / n2),
        ..ReportFlags::default()
    };

    let (se, ci_lower, ci_upper) = match &config.variance {
        VarianceMode::Known(v) => {
            let se = v.max(0.0).sqrt();
            let z = normal_quantile(1.0 - (1.0 - config.ci_level) / 2.0);
            (se, psi - z * se, psi + z * se)
        }
        _ => {
            let var = influence_variance(dataset, &nuisance.qbar, &nuisance.g, psi, trunc)?;
            let se = var.sqrt();
            let z = normal_quantile(1.0 - (1.0 - config.ci_level) / 2.0);
            (se, psi - z * se, psi + z * se)
        }
    };

    Ok(EstimateReport {
        estimator: EstimatorName::Robins2,
        psi,
        se,
        ci_lower,
        ci_upper,
        epsilon: vec![],
        score_residuals: vec![],
        bandwidth_used: Some(bw),
        flags,
    })
}
