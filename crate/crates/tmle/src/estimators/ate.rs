//! Average treatment effect via two missingness problems: the mean under
//! treatment treats the outcome as missing for untreated units (A := T)
//! and vice versa (A := 1 - T). Continuous outcomes are mapped to [0, 1]
//! first and every result is reported back in the original units.

use rand::Rng;

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::exec;
use crate::learners::LearnerPair;
use crate::math::{normal_quantile, sample_sd};
use crate::nuisance::QBAR_EPS;
use crate::seeding::derive_rng;

use super::bootstrap::percentile;
use super::{estimate, EstimateReport, EstimatorConfig, VarianceMode};

const ATE_BOOTSTRAP_TAG: u64 = 0xA7E;

/// A fully observed unit with a binary treatment.
#[derive(Debug, Clone)]
pub struct AteRow {
    pub w: Vec<f64>,
    pub t: bool,
    pub y: f64,
}

/// Sample for the treatment-effect workflow: outcome observed everywhere,
/// both arms nonempty.
#[derive(Debug, Clone)]
pub struct AteData {
    rows: Vec<AteRow>,
    dim: usize,
}

impl AteData {
    pub fn new(rows: Vec<AteRow>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyDataset);
        };
        let dim = first.w.len();
        if rows.iter().any(|r| r.w.len() != dim) {
            return Err(Error::InvalidData("covariate dimension differs".into()));
        }
        if rows.iter().any(|r| !r.y.is_finite() || r.w.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        if !rows.iter().any(|r| r.t) || !rows.iter().any(|r| !r.t) {
            return Err(Error::InvalidData("a treatment arm is empty".into()));
        }
        Ok(Self { rows, dim })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[AteRow] {
        &self.rows
    }
}

/// Outcome scaled affinely onto [0, 1].
#[derive(Debug, Clone)]
pub struct ScaledOutcome {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl ScaledOutcome {
    /// Scaled value nudged strictly inside (0, 1) for use behind logits.
    pub fn nudged(&self, i: usize) -> f64 {
        self.values[i].clamp(QBAR_EPS, 1.0 - QBAR_EPS)
    }
}

/// Map outcomes onto [0, 1] by `(y - min) / (max - min)`.
pub fn scale_outcome(y: &[f64]) -> Result<ScaledOutcome> {
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::DegenerateOutcome);
    }
    let range = max - min;
    Ok(ScaledOutcome {
        values: y.iter().map(|v| (v - min) / range).collect(),
        min,
        max,
    })
}

/// Invert the affine outcome scaling.
pub fn unscale(psi_scaled: f64, min: f64, max: f64) -> f64 {
    psi_scaled * (max - min) + min
}

/// Two-arm report in original outcome units.
#[derive(Debug, Clone)]
pub struct AteReport {
    pub psi1: f64,
    pub psi0: f64,
    pub diff: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// (min, max) of the outcome when affine scaling was applied.
    pub scaling: Option<(f64, f64)>,
    pub arm1: EstimateReport,
    pub arm0: EstimateReport,
    pub bootstrap_failures: usize,
}

fn arm_dataset(data: &AteData, scaled: Option<&ScaledOutcome>, treated_arm: bool) -> Result<Dataset> {
    // outcomes enter the likelihood linearly, never through a logit, so
    // the raw scaled values are used here; the targeting step's exact
    // collapse to arm means depends on it
    let obs = data
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a = r.t == treated_arm;
            let y = a.then(|| match scaled {
                Some(s) => s.values[i],
                None => r.y,
            });
            Observation::new(r.w.clone(), a, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(obs)
}

fn arm_estimates(
    data: &AteData,
    scaled: Option<&ScaledOutcome>,
    learners: &LearnerPair,
    config: &EstimatorConfig,
) -> Result<(EstimateReport, EstimateReport)> {
    let ds1 = arm_dataset(data, scaled, true)?;
    let ds0 = arm_dataset(data, scaled, false)?;
    // nuisances are fitted separately per arm
    let nu1 = learners.fit(&ds1)?;
    let nu0 = learners.fit(&ds0)?;
    Ok((estimate(&ds1, &nu1, config)?, estimate(&ds0, &nu0, config)?))
}

/// Estimate the average treatment effect with the configured estimator
/// applied to each arm's missingness problem.
pub fn ate(data: &AteData, learners: &LearnerPair, config: &EstimatorConfig) -> Result<AteReport> {
    config.validate()?;
    let ys: Vec<f64> = data.rows.iter().map(|r| r.y).collect();
    let continuous = ys.iter().any(|&y| y != 0.0 && y != 1.0);
    let scaled = if continuous { Some(scale_outcome(&ys)?) } else { None };
    let range = scaled.as_ref().map_or(1.0, |s| s.max - s.min);
    let offset = scaled.as_ref().map_or(0.0, |s| s.min);

    let point_config = match config.variance {
        VarianceMode::Bootstrap { .. } => config.with_variance(VarianceMode::Influence),
        _ => config.clone(),
    };
    let (arm1, arm0) = arm_estimates(data, scaled.as_ref(), learners, &point_config)?;
    let psi1 = unscale(arm1.psi, offset, offset + range);
    let psi0 = unscale(arm0.psi, offset, offset + range);
    let diff = (arm1.psi - arm0.psi) * range;

    let z = normal_quantile(1.0 - (1.0 - config.ci_level) / 2.0);
    let (se, ci_lower, ci_upper, bootstrap_failures) = match config.variance {
        VarianceMode::Bootstrap { replicates, .. } => {
            // resample rows, redo both arms (learner refits included)
            let inner = config.with_variance(VarianceMode::Known(0.0));
            let n = data.n();
            let results: Vec<Option<f64>> = exec::indexed_map(replicates, |b| {
                let mut rng = derive_rng(config.seed, &[ATE_BOOTSTRAP_TAG, b as u64]);
                let rows: Vec<AteRow> = (0..n)
                    .map(|_| data.rows[rng.random_range(0..n)].clone())
                    .collect();
                AteData::new(rows)
                    .and_then(|d| {
                        let ys: Vec<f64> = d.rows.iter().map(|r| r.y).collect();
                        let s = if continuous { Some(scale_outcome(&ys)?) } else { None };
                        let rg = s.as_ref().map_or(1.0, |s| s.max - s.min);
                        let (a1, a0) = arm_estimates(&d, s.as_ref(), learners, &inner)?;
                        Ok((a1.psi - a0.psi) * rg)
                    })
                    .ok()
            });
            let estimates: Vec<f64> = results.iter().filter_map(|r| *r).collect();
            let failures = replicates - estimates.len();
            if failures * 10 > replicates {
                return Err(Error::BootstrapFailures {
                    failed: failures,
                    total: replicates,
                });
            }
            let se = sample_sd(&estimates);
            let mut sorted = estimates;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let alpha = 1.0 - config.ci_level;
            (
                se,
                percentile(&sorted, alpha / 2.0),
                percentile(&sorted, 1.0 - alpha / 2.0),
                failures,
            )
        }
        _ => {
            let se = (arm1.se * arm1.se + arm0.se * arm0.se).sqrt() * range;
            (se, diff - z * se, diff + z * se, 0)
        }
    };

    Ok(AteReport {
        psi1,
        psi0,
        diff,
        se,
        ci_lower,
        ci_upper,
        scaling: scaled.map(|s| (s.min, s.max)),
        arm1,
        arm0,
        bootstrap_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{ConstantLearner, LearnerPair};
    use std::sync::Arc;

    #[test]
    fn scale_examples() {
        let s = scale_outcome(&[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(s.values, vec![0.0, 0.5, 1.0]);
        assert_eq!((s.min, s.max), (0.0, 10.0));
        // affine inverse
        for (orig, v) in [0.0, 5.0, 10.0].iter().zip(&s.values) {
            assert!((unscale(*v, s.min, s.max) - orig).abs() < 1e-12);
        }
        assert_eq!(unscale(0.5, 100.0, 300.0), 200.0);
        assert!(matches!(
            scale_outcome(&[2.0, 2.0]),
            Err(Error::DegenerateOutcome)
        ));
    }

    #[test]
    fn unadjusted_mode_reproduces_raw_arm_difference() {
        let rows: Vec<AteRow> = (0..40)
            .map(|i| AteRow {
                w: vec![(i % 7) as f64],
                t: i % 2 == 0,
                y: 10.0 + (i % 5) as f64 * 3.0 + if i % 2 == 0 { 4.0 } else { 0.0 },
            })
            .collect();
        let data = AteData::new(rows.clone()).unwrap();
        let learners = LearnerPair {
            qbar: Arc::new(ConstantLearner { level: 0.5 }),
            g: Arc::new(ConstantLearner { level: 0.5 }),
        };
        let config = EstimatorConfig::default();
        let report = ate(&data, &learners, &config).unwrap();

        let m1: f64 = rows.iter().filter(|r| r.t).map(|r| r.y).sum::<f64>()
            / rows.iter().filter(|r| r.t).count() as f64;
        let m0: f64 = rows.iter().filter(|r| !r.t).map(|r| r.y).sum::<f64>()
            / rows.iter().filter(|r| !r.t).count() as f64;
        assert!(
            (report.diff - (m1 - m0)).abs() < 1e-6,
            "diff {} vs raw {}",
            report.diff,
            m1 - m0
        );
        assert!((report.psi1 - m1).abs() < 1e-6);
        assert!((report.psi0 - m0).abs() < 1e-6);
    }

    #[test]
    fn duplicated_symmetric_arms_give_zero_difference() {
        // every (w, y) appears once treated and once untreated: the two
        // constructed missingness problems are permutations of each other
        let mut rows = Vec::new();
        for i in 0..30 {
            let w = vec![(i as f64) / 30.0, ((i * 7) % 13) as f64 / 13.0];
            let y = 1.0 + ((i * 3) % 11) as f64;
            rows.push(AteRow { w: w.clone(), t: true, y });
            rows.push(AteRow { w, t: false, y });
        }
        let data = AteData::new(rows).unwrap();
        let learners = LearnerPair::main_terms(2);
        let config = EstimatorConfig::default();
        let report = ate(&data, &learners, &config).unwrap();
        assert!(report.diff.abs() < 1e-10, "diff = {}", report.diff);
        assert_eq!(report.scaling, Some((1.0, 11.0)));
    }

    #[test]
    fn empty_arm_is_rejected() {
        let rows: Vec<AteRow> = (0..5)
            .map(|i| AteRow {
                w: vec![i as f64],
                t: true,
                y: 0.5,
            })
            .collect();
        assert!(AteData::new(rows).is_err());
    }
}
