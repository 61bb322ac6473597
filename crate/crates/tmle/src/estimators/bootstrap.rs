//! Nonparametric resample-and-refit bootstrap for the estimation
//! pipelines. Replicates draw their index streams from the master seed,
//! run independently, and are reduced in replicate order.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::math::sample_sd;
use crate::seeding::derive_rng;

const BOOTSTRAP_TAG: u64 = 0xB007;

/// Bootstrap standard error and percentile interval.
#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Replicates dropped because the pipeline failed on the resample.
    pub failures: usize,
    pub estimates: Vec<f64>,
}

/// Resample the dataset with replacement `replicates` times, re-run the
/// full pipeline on each resample, and summarize the replicate estimates.
/// Errors out when more than 10% of replicates fail.
pub fn bootstrap_se(
    dataset: &Dataset,
    pipeline: &(dyn Fn(&Dataset) -> Result<f64> + Sync),
    replicates: usize,
    seed: u64,
    ci_level: f64,
) -> Result<BootstrapOutcome> {
    if replicates < 2 {
        return Err(Error::InvalidConfig(
            "bootstrap needs at least 2 replicates".into(),
        ));
    }
    let n = dataset.n();
    let results: Vec<Option<f64>> = exec::indexed_map(replicates, |b| {
        let mut rng = derive_rng(seed, &[BOOTSTRAP_TAG, b as u64]);
        let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        dataset
            .resample(&indices)
            .and_then(|ds| pipeline(&ds))
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
    let mut sorted = estimates.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = 1.0 - ci_level;
    let ci_lower = percentile(&sorted, alpha / 2.0);
    let ci_upper = percentile(&sorted, 1.0 - alpha / 2.0);

    Ok(BootstrapOutcome {
        se,
        ci_lower,
        ci_upper,
        failures,
        estimates,
    })
}

/// Linear-interpolation sample quantile on sorted input.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::math::mean;

    fn constant_dataset(n: usize, y: f64) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| Observation::new(vec![i as f64], true, Some(y)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_outcome_gives_zero_se() {
        let ds = constant_dataset(30, 0.4);
        let pipeline = |d: &Dataset| -> Result<f64> {
            Ok(mean(
                &d.iter().map(|o| o.outcome().unwrap()).collect::<Vec<f64>>(),
            ))
        };
        let out = bootstrap_se(&ds, &pipeline, 50, 1, 0.95).unwrap();
        assert_eq!(out.se, 0.0);
        assert_eq!(out.failures, 0);
        assert_eq!(out.ci_lower, 0.4);
        assert_eq!(out.ci_upper, 0.4);
    }

    #[test]
    fn replicates_are_reproducible() {
        let ds = Dataset::new(
            (0..20)
                .map(|i| {
                    Observation::new(vec![i as f64], true, Some((i as f64 + 0.5) / 21.0)).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let pipeline = |d: &Dataset| -> Result<f64> {
            Ok(mean(
                &d.iter().map(|o| o.outcome().unwrap()).collect::<Vec<f64>>(),
            ))
        };
        let a = bootstrap_se(&ds, &pipeline, 2, 42, 0.95).unwrap();
        let b = bootstrap_se(&ds, &pipeline, 2, 42, 0.95).unwrap();
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.estimates.len(), 2);
    }

    #[test]
    fn failure_rate_above_ten_percent_errors() {
        let ds = constant_dataset(10, 0.5);
        let pipeline = |d: &Dataset| -> Result<f64> {
            // fail whenever the resample repeats index 0 more than once
            let c = d
                .iter()
                .filter(|o| o.covariates()[0] == 0.0)
                .count();
            if c > 1 {
                Err(Error::EmptyDataset)
            } else {
                Ok(0.5)
            }
        };
        let r = bootstrap_se(&ds, &pipeline, 100, 3, 0.95);
        assert!(matches!(r, Err(Error::BootstrapFailures { .. })));
    }

    #[test]
    fn percentile_interpolates() {
        let s = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&s, 0.0), 1.0);
        assert_eq!(percentile(&s, 1.0), 5.0);
        assert_eq!(percentile(&s, 0.5), 3.0);
        assert!((percentile(&s, 0.25) - 2.0).abs() < 1e-12);
    }
}
