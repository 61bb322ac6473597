//! Bandwidth selection: a Scott-type plug-in rule as the default, and a
//! cross-validated selector that scores each candidate by validation
//! residuals plus a mean-squared-error penalty on the fold estimates.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{targeted_fit, EstimatorConfig, EstimatorName, SmoothingKind};
use crate::exec;
use crate::kernel::Bandwidth;
use crate::math::{sample_sd, sum};
use crate::nuisance::NuisancePair;
use crate::seeding::derive_rng;

const FOLD_TAG: u64 = 0xF01D;

/// What is being smoothed: the covariate columns, or precomputed scalar
/// score values.
pub enum BandwidthTarget<'a> {
    Covariates,
    ScoreValues(&'a [f64]),
}

/// Scott-type rule: per-dimension `h_j = sigma_j * c * n^(-1/(4+d))` with
/// `c = (4/(d+2))^(1/(d+4))`, where `d` is the smoothing dimension.
pub fn default_bandwidth(dataset: &Dataset, target: BandwidthTarget) -> Result<Bandwidth> {
    let n = dataset.n();
    if n < 2 {
        return Err(Error::InvalidData("bandwidth rule needs n >= 2".into()));
    }
    match target {
        BandwidthTarget::Covariates => {
            let d = dataset.dim();
            let factor = scott_factor(d, n);
            let mut values = Vec::with_capacity(d);
            for j in 0..d {
                let col: Vec<f64> = dataset.iter().map(|o| o.covariates()[j]).collect();
                let sd = sample_sd(&col);
                if !(sd > 0.0) {
                    return Err(Error::DegenerateCovariate(format!("w{}", j + 1)));
                }
                values.push(sd * factor);
            }
            Bandwidth::new(values)
        }
        BandwidthTarget::ScoreValues(scores) => {
            if scores.len() != n {
                return Err(Error::InvalidData("score vector length mismatch".into()));
            }
            let sd = sample_sd(scores);
            if !(sd > 0.0) {
                return Err(Error::DegenerateCovariate("score values".into()));
            }
            Bandwidth::scalar(sd * scott_factor(1, n))
        }
    }
}

fn scott_factor(d: usize, n: usize) -> f64 {
    let ds = d as f64;
    let c = (4.0 / (ds + 2.0)).powf(1.0 / (ds + 4.0));
    c * (n as f64).powf(-1.0 / (4.0 + ds))
}

/// Ten log-spaced multiples of the base bandwidth from 0.25x to 4x.
pub fn candidate_grid(base: &Bandwidth) -> Vec<Bandwidth> {
    let (lo, hi) = (0.25f64.ln(), 4.0f64.ln());
    (0..10)
        .map(|k| {
            let mult = (lo + k as f64 * (hi - lo) / 9.0).exp();
            base.scaled(mult).expect("positive multiple of a valid bandwidth")
        })
        .collect()
}

/// Default candidate grid for the configured smoothing target.
pub(crate) fn default_candidate_grid(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    config: &EstimatorConfig,
    kind: SmoothingKind,
) -> Result<Vec<Bandwidth>> {
    let base = match kind {
        SmoothingKind::Covariates => default_bandwidth(dataset, BandwidthTarget::Covariates)?,
        SmoothingKind::ScoreValues => {
            let scores: Vec<f64> = dataset
                .iter()
                .map(|o| nuisance.g_at(o.covariates(), &config.truncation))
                .collect();
            default_bandwidth(dataset, BandwidthTarget::ScoreValues(&scores))?
        }
    };
    Ok(candidate_grid(&base))
}

/// Deterministic fold labels for `0..n`: a seeded shuffle dealt round-robin
/// into `folds` groups.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derive_rng(seed, &[FOLD_TAG, n as u64, folds as u64]);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for (k, &i) in order.iter().enumerate() {
        assignment[i] = k % folds;
    }
    assignment
}

/// One candidate's criterion decomposition.
#[derive(Debug, Clone)]
pub struct CvRow {
    pub bandwidth: Bandwidth,
    pub rss: f64,
    pub var: f64,
    pub bias: f64,
    pub criterion: f64,
}

/// Outcome of the cross-validated selection.
#[derive(Debug, Clone)]
pub struct CvSelection {
    pub bandwidth: Bandwidth,
    pub rows: Vec<CvRow>,
}

/// Cross-validated bandwidth selection for the smoothed targeted
/// estimators: minimizes `cvRSS(h) + cvVar(h) + n * cvBias(h)^2`, where the
/// residual sum of squares runs over observed validation units, the
/// variance term sums squared first-order-gradient values of validation
/// units around the training-fold estimate, and the bias term averages the
/// gaps between fold estimates and the full-sample estimate at the same
/// bandwidth. Ties break toward the largest bandwidth.
pub fn cv_bandwidth(
    dataset: &Dataset,
    nuisance: &NuisancePair,
    candidate_grid: &[Bandwidth],
    folds: usize,
    estimator: EstimatorName,
    config: &EstimatorConfig,
) -> Result<CvSelection> {
    let kind = match estimator {
        EstimatorName::Tmle1Star => SmoothingKind::ScoreValues,
        EstimatorName::Tmle2 => SmoothingKind::Covariates,
        other => {
            return Err(Error::InvalidConfig(format!(
                "cv bandwidth selection is defined for the smoothed variants, not {other}"
            )))
        }
    };
    if candidate_grid.is_empty() {
        return Err(Error::InvalidConfig("empty candidate grid".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig("cv needs at least 2 folds".into()));
    }
    let n = dataset.n();
    if n < 2 * folds {
        return Err(Error::DegenerateFold);
    }
    let assignment = fold_assignment(n, folds, config.seed);

    // training samples are candidate-independent
    let mut training = Vec::with_capacity(folds);
    let mut validation = Vec::with_capacity(folds);
    for s in 0..folds {
        let train_obs: Vec<_> = dataset
            .iter()
            .enumerate()
            .filter(|(i, _)| assignment[*i] != s)
            .map(|(_, o)| o.clone())
            .collect();
        let train = Dataset::new(train_obs).map_err(|_| Error::DegenerateFold)?;
        if !train.iter().any(|o| o.observed()) {
            return Err(Error::DegenerateFold);
        }
        training.push(train);
        validation.push(
            (0..n)
                .filter(|i| assignment[*i] == s)
                .collect::<Vec<usize>>(),
        );
    }

    let trunc = &config.truncation;
    let mut rows = Vec::with_capacity(candidate_grid.len());
    for h in candidate_grid {
        let full = targeted_fit(
            dataset,
            nuisance,
            &config.kernel,
            Some(h),
            Some(kind),
            trunc,
            config.fluctuation,
        )?;

        // per-fold work is independent; reduce in fold order
        let fold_out: Vec<Result<(f64, f64, f64)>> = exec::indexed_map(folds, |s| {
            let train = &training[s];
            let fit = targeted_fit(
                train,
                nuisance,
                &config.kernel,
                Some(h),
                Some(kind),
                trunc,
                config.fluctuation,
            )?;
            let qstar = fit.predictor(
                train,
                nuisance,
                &config.kernel,
                Some(h),
                Some(kind),
                trunc,
                config.fluctuation,
            );
            let mut rss = 0.0;
            let mut var = 0.0;
            for &i in &validation[s] {
                let o = &dataset.observations()[i];
                let w = o.covariates();
                let pred = qstar.predict(w);
                let d1 = if o.observed() {
                    let y = o.outcome().ok_or(Error::MissingOutcome)?;
                    rss += (y - pred) * (y - pred);
                    (y - pred) / nuisance.g_at(w, trunc) + pred - fit.psi
                } else {
                    pred - fit.psi
                };
                var += d1 * d1;
            }
            Ok((rss, var, fit.psi))
        });

        let mut rss = 0.0;
        let mut var = 0.0;
        let mut fold_psis = Vec::with_capacity(folds);
        for out in fold_out {
            let (r, v, p) = out?;
            rss += r;
            var += v;
            fold_psis.push(p);
        }
        let bias = sum(fold_psis.iter().map(|p| p - full.psi)) / folds as f64;
        let criterion = rss + var + n as f64 * bias * bias;
        rows.push(CvRow {
            bandwidth: h.clone(),
            rss,
            var,
            bias,
            criterion,
        });
    }

    let mut best = 0usize;
    for k in 1..rows.len() {
        let better = rows[k].criterion < rows[best].criterion
            || (rows[k].criterion == rows[best].criterion
                && rows[k].bandwidth.magnitude() > rows[best].bandwidth.magnitude());
        if better {
            best = k;
        }
    }
    Ok(CvSelection {
        bandwidth: rows[best].bandwidth.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use rand::Rng;

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = derive_rng(seed, &[1]);
        Dataset::new(
            (0..n)
                .map(|_| {
                    let w = rng.random::<f64>() * 4.0 - 2.0;
                    let a = rng.random_bool(crate::math::expit(0.8 + 0.5 * w));
                    let y = a.then(|| rng.random::<f64>());
                    Observation::new(vec![w], a, y).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn scott_rule_univariate_value() {
        // data rescaled to unit sample sd: h = (4/3)^(1/5) * n^(-1/5)
        let ds = toy_dataset(1000, 3);
        let col: Vec<f64> = ds.iter().map(|o| o.covariates()[0]).collect();
        let sd = sample_sd(&col);
        let rescaled = Dataset::new(
            ds.iter()
                .map(|o| {
                    Observation::new(vec![o.covariates()[0] / sd], o.observed(), o.outcome())
                        .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let h = default_bandwidth(&rescaled, BandwidthTarget::Covariates).unwrap();
        let expected = (4.0f64 / 3.0).powf(0.2) * 1000f64.powf(-0.2);
        assert!(
            (h.values()[0] - expected).abs() < 2e-3,
            "h = {} vs {expected}",
            h.values()[0]
        );
        assert!((expected - 0.266).abs() < 1e-3);
    }

    #[test]
    fn scale_equivariance_and_rate() {
        let ds = toy_dataset(500, 9);
        let h1 = default_bandwidth(&ds, BandwidthTarget::Covariates).unwrap();
        let doubled = Dataset::new(
            ds.iter()
                .map(|o| {
                    Observation::new(vec![2.0 * o.covariates()[0]], o.observed(), o.outcome())
                        .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let h2 = default_bandwidth(&doubled, BandwidthTarget::Covariates).unwrap();
        assert!((h2.values()[0] / h1.values()[0] - 2.0).abs() < 1e-10);

        // 16x the sample size shrinks h by 16^(-1/5)
        let big = Dataset::new(
            (0..16)
                .flat_map(|_| ds.iter().cloned())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let h16 = default_bandwidth(&big, BandwidthTarget::Covariates).unwrap();
        let ratio = h16.values()[0] / h1.values()[0];
        assert!((ratio - 16f64.powf(-0.2)).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn degenerate_column_is_an_error() {
        let ds = Dataset::new(
            (0..10)
                .map(|i| {
                    Observation::new(vec![1.0, i as f64], i % 2 == 0, (i % 2 == 0).then_some(0.5))
                        .unwrap()
                })
                .collect(),
        )
        .unwrap();
        match default_bandwidth(&ds, BandwidthTarget::Covariates) {
            Err(Error::DegenerateCovariate(name)) => assert_eq!(name, "w1"),
            other => panic!("expected degenerate covariate, got {other:?}"),
        }
    }

    #[test]
    fn grid_is_log_spaced_from_quarter_to_four_times() {
        let base = Bandwidth::scalar(0.4).unwrap();
        let grid = candidate_grid(&base);
        assert_eq!(grid.len(), 10);
        assert!((grid[0].values()[0] - 0.1).abs() < 1e-12);
        assert!((grid[9].values()[0] - 1.6).abs() < 1e-12);
        // constant ratio
        let r0 = grid[1].values()[0] / grid[0].values()[0];
        for k in 1..9 {
            let r = grid[k + 1].values()[0] / grid[k].values()[0];
            assert!((r - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn fold_assignment_is_deterministic_and_balanced() {
        let a = fold_assignment(103, 5, 7);
        let b = fold_assignment(103, 5, 7);
        assert_eq!(a, b);
        let c = fold_assignment(103, 5, 8);
        assert_ne!(a, c);
        for s in 0..5 {
            let size = a.iter().filter(|&&f| f == s).count();
            assert!(size == 20 || size == 21);
        }
    }

    #[test]
    fn singleton_grid_returns_that_bandwidth() {
        let ds = toy_dataset(120, 21);
        let nuisance = NuisancePair::new(
            crate::nuisance::predictor_from_fn(|w| crate::math::expit(-0.2 + 0.3 * w[0])),
            crate::nuisance::predictor_from_fn(|w| crate::math::expit(0.8 + 0.5 * w[0])),
        );
        let h = Bandwidth::scalar(0.37).unwrap();
        let config = EstimatorConfig::default();
        let sel = cv_bandwidth(
            &ds,
            &nuisance,
            std::slice::from_ref(&h),
            4,
            EstimatorName::Tmle2,
            &config,
        )
        .unwrap();
        assert_eq!(sel.bandwidth, h);
        assert_eq!(sel.rows.len(), 1);
    }

    #[test]
    fn grid_order_does_not_change_selection() {
        let ds = toy_dataset(150, 33);
        let nuisance = NuisancePair::new(
            crate::nuisance::predictor_from_fn(|w| crate::math::expit(-0.2 + 0.3 * w[0])),
            crate::nuisance::predictor_from_fn(|w| crate::math::expit(0.8 + 0.5 * w[0])),
        );
        let grid = vec![
            Bandwidth::scalar(0.2).unwrap(),
            Bandwidth::scalar(0.5).unwrap(),
            Bandwidth::scalar(1.1).unwrap(),
        ];
        let reversed: Vec<Bandwidth> = grid.iter().rev().cloned().collect();
        let config = EstimatorConfig::default();
        let a = cv_bandwidth(&ds, &nuisance, &grid, 5, EstimatorName::Tmle1Star, &config).unwrap();
        let b =
            cv_bandwidth(&ds, &nuisance, &reversed, 5, EstimatorName::Tmle1Star, &config).unwrap();
        assert_eq!(a.bandwidth, b.bandwidth);
    }

    #[test]
    fn too_many_folds_is_degenerate() {
        let ds = toy_dataset(8, 2);
        let nuisance = NuisancePair::new(
            crate::nuisance::predictor_from_fn(|_| 0.4),
            crate::nuisance::predictor_from_fn(|_| 0.7),
        );
        let grid = vec![Bandwidth::scalar(0.5).unwrap()];
        let config = EstimatorConfig::default();
        let r = cv_bandwidth(&ds, &nuisance, &grid, 8, EstimatorName::Tmle2, &config);
        assert!(matches!(r, Err(Error::DegenerateFold)));
    }
}
