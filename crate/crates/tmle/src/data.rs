//! Observed-data structures: a unit with covariates, a missingness
//! indicator, and an outcome recorded only when observed.

use crate::error::{Error, Result};

/// One observed unit. The outcome `y` is present exactly when `a` is true.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    w: Vec<f64>,
    a: bool,
    y: Option<f64>,
}

impl Observation {
    /// Build an observation, enforcing that `y` is present iff `a = 1`,
    /// that covariates are finite, and that `y` lies in [0, 1].
    pub fn new(w: Vec<f64>, a: bool, y: Option<f64>) -> Result<Self> {
        if a && y.is_none() {
            return Err(Error::MissingOutcome);
        }
        if !a && y.is_some() {
            return Err(Error::InvalidData(
                "outcome present for a missing unit".into(),
            ));
        }
        if w.is_empty() {
            return Err(Error::InvalidData("empty covariate vector".into()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate".into()));
        }
        if let Some(y) = y {
            if !y.is_finite() || !(0.0..=1.0).contains(&y) {
                return Err(Error::InvalidData(format!(
                    "outcome {y} outside [0,1]; scale continuous outcomes first"
                )));
            }
        }
        Ok(Self { w, a, y })
    }

    pub fn covariates(&self) -> &[f64] {
        &self.w
    }

    pub fn observed(&self) -> bool {
        self.a
    }

    /// Outcome value; only present for observed units.
    pub fn outcome(&self) -> Option<f64> {
        self.y
    }
}

/// An i.i.d. sample of observations with a common covariate dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    observations: Vec<Observation>,
    dim: usize,
}

impl Dataset {
    /// Validate and wrap a sample. Requires at least one observation, a
    /// common covariate dimension, and at least one observed unit (the
    /// outcome regression is unidentifiable otherwise).
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let Some(first) = observations.first() else {
            return Err(Error::EmptyDataset);
        };
        let dim = first.w.len();
        if observations.iter().any(|o| o.w.len() != dim) {
            return Err(Error::InvalidData(
                "covariate dimension differs across observations".into(),
            ));
        }
        if !observations.iter().any(|o| o.a) {
            return Err(Error::InvalidData("no observed outcomes in sample".into()));
        }
        Ok(Self { observations, dim })
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Row-major copy of the covariate matrix (n x d), used by the
    /// quadratic-cost kernel passes.
    pub fn covariate_matrix(&self) -> Vec<f64> {
        let mut m = Vec::with_capacity(self.n() * self.dim);
        for o in &self.observations {
            m.extend_from_slice(&o.w);
        }
        m
    }

    /// Missingness indicators as 0/1 reals.
    pub fn indicator_vector(&self) -> Vec<f64> {
        self.observations
            .iter()
            .map(|o| if o.a { 1.0 } else { 0.0 })
            .collect()
    }

    /// Fraction of observed units.
    pub fn observed_fraction(&self) -> f64 {
        self.observations.iter().filter(|o| o.a).count() as f64 / self.n() as f64
    }

    /// Resample `n` rows with replacement using the supplied index source.
    pub fn resample(&self, indices: &[usize]) -> Result<Self> {
        let obs = indices
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        Self::new(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(w: f64, a: bool, y: Option<f64>) -> Observation {
        Observation::new(vec![w], a, y).unwrap()
    }

    #[test]
    fn outcome_presence_matches_indicator() {
        assert!(Observation::new(vec![0.0], true, None).is_err());
        assert!(Observation::new(vec![0.0], false, Some(0.5)).is_err());
        assert!(Observation::new(vec![0.0], true, Some(0.5)).is_ok());
        assert!(Observation::new(vec![0.0], false, None).is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Observation::new(vec![f64::NAN], false, None).is_err());
        assert!(Observation::new(vec![0.0], true, Some(1.5)).is_err());
        assert!(Observation::new(vec![], false, None).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(Dataset::new(vec![]), Err(Error::EmptyDataset)));
        // all-missing sample is unidentifiable
        assert!(Dataset::new(vec![obs(0.0, false, None)]).is_err());
        // dimension mismatch
        let mixed = vec![
            Observation::new(vec![0.0, 1.0], true, Some(0.5)).unwrap(),
            obs(0.0, false, None),
        ];
        assert!(Dataset::new(mixed).is_err());

        let ds = Dataset::new(vec![obs(0.5, true, Some(0.2)), obs(-1.0, false, None)]).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 1);
        assert!((ds.observed_fraction() - 0.5).abs() < 1e-15);
    }
}
