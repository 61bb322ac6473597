//! Nuisance predictors: the outcome regression and the missingness score,
//! plus the truncation policy that keeps both strictly inside (0, 1).

use std::sync::Arc;

use crate::math::logit;

/// Lower clamp for the missingness score (the score is clamped to
/// `[delta_g, 1]`); keeps inverse weights bounded.
pub const DEFAULT_DELTA_G: f64 = 0.01;

/// Lower clamp for kernel density estimates.
pub const DEFAULT_DELTA_Q: f64 = 1e-4;

/// Clamp applied to outcome-regression values before taking logits.
pub const QBAR_EPS: f64 = 1e-4;

/// A fitted conditional-probability predictor over the covariate space.
///
/// Implementations must be deterministic in `w`. `linear_predictor` is the
/// value on the logit scale; the default derives it from `predict`, fitted
/// models override it with the actual linear form.
pub trait Predictor: Send + Sync {
    fn predict(&self, w: &[f64]) -> f64;

    fn linear_predictor(&self, w: &[f64]) -> f64 {
        let p = self.predict(w).clamp(QBAR_EPS, 1.0 - QBAR_EPS);
        logit(p)
    }
}

/// Shared handle to a predictor; cheap to clone across parallel workers.
pub type PredictorRef = Arc<dyn Predictor>;

impl Predictor for PredictorRef {
    fn predict(&self, w: &[f64]) -> f64 {
        (**self).predict(w)
    }
    fn linear_predictor(&self, w: &[f64]) -> f64 {
        (**self).linear_predictor(w)
    }
}

/// Truncation bounds applied to every nuisance evaluation inside the
/// estimators. The score clamp keeps the inverse weights finite; the
/// outcome clamp keeps logits finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub delta_g: f64,
    pub delta_q: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            delta_g: DEFAULT_DELTA_G,
            delta_q: DEFAULT_DELTA_Q,
        }
    }
}

/// The pair (outcome regression, missingness score).
#[derive(Clone)]
pub struct NuisancePair {
    pub qbar: PredictorRef,
    pub g: PredictorRef,
}

impl NuisancePair {
    pub fn new(qbar: PredictorRef, g: PredictorRef) -> Self {
        Self { qbar, g }
    }

    /// Outcome regression clamped into (0, 1).
    pub fn qbar_at(&self, w: &[f64]) -> f64 {
        self.qbar.predict(w).clamp(QBAR_EPS, 1.0 - QBAR_EPS)
    }

    /// Missingness score clamped to `[delta_g, 1]`.
    pub fn g_at(&self, w: &[f64], trunc: &Truncation) -> f64 {
        self.g.predict(w).clamp(trunc.delta_g, 1.0)
    }

    /// Raw (unclamped) score, used only for positivity diagnostics.
    pub fn g_raw(&self, w: &[f64]) -> f64 {
        self.g.predict(w)
    }
}

/// Predictor built from a plain function; handy in tests and for the
/// simulation oracles where the true regression functions are known.
pub struct FnPredictor<F: Fn(&[f64]) -> f64 + Send + Sync>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Predictor for FnPredictor<F> {
    fn predict(&self, w: &[f64]) -> f64 {
        (self.0)(w)
    }
}

/// Wrap a closure as a shared predictor.
pub fn predictor_from_fn<F>(f: F) -> PredictorRef
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnPredictor(f))
}
