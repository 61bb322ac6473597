//! Initial nuisance estimation: a parametric logistic-regression learner
//! with arbitrary design transformations, a perturbation wrapper that
//! degrades a fitted predictor to a chosen consistency rate, and a small
//! pluggable learner interface so any Dataset -> predictor map can serve
//! as the initial estimator.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{expit, solve_sym, sum};
use crate::nuisance::{NuisancePair, Predictor, PredictorRef};

const SCORE_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;
const SEPARATION_NORM: f64 = 50.0;

/// One column of the design: a named transformation of the covariates.
#[derive(Clone)]
pub enum DesignTerm {
    Intercept,
    /// The j-th covariate untransformed.
    Identity(usize),
    /// exp of the j-th covariate.
    Exp(usize),
    /// User-supplied basis function.
    Custom {
        name: String,
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl DesignTerm {
    pub fn eval(&self, w: &[f64]) -> f64 {
        match self {
            DesignTerm::Intercept => 1.0,
            DesignTerm::Identity(j) => w[*j],
            DesignTerm::Exp(j) => w[*j].exp(),
            DesignTerm::Custom { f, .. } => f(w),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DesignTerm::Intercept => "intercept".into(),
            DesignTerm::Identity(j) => format!("w{}", j + 1),
            DesignTerm::Exp(j) => format!("exp(w{})", j + 1),
            DesignTerm::Custom { name, .. } => name.clone(),
        }
    }
}

impl std::fmt::Debug for DesignTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Which conditional probability is being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    /// E(Y | A = 1, W): fit restricted to observed rows.
    OutcomeGivenObserved,
    /// P(A = 1 | W): fit on every row.
    Missingness,
}

/// A logistic model specification (logit link throughout).
#[derive(Debug, Clone)]
pub struct LearnerSpec {
    pub design: Vec<DesignTerm>,
    pub target: FitTarget,
}

impl LearnerSpec {
    /// Intercept plus identity terms for every covariate.
    pub fn main_terms(dim: usize, target: FitTarget) -> Self {
        let mut design = vec![DesignTerm::Intercept];
        design.extend((0..dim).map(DesignTerm::Identity));
        Self { design, target }
    }
}

/// A fitted logistic regression with access to its linear predictor.
#[derive(Debug)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    design: Vec<DesignTerm>,
    pub converged_iterations: usize,
}

impl Predictor for LogisticModel {
    fn predict(&self, w: &[f64]) -> f64 {
        expit(self.linear_predictor(w))
    }

    fn linear_predictor(&self, w: &[f64]) -> f64 {
        self.design
            .iter()
            .zip(&self.coefficients)
            .map(|(t, b)| b * t.eval(w))
            .sum()
    }
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares. Columns are rescaled to unit variance internally and the
/// coefficients mapped back, so convergence thresholds are scale-free.
pub fn fit_logistic(dataset: &Dataset, spec: &LearnerSpec) -> Result<Arc<LogisticModel>> {
    let rows: Vec<(&[f64], f64)> = match spec.target {
        FitTarget::Missingness => dataset
            .iter()
            .map(|o| (o.covariates(), if o.observed() { 1.0 } else { 0.0 }))
            .collect(),
        FitTarget::OutcomeGivenObserved => dataset
            .iter()
            .filter(|o| o.observed())
            .map(|o| (o.covariates(), o.outcome().unwrap()))
            .collect(),
    };
    let n = rows.len();
    let p = spec.design.len();
    if n < p {
        return Err(Error::InvalidData(format!(
            "{n} rows for {p} design columns"
        )));
    }

    // design matrix, row major
    let mut x = vec![0.0; n * p];
    let mut y = vec![0.0; n];
    for (i, (w, yi)) in rows.iter().enumerate() {
        for (j, t) in spec.design.iter().enumerate() {
            let v = t.eval(w);
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "design term '{}' non-finite on the data",
                    t.name()
                )));
            }
            x[i * p + j] = v;
        }
        y[i] = *yi;
    }

    // per-column scale (root mean square); zero marks a degenerate column
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let ssq: f64 = (0..n).map(|i| x[i * p + j] * x[i * p + j]).sum();
        scale[j] = (ssq / n as f64).sqrt();
        if scale[j] <= 0.0 {
            return Err(Error::RankDeficient(spec.design[j].name()));
        }
        for i in 0..n {
            x[i * p + j] /= scale[j];
        }
    }

    // rank check on the scaled Gram matrix
    let mut gram = vec![0.0; p * p];
    for i in 0..n {
        let xi = &x[i * p..(i + 1) * p];
        for a in 0..p {
            for b in a..p {
                gram[a * p + b] += xi[a] * xi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[a * p + b] = gram[b * p + a];
        }
    }
    check_rank(&gram, p, &spec.design)?;

    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut iterations = 0;
    let mut reached_tol = false;
    loop {
        iterations += 1;
        for i in 0..n {
            eta[i] = dot(&x[i * p..(i + 1) * p], &beta);
        }
        // score per column with compensated summation
        let score: Vec<f64> = (0..p)
            .map(|j| sum((0..n).map(|i| x[i * p + j] * (y[i] - expit(eta[i])))))
            .collect();
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        reached_tol = reached_tol || max_score < SCORE_TOL;
        // keep iterating to the floating-point floor of the score sums so
        // the solution is insensitive to row order
        if max_score < 1e-3 * SCORE_TOL {
            break;
        }

        let mut info = vec![0.0; p * p];
        for i in 0..n {
            let mu = expit(eta[i]);
            let v = (mu * (1.0 - mu)).max(1e-10);
            let xi = &x[i * p..(i + 1) * p];
            for a in 0..p {
                let xa = xi[a] * v;
                for b in a..p {
                    info[a * p + b] += xa * xi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[a * p + b] = info[b * p + a];
            }
        }
        let step = solve_sym(&info, &score, p, 1e-14)
            .ok_or_else(|| Error::RankDeficient("information matrix".into()))?;

        let ll_old = log_likelihood(&x, &y, &beta, n, p);
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..p).map(|j| beta[j] + lambda * step[j]).collect();
            let ll_new = log_likelihood(&x, &y, &cand, n, p);
            if ll_new.is_finite() && ll_new >= ll_old - 1e-13 * ll_old.abs().max(1.0) {
                let delta: f64 = (0..p).map(|j| (cand[j] - beta[j]).abs()).fold(0.0, f64::max);
                let stalled = delta < 1e-13 * (1.0 + beta.iter().fold(0.0f64, |m, b| m.max(b.abs())));
                beta = cand;
                moved = !stalled;
                break;
            }
            lambda *= 0.5;
        }
        let norm = beta
            .iter()
            .zip(&scale)
            .map(|(b, s)| (b / s) * (b / s))
            .sum::<f64>()
            .sqrt();
        if norm > SEPARATION_NORM {
            return Err(Error::Separation(norm));
        }
        if !moved {
            // a stalled step with a small score is a converged fit at the
            // score-sum floor
            if reached_tol || max_score < 1e-7 {
                break;
            }
            return Err(Error::NoConvergence {
                iterations,
                score: max_score,
                epsilon: beta,
                residuals: score,
            });
        }
        if iterations >= MAX_ITER {
            if reached_tol {
                break;
            }
            return Err(Error::NoConvergence {
                iterations,
                score: max_score,
                epsilon: beta,
                residuals: score,
            });
        }
    }

    // map coefficients back to the original column scales
    let coefficients: Vec<f64> = beta.iter().zip(&scale).map(|(b, s)| b / s).collect();
    Ok(Arc::new(LogisticModel {
        coefficients,
        design: spec.design.clone(),
        converged_iterations: iterations,
    }))
}

fn check_rank(gram: &[f64], p: usize, design: &[DesignTerm]) -> Result<()> {
    // pivoted Cholesky on the (scaled) Gram matrix; a failing pivot names
    // the offending column
    let mut m = gram.to_vec();
    for j in 0..p {
        let mut d = m[j * p + j];
        for k in 0..j {
            d -= m[j * p + k] * m[j * p + k];
        }
        if d <= 1e-10 * gram[j * p + j].max(1.0) {
            return Err(Error::RankDeficient(design[j].name()));
        }
        let d_sqrt = d.sqrt();
        m[j * p + j] = d_sqrt;
        for i in (j + 1)..p {
            let mut v = m[i * p + j];
            for k in 0..j {
                v -= m[i * p + k] * m[j * p + k];
            }
            m[i * p + j] = v / d_sqrt;
        }
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_likelihood(x: &[f64], y: &[f64], beta: &[f64], n: usize, p: usize) -> f64 {
    let mut ll = 0.0;
    for i in 0..n {
        let eta = dot(&x[i * p..(i + 1) * p], beta);
        let sp = if eta > 30.0 {
            eta
        } else if eta < -30.0 {
            eta.exp()
        } else {
            (1.0 + eta.exp()).ln()
        };
        ll += y[i] * eta - sp;
    }
    ll
}

/// A fitted predictor whose linear predictor has been multiplied by a
/// uniform draw near one and shifted by a Gaussian draw, degrading its
/// consistency rate to `n^(-rate)`. One `(u, v)` pair is drawn per wrapped
/// predictor, not per evaluation point.
pub struct PerturbedPredictor {
    base: PredictorRef,
    pub u: f64,
    pub v: f64,
}

impl Predictor for PerturbedPredictor {
    fn predict(&self, w: &[f64]) -> f64 {
        expit(self.linear_predictor(w))
    }

    fn linear_predictor(&self, w: &[f64]) -> f64 {
        self.base.linear_predictor(w) * self.u - self.v
    }
}

/// Draw the perturbation `(u, v)` with `u ~ U(1 - n^-rate, 1)` and
/// `v ~ Normal(3 n^-rate, n^-rate)` and wrap the predictor. A rate large
/// enough that `n^-rate` underflows returns the base predictor unchanged.
pub fn perturb<R: Rng>(
    base: PredictorRef,
    rate: f64,
    n: usize,
    rng: &mut R,
) -> Result<Arc<PerturbedPredictor>> {
    if rate < 0.0 {
        return Err(Error::InvalidConfig("perturbation rate must be >= 0".into()));
    }
    let nr = (n as f64).powf(-rate);
    let (u, v) = if nr == 0.0 {
        (1.0, 0.0)
    } else {
        let u = rng.random_range((1.0 - nr)..1.0);
        let v = Normal::new(3.0 * nr, nr)
            .map_err(|e| Error::InvalidConfig(format!("perturbation draw: {e}")))?
            .sample(rng);
        (u, v)
    };
    Ok(Arc::new(PerturbedPredictor { base, u, v }))
}

/// Constant predictor; supports unadjusted analyses and degenerate tests.
pub fn constant_learner(level: f64) -> Result<PredictorRef> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "constant level {level} outside (0,1)"
        )));
    }
    Ok(crate::nuisance::predictor_from_fn(move |_| level))
}

/// Anything that maps a dataset to a fitted predictor can serve as an
/// initial estimator.
pub trait Learner: Send + Sync {
    fn fit(&self, dataset: &Dataset) -> Result<PredictorRef>;
}

/// Logistic GLM learner.
pub struct GlmLearner {
    pub spec: LearnerSpec,
}

impl Learner for GlmLearner {
    fn fit(&self, dataset: &Dataset) -> Result<PredictorRef> {
        Ok(fit_logistic(dataset, &self.spec)? as PredictorRef)
    }
}

/// Learner that ignores the data entirely.
pub struct ConstantLearner {
    pub level: f64,
}

impl Learner for ConstantLearner {
    fn fit(&self, _dataset: &Dataset) -> Result<PredictorRef> {
        constant_learner(self.level)
    }
}

/// The pair of learners producing the initial nuisance estimates.
pub struct LearnerPair {
    pub qbar: Arc<dyn Learner>,
    pub g: Arc<dyn Learner>,
}

impl LearnerPair {
    /// Main-terms logistic GLM for both nuisances.
    pub fn main_terms(dim: usize) -> Self {
        Self {
            qbar: Arc::new(GlmLearner {
                spec: LearnerSpec::main_terms(dim, FitTarget::OutcomeGivenObserved),
            }),
            g: Arc::new(GlmLearner {
                spec: LearnerSpec::main_terms(dim, FitTarget::Missingness),
            }),
        }
    }

    pub fn fit(&self, dataset: &Dataset) -> Result<NuisancePair> {
        Ok(NuisancePair::new(
            self.qbar.fit(dataset)?,
            self.g.fit(dataset)?,
        ))
    }
}
