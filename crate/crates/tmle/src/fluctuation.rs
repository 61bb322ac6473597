//! The targeted update: an offset logistic submodel
//! `logit qbar_eps = logit qbar + eps . H` fitted over observed units by
//! damped Newton-Raphson, and the corresponding updated outcome regression.
//!
//! H has one column (inverse score) or two (inverse score plus the
//! kernel-smoothed contrast). Because H does not depend on eps, a single
//! update solves the targeted score equations exactly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::{expit, logit, solve_sym};
use crate::nuisance::{Predictor, PredictorRef, QBAR_EPS};

pub const DEFAULT_FLUCTUATION_TOL: f64 = 1e-10;
pub const DEFAULT_FLUCTUATION_MAX_ITER: usize = 100;
const SEPARATION_BOUND: f64 = 50.0;
const COLLINEARITY_TOL: f64 = 1e-10;

/// How the single-column submodel is parameterized: the auxiliary
/// covariate as a regressor, or an intercept-only model weighted by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluctuationMode {
    #[default]
    Covariate,
    Weighted,
}

/// The data of one targeted update, restricted to observed units.
///
/// In `Covariate` mode `columns` holds the regressors H (1 or 2 columns).
/// In `Weighted` mode there is a single column holding the weights and the
/// implicit regressor is the constant 1.
pub struct FluctuationProblem {
    offsets: Vec<f64>,
    columns: Vec<Vec<f64>>,
    outcomes: Vec<f64>,
    mode: FluctuationMode,
    collinear_dropped: bool,
}

impl FluctuationProblem {
    pub fn new(
        offsets: Vec<f64>,
        columns: Vec<Vec<f64>>,
        outcomes: Vec<f64>,
        mode: FluctuationMode,
    ) -> Result<Self> {
        let rows = offsets.len();
        if rows == 0 || outcomes.len() != rows {
            return Err(Error::InvalidData(
                "fluctuation rows empty or mismatched".into(),
            ));
        }
        if columns.is_empty() || columns.len() > 2 {
            return Err(Error::InvalidData(
                "fluctuation needs 1 or 2 covariate columns".into(),
            ));
        }
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidData("covariate column length mismatch".into()));
        }
        if mode == FluctuationMode::Weighted && columns.len() != 1 {
            return Err(Error::InvalidConfig(
                "weighted fluctuation requires a single column".into(),
            ));
        }
        if outcomes.iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err(Error::InvalidData("fluctuation outcome outside [0,1]".into()));
        }

        let mut columns = columns;
        let mut collinear_dropped = false;
        if columns.len() == 2 {
            // Gram-matrix collinearity check; a nearly constant smoothed
            // contrast degrades the two-column update to one column.
            let g11: f64 = columns[0].iter().map(|x| x * x).sum();
            let g22: f64 = columns[1].iter().map(|x| x * x).sum();
            let g12: f64 = columns[0]
                .iter()
                .zip(&columns[1])
                .map(|(x, z)| x * z)
                .sum();
            let degenerate =
                g22 <= 0.0 || g11 * g22 - g12 * g12 <= COLLINEARITY_TOL * g11 * g22;
            if degenerate {
                columns.truncate(1);
                collinear_dropped = true;
            }
        }
        if rows < columns.len() {
            return Err(Error::InvalidData(
                "fewer rows than fluctuation parameters".into(),
            ));
        }
        Ok(Self {
            offsets,
            columns,
            outcomes,
            mode,
            collinear_dropped,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// True when the second column was dropped as collinear with the first.
    pub fn collinear_dropped(&self) -> bool {
        self.collinear_dropped
    }

    fn eta(&self, eps: &[f64], i: usize) -> f64 {
        let mut e = self.offsets[i];
        match self.mode {
            FluctuationMode::Covariate => {
                for (k, col) in self.columns.iter().enumerate() {
                    e += eps[k] * col[i];
                }
            }
            FluctuationMode::Weighted => e += eps[0],
        }
        e
    }

    fn row_weight(&self, i: usize) -> f64 {
        match self.mode {
            FluctuationMode::Covariate => 1.0,
            FluctuationMode::Weighted => self.columns[0][i],
        }
    }

    fn log_likelihood(&self, eps: &[f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.n_rows() {
            let eta = self.eta(eps, i);
            let y = self.outcomes[i];
            // y ln(mu) + (1-y) ln(1-mu), written with softplus for stability
            ll += self.row_weight(i) * (y * eta - softplus(eta));
        }
        ll
    }

    /// Score vector and (negated) Hessian at `eps`. The score entries are
    /// exactly the residuals `sum_i H_ik (y_i - mu_i)`.
    fn score_and_info(&self, eps: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.n_columns();
        let mut score = vec![0.0; k];
        let mut info = vec![0.0; k * k];
        for i in 0..self.n_rows() {
            let mu = expit(self.eta(eps, i));
            let r = self.outcomes[i] - mu;
            let v = (mu * (1.0 - mu)).max(1e-12);
            match self.mode {
                FluctuationMode::Covariate => {
                    for a in 0..k {
                        let ha = self.columns[a][i];
                        score[a] += ha * r;
                        for b in 0..k {
                            info[a * k + b] += ha * self.columns[b][i] * v;
                        }
                    }
                }
                FluctuationMode::Weighted => {
                    let w = self.columns[0][i];
                    score[0] += w * r;
                    info[0] += w * v;
                }
            }
        }
        (score, info)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        (1.0 + x.exp()).ln()
    }
}

/// Result of the targeted update fit.
#[derive(Debug, Clone)]
pub struct FluctuationFit {
    pub epsilon: Vec<f64>,
    /// `sum_i H_k(W_i)(Y_i - qbar_eps(W_i))` per column at the solution.
    pub score_residuals: Vec<f64>,
}

/// Maximize the (quasi-)Bernoulli likelihood of the offset submodel by
/// damped Newton-Raphson. Converges when every score residual is at most
/// `tol` times the number of rows.
pub fn fit_fluctuation(
    problem: &FluctuationProblem,
    tol: f64,
    max_iter: usize,
) -> Result<FluctuationFit> {
    let k = problem.n_columns();
    let n = problem.n_rows() as f64;
    let mut eps = vec![0.0; k];
    let mut ll = problem.log_likelihood(&eps);
    let (mut score, mut info) = problem.score_and_info(&eps);

    // Once inside tolerance, iteration continues to the floating-point
    // floor of the score (quadratic convergence makes the extra steps
    // essentially free); this keeps the solution insensitive to row order.
    let max_abs = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut best_eps = eps.clone();
    let mut best_score = score.clone();
    let mut best_max = max_abs(&score);
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let current_max = max_abs(&score);
        if current_max < best_max {
            best_max = current_max;
            best_eps = eps.clone();
            best_score = score.clone();
        }
        if current_max <= 1e-3 * tol * n {
            break;
        }

        let step = solve_sym(&info, &score, k, 1e-14).unwrap_or_else(|| {
            // near-singular information: fall back to a diagonal step
            (0..k)
                .map(|a| score[a] / info[a * k + a].max(1e-12))
                .collect()
        });

        // step-halving until the likelihood does not decrease
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..k).map(|a| eps[a] + lambda * step[a]).collect();
            let cand_ll = problem.log_likelihood(&cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-14 * ll.abs().max(1.0) {
                eps = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        if eps.iter().any(|e| e.abs() > SEPARATION_BOUND) {
            return Err(Error::FluctuationSeparation(
                eps.iter().fold(0.0f64, |m, e| m.max(e.abs())),
            ));
        }
        let si = problem.score_and_info(&eps);
        score = si.0;
        info = si.1;
    }

    let current_max = max_abs(&score);
    if current_max < best_max {
        best_max = current_max;
        best_eps = eps;
        best_score = score;
    }
    if best_max <= tol * n {
        return Ok(FluctuationFit {
            epsilon: best_eps,
            score_residuals: best_score,
        });
    }
    Err(Error::NoConvergence {
        iterations,
        score: best_max,
        epsilon: best_eps,
        residuals: best_score,
    })
}

/// Evaluate the auxiliary covariates of the submodel at an arbitrary
/// covariate point (length 1 or 2).
pub type CovariateFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

struct FluctuatedPredictor {
    base: PredictorRef,
    epsilon: Vec<f64>,
    h: CovariateFn,
}

impl Predictor for FluctuatedPredictor {
    fn predict(&self, w: &[f64]) -> f64 {
        let base = self.base.predict(w).clamp(QBAR_EPS, 1.0 - QBAR_EPS);
        let mut eta = logit(base);
        let h = (self.h)(w);
        for (e, hk) in self.epsilon.iter().zip(&h) {
            eta += e * hk;
        }
        expit(eta)
    }
}

/// Updated outcome regression `w -> expit(logit qbar(w) + eps . H(w))`.
pub fn update_qbar(qbar: PredictorRef, epsilon: Vec<f64>, h_covariates: CovariateFn) -> PredictorRef {
    Arc::new(FluctuatedPredictor {
        base: qbar,
        epsilon,
        h: h_covariates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::predictor_from_fn;

    fn fit(problem: &FluctuationProblem) -> FluctuationFit {
        fit_fluctuation(problem, DEFAULT_FLUCTUATION_TOL, DEFAULT_FLUCTUATION_MAX_ITER).unwrap()
    }

    #[test]
    fn stationary_data_gives_zero_epsilon() {
        // y already equals expit(offset): the score at zero vanishes
        let offsets = vec![-0.4, 0.2, 1.1, 0.0];
        let outcomes: Vec<f64> = offsets.iter().map(|&o| expit(o)).collect();
        let columns = vec![vec![1.0, 2.0, 0.5, 1.5]];
        let p = FluctuationProblem::new(offsets, columns, outcomes, FluctuationMode::Covariate)
            .unwrap();
        let f = fit(&p);
        assert!(f.epsilon[0].abs() < 1e-10);
    }

    #[test]
    fn intercept_only_closed_form() {
        let p = FluctuationProblem::new(
            vec![0.0, 0.0],
            vec![vec![1.0, 1.0]],
            vec![0.7, 0.7],
            FluctuationMode::Covariate,
        )
        .unwrap();
        let f = fit(&p);
        assert!((f.epsilon[0] - logit(0.7)).abs() < 1e-9);
    }

    #[test]
    fn newton_matches_golden_section_oracle() {
        let mut state = 0x853c49e6748fea9bu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 100;
        let offsets: Vec<f64> = (0..n).map(|_| 2.0 * next() - 1.0).collect();
        let h: Vec<f64> = (0..n).map(|_| 0.5 + 2.0 * next()).collect();
        let y: Vec<f64> = (0..n).map(|_| if next() < 0.6 { 1.0 } else { 0.0 }).collect();
        let p = FluctuationProblem::new(
            offsets.clone(),
            vec![h.clone()],
            y.clone(),
            FluctuationMode::Covariate,
        )
        .unwrap();
        let f = fit(&p);

        // independent 1-d maximizer: coarse grid then golden-section
        let ll = |e: f64| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                let eta: f64 = offsets[i] + e * h[i];
                s += y[i] * eta - (1.0 + eta.exp()).ln();
            }
            s
        };
        let mut best = (-10.0, f64::NEG_INFINITY);
        let mut x = -10.0;
        while x <= 10.0 {
            let v = ll(x);
            if v > best.1 {
                best = (x, v);
            }
            x += 0.01;
        }
        let (mut a, mut b) = (best.0 - 0.02, best.0 + 0.02);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if ll(c) < ll(d) {
                a = c;
            } else {
                b = d;
            }
        }
        let oracle = (a + b) / 2.0;
        assert!(
            (f.epsilon[0] - oracle).abs() < 1e-6,
            "newton {} vs oracle {}",
            f.epsilon[0],
            oracle
        );
    }

    #[test]
    fn two_column_solution_zeroes_both_scores() {
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 200;
        let offsets: Vec<f64> = (0..n).map(|_| next() - 0.5).collect();
        let h1: Vec<f64> = (0..n).map(|_| 1.0 + 3.0 * next()).collect();
        let h2: Vec<f64> = h1.iter().map(|&v| v * (next() - 0.5)).collect();
        let y: Vec<f64> = (0..n).map(|_| if next() < 0.5 { 1.0 } else { 0.0 }).collect();
        let p = FluctuationProblem::new(
            offsets,
            vec![h1, h2],
            y,
            FluctuationMode::Covariate,
        )
        .unwrap();
        assert!(!p.collinear_dropped());
        let f = fit(&p);
        assert_eq!(f.epsilon.len(), 2);
        for r in &f.score_residuals {
            assert!(r.abs() <= 1e-10 * n as f64);
        }
    }

    #[test]
    fn collinear_second_column_is_dropped() {
        let h1 = vec![1.0, 2.0, 3.0, 4.0];
        let h2: Vec<f64> = h1.iter().map(|v| v * 2.0).collect();
        let p = FluctuationProblem::new(
            vec![0.0; 4],
            vec![h1, h2],
            vec![0.4, 0.6, 0.5, 0.7],
            FluctuationMode::Covariate,
        )
        .unwrap();
        assert!(p.collinear_dropped());
        assert_eq!(p.n_columns(), 1);
    }

    #[test]
    fn weighted_mode_matches_independent_maximizer() {
        let offsets = vec![-0.5, 0.3, 0.8, -1.2, 0.1];
        let weights = vec![2.0, 1.5, 4.0, 1.0, 2.5];
        let y = vec![1.0, 0.0, 1.0, 0.0, 1.0];
        let p = FluctuationProblem::new(
            offsets.clone(),
            vec![weights.clone()],
            y.clone(),
            FluctuationMode::Weighted,
        )
        .unwrap();
        let f = fit(&p);

        let ll = |e: f64| -> f64 {
            (0..5)
                .map(|i| {
                    let eta: f64 = offsets[i] + e;
                    weights[i] * (y[i] * eta - (1.0 + eta.exp()).ln())
                })
                .sum()
        };
        let (mut a, mut b) = (-10.0, 10.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..300 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if ll(c) < ll(d) {
                a = c;
            } else {
                b = d;
            }
        }
        assert!((f.epsilon[0] - (a + b) / 2.0).abs() < 1e-8);
        // the solved equation is the weighted score
        assert!(f.score_residuals[0].abs() < 1e-9);
    }

    #[test]
    fn weighted_with_constant_weights_rescales_covariate_solution() {
        let offsets = vec![0.2, -0.3, 0.9, 0.5];
        let y = vec![1.0, 0.0, 1.0, 1.0];
        let c = 3.0;
        let weighted = FluctuationProblem::new(
            offsets.clone(),
            vec![vec![c; 4]],
            y.clone(),
            FluctuationMode::Weighted,
        )
        .unwrap();
        let covariate = FluctuationProblem::new(
            offsets,
            vec![vec![c; 4]],
            y,
            FluctuationMode::Covariate,
        )
        .unwrap();
        let fw = fit(&weighted);
        let fc = fit(&covariate);
        assert!((fw.epsilon[0] - c * fc.epsilon[0]).abs() < 1e-8);
    }

    #[test]
    fn update_with_zero_epsilon_is_identity() {
        let base = predictor_from_fn(|w| expit(0.3 + w[0]));
        let h: CovariateFn = Arc::new(|_w: &[f64]| vec![1.0]);
        let updated = update_qbar(base.clone(), vec![0.0], h);
        for &w in &[-2.0, -0.5, 0.0, 1.3] {
            assert!((updated.predict(&[w]) - base.predict(&[w])).abs() < 1e-12);
        }
    }

    #[test]
    fn update_direct_evaluation_and_monotonicity() {
        let base = predictor_from_fn(|_| 0.5);
        let h: CovariateFn = Arc::new(|_w: &[f64]| vec![2.0]);
        let updated = update_qbar(base.clone(), vec![1.0], h.clone());
        assert!((updated.predict(&[0.0]) - expit(2.0)).abs() < 1e-12);

        let mut last = 0.0;
        for i in 0..10 {
            let eps = i as f64 * 0.3;
            let u = update_qbar(base.clone(), vec![eps], h.clone());
            let v = u.predict(&[0.0]);
            assert!(v > last || i == 0);
            last = v;
        }
    }

    #[test]
    fn separation_is_reported() {
        // a tiny covariate forces the solution far outside the bound
        // (epsilon would need logit(0.9)/0.01, about 220)
        let p = FluctuationProblem::new(
            vec![0.0; 6],
            vec![vec![0.01; 6]],
            vec![0.9; 6],
            FluctuationMode::Covariate,
        )
        .unwrap();
        let r = fit_fluctuation(&p, 1e-10, 500);
        assert!(matches!(
            r,
            Err(Error::FluctuationSeparation(_)) | Err(Error::NoConvergence { .. })
        ));
    }
}
