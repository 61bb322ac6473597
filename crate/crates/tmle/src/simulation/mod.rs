//! Monte Carlo study harness: the two data-generating processes, oracle
//! quantities obtained by direct simulation from the full-data law, the
//! (p, q) perturbation grid runner, and the performance metrics
//! (root-n-scaled absolute bias, relative variance against the efficiency
//! bound, and known-variance coverage).

pub mod oracle;

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate, BandwidthPolicy, EstimatorConfig, EstimatorName, VarianceMode,
};
use crate::exec;
use crate::fluctuation::FluctuationMode;
use crate::influence::eif_value;
use crate::kernel::KernelSpec;
use crate::learners::{fit_logistic, perturb, DesignTerm, FitTarget, LearnerSpec};
use crate::math::{expit, mean, sample_variance, sum};
use crate::nuisance::{predictor_from_fn, NuisancePair, Truncation};
use crate::seeding::derive_rng;

const REPLICATE_TAG: u64 = 0x5EED;
const COVERAGE_Z: f64 = 1.96;

/// The two simulation designs (univariate and trivariate covariates).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpSpec {
    D1,
    D3,
}

impl DgpSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "d1" => Ok(DgpSpec::D1),
            "d3" => Ok(DgpSpec::D3),
            other => Err(Error::InvalidConfig(format!("unknown dgp '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpSpec::D1 => "d1",
            DgpSpec::D3 => "d3",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DgpSpec::D1 => 1,
            DgpSpec::D3 => 3,
        }
    }

    /// True missingness score.
    pub fn g0(&self, w: &[f64]) -> f64 {
        match self {
            DgpSpec::D1 => expit(1.0 + 0.7 * w[0]),
            DgpSpec::D3 => expit(1.0 + 0.12 * w[0] + 0.1 * w[1] + 0.5 * w[2]),
        }
    }

    /// True outcome regression.
    pub fn qbar0(&self, w: &[f64]) -> f64 {
        match self {
            DgpSpec::D1 => expit(-3.0 + 0.5 * w[0].exp() + 0.5 * w[0]),
            DgpSpec::D3 => expit(-4.0 + 0.2 * w[0] + 0.3 * w[1] + 0.5 * w[2].exp()),
        }
    }

    pub fn sample_w<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DgpSpec::D1 => {
                let b: f64 = Beta::new(0.5, 0.5).unwrap().sample(rng);
                vec![6.0 * b - 3.0]
            }
            DgpSpec::D3 => {
                // conditional Beta shapes are data-dependent; keep them
                // strictly positive against underflow
                let w1: f64 = Beta::new(2.0, 2.0).unwrap().sample(rng);
                let w2: f64 = Beta::new((2.0 * w1).max(1e-12), 2.0).unwrap().sample(rng);
                let w3: f64 = Beta::new((2.0 * w1).max(1e-12), (2.0 * w2).max(1e-12))
                    .unwrap()
                    .sample(rng);
                vec![w1, w2, w3]
            }
        }
    }

    /// Draw one observation: covariates, missingness, and the outcome when
    /// observed.
    pub fn sample_obs<R: Rng>(&self, rng: &mut R) -> Result<Observation> {
        let w = self.sample_w(rng);
        let a = rng.random_bool(self.g0(&w));
        let y = if a {
            Some(if rng.random_bool(self.qbar0(&w)) { 1.0 } else { 0.0 })
        } else {
            None
        };
        Observation::new(w, a, y)
    }

    /// Correctly specified outcome-regression design.
    pub fn q_design(&self) -> LearnerSpec {
        let design = match self {
            DgpSpec::D1 => vec![
                DesignTerm::Intercept,
                DesignTerm::Exp(0),
                DesignTerm::Identity(0),
            ],
            DgpSpec::D3 => vec![
                DesignTerm::Intercept,
                DesignTerm::Identity(0),
                DesignTerm::Identity(1),
                DesignTerm::Exp(2),
            ],
        };
        LearnerSpec {
            design,
            target: FitTarget::OutcomeGivenObserved,
        }
    }

    /// Correctly specified missingness design (linear in the covariates).
    pub fn g_design(&self) -> LearnerSpec {
        LearnerSpec::main_terms(self.dim(), FitTarget::Missingness)
    }

    /// The true nuisances as predictors.
    pub fn truth(&self) -> NuisancePair {
        let dgp = *self;
        NuisancePair::new(
            predictor_from_fn(move |w| dgp.qbar0(w)),
            predictor_from_fn(move |w| dgp.g0(w)),
        )
    }
}

/// Draw an i.i.d. sample of size `n`.
pub fn generate<R: Rng>(dgp: DgpSpec, n: usize, rng: &mut R) -> Result<Dataset> {
    let obs: Result<Vec<Observation>> = (0..n).map(|_| dgp.sample_obs(rng)).collect();
    Dataset::new(obs?)
}

/// A Monte Carlo scalar with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub value: f64,
    pub mc_se: f64,
}

const ORACLE_CHUNK: usize = 1 << 16;

/// Mean outcome under the full-data law, by direct simulation of the
/// covariate distribution (chunked so partial sums combine in a fixed
/// order at any worker count).
pub fn oracle_psi0(dgp: DgpSpec, m: usize, seed: u64) -> OracleEstimate {
    let chunks = m.div_ceil(ORACLE_CHUNK);
    let partials: Vec<(f64, f64)> = exec::indexed_map(chunks, |c| {
        let mut rng = derive_rng(seed, &[0x0A_1, c as u64]);
        let lo = c * ORACLE_CHUNK;
        let hi = ((c + 1) * ORACLE_CHUNK).min(m);
        let mut values = Vec::with_capacity(hi - lo);
        for _ in lo..hi {
            let w = dgp.sample_w(&mut rng);
            values.push(dgp.qbar0(&w));
        }
        (
            sum(values.iter().copied()),
            sum(values.iter().map(|v| v * v)),
        )
    });
    let s1 = sum(partials.iter().map(|p| p.0));
    let s2 = sum(partials.iter().map(|p| p.1));
    let mf = m as f64;
    let mean = s1 / mf;
    let var = ((s2 - s1 * s1 / mf) / (mf - 1.0)).max(0.0);
    OracleEstimate {
        value: mean,
        mc_se: (var / mf).sqrt(),
    }
}

/// Variance of the canonical gradient at the truth (the efficiency bound),
/// by direct simulation of full observations.
pub fn efficiency_bound(dgp: DgpSpec, m: usize, seed: u64, psi0: f64) -> OracleEstimate {
    let chunks = m.div_ceil(ORACLE_CHUNK);
    let partials: Vec<(f64, f64, f64)> = exec::indexed_map(chunks, |c| {
        let mut rng = derive_rng(seed, &[0x0A_2, c as u64]);
        let lo = c * ORACLE_CHUNK;
        let hi = ((c + 1) * ORACLE_CHUNK).min(m);
        let mut s1 = Vec::with_capacity(hi - lo);
        for _ in lo..hi {
            let w = dgp.sample_w(&mut rng);
            let g = dgp.g0(&w);
            let q = dgp.qbar0(&w);
            let a = rng.random_bool(g);
            let y = if a {
                if rng.random_bool(q) {
                    1.0
                } else {
                    0.0
                }
            } else {
                0.0
            };
            s1.push(eif_value(a, y, q, g, psi0));
        }
        (
            sum(s1.iter().copied()),
            sum(s1.iter().map(|v| v * v)),
            sum(s1.iter().map(|v| v * v * v * v)),
        )
    });
    let s1 = sum(partials.iter().map(|p| p.0));
    let s2 = sum(partials.iter().map(|p| p.1));
    let s4 = sum(partials.iter().map(|p| p.2));
    let mf = m as f64;
    let mean = s1 / mf;
    let var = (s2 / mf - mean * mean).max(0.0);
    // the gradient is centered at the truth, so raw moments approximate
    // central ones; se(var-hat) ~ sqrt((m4 - var^2)/m)
    let m4 = s4 / mf;
    OracleEstimate {
        value: var * mf / (mf - 1.0),
        mc_se: ((m4 - var * var).max(0.0) / mf).sqrt(),
    }
}

/// Which "known variance" the coverage protocol uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnownVariance {
    /// The Monte Carlo variance of the estimator across the cell's
    /// replicates (two-pass).
    #[default]
    McReplicates,
    /// The efficiency bound divided by n.
    EfficiencyBound,
}

/// Configuration of a perturbation-grid study.
#[derive(Debug, Clone)]
pub struct SimGridConfig {
    pub dgp: DgpSpec,
    pub n_list: Vec<usize>,
    pub p_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub replicates: usize,
    pub estimators: Vec<EstimatorName>,
    pub master_seed: u64,
    pub kernel: KernelSpec,
    pub truncation: Truncation,
    pub fluctuation: FluctuationMode,
    pub known_variance: KnownVariance,
}

impl SimGridConfig {
    pub fn new(dgp: DgpSpec) -> Self {
        Self {
            dgp,
            n_list: vec![1000],
            p_grid: vec![0.5],
            q_grid: vec![0.5],
            replicates: 1000,
            estimators: vec![
                EstimatorName::Tmle1,
                EstimatorName::Tmle1Star,
                EstimatorName::Tmle2,
            ],
            master_seed: 0,
            kernel: KernelSpec::default(),
            truncation: Truncation::default(),
            fluctuation: FluctuationMode::Covariate,
            known_variance: KnownVariance::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig("need at least 2 replicates".into()));
        }
        if self.n_list.is_empty() || self.p_grid.is_empty() || self.q_grid.is_empty() {
            return Err(Error::InvalidConfig("empty grid".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        Ok(())
    }
}

/// Per-cell performance metrics for one estimator.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub estimator: EstimatorName,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub sqrt_n_abs_bias: f64,
    pub rvar: f64,
    /// rVar with 1% of replicates trimmed from each tail, so isolated
    /// unstable replicates remain observable next to the untrimmed value.
    pub rvar_trimmed: f64,
    pub coverage: f64,
    pub coverage_mc_se: f64,
    pub failures: usize,
    /// More than 2% of replicates failed in this cell.
    pub flagged: bool,
}

/// Run the perturbation grid with the default execution mode (parallel
/// replicates when the `parallel` feature is on).
pub fn run_grid(config: &SimGridConfig) -> Result<Vec<MetricsRow>> {
    run_grid_impl(config, false)
}

/// Sequential twin of [`run_grid`]; produces identical output.
pub fn run_grid_sequential(config: &SimGridConfig) -> Result<Vec<MetricsRow>> {
    run_grid_impl(config, true)
}

fn run_grid_impl(config: &SimGridConfig, sequential: bool) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let constants = oracle::shipped(config.dgp);
    let mut rows = Vec::new();
    let mut cell_idx = 0u64;
    for &n in &config.n_list {
        for &p in &config.p_grid {
            for &q in &config.q_grid {
                let cell = run_cell(config, n, p, q, cell_idx, &constants, sequential)?;
                rows.extend(cell);
                cell_idx += 1;
            }
        }
    }
    Ok(rows)
}

/// One replicate of a cell: generate, fit the correctly specified
/// learners, perturb them to the requested rates, run every estimator.
fn replicate_estimates(
    config: &SimGridConfig,
    n: usize,
    p: f64,
    q: f64,
    cell_idx: u64,
    r: usize,
) -> Vec<Result<f64>> {
    let k = config.estimators.len();
    let mut rng = derive_rng(config.master_seed, &[REPLICATE_TAG, cell_idx, r as u64]);

    let setup = (|| -> Result<(Dataset, NuisancePair)> {
        let data = generate(config.dgp, n, &mut rng)?;
        let qfit = fit_logistic(&data, &config.dgp.q_design())?;
        let gfit = fit_logistic(&data, &config.dgp.g_design())?;
        let qp = perturb(qfit, p, n, &mut rng)?;
        let gp = perturb(gfit, q, n, &mut rng)?;
        Ok((data, NuisancePair::new(qp, gp)))
    })();

    let (data, nuisance) = match setup {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return (0..k)
                .map(|_| Err(Error::InvalidData(msg.clone())))
                .collect();
        }
    };

    config
        .estimators
        .iter()
        .map(|&name| {
            let cfg = EstimatorConfig {
                estimator: name,
                kernel: config.kernel,
                bandwidth: BandwidthPolicy::DefaultRule,
                fluctuation: config.fluctuation,
                truncation: config.truncation,
                ci_level: 0.95,
                variance: VarianceMode::Known(1.0),
                seed: 0,
            };
            estimate(&data, &nuisance, &cfg).map(|rep| rep.psi)
        })
        .collect()
}

fn run_cell(
    config: &SimGridConfig,
    n: usize,
    p: f64,
    q: f64,
    cell_idx: u64,
    constants: &oracle::OracleConstants,
    sequential: bool,
) -> Result<Vec<MetricsRow>> {
    let reps = config.replicates;
    let f = |r: usize| replicate_estimates(config, n, p, q, cell_idx, r);
    let all: Vec<Vec<Result<f64>>> = if sequential {
        exec::indexed_map_seq(reps, f)
    } else {
        exec::indexed_map(reps, f)
    };

    let mut rows = Vec::with_capacity(config.estimators.len());
    for (e_idx, &estimator) in config.estimators.iter().enumerate() {
        let mut estimates = Vec::with_capacity(reps);
        let mut failures = 0usize;
        for rep in &all {
            match &rep[e_idx] {
                Ok(psi) => estimates.push(*psi),
                Err(_) => failures += 1,
            }
        }
        rows.push(cell_metrics(
            estimator, n, p, q, &estimates, failures, constants, config.known_variance,
        ));
    }
    Ok(rows)
}

fn trimmed_variance(estimates: &[f64]) -> f64 {
    let k = (0.01 * estimates.len() as f64).floor() as usize;
    if k == 0 || estimates.len() <= 2 * k + 1 {
        return sample_variance(estimates);
    }
    let mut sorted = estimates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sample_variance(&sorted[k..sorted.len() - k])
}

fn cell_metrics(
    estimator: EstimatorName,
    n: usize,
    p: f64,
    q: f64,
    estimates: &[f64],
    failures: usize,
    constants: &oracle::OracleConstants,
    known_variance: KnownVariance,
) -> MetricsRow {
    let reps = estimates.len() + failures;
    let flagged = failures as f64 > 0.02 * reps as f64;
    if estimates.len() < 2 {
        return MetricsRow {
            estimator,
            n,
            p,
            q,
            sqrt_n_abs_bias: f64::NAN,
            rvar: f64::NAN,
            rvar_trimmed: f64::NAN,
            coverage: f64::NAN,
            coverage_mc_se: f64::NAN,
            failures,
            flagged: true,
        };
    }
    let nf = n as f64;
    let psi0 = constants.psi0;
    let m = mean(estimates);
    let var = sample_variance(estimates);
    let sd_known = match known_variance {
        KnownVariance::McReplicates => var.sqrt(),
        KnownVariance::EfficiencyBound => (constants.bound / nf).sqrt(),
    };
    let halfwidth = COVERAGE_Z * sd_known;
    let covered = estimates.iter().filter(|&&e| (e - psi0).abs() <= halfwidth).count();
    let coverage = covered as f64 / estimates.len() as f64;
    MetricsRow {
        estimator,
        n,
        p,
        q,
        sqrt_n_abs_bias: nf.sqrt() * (m - psi0).abs(),
        rvar: nf * var / constants.bound,
        rvar_trimmed: nf * trimmed_variance(estimates) / constants.bound,
        coverage,
        coverage_mc_se: (coverage * (1.0 - coverage) / estimates.len() as f64).sqrt(),
        failures,
        flagged,
    }
}

/// Metrics as CSV at full precision.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(
        "estimator,n,p,q,sqrt_n_abs_bias,rvar,coverage,coverage_mc_se,failures,rvar_trimmed\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.estimator,
            r.n,
            r.p,
            r.q,
            r.sqrt_n_abs_bias,
            r.rvar,
            r.coverage,
            r.coverage_mc_se,
            r.failures,
            r.rvar_trimmed
        );
    }
    s
}

fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let dec = (5 - mag).max(0) as usize;
    format!("{v:.dec$}")
}

/// Metric-block text table: one block per metric, rows indexed by (p, q),
/// columns by estimator and sample size.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut estimators: Vec<EstimatorName> = Vec::new();
    let mut ns: Vec<usize> = Vec::new();
    let mut pqs: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        if !estimators.contains(&r.estimator) {
            estimators.push(r.estimator);
        }
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
        if !pqs.iter().any(|&(p, q)| p == r.p && q == r.q) {
            pqs.push((r.p, r.q));
        }
    }
    ns.sort_unstable();

    let lookup = |est: EstimatorName, n: usize, p: f64, q: f64| {
        rows.iter()
            .find(|r| r.estimator == est && r.n == n && r.p == p && r.q == q)
    };

    let mut out = String::new();
    let metrics: [(&str, fn(&MetricsRow) -> f64); 4] = [
        ("sqrt(n)|bias|", |r| r.sqrt_n_abs_bias),
        ("rvar", |r| r.rvar),
        ("rvar_trimmed", |r| r.rvar_trimmed),
        ("coverage", |r| r.coverage),
    ];
    let col_w = 12usize;
    for (label, f) in metrics {
        let _ = writeln!(out, "== {label} ==");
        let _ = write!(out, "{:>6} {:>6} |", "p", "q");
        for est in &estimators {
            for n in &ns {
                let _ = write!(out, " {:>w$}", format!("{est}:n={n}"), w = col_w);
            }
        }
        out.push('\n');
        for &(p, q) in &pqs {
            let _ = write!(out, "{p:>6} {q:>6} |");
            for est in &estimators {
                for &n in &ns {
                    match lookup(*est, n, p, q) {
                        Some(r) => {
                            let mark = if r.flagged { "!" } else { "" };
                            let _ = write!(out, " {:>w$}", format!("{}{}", sig6(f(r)), mark), w = col_w);
                        }
                        None => {
                            let _ = write!(out, " {:>col_w$}", "-");
                        }
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Gauss-Chebyshev quadrature for D1 expectations: the covariate is an
    /// affine image of a Beta(1/2,1/2) draw, whose density is exactly the
    /// Chebyshev weight.
    pub(super) fn d1_expectation(f: impl Fn(f64) -> f64) -> f64 {
        let n = 200_000;
        let mut s = 0.0;
        for k in 1..=n {
            let theta = (2 * k - 1) as f64 * std::f64::consts::PI / (2 * n) as f64;
            let b = 0.5 * (1.0 + theta.cos());
            s += f(6.0 * b - 3.0);
        }
        s / n as f64
    }

    #[test]
    fn d1_support_and_d3_support() {
        let mut rng = derive_rng(4, &[]);
        let d1 = generate(DgpSpec::D1, 500, &mut rng).unwrap();
        for o in d1.iter() {
            let w = o.covariates()[0];
            assert!((-3.0..=3.0).contains(&w));
        }
        let d3 = generate(DgpSpec::D3, 500, &mut rng).unwrap();
        for o in d3.iter() {
            for &w in o.covariates() {
                assert!((0.0..=1.0).contains(&w), "w = {w}");
            }
        }
    }

    #[test]
    fn d1_missingness_rate_matches_quadrature() {
        let mut rng = derive_rng(11, &[]);
        let n = 1_000_000;
        let mut observed = 0usize;
        for _ in 0..n {
            let w = DgpSpec::D1.sample_w(&mut rng);
            if rng.random_bool(DgpSpec::D1.g0(&w)) {
                observed += 1;
            }
        }
        let frac = observed as f64 / n as f64;
        let truth = d1_expectation(|w| expit(1.0 + 0.7 * w));
        let mc_se = (truth * (1.0 - truth) / n as f64).sqrt();
        assert!(
            (frac - truth).abs() < 3.0 * mc_se,
            "mean(A) {frac} vs quadrature {truth}"
        );
    }

    #[test]
    fn oracle_psi0_agrees_across_seeds() {
        let a = oracle_psi0(DgpSpec::D1, 200_000, 1);
        let b = oracle_psi0(DgpSpec::D1, 200_000, 2);
        let combined = (a.mc_se * a.mc_se + b.mc_se * b.mc_se).sqrt();
        assert!((a.value - b.value).abs() < 4.0 * combined);
    }

    #[test]
    fn oracle_psi0_matches_quadrature() {
        let q = d1_expectation(|w| DgpSpec::D1.qbar0(&[w]));
        let mc = oracle_psi0(DgpSpec::D1, 400_000, 9);
        assert!(
            (mc.value - q).abs() < 4.0 * mc.mc_se,
            "mc {} vs quadrature {q}",
            mc.value
        );
    }

    #[test]
    fn constant_outcome_regression_gives_exact_psi0() {
        // if the outcome regression is constant, the oracle mean is that
        // constant regardless of the covariate draw
        let values: Vec<f64> = (0..1000)
            .map(|i| {
                let mut rng = derive_rng(3, &[i]);
                let _ = DgpSpec::D1.sample_w(&mut rng);
                0.3
            })
            .collect();
        assert_eq!(mean(&values), 0.3);
    }

    #[test]
    fn efficiency_bound_dominates_outcome_regression_variance() {
        // law of total variance: the bound exceeds Var(qbar0(W))
        let m = 300_000;
        let psi0 = oracle_psi0(DgpSpec::D1, m, 5);
        let bound = efficiency_bound(DgpSpec::D1, m, 6, psi0.value);
        let mut rng = derive_rng(7, &[]);
        let qvals: Vec<f64> = (0..m)
            .map(|_| DgpSpec::D1.qbar0(&DgpSpec::D1.sample_w(&mut rng)))
            .collect();
        let var_q = sample_variance(&qvals);
        assert!(
            bound.value > var_q,
            "bound {} vs Var(qbar0) {var_q}",
            bound.value
        );
    }

    #[test]
    fn smoke_cell_produces_one_row_per_estimator() {
        let mut config = SimGridConfig::new(DgpSpec::D1);
        config.n_list = vec![120];
        config.replicates = 2;
        config.master_seed = 5;
        let rows = run_grid(&config).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_eq!(r.failures, 0);
        }
        let csv = metrics_to_csv(&rows);
        assert!(csv.starts_with(
            "estimator,n,p,q,sqrt_n_abs_bias,rvar,coverage,coverage_mc_se,failures,rvar_trimmed"
        ));
        assert_eq!(csv.lines().count(), 4);
        let table = metrics_table(&rows);
        assert!(table.contains("sqrt(n)|bias|"));
    }

    #[test]
    fn parallel_and_sequential_grids_are_identical() {
        let mut config = SimGridConfig::new(DgpSpec::D1);
        config.n_list = vec![150];
        config.p_grid = vec![0.1];
        config.q_grid = vec![0.5];
        config.replicates = 6;
        config.master_seed = 99;
        let par = run_grid(&config).unwrap();
        let seq = run_grid_sequential(&config).unwrap();
        assert_eq!(metrics_to_csv(&par), metrics_to_csv(&seq));
    }
}
