//! Data generators for the simulation models, target computation,
//! coverage/length/F1 metrics, and the replication harness.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::pipeline::{run_method, InferenceConfig, InferenceReport, Method};
use crate::solver::solve_refit_from;
use crate::stats::{derive_seed, norm_quantile};

/// One of the simulation designs. Models 1-3 use noise variance 4 and the
/// paper's main scale; 4-6 are their unit-noise high-dimensional variants;
/// 7 is the cube-root misspecified model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: u8,
    pub n: usize,
    pub p: usize,
    /// Signal level; 0.1/0.5/1.0 are the Low/Medium/High settings.
    pub c: f64,
    pub tau: f64,
    pub ar_rho: f64,
    pub noise_variance: f64,
}

impl ModelSpec {
    pub fn new(model_id: u8, n: usize, p: usize, c: f64, tau: f64) -> Result<Self> {
        if !(1..=7).contains(&model_id) {
            return Err(Error::InvalidConfig(format!("model_id {model_id} not in 1..=7")));
        }
        if p < 6 {
            return Err(Error::InvalidConfig(format!(
                "models reference the first 5-6 coordinates; p = {p} < 6"
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidConfig(format!("tau = {tau} not in (0,1)")));
        }
        let noise_variance = if model_id <= 3 { 4.0 } else { 1.0 };
        Ok(Self {
            model_id,
            n,
            p,
            c,
            tau,
            ar_rho: 0.5,
            noise_variance,
        })
    }

    /// Nonzero coordinates of the true quantile coefficient vector.
    pub fn support(&self) -> Vec<usize> {
        match self.model_id {
            2 | 5 => (0..6).collect(),
            _ => (0..5).collect(),
        }
    }

    /// Closed-form quantile coefficients (beta_0(tau), beta(tau)); models
    /// 1-6 only.
    pub fn quantile_coefficients(&self) -> Result<(f64, DVector<f64>)> {
        let sd = self.noise_variance.sqrt();
        let z_tau = norm_quantile(self.tau) * sd;
        let mut beta = DVector::zeros(self.p);
        let beta0 = match self.model_id {
            1 | 4 => {
                for k in 0..5 {
                    beta[k] = self.c;
                }
                0.2 + z_tau
            }
            2 | 5 => {
                beta[0] = 1.5 * z_tau;
                for k in 1..6 {
                    beta[k] = self.c;
                }
                0.2
            }
            3 | 6 => {
                beta[0] = self.c * self.tau;
                beta[1] = self.c * self.tau;
                for k in 2..5 {
                    beta[k] = self.c;
                }
                2.0 * self.c * self.tau
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "model 7 has no closed-form quantile coefficients; use the oracle".into(),
                ))
            }
        };
        Ok((beta0, beta))
    }
}

fn ar_cholesky(p: usize, rho: f64) -> Cholesky<f64, nalgebra::Dyn> {
    let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    Cholesky::new(sigma).expect("AR(1) covariance is positive definite")
}

/// Draw a dataset from the model; deterministic in the seed.
pub fn generate(spec: &ModelSpec, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = (spec.n, spec.p);
    let n_uniform = match spec.model_id {
        2 | 5 => 1,
        3 | 6 => 2,
        _ => 0,
    };
    let p_gauss = p - n_uniform;
    let chol = ar_cholesky(p_gauss, spec.ar_rho);
    let sd = spec.noise_variance.sqrt();

    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        for k in 0..n_uniform {
            x[(i, k)] = 2.0 * rng.gen::<f64>();
        }
        let z = DVector::from_fn(p_gauss, |_, _| StandardNormal.sample(&mut rng));
        let g = chol.l() * z;
        for k in 0..p_gauss {
            x[(i, n_uniform + k)] = g[k];
        }
        y[i] = match spec.model_id {
            1 | 4 => {
                let e: f64 = StandardNormal.sample(&mut rng);
                let mut v = 0.2 + sd * e;
                for k in 0..5 {
                    v += spec.c * x[(i, k)];
                }
                v
            }
            2 | 5 => {
                let e: f64 = StandardNormal.sample(&mut rng);
                let mut v = 0.2 + 1.5 * x[(i, 0)] * sd * e;
                for k in 1..6 {
                    v += spec.c * x[(i, k)];
                }
                v
            }
            3 | 6 => {
                let u: f64 = rng.gen();
                2.0 * spec.c * u
                    + spec.c * u * x[(i, 0)]
                    + spec.c * u * x[(i, 1)]
                    + spec.c * (x[(i, 2)] + x[(i, 3)] + x[(i, 4)])
            }
            7 => {
                let e: f64 = StandardNormal.sample(&mut rng);
                let mut v = 0.2 + sd * e;
                for k in 0..5 {
                    v += spec.c * x[(i, k)];
                }
                v.cbrt()
            }
            _ => unreachable!(),
        };
    }
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    Dataset::new(x, y, names).expect("generated dimensions are consistent")
}

/// True target restricted to E when the conditional quantile is linear in
/// the selected set (E contains the support, models 1-6).
pub fn true_target(spec: &ModelSpec, e: &[usize]) -> Result<Vec<f64>> {
    let (_, beta) = spec.quantile_coefficients()?;
    let support = spec.support();
    if !support.iter().all(|s| e.contains(s)) {
        return Err(Error::InvalidConfig(
            "selected set does not contain the support; use the oracle target".into(),
        ));
    }
    Ok(e.iter().map(|&j| beta[j]).collect())
}

/// Large-sample refit oracle for the projected target: an independent
/// dataset of size factor * n regressed on the selected columns.
pub fn target_oracle_mc(
    spec: &ModelSpec,
    e: &[usize],
    tau: f64,
    kernel: &KernelSpec,
    factor: usize,
    seed: u64,
    with_intercept: bool,
) -> Result<Vec<f64>> {
    let big = ModelSpec {
        n: spec.n * factor,
        ..*spec
    };
    let data = generate(&big, seed);
    let cols = data.x.select_columns(e.iter());
    let design = if with_intercept {
        let mut x = DMatrix::zeros(big.n, e.len() + 1);
        x.column_mut(0).fill(1.0);
        x.view_mut((0, 1), (big.n, e.len())).copy_from(&cols);
        x
    } else {
        cols
    };
    // Warm start from the model's quantile coefficients where they exist;
    // the projection target is close, and n' is large enough that the
    // Newton iterations dominate the oracle's cost.
    let warm = spec.quantile_coefficients().ok().map(|(b0, beta)| {
        let skip = usize::from(with_intercept);
        DVector::from_fn(e.len() + skip, |k, _| {
            if with_intercept && k == 0 {
                b0
            } else {
                beta[e[k - skip]]
            }
        })
    });
    let refit = solve_refit_from(&design, &data.y, tau, kernel, warm.as_ref())?;
    if !refit.converged {
        return Err(Error::NonConvergence {
            what: "oracle refit",
            iterations: refit.iterations,
            residual: refit.gradient_norm,
        });
    }
    let skip = usize::from(with_intercept);
    Ok((0..e.len()).map(|k| refit.beta_e[k + skip]).collect())
}

/// Target values for a report's selected set: closed form when E covers
/// the support of a linear model, otherwise the Appendix-style oracle.
pub fn targets_for_selection(
    spec: &ModelSpec,
    e: &[usize],
    h_infer: f64,
    kernel_family: crate::kernel::KernelFamily,
    oracle_factor: usize,
    oracle_seed: u64,
    with_intercept: bool,
) -> Result<Vec<f64>> {
    if spec.model_id != 7 {
        if let Ok(t) = true_target(spec, e) {
            return Ok(t);
        }
    }
    let kernel = KernelSpec::new(kernel_family, h_infer)?;
    target_oracle_mc(spec, e, spec.tau, &kernel, oracle_factor, oracle_seed, with_intercept)
}

/// Aggregated metrics for one (model, signal, method) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub coverage: f64,
    pub mean_length: f64,
    /// Proposed-over-Splitting mean length; filled by the suite aggregator.
    pub length_ratio: f64,
    pub f1_before: f64,
    pub f1_after: f64,
    pub recall: f64,
    pub unbounded_fraction: f64,
    pub replications: usize,
    pub failures: usize,
}

/// One replication's outcome for one method.
#[derive(Debug, Clone, Serialize)]
pub struct RepOutcome {
    pub selected: Vec<usize>,
    pub lcb: Vec<f64>,
    pub ucb: Vec<f64>,
    pub estimate: Vec<f64>,
    pub pvalue: Vec<f64>,
    pub targets: Vec<f64>,
}

impl RepOutcome {
    pub fn from_report(report: &InferenceReport, targets: Vec<f64>) -> Self {
        Self {
            selected: report.selected.clone(),
            lcb: report.rows.iter().map(|r| r.lcb).collect(),
            ucb: report.rows.iter().map(|r| r.ucb).collect(),
            estimate: report.rows.iter().map(|r| r.estimate).collect(),
            pvalue: report.rows.iter().map(|r| r.pvalue).collect(),
            targets,
        }
    }
}

/// Coverage, lengths, recall and the two F1 scores over replications.
pub fn compute_metrics(outcomes: &[RepOutcome], truth_support: &[usize]) -> Metrics {
    let mut coverage_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_before_sum = 0.0;
    let mut f1_after_sum = 0.0;
    let mut length_sum = 0.0;
    let mut bounded = 0usize;
    let mut unbounded = 0usize;
    let s_len = truth_support.len().max(1);

    for rep in outcomes {
        let q = rep.selected.len();
        let mut covered = 0usize;
        let mut tp_after = 0usize;
        let mut fp_after = 0usize;
        for k in 0..q {
            let (lo, hi) = (rep.lcb[k], rep.ucb[k]);
            if rep.targets[k] >= lo && rep.targets[k] <= hi {
                covered += 1;
            }
            if lo.is_finite() && hi.is_finite() {
                length_sum += hi - lo;
                bounded += 1;
            } else {
                unbounded += 1;
            }
            let excludes_zero = !(lo <= 0.0 && 0.0 <= hi);
            let is_signal = truth_support.contains(&rep.selected[k]);
            if excludes_zero {
                if is_signal {
                    tp_after += 1;
                } else {
                    fp_after += 1;
                }
            }
        }
        coverage_sum += covered as f64 / q.max(1) as f64;

        let tp: usize = rep
            .selected
            .iter()
            .filter(|j| truth_support.contains(j))
            .count();
        let fp = q - tp;
        let fn_before = s_len - tp.min(s_len);
        recall_sum += tp as f64 / s_len as f64;
        f1_before_sum += f1(tp, fp, fn_before);
        // FN after inference: signals missed by selection or whose interval
        // still contains zero.
        let fn_after = s_len - tp_after.min(s_len);
        f1_after_sum += f1(tp_after, fp_after, fn_after);
    }

    let r = outcomes.len().max(1) as f64;
    Metrics {
        coverage: coverage_sum / r,
        mean_length: if bounded > 0 {
            length_sum / bounded as f64
        } else {
            f64::NAN
        },
        length_ratio: f64::NAN,
        f1_before: f1_before_sum / r,
        f1_after: f1_after_sum / r,
        recall: recall_sum / r,
        unbounded_fraction: if bounded + unbounded > 0 {
            unbounded as f64 / (bounded + unbounded) as f64
        } else {
            0.0
        },
        replications: outcomes.len(),
        failures: 0,
    }
}

fn f1(tp: usize, fp: usize, fn_count: usize) -> f64 {
    let denom = tp as f64 + 0.5 * (fp + fn_count) as f64;
    if denom == 0.0 {
        0.0
    } else {
        tp as f64 / denom
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub models: Vec<u8>,
    pub signals: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub methods: Vec<Method>,
    pub inference: InferenceConfig,
    pub oracle_factor: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            models: vec![1, 2, 3],
            signals: vec![0.1, 0.5, 1.0],
            n: 400,
            p: 50,
            tau: 0.7,
            reps: 200,
            master_seed: 20240601,
            workers: 8,
            methods: vec![Method::Proposed, Method::Naive, Method::Splitting],
            inference: InferenceConfig::default(),
            oracle_factor: 100,
        }
    }
}

/// One per-variable row of the per-replication CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RepRow {
    pub model: u8,
    pub c: f64,
    pub method: Method,
    pub rep: usize,
    pub variable: usize,
    pub estimate: f64,
    pub lcb: f64,
    pub ucb: f64,
    pub pvalue: f64,
    pub target: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub model: u8,
    pub c: f64,
    pub method: Method,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResults {
    pub cells: Vec<CellSummary>,
    pub rows: Vec<RepRow>,
    pub failures: Vec<String>,
}

struct RepResult {
    cell: usize,
    rep: usize,
    outcomes: Vec<(Method, Option<RepOutcome>)>,
    errors: Vec<String>,
}

fn run_one_rep(
    suite: &SuiteConfig,
    spec: &ModelSpec,
    cell_idx: usize,
    rep: usize,
) -> RepResult {
    let cell_seed = derive_seed(suite.master_seed, cell_idx as u64);
    let data_seed = derive_seed(cell_seed, 4 * rep as u64);
    let method_seed = derive_seed(cell_seed, 4 * rep as u64 + 1);
    let oracle_seed = derive_seed(cell_seed, 4 * rep as u64 + 2);
    let data = generate(spec, data_seed);
    let cfg = InferenceConfig {
        tau: spec.tau,
        seed: method_seed,
        ..suite.inference.clone()
    };
    let mut outcomes = Vec::with_capacity(suite.methods.len());
    let mut errors = Vec::new();
    let mut oracle_cache: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    for &method in &suite.methods {
        match run_method(&data, &cfg, method) {
            Ok(report) => {
                let e = report.selected.clone();
                let targets = if e.is_empty() {
                    Vec::new()
                } else if let Some(t) = oracle_cache.get(&e) {
                    t.clone()
                } else {
                    match targets_for_selection(
                        spec,
                        &e,
                        report.config.h_infer,
                        cfg.kernel,
                        suite.oracle_factor,
                        oracle_seed,
                        cfg.intercept,
                    ) {
                        Ok(t) => {
                            oracle_cache.insert(e.clone(), t.clone());
                            t
                        }
                        Err(err) => {
                            errors.push(format!(
                                "cell {cell_idx} rep {rep} {}: target oracle failed: {err}",
                                method.name()
                            ));
                            outcomes.push((method, None));
                            continue;
                        }
                    }
                };
                outcomes.push((method, Some(RepOutcome::from_report(&report, targets))));
            }
            Err(err) => {
                errors.push(format!(
                    "cell {cell_idx} rep {rep} {}: {err}",
                    method.name()
                ));
                outcomes.push((method, None));
            }
        }
    }
    RepResult {
        cell: cell_idx,
        rep,
        outcomes,
        errors,
    }
}

/// Run the whole grid of (model, signal) cells. Deterministic in the
/// master seed and independent of the worker count.
pub fn run_replications(suite: &SuiteConfig) -> Result<SuiteResults> {
    if suite.reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    let mut cells: Vec<(u8, f64, ModelSpec)> = Vec::new();
    for &m in &suite.models {
        for &c in &suite.signals {
            let spec = ModelSpec::new(m, suite.n, suite.p, c, suite.tau)?;
            cells.push((m, c, spec));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|ci| (0..suite.reps).map(move |r| (ci, r)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(suite.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let mut results: Vec<RepResult> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(ci, r)| run_one_rep(suite, &cells[ci].2, ci, r))
            .collect()
    });
    results.sort_by_key(|r| (r.cell, r.rep));

    let mut out_cells = Vec::new();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (ci, &(model, c, ref spec)) in cells.iter().enumerate() {
        let support = spec.support();
        let mut per_method: HashMap<&'static str, Vec<RepOutcome>> = HashMap::new();
        let mut fail_count: HashMap<&'static str, usize> = HashMap::new();
        for rr in results.iter_mut().filter(|r| r.cell == ci) {
            failures.extend(rr.errors.drain(..));
            for (method, out) in &rr.outcomes {
                match out {
                    Some(o) => {
                        for k in 0..o.selected.len() {
                            rows.push(RepRow {
                                model,
                                c,
                                method: *method,
                                rep: rr.rep,
                                variable: o.selected[k],
                                estimate: o.estimate[k],
                                lcb: o.lcb[k],
                                ucb: o.ucb[k],
                                pvalue: o.pvalue[k],
                                target: o.targets[k],
                                covered: o.targets[k] >= o.lcb[k] && o.targets[k] <= o.ucb[k],
                            });
                        }
                        per_method.entry(method.name()).or_default().push(o.clone());
                    }
                    None => {
                        *fail_count.entry(method.name()).or_default() += 1;
                    }
                }
            }
        }
        let prop_len = per_method
            .get(Method::Proposed.name())
            .map(|o| compute_metrics(o, &support).mean_length);
        let split_len = per_method
            .get(Method::Splitting.name())
            .map(|o| compute_metrics(o, &support).mean_length);
        for &method in &suite.methods {
            let outcomes = per_method.remove(method.name()).unwrap_or_default();
            let mut metrics = compute_metrics(&outcomes, &support);
            metrics.failures = fail_count.get(method.name()).copied().unwrap_or(0);
            if method == Method::Proposed {
                if let (Some(pl), Some(sl)) = (prop_len, split_len) {
                    metrics.length_ratio = pl / sl;
                }
            }
            out_cells.push(CellSummary {
                model,
                c,
                method,
                metrics,
            });
        }
    }
    Ok(SuiteResults {
        cells: out_cells,
        rows,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shapes_and_determinism() {
        let spec = ModelSpec::new(1, 50, 8, 1.0, 0.7).unwrap();
        let a = generate(&spec, 9);
        let b = generate(&spec, 9);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.x.nrows(), 50);
        assert_eq!(a.x.ncols(), 8);
        assert_eq!(a.y.len(), 50);
    }

    #[test]
    fn ar_correlation_two_apart() {
        // corr(x1, x3) = rho^2 = 0.25 under the AR design.
        let spec = ModelSpec::new(1, 100_000, 6, 0.5, 0.7).unwrap();
        let d = generate(&spec, 4);
        let a = d.x.column(0);
        let b = d.x.column(2);
        let n = d.n() as f64;
        let (ma, mb) = (a.sum() / n, b.sum() / n);
        let cov = a
            .iter()
            .zip(b.iter())
            .map(|(&u, &v)| (u - ma) * (v - mb))
            .sum::<f64>()
            / n;
        let va = a.iter().map(|&u| (u - ma) * (u - ma)).sum::<f64>() / n;
        let vb = b.iter().map(|&v| (v - mb) * (v - mb)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!((corr - 0.25).abs() < 0.01, "corr = {corr}");
    }

    #[test]
    fn model1_quantile_residuals_center_at_zero() {
        let spec = ModelSpec::new(1, 200_000, 6, 1.0, 0.7).unwrap();
        let d = generate(&spec, 11);
        let (b0, beta) = spec.quantile_coefficients().unwrap();
        let mut resid: Vec<f64> = (0..d.n())
            .map(|i| {
                let mut v = d.y[i] - b0;
                for j in 0..d.p() {
                    v -= beta[j] * d.x[(i, j)];
                }
                v
            })
            .collect();
        resid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = resid[(0.7 * resid.len() as f64) as usize];
        assert!(q.abs() < 0.02, "tau-quantile of residuals = {q}");
    }

    #[test]
    fn model_targets_match_paper_values() {
        // Model 3 at tau=0.7, c=1: (0.7, 0.7, 1, 1, 1).
        let spec = ModelSpec::new(3, 100, 10, 1.0, 0.7).unwrap();
        let t = true_target(&spec, &[0, 1, 2, 3, 4, 7]).unwrap();
        assert_relative_eq!(t[0], 0.7, epsilon = 1e-12);
        assert_relative_eq!(t[1], 0.7, epsilon = 1e-12);
        assert_relative_eq!(t[2], 1.0, epsilon = 1e-12);
        assert_relative_eq!(t[5], 0.0, epsilon = 1e-12);
        // Model 2 first coordinate: 1.5 * qnorm(0.7, sd = 2).
        let spec = ModelSpec::new(2, 100, 10, 1.0, 0.7).unwrap();
        let t = true_target(&spec, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_relative_eq!(t[0], 1.5730, epsilon = 1e-3);
        // Model 1 intercept-adjusted coefficients.
        let spec = ModelSpec::new(1, 100, 10, 1.0, 0.7).unwrap();
        let t = true_target(&spec, &[0, 1, 2, 3, 4]).unwrap();
        assert!(t.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn missing_support_requires_oracle() {
        let spec = ModelSpec::new(1, 100, 10, 1.0, 0.7).unwrap();
        assert!(true_target(&spec, &[0, 1, 2]).is_err());
        let spec7 = ModelSpec::new(7, 100, 10, 1.0, 0.7).unwrap();
        assert!(true_target(&spec7, &[0, 1, 2, 3, 4]).is_err());
    }

    #[test]
    fn metric_formulas() {
        // TP=5, FP=5, FN=0 -> F1 = 5/7.5.
        assert_relative_eq!(f1(5, 5, 0), 0.6667, epsilon = 1e-4);
        // Empty selection: coverage 0 by the max(|E|,1) convention.
        let outcome = RepOutcome {
            selected: vec![],
            lcb: vec![],
            ucb: vec![],
            estimate: vec![],
            pvalue: vec![],
            targets: vec![],
        };
        let m = compute_metrics(&[outcome], &[0, 1, 2, 3, 4]);
        assert_eq!(m.coverage, 0.0);
        assert_eq!(m.recall, 0.0);
        // All intervals cover.
        let outcome = RepOutcome {
            selected: vec![0, 1],
            lcb: vec![0.5, -0.1],
            ucb: vec![1.5, 0.1],
            estimate: vec![1.0, 0.0],
            pvalue: vec![0.001, 0.8],
            targets: vec![1.0, 0.0],
        };
        let m = compute_metrics(&[outcome], &[0, 1]);
        assert_eq!(m.coverage, 1.0);
        assert!(m.mean_length > 0.0);
        assert!(m.unbounded_fraction == 0.0);
    }

    #[test]
    fn metric_bounds_hold() {
        let spec = ModelSpec::new(1, 60, 8, 0.5, 0.7).unwrap();
        let d = generate(&spec, 3);
        let cfg = InferenceConfig {
            tau: 0.7,
            seed: 1,
            ..InferenceConfig::default()
        };
        let rep = run_method(&d, &cfg, Method::Naive).unwrap();
        let targets = vec![0.0; rep.selected.len()];
        let o = RepOutcome::from_report(&rep, targets);
        let m = compute_metrics(&[o], &spec.support());
        for v in [m.coverage, m.recall, m.f1_before, m.f1_after, m.unbounded_fraction] {
            assert!((0.0..=1.0).contains(&v), "metric out of range: {v}");
        }
    }
}
