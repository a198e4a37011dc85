//! End-to-end inference: select with the randomized penalized solver,
//! refit, estimate moments, build the event geometry, and invert the
//! pivot per selected coordinate. The naive and data-splitting baselines
//! share the same report shape.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::build_geometry;
use crate::kernel::{default_bandwidths, default_lambda, KernelFamily, KernelSpec};
use crate::moments::{auxiliary_statistic, estimate_moments, MomentEstimates};
use crate::pivot::{invert_interval, pivot_value, pvalue, PivotContext};
use crate::solver::{
    draw_randomization, solve_refit_from, solve_randomized_penalized_weighted, PenalizedSolution,
    RandomizationSpec, RefitSolution,
};
use crate::stats::{derive_seed, norm_cdf, norm_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Naive,
    Splitting,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Naive => "naive",
            Method::Splitting => "splitting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthMode {
    /// h' = h: the main-text setup.
    SameAsSelection,
    /// h' = ((q + log n)/n)^(2/5) with q the selected-set size.
    AppendixE,
    Explicit {
        h_select: f64,
        h_infer: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub tau: f64,
    pub alpha: f64,
    pub lambda_scale: f64,
    /// Overrides the c sqrt(log p / n) formula when set.
    pub explicit_lambda: Option<f64>,
    pub kernel: KernelFamily,
    pub bandwidth_mode: BandwidthMode,
    /// Variance of each coordinate of sqrt(n) omega.
    pub delta_sq: f64,
    /// Coercivity ridge of the selection program; None picks the default
    /// rule 0.1 sqrt(delta_sq) sqrt(p)/sqrt(n)-free ... resolved at fit time.
    pub ridge: Option<f64>,
    pub seed: u64,
    pub standardize: bool,
    pub intercept: bool,
    pub split_fraction: f64,
    /// When set, evaluate the pivot on a b-grid of this size per row and
    /// record violations of monotonicity (diagnostic).
    pub monotonicity_grid: Option<usize>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            tau: 0.7,
            alpha: 0.1,
            lambda_scale: 0.6,
            explicit_lambda: None,
            kernel: KernelFamily::Gaussian,
            bandwidth_mode: BandwidthMode::SameAsSelection,
            delta_sq: 1.0,
            ridge: None,
            seed: 0,
            standardize: true,
            intercept: true,
            split_fraction: 2.0 / 3.0,
            monotonicity_grid: None,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!("tau = {} not in (0,1)", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {} not in (0,1)",
                self.alpha
            )));
        }
        if self.delta_sq < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "delta_sq = {} must be nonnegative",
                self.delta_sq
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split_fraction = {} not in (0,1)",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

/// Everything that affected the numbers, echoed into every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub lambda_scale: f64,
    pub kernel: KernelFamily,
    pub h_select: f64,
    pub h_infer: f64,
    pub delta_sq: f64,
    pub ridge: f64,
    pub seed: u64,
    pub standardize: bool,
    pub intercept: bool,
    pub split_fraction: f64,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub name: String,
    /// Original column index in the input design matrix.
    pub index: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub lcb: f64,
    pub ucb: f64,
    pub pvalue: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub kkt_residual: f64,
    pub solver_iterations: usize,
    pub refit_gradient_norm: f64,
    pub refit_iterations: usize,
    pub max_linearization_residual: f64,
    pub ridge_applied: bool,
    pub monotonicity_violations: usize,
    pub rows_containing_refit_estimate: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceReport {
    pub method: Method,
    pub rows: Vec<ReportRow>,
    pub selected: Vec<usize>,
    pub intercept_estimate: Option<f64>,
    pub flags: Vec<String>,
    pub seed: u64,
    pub config: ConfigEcho,
    pub diagnostics: Diagnostics,
}

/// Column standardization state; identity when disabled.
struct Standardizer {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Standardizer {
    fn fit(data: &Dataset, enabled: bool) -> (Self, DMatrix<f64>, Vec<String>) {
        let mut flags = Vec::new();
        if !enabled {
            return (
                Self {
                    means: vec![0.0; data.p()],
                    sds: vec![1.0; data.p()],
                },
                data.x.clone(),
                flags,
            );
        }
        let (means, mut sds) = data.column_stats();
        for (j, sd) in sds.iter_mut().enumerate() {
            if *sd == 0.0 {
                flags.push(format!("constant-column:{}", data.names[j]));
                *sd = 1.0;
            }
        }
        let mut x = data.x.clone();
        for j in 0..data.p() {
            for i in 0..data.n() {
                x[(i, j)] = (x[(i, j)] - means[j]) / sds[j];
            }
        }
        (Self { means, sds }, x, flags)
    }
}

/// Design with an optional leading unpenalized intercept column.
struct AugmentedDesign {
    x: DMatrix<f64>,
    weights: DVector<f64>,
    /// Maps augmented column -> original column (None for the intercept).
    origin: Vec<Option<usize>>,
}

fn augment(x_std: &DMatrix<f64>, intercept: bool) -> AugmentedDesign {
    let (n, p) = (x_std.nrows(), x_std.ncols());
    if intercept {
        let mut x = DMatrix::zeros(n, p + 1);
        x.column_mut(0).fill(1.0);
        x.view_mut((0, 1), (n, p)).copy_from(x_std);
        let mut weights = DVector::from_element(p + 1, 1.0);
        weights[0] = 0.0;
        let mut origin = vec![None];
        origin.extend((0..p).map(Some));
        AugmentedDesign { x, weights, origin }
    } else {
        AugmentedDesign {
            x: x_std.clone(),
            weights: DVector::from_element(p, 1.0),
            origin: (0..p).map(Some).collect(),
        }
    }
}

/// Penalty coefficient of the sqrt(n)-scaled program. The tuning value
/// c sqrt(log p / n) (and any explicit lambda) is the per-sample-loss
/// penalty, so it enters the sqrt(n)-scaled objective multiplied by
/// sqrt(n); the reported F1/recall behaviour identifies this convention.
fn resolve_lambda(cfg: &InferenceConfig, n: usize, p: usize) -> f64 {
    let per_sample = cfg
        .explicit_lambda
        .unwrap_or_else(|| default_lambda(cfg.lambda_scale, n, p));
    per_sample * (n as f64).sqrt()
}

/// Default coercivity ridge: proportional to the randomization scale and
/// the aspect ratio, zero when the program is unrandomized.
fn resolve_ridge(cfg: &InferenceConfig, n: usize, p_aug: usize, delta_sq: f64) -> f64 {
    cfg.ridge
        .unwrap_or_else(|| delta_sq.sqrt() * (p_aug as f64 / n as f64).sqrt())
}

fn resolve_bandwidths(cfg: &InferenceConfig, n: usize, p: usize, q_selected: usize) -> (f64, f64) {
    match cfg.bandwidth_mode {
        BandwidthMode::SameAsSelection => {
            let (h, _) = default_bandwidths(n, p, cfg.tau, q_selected);
            (h, h)
        }
        BandwidthMode::AppendixE => default_bandwidths(n, p, cfg.tau, q_selected),
        BandwidthMode::Explicit { h_select, h_infer } => (h_select, h_infer),
    }
}

#[allow(clippy::too_many_arguments)]
fn echo(
    cfg: &InferenceConfig,
    method: Method,
    n: usize,
    p: usize,
    lambda: f64,
    h_select: f64,
    h_infer: f64,
    delta_sq: f64,
    ridge: f64,
) -> ConfigEcho {
    ConfigEcho {
        method,
        n,
        p,
        tau: cfg.tau,
        alpha: cfg.alpha,
        lambda,
        lambda_scale: cfg.lambda_scale,
        kernel: cfg.kernel,
        h_select,
        h_infer,
        delta_sq,
        ridge,
        seed: cfg.seed,
        standardize: cfg.standardize,
        intercept: cfg.intercept,
        split_fraction: cfg.split_fraction,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

struct FitPieces {
    sol: PenalizedSolution,
    ridge: f64,
    refit: RefitSolution,
    moments: MomentEstimates,
    active_plus: Vec<usize>,
    h_select: f64,
    h_infer: f64,
    lambda: f64,
}

/// Selection, refit, and moment estimation shared by all three methods.
/// `selection_x`/`selection_y` may be a fold of the inference data.
#[allow(clippy::too_many_arguments)]
fn fit_common(
    cfg: &InferenceConfig,
    aug_select: &AugmentedDesign,
    y_select: &DVector<f64>,
    aug_infer: &AugmentedDesign,
    y_infer: &DVector<f64>,
    p_raw: usize,
    delta_sq: f64,
    rng_seed: u64,
) -> Result<Option<FitPieces>> {
    let n_sel = y_select.len();
    let n_inf = y_infer.len();
    let lambda = resolve_lambda(cfg, n_sel, p_raw);
    let (h_select, _) = resolve_bandwidths(cfg, n_sel, p_raw, 0);
    let spec_select = KernelSpec::new(cfg.kernel, h_select)?;

    let p_aug = aug_select.x.ncols();
    let rand_spec = RandomizationSpec::isotropic(p_aug, delta_sq, rng_seed)?;
    let omega = draw_randomization(&rand_spec, n_sel)?;
    let ridge = resolve_ridge(cfg, n_sel, p_aug, delta_sq);

    let sol = solve_randomized_penalized_weighted(
        &aug_select.x,
        y_select,
        cfg.tau,
        &spec_select,
        lambda,
        &omega,
        &aug_select.weights,
        ridge,
    )?;
    if !sol.converged {
        return Err(Error::NonConvergence {
            what: if sol.diverged {
                "penalized solver (objective unbounded along the randomization direction; reduce delta2 or increase n)"
            } else {
                "penalized solver"
            },
            iterations: sol.iterations,
            residual: sol.kkt_residual,
        });
    }
    if sol.active_set.is_empty() {
        return Ok(None);
    }

    let active_plus = sol.extended_active();
    if n_inf <= active_plus.len() {
        return Err(Error::RankDeficient(format!(
            "n = {} too small for |E| = {} after selection",
            n_inf,
            active_plus.len()
        )));
    }
    let (_, h_infer) = match cfg.bandwidth_mode {
        BandwidthMode::SameAsSelection => (h_select, h_select),
        _ => {
            let (hs, hi) = resolve_bandwidths(cfg, n_sel, p_raw, sol.active_set.len());
            (hs, hi)
        }
    };
    let spec_infer = KernelSpec::new(cfg.kernel, h_infer)?;

    let x_e = aug_infer.x.select_columns(active_plus.iter());
    let warm = DVector::from_fn(active_plus.len(), |k, _| sol.beta[active_plus[k]]);
    let refit = solve_refit_from(&x_e, y_infer, cfg.tau, &spec_infer, Some(&warm))?;
    if !refit.converged {
        return Err(Error::NonConvergence {
            what: "refit solver",
            iterations: refit.iterations,
            residual: refit.gradient_norm,
        });
    }
    let moments = estimate_moments(
        &aug_infer.x,
        y_infer,
        &refit,
        &active_plus,
        cfg.tau,
        cfg.kernel,
        h_select,
        h_infer,
    )?;
    Ok(Some(FitPieces {
        ridge,
        sol,
        refit,
        moments,
        active_plus,
        h_select,
        h_infer,
        lambda,
    }))
}

fn empty_report(cfg: &InferenceConfig, method: Method, echo: ConfigEcho) -> InferenceReport {
    InferenceReport {
        method,
        rows: Vec::new(),
        selected: Vec::new(),
        intercept_estimate: None,
        flags: vec!["empty-selection".to_string()],
        seed: cfg.seed,
        config: echo,
        diagnostics: Diagnostics::default(),
    }
}

fn intercept_estimate_original_scale(
    pieces: &FitPieces,
    aug: &AugmentedDesign,
    std: &Standardizer,
) -> Option<f64> {
    let pos = pieces.active_plus.iter().position(|&c| aug.origin[c].is_none())?;
    let mut b0 = pieces.refit.beta_e[pos];
    for (k, &col) in pieces.active_plus.iter().enumerate() {
        if let Some(orig) = aug.origin[col] {
            b0 -= pieces.refit.beta_e[k] * std.means[orig] / std.sds[orig];
        }
    }
    Some(b0)
}

/// Selective inference with the randomized pivot for every selected
/// coordinate.
pub fn selective_inference(data: &Dataset, cfg: &InferenceConfig) -> Result<InferenceReport> {
    cfg.validate()?;
    let n = data.n();
    let p_raw = data.p();
    let (std, x_std, mut flags) = Standardizer::fit(data, cfg.standardize);
    let aug = augment(&x_std, cfg.intercept);

    let pieces = fit_common(
        cfg,
        &aug,
        &data.y,
        &aug,
        &data.y,
        p_raw,
        cfg.delta_sq,
        derive_seed(cfg.seed, 1),
    )?;
    let Some(pieces) = pieces else {
        let lambda = resolve_lambda(cfg, n, p_raw);
        let (h, _) = resolve_bandwidths(cfg, n, p_raw, 0);
        let ridge = resolve_ridge(cfg, n, aug.x.ncols(), cfg.delta_sq);
        return Ok(empty_report(
            cfg,
            Method::Proposed,
            echo(cfg, Method::Proposed, n, p_raw, lambda, h, h, cfg.delta_sq, ridge),
        ));
    };
    flags.extend(pieces.moments.ridge_applied.then(|| "ridge-applied".to_string()));

    let omega_cov = DMatrix::identity(aug.x.ncols(), aug.x.ncols()) * cfg.delta_sq;
    let sqrt_n = (n as f64).sqrt();
    let mut rows = Vec::with_capacity(pieces.sol.active_set.len());
    let mut diag = Diagnostics {
        kkt_residual: pieces.sol.kkt_residual,
        solver_iterations: pieces.sol.iterations,
        refit_gradient_norm: pieces.refit.gradient_norm,
        refit_iterations: pieces.refit.iterations,
        ridge_applied: pieces.moments.ridge_applied,
        ..Diagnostics::default()
    };

    for &col in &pieces.sol.active_set {
        let orig = aug.origin[col].expect("penalized columns map to input columns");
        let pos = pieces.moments.active_position(col)?;
        let beta_hat_j = pieces.refit.beta_e[pos];
        let sigma_j_sq = pieces.moments.sigma_j_sq(col)?;
        let aux = auxiliary_statistic(col, &pieces.refit, &pieces.moments)?;
        let geom = build_geometry(
            col,
            &pieces.sol,
            &pieces.refit,
            &pieces.moments,
            &aux,
            &omega_cov,
            n,
        )?;
        diag.max_linearization_residual = diag
            .max_linearization_residual
            .max(geom.linearization_residual);
        let ctx = PivotContext::new(&geom, beta_hat_j, sigma_j_sq, n)?;
        let interval = invert_interval(cfg.alpha, &ctx)?;
        let pv = pvalue(0.0, &ctx)?;

        let mut row_flags = Vec::new();
        if interval.unbounded_lower {
            row_flags.push("unbounded-lower".to_string());
        }
        if interval.unbounded_upper {
            row_flags.push("unbounded-upper".to_string());
        }
        if let Some(grid) = cfg.monotonicity_grid {
            let viol = monotonicity_violations(&ctx, beta_hat_j, sigma_j_sq, n, grid)?;
            if viol > 0 {
                diag.monotonicity_violations += viol;
                row_flags.push("pivot-not-monotone".to_string());
            }
        }
        if interval.lcb <= beta_hat_j && beta_hat_j <= interval.ucb {
            diag.rows_containing_refit_estimate += 1;
        }

        let sd = std.sds[orig];
        rows.push(ReportRow {
            name: data.names[orig].clone(),
            index: orig,
            estimate: beta_hat_j / sd,
            std_error: sigma_j_sq.sqrt() / sqrt_n / sd,
            lcb: interval.lcb / sd,
            ucb: interval.ucb / sd,
            pvalue: pv,
            flags: row_flags,
        });
    }
    rows.sort_by_key(|r| r.index);

    let selected: Vec<usize> = rows.iter().map(|r| r.index).collect();
    let intercept_estimate = intercept_estimate_original_scale(&pieces, &aug, &std);
    Ok(InferenceReport {
        method: Method::Proposed,
        rows,
        selected,
        intercept_estimate,
        flags,
        seed: cfg.seed,
        config: echo(
            cfg,
            Method::Proposed,
            n,
            p_raw,
            pieces.lambda,
            pieces.h_select,
            pieces.h_infer,
            cfg.delta_sq,
            pieces.ridge,
        ),
        diagnostics: diag,
    })
}

fn monotonicity_violations(
    ctx: &PivotContext,
    beta_hat_j: f64,
    sigma_j_sq: f64,
    n: usize,
    grid: usize,
) -> Result<usize> {
    let half = 12.0 * sigma_j_sq.sqrt() / (n as f64).sqrt();
    let mut prev = f64::INFINITY;
    let mut violations = 0;
    for k in 0..grid {
        let b = beta_hat_j - half + 2.0 * half * k as f64 / (grid as f64 - 1.0);
        let pv = pivot_value(b, ctx)?;
        if pv > prev + 1e-8 {
            violations += 1;
        }
        prev = pv;
    }
    Ok(violations)
}

/// Wald rows from a refit plus sandwich moments; shared by Naive and
/// Splitting.
fn wald_rows(
    data_names: &[String],
    aug: &AugmentedDesign,
    std: &Standardizer,
    pieces: &FitPieces,
    n_infer: usize,
    alpha: f64,
) -> Result<Vec<ReportRow>> {
    let z = norm_quantile(1.0 - alpha / 2.0);
    let sqrt_n = (n_infer as f64).sqrt();
    let mut rows = Vec::new();
    for &col in &pieces.sol.active_set {
        let orig = aug.origin[col].expect("penalized columns map to input columns");
        let pos = pieces.moments.active_position(col)?;
        let est = pieces.refit.beta_e[pos];
        let se = pieces.moments.sigma_j_sq(col)?.sqrt() / sqrt_n;
        let sd = std.sds[orig];
        let zstat = est / se;
        rows.push(ReportRow {
            name: data_names[orig].clone(),
            index: orig,
            estimate: est / sd,
            std_error: se / sd,
            lcb: (est - z * se) / sd,
            ucb: (est + z * se) / sd,
            pvalue: 2.0 * norm_cdf(-zstat.abs()),
            flags: Vec::new(),
        });
    }
    rows.sort_by_key(|r| r.index);
    Ok(rows)
}

/// Naive baseline: selection without randomization, Wald intervals on the
/// same data without any selection adjustment.
pub fn naive_inference(data: &Dataset, cfg: &InferenceConfig) -> Result<InferenceReport> {
    cfg.validate()?;
    let n = data.n();
    let p_raw = data.p();
    let (std, x_std, mut flags) = Standardizer::fit(data, cfg.standardize);
    let aug = augment(&x_std, cfg.intercept);

    let pieces = fit_common(
        cfg,
        &aug,
        &data.y,
        &aug,
        &data.y,
        p_raw,
        0.0,
        derive_seed(cfg.seed, 1),
    )?;
    let lambda = resolve_lambda(cfg, n, p_raw);
    let (h, _) = resolve_bandwidths(cfg, n, p_raw, 0);
    let Some(pieces) = pieces else {
        return Ok(empty_report(
            cfg,
            Method::Naive,
            echo(cfg, Method::Naive, n, p_raw, lambda, h, h, 0.0, 0.0),
        ));
    };
    flags.extend(pieces.moments.ridge_applied.then(|| "ridge-applied".to_string()));
    let rows = wald_rows(&data.names, &aug, &std, &pieces, n, cfg.alpha)?;
    let selected: Vec<usize> = rows.iter().map(|r| r.index).collect();
    let intercept_estimate = intercept_estimate_original_scale(&pieces, &aug, &std);
    Ok(InferenceReport {
        method: Method::Naive,
        rows,
        selected,
        intercept_estimate,
        flags,
        seed: cfg.seed,
        config: echo(
            cfg,
            Method::Naive,
            n,
            p_raw,
            pieces.lambda,
            pieces.h_select,
            pieces.h_infer,
            0.0,
            pieces.ridge,
        ),
        diagnostics: Diagnostics {
            kkt_residual: pieces.sol.kkt_residual,
            solver_iterations: pieces.sol.iterations,
            refit_gradient_norm: pieces.refit.gradient_norm,
            refit_iterations: pieces.refit.iterations,
            ridge_applied: pieces.moments.ridge_applied,
            ..Diagnostics::default()
        },
    })
}

/// Data splitting: non-randomized selection on the first fold, Wald
/// inference from a refit on the held-out fold.
pub fn splitting_inference(data: &Dataset, cfg: &InferenceConfig) -> Result<InferenceReport> {
    cfg.validate()?;
    let n = data.n();
    let p_raw = data.p();
    let (std, x_std, mut flags) = Standardizer::fit(data, cfg.standardize);
    let aug_full = augment(&x_std, cfg.intercept);

    // Deterministic disjoint exhaustive folds from the seeded permutation.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    order.shuffle(&mut rng);
    let n_sel = ((n as f64) * cfg.split_fraction).ceil() as usize;
    let (sel_idx, inf_idx) = order.split_at(n_sel);
    let mut sel_idx = sel_idx.to_vec();
    let mut inf_idx = inf_idx.to_vec();
    sel_idx.sort_unstable();
    inf_idx.sort_unstable();
    if inf_idx.is_empty() {
        return Err(Error::InvalidConfig("empty inference fold".into()));
    }

    let take = |rows: &[usize]| -> (AugmentedDesign, DVector<f64>) {
        let x = aug_full.x.select_rows(rows.iter());
        let y = DVector::from_fn(rows.len(), |i, _| data.y[rows[i]]);
        (
            AugmentedDesign {
                x,
                weights: aug_full.weights.clone(),
                origin: aug_full.origin.clone(),
            },
            y,
        )
    };
    let (aug_sel, y_sel) = take(&sel_idx);
    let (aug_inf, y_inf) = take(&inf_idx);

    let pieces = fit_common(
        cfg,
        &aug_sel,
        &y_sel,
        &aug_inf,
        &y_inf,
        p_raw,
        0.0,
        derive_seed(cfg.seed, 3),
    )?;
    let lambda = resolve_lambda(cfg, y_sel.len(), p_raw);
    let (h, _) = resolve_bandwidths(cfg, y_sel.len(), p_raw, 0);
    let Some(pieces) = pieces else {
        return Ok(empty_report(
            cfg,
            Method::Splitting,
            echo(cfg, Method::Splitting, n, p_raw, lambda, h, h, 0.0, 0.0),
        ));
    };
    flags.extend(pieces.moments.ridge_applied.then(|| "ridge-applied".to_string()));
    let rows = wald_rows(&data.names, &aug_full, &std, &pieces, y_inf.len(), cfg.alpha)?;
    let selected: Vec<usize> = rows.iter().map(|r| r.index).collect();
    let intercept_estimate = intercept_estimate_original_scale(&pieces, &aug_full, &std);
    Ok(InferenceReport {
        method: Method::Splitting,
        rows,
        selected,
        intercept_estimate,
        flags,
        seed: cfg.seed,
        config: echo(
            cfg,
            Method::Splitting,
            n,
            p_raw,
            pieces.lambda,
            pieces.h_select,
            pieces.h_infer,
            0.0,
            pieces.ridge,
        ),
        diagnostics: Diagnostics {
            kkt_residual: pieces.sol.kkt_residual,
            solver_iterations: pieces.sol.iterations,
            refit_gradient_norm: pieces.refit.gradient_norm,
            refit_iterations: pieces.refit.iterations,
            ridge_applied: pieces.moments.ridge_applied,
            ..Diagnostics::default()
        },
    })
}

/// Run one method.
pub fn run_method(data: &Dataset, cfg: &InferenceConfig, method: Method) -> Result<InferenceReport> {
    match method {
        Method::Proposed => selective_inference(data, cfg),
        Method::Naive => naive_inference(data, cfg),
        Method::Splitting => splitting_inference(data, cfg),
    }
}
