//! Solvers for the refitted SQR problem and the randomized l1-penalized
//! SQR problem, plus extraction of the selection event.
//!
//! The penalized objective is
//!
//! ```text
//!   sqrt(n) Qhat_{n;h}(X b; Y) + sum_j lambda w_j |b_j| - sqrt(n) omega' b
//! ```
//!
//! solved by monotone FISTA with backtracking on the smooth part. Penalty
//! weights `w_j` are 1 by default; a weight of 0 marks an always-active,
//! unpenalized coordinate (the intercept in the pipeline).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{smoothed_hessian, KernelSpec};

/// Covariance of the scaled randomization sqrt(n) omega and the draw seed.
#[derive(Debug, Clone)]
pub struct RandomizationSpec {
    /// Covariance Omega of sqrt(n) omega; must be symmetric positive definite.
    pub covariance: DMatrix<f64>,
    pub seed: u64,
}

impl RandomizationSpec {
    pub fn new(covariance: DMatrix<f64>, seed: u64) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() {
            return Err(Error::DimensionMismatch {
                context: "randomization covariance",
                expected: covariance.nrows(),
                got: covariance.ncols(),
            });
        }
        let sym = (&covariance + covariance.transpose()) * 0.5;
        if (&sym - &covariance).amax() > 1e-10 * (1.0 + covariance.amax()) {
            return Err(Error::NotPositiveDefinite {
                what: "randomization covariance (not symmetric)",
            });
        }
        Ok(Self {
            covariance,
            seed,
        })
    }

    pub fn isotropic(p: usize, delta_sq: f64, seed: u64) -> Result<Self> {
        if delta_sq < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "randomization variance must be nonnegative, got {delta_sq}"
            )));
        }
        Ok(Self {
            covariance: DMatrix::identity(p, p) * delta_sq,
            seed,
        })
    }
}

/// Sample omega from N(0, Omega/n), deterministic in the spec's seed.
pub fn draw_randomization(spec: &RandomizationSpec, n: usize) -> Result<DVector<f64>> {
    let p = spec.covariance.nrows();
    if spec.covariance.amax() == 0.0 {
        return Ok(DVector::zeros(p));
    }
    let chol = Cholesky::new(spec.covariance.clone()).ok_or(Error::NotPositiveDefinite {
        what: "randomization covariance",
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
    Ok(chol.l() * z / (n as f64).sqrt())
}

/// Solution of the randomized l1-penalized SQR problem.
#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    /// Coefficients with sub-tolerance entries snapped to exact zero.
    pub beta: DVector<f64>,
    /// Indices of nonzero penalized coordinates, ascending.
    pub active_set: Vec<usize>,
    /// Signs of `beta` on `active_set`.
    pub signs: Vec<f64>,
    /// KKT-derived inactive subgradient, aligned with `inactive_set()`.
    pub z: DVector<f64>,
    /// Realized randomization omega (unscaled; the objective uses sqrt(n) omega).
    pub omega: DVector<f64>,
    pub lambda: f64,
    /// Ridge coefficient of the (ridge/2)||b||^2 coercivity term.
    pub ridge: f64,
    /// Penalty weight per coordinate; 0 marks an unpenalized coordinate.
    pub penalty_weights: DVector<f64>,
    pub converged: bool,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Set when the iterates escaped along a descent ray instead of
    /// settling at a stationary point (large randomization, small n).
    pub diverged: bool,
}

impl PenalizedSolution {
    /// Penalized coordinates with zero coefficient, ascending.
    pub fn inactive_set(&self) -> Vec<usize> {
        let p = self.beta.len();
        (0..p)
            .filter(|&j| self.penalty_weights[j] > 0.0 && self.beta[j] == 0.0)
            .collect()
    }

    /// Unpenalized coordinates (always active), ascending.
    pub fn unpenalized_set(&self) -> Vec<usize> {
        (0..self.beta.len())
            .filter(|&j| self.penalty_weights[j] == 0.0)
            .collect()
    }

    /// Unpenalized coordinates followed by the penalized active set: the
    /// index set of the refit problem.
    pub fn extended_active(&self) -> Vec<usize> {
        let mut out = self.unpenalized_set();
        out.extend(self.active_set.iter().copied());
        out.sort_unstable();
        out
    }
}

/// Refitted SQR estimator on a fixed column set.
#[derive(Debug, Clone)]
pub struct RefitSolution {
    pub beta_e: DVector<f64>,
    /// Sup-norm of the gradient of sqrt(n) Qhat at the solution.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const TOL_REFIT: f64 = 1e-8;
pub const MAX_ITER_PENALIZED: usize = 10_000;
pub const MAX_ITER_REFIT: usize = 300;

/// Residual weights and mean loss at fitted values, shared by the solvers.
struct LossEval {
    loss: f64,
    grad_weights: DVector<f64>,
}

fn eval_loss(fitted: &DVector<f64>, y: &DVector<f64>, tau: f64, spec: &KernelSpec) -> LossEval {
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut w = DVector::zeros(y.len());
    for i in 0..y.len() {
        let r = fitted[i] - y[i];
        loss += spec.loss_h(r, tau);
        w[i] = (spec.cdf_h(r) - tau) / n;
    }
    LossEval {
        loss: loss / n,
        grad_weights: w,
    }
}

/// Largest eigenvalue of X'X by power iteration.
fn gram_spectral_norm(x: &DMatrix<f64>) -> f64 {
    let p = x.ncols();
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..50 {
        let u = x * &v;
        let w = x.transpose() * u;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lam = norm;
        v = w / norm;
    }
    lam
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Solve the randomized l1-penalized SQR problem with unit penalty weights
/// and no coercivity ridge.
pub fn solve_randomized_penalized(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    kernel: &KernelSpec,
    lambda: f64,
    omega: &DVector<f64>,
) -> Result<PenalizedSolution> {
    let weights = DVector::from_element(x.ncols(), 1.0);
    solve_randomized_penalized_weighted(x, y, tau, kernel, lambda, omega, &weights, 0.0)
}

/// Weighted variant: coordinate j carries penalty lambda * weights[j], and
/// the objective carries an extra (ridge/2)||b||^2.
///
/// The ridge restores coercivity: the smoothed quantile loss grows only
/// linearly, so a large realized sqrt(n) omega can otherwise open a descent
/// ray to -infinity. The selection-event geometry accounts for the ridge
/// exactly (it shifts T by ridge/sqrt(n) on the active diagonal), so
/// conditional inference stays valid for any ridge >= 0.
#[allow(clippy::too_many_arguments)]
pub fn solve_randomized_penalized_weighted(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    kernel: &KernelSpec,
    lambda: f64,
    omega: &DVector<f64>,
    weights: &DVector<f64>,
    ridge: f64,
) -> Result<PenalizedSolution> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "penalized solver response",
            expected: n,
            got: y.len(),
        });
    }
    if omega.len() != p || weights.len() != p {
        return Err(Error::DimensionMismatch {
            context: "penalized solver omega/weights",
            expected: p,
            got: omega.len().min(weights.len()),
        });
    }
    if lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
    }
    if (lambda == 0.0 || weights.amax() == 0.0) && p > n {
        return Err(Error::RankDeficient(format!(
            "unpenalized problem with p={p} > n={n}"
        )));
    }

    let sqrt_n = (n as f64).sqrt();
    let pen = DVector::from_fn(p, |j, _| lambda * weights[j]);
    let sqn_omega = omega * sqrt_n;
    let tol_kkt = 1e-6 * sqn_omega.amax().max(1.0);

    // Smooth part f(b) = sqrt(n) (Qhat(Xb) - omega'b) + ridge ||b||^2 / 2.
    let smooth = |beta: &DVector<f64>| -> (f64, DVector<f64>) {
        let fitted = x * beta;
        let ev = eval_loss(&fitted, y, tau, kernel);
        let f = sqrt_n * (ev.loss - omega.dot(beta)) + 0.5 * ridge * beta.norm_squared();
        let g = x.transpose() * ev.grad_weights * sqrt_n - &sqn_omega + beta * ridge;
        (f, g)
    };
    let penalty = |beta: &DVector<f64>| -> f64 { beta.iter().zip(pen.iter()).map(|(b, l)| l * b.abs()).sum() };

    let lip0 =
        kernel.family.density_sup() * gram_spectral_norm(x) / (kernel.bandwidth * sqrt_n) + ridge;
    let mut lip = if lip0 > 0.0 { lip0 } else { 1.0 };

    // The randomized objective is only locally coercive: the quantile loss
    // grows linearly, so a large enough realized sqrt(n) omega opens a
    // descent ray to -infinity. The conditional-inference construction only
    // needs a KKT-stationary point, which proximal descent from the origin
    // finds inside the statistical basin. The box below stops the iterates
    // from following the runaway ray; hitting it is flagged, never silent.
    let box_bound = 1e4 * (1.0 + y.amax());

    let mut xk = DVector::zeros(p);
    let mut yk = xk.clone();
    let mut x_prev = xk.clone();
    let (mut f_x, _) = smooth(&xk);
    let mut obj_x = f_x + penalty(&xk);
    let mut tk = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut diverged = false;
    let mut residual;

    for it in 0..MAX_ITER_PENALIZED {
        iterations = it + 1;
        let (f_y, g_y) = smooth(&yk);
        // Backtracking on the majorization at yk.
        let mut z_new;
        let mut f_z;
        loop {
            z_new = DVector::from_fn(p, |j, _| {
                soft_threshold(yk[j] - g_y[j] / lip, pen[j] / lip).clamp(-box_bound, box_bound)
            });
            let diff = &z_new - &yk;
            let (fz, _) = smooth(&z_new);
            f_z = fz;
            let model = f_y + g_y.dot(&diff) + 0.5 * lip * diff.norm_squared();
            if f_z <= model + 1e-12 * (1.0 + f_y.abs()) || lip > 1e18 {
                break;
            }
            lip *= 2.0;
        }
        if z_new.amax() >= box_bound {
            // Runaway ray: no interior stationary point ahead. Stop and
            // report the (non-converged) KKT residual.
            xk = z_new;
            diverged = true;
            break;
        }
        let obj_z = f_z + penalty(&z_new);

        // Adaptive restart: drop momentum when it points uphill.
        let restart = (&yk - &z_new).dot(&(&z_new - &xk)) > 0.0;

        // Monotone update: keep the better of the prox point and the incumbent.
        let (x_new, obj_new, f_new) = if obj_z <= obj_x {
            (z_new.clone(), obj_z, f_z)
        } else {
            (xk.clone(), obj_x, f_x)
        };
        if restart {
            tk = 1.0;
            yk = x_new.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
            yk = &x_new + (&z_new - &x_new) * (tk / t_next)
                + (&x_new - &x_prev) * ((tk - 1.0) / t_next);
            tk = t_next;
        }
        x_prev = xk;
        xk = x_new;
        obj_x = obj_new;
        f_x = f_new;
        // Gentle step-size recovery between backtracks.
        lip = (lip * 0.95).max(lip0 * 1e-3).max(1e-12);

        if it % 10 == 9 || it < 5 {
            let (_, g) = smooth(&xk);
            residual = kkt_residual_from_grad(&xk, &g, &pen);
            if residual <= tol_kkt {
                converged = true;
                break;
            }
        }
    }

    // Snap sub-tolerance penalized coordinates to exact zero.
    let tol_zero = 1e-8 * xk.amax();
    let mut beta = xk;
    for j in 0..p {
        if pen[j] > 0.0 && beta[j].abs() <= tol_zero {
            beta[j] = 0.0;
        }
    }
    let (_, g_final) = smooth(&beta);
    residual = kkt_residual_from_grad(&beta, &g_final, &pen);
    if residual <= tol_kkt {
        converged = true;
    }

    let active_set: Vec<usize> = (0..p).filter(|&j| pen[j] > 0.0 && beta[j] != 0.0).collect();
    let signs: Vec<f64> = active_set.iter().map(|&j| beta[j].signum()).collect();
    let inactive: Vec<usize> = (0..p).filter(|&j| pen[j] > 0.0 && beta[j] == 0.0).collect();
    // Z from stationarity: lambda w_j Z_j = sqrt(n) omega_j - sqrt(n) grad_j.
    let z = DVector::from_iterator(
        inactive.len(),
        inactive.iter().map(|&j| -g_final[j] / pen[j]),
    );

    Ok(PenalizedSolution {
        beta,
        active_set,
        signs,
        z,
        omega: omega.clone(),
        lambda,
        ridge,
        penalty_weights: weights.clone(),
        converged,
        kkt_residual: residual,
        iterations,
        diverged,
    })
}

/// Max KKT violation given the smooth-part gradient (it already includes
/// the -sqrt(n) omega term).
fn kkt_residual_from_grad(beta: &DVector<f64>, g: &DVector<f64>, pen: &DVector<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..beta.len() {
        let v = if pen[j] == 0.0 {
            g[j].abs()
        } else if beta[j] != 0.0 {
            (g[j] + pen[j] * beta[j].signum()).abs()
        } else {
            (g[j].abs() - pen[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Max KKT violation of a stored solution, recomputed from the data.
pub fn kkt_check(
    sol: &PenalizedSolution,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    kernel: &KernelSpec,
) -> Result<f64> {
    let n = x.nrows();
    let sqrt_n = (n as f64).sqrt();
    let fitted = x * &sol.beta;
    let ev = eval_loss(&fitted, y, tau, kernel);
    let g =
        x.transpose() * ev.grad_weights * sqrt_n - &sol.omega * sqrt_n + &sol.beta * sol.ridge;
    let pen = DVector::from_fn(sol.beta.len(), |j, _| sol.lambda * sol.penalty_weights[j]);
    Ok(kkt_residual_from_grad(&sol.beta, &g, &pen))
}

/// Refit the smoothed quantile regression on a fixed design.
pub fn solve_refit(
    x_e: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    kernel: &KernelSpec,
) -> Result<RefitSolution> {
    solve_refit_from(x_e, y, tau, kernel, None)
}

/// Refit with an optional warm start.
pub fn solve_refit_from(
    x_e: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    kernel: &KernelSpec,
    warm: Option<&DVector<f64>>,
) -> Result<RefitSolution> {
    let (n, q) = (x_e.nrows(), x_e.ncols());
    if q == 0 {
        return Err(Error::RankDeficient("refit with zero columns".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "refit response",
            expected: n,
            got: y.len(),
        });
    }
    // Rank check on the design itself.
    let gram = x_e.transpose() * x_e / n as f64;
    if Cholesky::new(gram.clone()).is_none() {
        return Err(Error::RankDeficient(format!(
            "refit design has linearly dependent columns (q={q})"
        )));
    }

    let sqrt_n = (n as f64).sqrt();
    let mut beta = warm.cloned().unwrap_or_else(|| DVector::zeros(q));
    let mut fitted = x_e * &beta;
    let mut ev = eval_loss(&fitted, y, tau, kernel);
    let mut iterations = 0;
    let mut mu = 0.0f64;

    for it in 0..MAX_ITER_REFIT {
        iterations = it + 1;
        let grad = x_e.transpose() * &ev.grad_weights;
        let gnorm = sqrt_n * grad.amax();
        if gnorm <= TOL_REFIT {
            return Ok(RefitSolution {
                beta_e: beta,
                gradient_norm: gnorm,
                iterations,
                converged: true,
            });
        }
        let hess = smoothed_hessian(x_e, &beta, y, kernel)?;
        // Levenberg damping: grow mu until the damped system factors and the
        // step decreases the objective; compact-support kernels can give a
        // singular Hessian.
        let mut accepted = false;
        let trace_scale = (hess.trace() / q as f64).max(1e-12);
        for _ in 0..40 {
            let damped = &hess + DMatrix::identity(q, q) * mu;
            if let Some(ch) = Cholesky::new(damped) {
                let step = ch.solve(&(-&grad));
                let mut alpha = 1.0f64;
                let dir_deriv = grad.dot(&step);
                for _ in 0..40 {
                    let cand = &beta + &step * alpha;
                    let cand_fit = x_e * &cand;
                    let cand_ev = eval_loss(&cand_fit, y, tau, kernel);
                    if cand_ev.loss <= ev.loss + 1e-4 * alpha * dir_deriv + 1e-15 {
                        beta = cand;
                        fitted = cand_fit;
                        ev = cand_ev;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            if accepted {
                mu = (mu * 0.25).max(0.0);
                break;
            }
            mu = if mu == 0.0 { 1e-6 * trace_scale } else { mu * 10.0 };
        }
        if !accepted {
            // Plain gradient fallback.
            let mut alpha = 1.0 / (kernel.family.density_sup() / kernel.bandwidth).max(1e-12);
            let mut moved = false;
            for _ in 0..60 {
                let cand = &beta - &grad * alpha;
                let cand_fit = x_e * &cand;
                let cand_ev = eval_loss(&cand_fit, y, tau, kernel);
                if cand_ev.loss < ev.loss {
                    beta = cand;
                    fitted = cand_fit;
                    ev = cand_ev;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }
    let _ = fitted;
    let grad = x_e.transpose() * &ev.grad_weights;
    let gnorm = sqrt_n * grad.amax();
    Ok(RefitSolution {
        beta_e: beta,
        gradient_norm: gnorm,
        iterations,
        converged: gnorm <= TOL_REFIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn gauss(h: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Gaussian, h).unwrap()
    }

    fn random_instance(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            x[(i, 0)] * 1.2 - x[(i, 1.min(p - 1))] * 0.7 + noise
        });
        (x, y)
    }

    #[test]
    fn randomization_is_deterministic_and_scales() {
        let spec = RandomizationSpec::isotropic(6, 1.0, 9).unwrap();
        let a = draw_randomization(&spec, 100).unwrap();
        let b = draw_randomization(&spec, 100).unwrap();
        assert_eq!(a, b);
        let zero = RandomizationSpec::isotropic(6, 0.0, 9).unwrap();
        assert_eq!(draw_randomization(&zero, 100).unwrap().amax(), 0.0);
    }

    #[test]
    fn randomization_covariance_monte_carlo() {
        let p = 3;
        let n = 50;
        let delta_sq = 0.7;
        let reps = 100_000;
        let mut acc = DMatrix::zeros(p, p);
        for k in 0..reps {
            let spec = RandomizationSpec::isotropic(p, delta_sq, derive_seed_for_test(k)).unwrap();
            let w = draw_randomization(&spec, n).unwrap();
            acc += &w * w.transpose();
        }
        acc /= reps as f64;
        let target = DMatrix::identity(p, p) * (delta_sq / n as f64);
        for i in 0..p {
            for j in 0..p {
                let d = (acc[(i, j)] - target[(i, j)]).abs();
                assert!(d < 0.05 * delta_sq / n as f64, "entry ({i},{j}) off: {d}");
            }
        }
    }

    fn derive_seed_for_test(k: usize) -> u64 {
        crate::stats::derive_seed(1234, k as u64)
    }

    #[test]
    fn refit_single_point_matches_response() {
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 3.7);
        let sol = solve_refit(&x, &y, 0.5, &gauss(1.0)).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.beta_e[0], 3.7, epsilon = 1e-7);
    }

    #[test]
    fn refit_symmetric_sample_median() {
        // Ones design, tau = 1/2, response symmetric around m.
        let m = 2.5;
        let n = 101;
        let y = DVector::from_fn(n, |i, _| {
            let t = (i as f64 - 50.0) / 20.0;
            m + t
        });
        let x = DMatrix::from_element(n, 1, 1.0);
        let sol = solve_refit(&x, &y, 0.5, &gauss(0.4)).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.beta_e[0], m, epsilon = 1e-6);
    }

    #[test]
    fn refit_rank_deficiency_is_an_error() {
        let mut x = DMatrix::zeros(20, 2);
        for i in 0..20 {
            x[(i, 0)] = i as f64;
            x[(i, 1)] = 2.0 * i as f64;
        }
        let y = DVector::from_fn(20, |i, _| i as f64);
        assert!(matches!(
            solve_refit(&x, &y, 0.5, &gauss(0.5)),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn large_lambda_gives_empty_selection() {
        let (x, y) = random_instance(60, 8, 3);
        let omega = DVector::zeros(8);
        let sol = solve_randomized_penalized(&x, &y, 0.7, &gauss(0.3), 1e4, &omega).unwrap();
        assert!(sol.converged);
        assert!(sol.active_set.is_empty());
        assert_eq!(sol.beta.amax(), 0.0);
        assert!(sol.kkt_residual < 1e-6);
    }

    #[test]
    fn zero_lambda_reduces_to_refit() {
        let (x, y) = random_instance(80, 4, 7);
        let omega = DVector::zeros(4);
        let sol = solve_randomized_penalized(&x, &y, 0.6, &gauss(0.4), 0.0, &omega).unwrap();
        let refit = solve_refit(&x, &y, 0.6, &gauss(0.4)).unwrap();
        assert!(sol.converged && refit.converged);
        assert_relative_eq!((sol.beta - refit.beta_e).amax(), 0.0, epsilon = 1e-5);
    }

    #[test]
    fn zero_lambda_high_dimension_is_rank_error() {
        let (x, y) = random_instance(5, 9, 11);
        let omega = DVector::zeros(9);
        assert!(matches!(
            solve_randomized_penalized(&x, &y, 0.5, &gauss(0.3), 0.0, &omega),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn solution_invariants_hold_on_random_instances() {
        for seed in 0..8 {
            let (x, y) = random_instance(100, 10, 100 + seed);
            let spec = RandomizationSpec::isotropic(10, 0.5, 77 + seed).unwrap();
            let omega = draw_randomization(&spec, 100).unwrap();
            let kern = gauss(0.35);
            let sol =
                solve_randomized_penalized(&x, &y, 0.7, &kern, 0.25, &omega).unwrap();
            assert!(
                sol.converged,
                "seed {seed} did not converge: residual {:.3e} after {} iters, |E|={}",
                sol.kkt_residual,
                sol.iterations,
                sol.active_set.len()
            );
            // Signs agree, no zeros on the active set.
            for (k, &j) in sol.active_set.iter().enumerate() {
                assert!(sol.beta[j] != 0.0);
                assert_eq!(sol.beta[j].signum(), sol.signs[k]);
            }
            // Inactive subgradient admissible.
            assert!(sol.z.amax() <= 1.0 + 1e-6, "Z inf norm {}", sol.z.amax());
            // Stored residual matches a fresh KKT check.
            let r = kkt_check(&sol, &x, &y, 0.7, &kern).unwrap();
            assert!(r <= 1e-6 * (1.0 + omega.amax() * (100f64).sqrt()));
        }
    }

    #[test]
    fn kkt_residual_grows_when_solution_perturbed() {
        let (x, y) = random_instance(60, 6, 21);
        let spec = RandomizationSpec::isotropic(6, 0.5, 5).unwrap();
        let omega = draw_randomization(&spec, 60).unwrap();
        let kern = gauss(0.4);
        let mut sol = solve_randomized_penalized(&x, &y, 0.7, &kern, 0.2, &omega).unwrap();
        let base = kkt_check(&sol, &x, &y, 0.7, &kern).unwrap();
        let j = *sol.active_set.first().expect("nonempty active set");
        sol.beta[j] += 0.1;
        let bumped = kkt_check(&sol, &x, &y, 0.7, &kern).unwrap();
        assert!(bumped > base + 1e-4, "perturbation did not raise residual");
    }

    #[test]
    fn unpenalized_coordinate_stays_active() {
        let (x, y) = random_instance(80, 6, 31);
        let spec = RandomizationSpec::isotropic(6, 0.5, 8).unwrap();
        let omega = draw_randomization(&spec, 80).unwrap();
        let mut w = DVector::from_element(6, 1.0);
        w[0] = 0.0;
        let sol =
            solve_randomized_penalized_weighted(&x, &y, 0.7, &gauss(0.4), 5.0, &omega, &w, 0.1)
                .unwrap();
        // Huge lambda removes the penalized coords but not coordinate 0.
        assert!(sol.active_set.is_empty());
        assert_eq!(sol.unpenalized_set(), vec![0]);
        assert_eq!(sol.extended_active(), vec![0]);
        assert!(sol.converged);
    }
}
