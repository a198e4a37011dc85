//! The selective pivot: weight function, p-values, and interval inversion.
//!
//! The weight is evaluated in closed form by factoring the p-dimensional
//! Gaussian along the truncation direction:
//!
//! ```text
//!   W0(x) = const exp(-a'Theta a / 2) [Phi(sqrt(s)(I2+L)) - Phi(sqrt(s)(I1+L))]
//! ```
//!
//! with a = M x + N sqrt(n) gamma + P, s = Q'Om^-1 Q, L = Q'Om^-1 a / s and
//! Theta the rank-one deflation of Om^-1 along Q. The pivot itself is a
//! one-dimensional integral of a Gaussian times that weight; production
//! evaluation uses the scalar coefficients obtained by completing the
//! square jointly in (x, t), so each node costs O(1) instead of O(p^2).
//! Everything is combined in log space before exponentiation.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::EventGeometry;
use crate::stats::{norm_logcdf_diff, GL32, GL64, LN_SQRT_2PI};

pub const TOL_INVERT: f64 = 1e-4;
const BRACKET_START_SDS: f64 = 20.0;
const BRACKET_MAX_DOUBLINGS: u32 = 20;

/// Frozen inputs of the pivot for one coordinate.
#[derive(Debug, Clone)]
pub struct PivotContext {
    pub i1: f64,
    pub i2: f64,
    /// Refitted estimate of the coordinate (natural scale, not sqrt(n)).
    pub beta_hat_j: f64,
    pub sigma_j_sq: f64,
    pub n: usize,
    /// Om^-1 - Om^-1 Q Q' Om^-1 / s; positive semidefinite.
    pub theta: DMatrix<f64>,
    /// s = Q' Om^-1 Q.
    pub inner_scale: f64,
    pub log_space: bool,

    // Reference path (Prop.-style vector evaluation).
    m: DVector<f64>,
    c_ref: DVector<f64>,
    omega_inv_q: DVector<f64>,
    log_const_w0: f64,

    // Fast path scalars from completing the square in (x, t).
    kappa: f64,
    kappa_sq: f64,
    delta: f64,
    /// Std. deviation of the combined Gaussian factor in x.
    vartheta: f64,
    /// d mean / d (sqrt(n) b).
    nu: f64,
    phi_shift: f64,
    sqrt_n: f64,
}

impl PivotContext {
    pub fn new(
        geom: &EventGeometry,
        beta_hat_j: f64,
        sigma_j_sq: f64,
        n: usize,
    ) -> Result<Self> {
        if !(sigma_j_sq > 0.0) {
            return Err(Error::Singular {
                what: "sigma_j_sq",
                cond: f64::INFINITY,
            });
        }
        let p = geom.omega_perm.nrows();
        let omega_chol = Cholesky::new(geom.omega_perm.clone()).ok_or(
            Error::NotPositiveDefinite {
                what: "randomization covariance",
            },
        )?;
        let omega_inv_q = omega_chol.solve(&geom.q_vec);
        let inner_scale = geom.q_vec.dot(&omega_inv_q);
        if !(inner_scale > 0.0) {
            return Err(Error::Singular {
                what: "Q' Omega^-1 Q",
                cond: f64::INFINITY,
            });
        }
        let omega_inv = omega_chol.inverse();
        let theta = &omega_inv - &omega_inv_q * omega_inv_q.transpose() / inner_scale;

        let c_ref = &geom.n_mat * &geom.sqrt_n_gamma + &geom.p_vec;
        // The fast path's scalar coefficients drop the T v term (its
        // contribution to the bracket and the x-dependence vanishes
        // identically); keep the rest of the offset so both routes share
        // the same centering.
        let c_fast = &c_ref - &geom.t_mat * &geom.v;

        let log_det_omega: f64 = 2.0
            * omega_chol
                .l()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let log_const_w0 = -((p as f64 - 1.0) * 2.0 * LN_SQRT_2PI) / 2.0
            - 0.5 * log_det_omega
            - 0.5 * inner_scale.ln();

        // Fast-path coefficients.
        let kappa_sq = geom.kappa_sq;
        let kappa = kappa_sq.sqrt();
        let om_inv_c_fast = omega_chol.solve(&c_fast);
        let t_om_c = geom.t_mat.transpose() * &om_inv_c_fast;
        let psi_lambda = &geom.psi * &geom.lambda_j;
        let delta = -psi_lambda.dot(&t_om_c);
        let m_theta_m = (self_quadratic(&theta, &geom.m)).max(0.0);
        let precision = 1.0 / sigma_j_sq + m_theta_m;
        let vartheta = precision.sqrt().recip();
        let nu = 1.0 / (sigma_j_sq * precision);
        let m_om_c = geom.m.dot(&om_inv_c_fast);
        let phi_shift = -(m_om_c + delta) / precision;

        Ok(Self {
            i1: geom.i1,
            i2: geom.i2,
            beta_hat_j,
            sigma_j_sq,
            n,
            theta,
            inner_scale,
            log_space: true,
            m: geom.m.clone(),
            c_ref,
            omega_inv_q,
            log_const_w0,
            kappa,
            kappa_sq,
            delta,
            vartheta,
            nu,
            phi_shift,
            sqrt_n: (n as f64).sqrt(),
        })
    }

    /// Mean of the combined Gaussian factor at parameter value b.
    fn mu_star(&self, b: f64) -> f64 {
        self.nu * self.sqrt_n * b + self.phi_shift
    }

    /// Log of the x-dependent part of the truncation bracket (fast path).
    fn log_bracket(&self, x: f64) -> f64 {
        let shift = self.kappa_sq * x - self.delta;
        let hi = if self.i2.is_finite() {
            (self.i2 + shift) / self.kappa
        } else {
            f64::INFINITY
        };
        let lo = if self.i1.is_finite() {
            (self.i1 + shift) / self.kappa
        } else {
            f64::NEG_INFINITY
        };
        norm_logcdf_diff(hi, lo)
    }

    /// Log integrand of the pivot at x, up to terms constant in (x, b).
    fn log_integrand(&self, x: f64, mu: f64) -> f64 {
        let z = (x - mu) / self.vartheta;
        -0.5 * z * z + self.log_bracket(x)
    }
}

fn self_quadratic(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

/// Closed-form weight W0 at x (reference route, O(p^2) per call).
pub fn weight_w0(x: f64, ctx: &PivotContext) -> f64 {
    weight_w0_log(x, ctx).exp()
}

/// log W0 at x via the rank-one factorization.
pub fn weight_w0_log(x: f64, ctx: &PivotContext) -> f64 {
    if ctx.i1 >= ctx.i2 {
        return f64::NEG_INFINITY;
    }
    let a = &ctx.m * x + &ctx.c_ref;
    let quad = self_quadratic(&ctx.theta, &a).max(0.0);
    let l = ctx.omega_inv_q.dot(&a) / ctx.inner_scale;
    let sq = ctx.inner_scale.sqrt();
    let hi = if ctx.i2.is_finite() {
        sq * (ctx.i2 + l)
    } else {
        f64::INFINITY
    };
    let lo = if ctx.i1.is_finite() {
        sq * (ctx.i1 + l)
    } else {
        f64::NEG_INFINITY
    };
    ctx.log_const_w0 - 0.5 * quad + norm_logcdf_diff(hi, lo)
}

/// Integration panels: feature-refined breakpoints, then width-capped
/// subdivision. The cut point is always a breakpoint so the numerator is
/// a whole number of panels.
fn build_panels(ctx: &PivotContext, mu: f64, x_hat: f64) -> Vec<(f64, f64)> {
    let vt = ctx.vartheta;
    let edge_scale = 1.0 / ctx.kappa;
    let mut pts: Vec<f64> = Vec::with_capacity(64);
    for o in [-9.0, -6.0, -4.0, -2.5, -1.25, 0.0, 1.25, 2.5, 4.0, 6.0, 9.0] {
        pts.push(mu + o * vt);
    }
    let mut lo = mu - 9.0 * vt;
    let mut hi = mu + 9.0 * vt;
    for i_val in [ctx.i1, ctx.i2] {
        if i_val.is_finite() {
            let edge = (ctx.delta - i_val) / ctx.kappa_sq;
            for o in [-9.0, -5.0, -2.0, 0.0, 2.0, 5.0, 9.0] {
                pts.push(edge + o * edge_scale);
            }
            lo = lo.min(edge - 9.0 * edge_scale);
            hi = hi.max(edge + 9.0 * edge_scale);
        }
    }
    // The numerator cut must lie inside the covered range.
    lo = lo.min(x_hat - 9.0 * vt);
    hi = hi.max(x_hat);
    pts.push(x_hat);
    pts.push(lo);
    pts.push(hi);
    pts.retain(|v| v.is_finite() && *v >= lo && *v <= hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * vt.max(1.0));

    let target = vt.min(1.5 * edge_scale).max(1e-300);
    let mut panels = Vec::with_capacity(128);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let m = ((b - a) / target).ceil().min(40.0).max(1.0) as usize;
        let step = (b - a) / m as f64;
        for k in 0..m {
            panels.push((a + k as f64 * step, a + (k + 1) as f64 * step));
        }
    }
    panels
}

struct QuadratureResult {
    pivot: f64,
}

fn integrate_pivot<F>(
    ctx: &PivotContext,
    mu: f64,
    x_hat: f64,
    log_f: F,
    nodes: &[f64],
    weights: &[f64],
) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    let panels = build_panels(ctx, mu, x_hat);
    let mut xs: Vec<f64> = Vec::with_capacity(panels.len() * nodes.len());
    let mut ws: Vec<f64> = Vec::with_capacity(xs.capacity());
    let mut in_num: Vec<bool> = Vec::with_capacity(xs.capacity());
    for &(a, b) in &panels {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let numerator_panel = b <= x_hat + 1e-300;
        for (k, &t) in nodes.iter().enumerate() {
            xs.push(mid + half * t);
            ws.push(half * weights[k]);
            in_num.push(numerator_panel);
        }
    }
    let gs: Vec<f64> = xs.iter().map(|&x| log_f(x)).collect();
    let gmax = gs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if gmax == f64::NEG_INFINITY {
        return Err(Error::PivotUnderflow {
            detail: format!("weight vanishes on [{:.3e}, {:.3e}]", panels[0].0, panels.last().unwrap().1),
        });
    }
    if ctx.log_space {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..xs.len() {
            let v = ws[i] * (gs[i] - gmax).exp();
            den += v;
            if in_num[i] {
                num += v;
            }
        }
        if den <= 0.0 {
            return Err(Error::PivotUnderflow {
                detail: "denominator vanished after shift".into(),
            });
        }
        Ok(QuadratureResult {
            pivot: (num / den).clamp(0.0, 1.0),
        })
    } else {
        // Linear-space evaluation for the consistency check.
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..xs.len() {
            let v = ws[i] * gs[i].exp();
            den += v;
            if in_num[i] {
                num += v;
            }
        }
        if den <= 0.0 {
            return Err(Error::PivotUnderflow {
                detail: "denominator underflowed in linear space".into(),
            });
        }
        Ok(QuadratureResult {
            pivot: (num / den).clamp(0.0, 1.0),
        })
    }
}

/// P(sqrt(n) beta_hat_j <= observed | selection) as a function of the
/// hypothesized parameter b; nonincreasing in b.
pub fn pivot_value(b: f64, ctx: &PivotContext) -> Result<f64> {
    let mu = ctx.mu_star(b);
    let x_hat = ctx.sqrt_n * ctx.beta_hat_j;
    let r = integrate_pivot(
        ctx,
        mu,
        x_hat,
        |x| ctx.log_integrand(x, mu),
        &GL64.0,
        &GL64.1,
    )?;
    Ok(r.pivot)
}

/// Pivot plus a node-halving error estimate.
pub fn pivot_value_with_error(b: f64, ctx: &PivotContext) -> Result<(f64, f64)> {
    let mu = ctx.mu_star(b);
    let x_hat = ctx.sqrt_n * ctx.beta_hat_j;
    let r64 = integrate_pivot(
        ctx,
        mu,
        x_hat,
        |x| ctx.log_integrand(x, mu),
        &GL64.0,
        &GL64.1,
    )?;
    let r32 = integrate_pivot(
        ctx,
        mu,
        x_hat,
        |x| ctx.log_integrand(x, mu),
        &GL32.0,
        &GL32.1,
    )?;
    Ok((r64.pivot, (r64.pivot - r32.pivot).abs()))
}

/// Pivot evaluated with the full vector-route weight; test oracle for the
/// fast path.
pub fn pivot_value_reference(b: f64, ctx: &PivotContext) -> Result<f64> {
    let mu = ctx.mu_star(b);
    let x_hat = ctx.sqrt_n * ctx.beta_hat_j;
    let sb = ctx.sqrt_n * b;
    let log_f = |x: f64| {
        let z = (x - sb) / ctx.sigma_j_sq.sqrt();
        -0.5 * z * z + weight_w0_log(x, ctx)
    };
    let r = integrate_pivot(ctx, mu, x_hat, log_f, &GL64.0, &GL64.1)?;
    Ok(r.pivot)
}

/// Two-sided p-value for the hypothesis beta*_j = b0.
pub fn pvalue(b0: f64, ctx: &PivotContext) -> Result<f64> {
    let p = pivot_value(b0, ctx)?;
    Ok((2.0 * p.min(1.0 - p)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalResult {
    pub lcb: f64,
    pub ucb: f64,
    pub alpha: f64,
    pub pivot_at_lcb: f64,
    pub pivot_at_ucb: f64,
    pub quadrature_error_estimate: f64,
    pub unbounded_lower: bool,
    pub unbounded_upper: bool,
}

enum BisectOutcome {
    Root(f64),
    UnboundedBelow,
    UnboundedAbove,
}

/// Solve pivot(b) = target for the nonincreasing pivot by bracketed
/// bisection with geometric bracket expansion.
fn solve_pivot_equals(ctx: &PivotContext, target: f64) -> Result<BisectOutcome> {
    let scale = (ctx.sigma_j_sq.sqrt() / ctx.sqrt_n).max(f64::MIN_POSITIVE);
    let center = ctx.beta_hat_j;
    let mut radius = BRACKET_START_SDS * scale;
    let mut lo = center - radius;
    let mut hi = center + radius;
    let mut p_lo = pivot_value(lo, ctx)?;
    let mut p_hi = pivot_value(hi, ctx)?;
    let mut doublings = 0;
    while p_lo < target {
        radius *= 2.0;
        doublings += 1;
        if doublings > BRACKET_MAX_DOUBLINGS {
            return Ok(BisectOutcome::UnboundedBelow);
        }
        lo = center - radius;
        p_lo = pivot_value(lo, ctx)?;
    }
    radius = BRACKET_START_SDS * scale;
    doublings = 0;
    while p_hi > target {
        radius *= 2.0;
        doublings += 1;
        if doublings > BRACKET_MAX_DOUBLINGS {
            return Ok(BisectOutcome::UnboundedAbove);
        }
        hi = center + radius;
        p_hi = pivot_value(hi, ctx)?;
    }
    // Illinois-damped false position on the monotone pivot, with a
    // bisection fallback when the secant point stops making progress.
    let mut fa = p_lo - target;
    let mut fb = p_hi - target;
    let mut mid = 0.5 * (lo + hi);
    for it in 0..200 {
        let denom = fb - fa;
        let mut c = if denom.abs() > 1e-300 {
            hi - fb * (hi - lo) / denom
        } else {
            0.5 * (lo + hi)
        };
        let margin = 1e-3 * (hi - lo);
        if !(c > lo + margin && c < hi - margin) || it % 4 == 3 {
            c = 0.5 * (lo + hi);
        }
        mid = c;
        let fc = pivot_value(c, ctx)? - target;
        if fc.abs() <= 0.5 * TOL_INVERT {
            return Ok(BisectOutcome::Root(c));
        }
        if fc > 0.0 {
            lo = c;
            fa = fc;
            fb *= 0.5;
        } else {
            hi = c;
            fb = fc;
            fa *= 0.5;
        }
        if (hi - lo) < 1e-14 * scale.max(mid.abs()) {
            break;
        }
    }
    Ok(BisectOutcome::Root(mid))
}

/// Invert the pivot into the two-tailed (1-alpha) confidence interval.
pub fn invert_interval(alpha: f64, ctx: &PivotContext) -> Result<IntervalResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let (lcb, unbounded_lower) = match solve_pivot_equals(ctx, 1.0 - alpha / 2.0)? {
        BisectOutcome::Root(b) => (b, false),
        BisectOutcome::UnboundedBelow => (f64::NEG_INFINITY, true),
        BisectOutcome::UnboundedAbove => (f64::INFINITY, true),
    };
    let (ucb, unbounded_upper) = match solve_pivot_equals(ctx, alpha / 2.0)? {
        BisectOutcome::Root(b) => (b, false),
        BisectOutcome::UnboundedBelow => (f64::NEG_INFINITY, true),
        BisectOutcome::UnboundedAbove => (f64::INFINITY, true),
    };
    let (pivot_at_lcb, err_l) = if lcb.is_finite() {
        pivot_value_with_error(lcb, ctx)?
    } else {
        (1.0 - alpha / 2.0, 0.0)
    };
    let (pivot_at_ucb, err_u) = if ucb.is_finite() {
        pivot_value_with_error(ucb, ctx)?
    } else {
        (alpha / 2.0, 0.0)
    };
    Ok(IntervalResult {
        lcb,
        ucb,
        alpha,
        pivot_at_lcb,
        pivot_at_ucb,
        quadrature_error_estimate: err_l.max(err_u),
        unbounded_lower,
        unbounded_upper,
    })
}

/// Construct a context directly from raw pieces; used by tests and the
/// least-squares oracle, bypassing `EventGeometry`.
#[allow(clippy::too_many_arguments)]
pub fn context_from_parts(
    i1: f64,
    i2: f64,
    beta_hat_j: f64,
    sigma_j_sq: f64,
    n: usize,
    m: DVector<f64>,
    c_fast: DVector<f64>,
    c_ref: DVector<f64>,
    q_vec: DVector<f64>,
    t_mat: DMatrix<f64>,
    psi: DMatrix<f64>,
    lambda_j: DVector<f64>,
    omega: DMatrix<f64>,
) -> Result<PivotContext> {
    let p = omega.nrows();
    let omega_chol = Cholesky::new(omega.clone()).ok_or(Error::NotPositiveDefinite {
        what: "randomization covariance",
    })?;
    let omega_inv_q = omega_chol.solve(&q_vec);
    let inner_scale = q_vec.dot(&omega_inv_q);
    if !(inner_scale > 0.0) {
        return Err(Error::Singular {
            what: "Q' Omega^-1 Q",
            cond: f64::INFINITY,
        });
    }
    let omega_inv = omega_chol.inverse();
    let theta = &omega_inv - &omega_inv_q * omega_inv_q.transpose() / inner_scale;
    let log_det_omega: f64 = 2.0
        * omega_chol
            .l()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    let log_const_w0 =
        -((p as f64 - 1.0) * 2.0 * LN_SQRT_2PI) / 2.0 - 0.5 * log_det_omega - 0.5 * inner_scale.ln();

    let psi_lambda = &psi * &lambda_j;
    let kappa_sq = lambda_j.dot(&psi_lambda);
    let kappa = kappa_sq.sqrt();
    let om_inv_c_fast = omega_chol.solve(&c_fast);
    let delta = -psi_lambda.dot(&(t_mat.transpose() * &om_inv_c_fast));
    let m_theta_m = self_quadratic(&theta, &m).max(0.0);
    let precision = 1.0 / sigma_j_sq + m_theta_m;
    let vartheta = precision.sqrt().recip();
    let nu = 1.0 / (sigma_j_sq * precision);
    let m_om_c = m.dot(&om_inv_c_fast);
    let phi_shift = -(m_om_c + delta) / precision;

    Ok(PivotContext {
        i1,
        i2,
        beta_hat_j,
        sigma_j_sq,
        n,
        theta,
        inner_scale,
        log_space: true,
        m,
        c_ref,
        omega_inv_q,
        log_const_w0,
        kappa,
        kappa_sq,
        delta,
        vartheta,
        nu,
        phi_shift,
        sqrt_n: (n as f64).sqrt(),
    })
}
