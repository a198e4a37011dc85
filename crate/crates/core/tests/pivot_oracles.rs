//! Oracle checks for the weight function and the pivot: closed form vs
//! direct quadrature of the defining integral, fast vs reference route,
//! and exact uniformity in the least-squares setting.

mod common;

use common::{adaptive_simpson, random_geometry, LsSetting, MvnDensity};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqsel::geometry::truncation_interval;
use sqsel::pivot::{
    context_from_parts, invert_interval, pivot_value, pivot_value_reference, weight_w0,
};
use sqsel::stats::ks_distance_uniform;

fn context_from_raw(
    g: &common::RawGeometry,
    beta_hat_j: f64,
    sigma_j_sq: f64,
    n: usize,
) -> sqsel::pivot::PivotContext {
    let c_fast = &g.n_mat * &g.gamma + &g.dbar;
    let c_ref = &g.n_mat * &g.gamma + &g.p_vec;
    context_from_parts(
        g.i1,
        g.i2,
        beta_hat_j,
        sigma_j_sq,
        n,
        g.m.clone(),
        c_fast,
        c_ref,
        g.q_vec.clone(),
        g.t_mat.clone(),
        g.psi.clone(),
        g.lambda.clone(),
        g.omega.clone(),
    )
    .unwrap()
}

/// W0 closed form against adaptive quadrature of the defining
/// p-dimensional-density line integral.
#[test]
fn w0_closed_form_matches_direct_quadrature() {
    let mut checked = 0;
    for seed in 0..100u64 {
        let p = 4 + (seed % 9) as usize; // p in 4..=12
        let q = 2 + (seed % 5) as usize; // q in 2..=6
        let q = q.min(p - 1);
        let g = random_geometry(p, q, 1000 + seed);
        let ctx = context_from_raw(&g, 0.4, 1.0, 100);
        let mvn = MvnDensity::new(&g.omega);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..3 {
            let x = -2.0 + 2.0 * k as f64 + rand::Rng::gen::<f64>(&mut rng);
            let a = &g.m * x + &g.n_mat * &g.gamma + &g.p_vec;
            // Integrate phi(Q t + a; 0, Omega) over [i1, i2], truncating
            // infinite ends where the t-Gaussian has died.
            let s = {
                let om_chol = nalgebra::Cholesky::new(g.omega.clone()).unwrap();
                g.q_vec.dot(&om_chol.solve(&g.q_vec))
            };
            let l_center = {
                let om_chol = nalgebra::Cholesky::new(g.omega.clone()).unwrap();
                g.q_vec.dot(&om_chol.solve(&a)) / s
            };
            // Truncate infinite ends so that the discarded mass is at most
            // e^-40 of the retained mass, measured from the near endpoint.
            let peak = -l_center;
            let a_near = g.i1.max(peak);
            let b_near = g.i2.min(peak);
            let lo = g
                .i1
                .max(peak - ((peak - b_near).powi(2) + 80.0 / s).sqrt());
            let hi = g
                .i2
                .min(peak + ((a_near - peak).powi(2) + 80.0 / s).sqrt());
            let direct = if hi <= lo {
                0.0
            } else {
                // Scale the tolerance to the integrand peak so the adaptive
                // rule keeps refining for very small weights.
                let peak = (0..400)
                    .map(|k| {
                        let t = lo + (hi - lo) * k as f64 / 399.0;
                        mvn.density(&(&g.q_vec * t + &a))
                    })
                    .fold(0.0f64, f64::max);
                adaptive_simpson(
                    &|t: f64| mvn.density(&(&g.q_vec * t + &a)),
                    lo,
                    hi,
                    (peak * (hi - lo) * 1e-11).max(1e-300),
                )
            };
            let closed = weight_w0(x, &ctx);
            if direct > 1e-280 {
                let rel = (closed - direct).abs() / direct.abs();
                assert!(
                    rel < 1e-6,
                    "seed {seed} x {x}: closed {closed:.9e} vs direct {direct:.9e} rel {rel:.2e}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 200, "only {checked} comparisons had numeric mass");
}

/// The scalar fast path and the vector reference route give the same pivot.
#[test]
fn fast_path_matches_reference_route() {
    for seed in 0..40u64 {
        let p = 5 + (seed % 8) as usize;
        let q = 2 + (seed % 4) as usize;
        let g = random_geometry(p, q.min(p - 1), 500 + seed);
        let sigma_j_sq = 0.5 + (seed % 3) as f64;
        let beta_hat = 0.3 * (seed as f64 % 5.0 - 2.0);
        let ctx = context_from_raw(&g, beta_hat, sigma_j_sq, 100);
        for &b in &[-0.5, 0.0, beta_hat, beta_hat + 0.3] {
            let fast = pivot_value(b, &ctx).unwrap();
            let reference = pivot_value_reference(b, &ctx).unwrap();
            assert!(
                (fast - reference).abs() < 1e-6,
                "seed {seed} b {b}: fast {fast:.10} vs reference {reference:.10}"
            );
        }
    }
}

/// Pivot is nonincreasing in b and nested intervals are ordered.
#[test]
fn pivot_monotone_and_intervals_nested() {
    for seed in 0..50u64 {
        let p = 6;
        let q = 3;
        let g = random_geometry(p, q, 9000 + seed);
        let sigma_j_sq = 1.0;
        let beta_hat = 0.2;
        let ctx = context_from_raw(&g, beta_hat, sigma_j_sq, 100);
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let b = beta_hat - 1.0 + 2.0 * k as f64 / 59.0;
            let pv = pivot_value(b, &ctx).unwrap();
            assert!(
                pv <= prev + 1e-9,
                "seed {seed}: pivot increased at grid point {k}: {pv} > {prev}"
            );
            prev = pv;
        }
        let wide = invert_interval(0.05, &ctx).unwrap();
        let narrow = invert_interval(0.10, &ctx).unwrap();
        if !wide.unbounded_lower && !narrow.unbounded_lower {
            assert!(wide.lcb <= narrow.lcb + 1e-6, "seed {seed}");
        }
        if !wide.unbounded_upper && !narrow.unbounded_upper {
            assert!(wide.ucb >= narrow.ucb - 1e-6, "seed {seed}");
        }
        assert!(narrow.lcb <= narrow.ucb);
    }
}

fn run_ls_uniformity(set: &LsSetting, seed: u64, want: usize) -> (usize, f64) {
    let sqrt_n = (set.n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pivots = Vec::with_capacity(want);
    let mut attempts = 0usize;
    while pivots.len() < want && attempts < 4_000_000 {
        attempts += 1;
        let Some(draw) = set.draw(&mut rng) else {
            continue;
        };
        let psi_lambda = &set.psi * &set.lambda_vec;
        let u = set.lambda_vec.dot(&draw.mags);
        let v = &draw.mags - &psi_lambda * (u / set.kappa_sq);
        // Truncation from constrained rows only.
        let (mut i1, mut i2) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..set.q {
            if !set.constrained[k] {
                continue;
            }
            let c = psi_lambda[k];
            if c > 1e-12 {
                i1 = i1.max(-set.kappa_sq * v[k] / c);
            } else if c < -1e-12 {
                i2 = i2.min(-set.kappa_sq * v[k] / c);
            }
        }
        assert!(i1 <= u && u <= i2, "observed U outside truncation interval");
        let mut dbar = DVector::zeros(set.p);
        for k in 0..set.q {
            if set.constrained[k] {
                dbar[k] = set.lambda_pen * set.signs[k];
            }
        }
        for k in 0..set.p - set.q {
            dbar[set.q + k] = set.lambda_pen * draw.z[k];
        }
        let p_vec = &set.t_mat * &v + &dbar;
        let q_vec = &set.t_mat * &psi_lambda / set.kappa_sq;
        let c_fast = &set.n_mat * &draw.sqrt_n_gamma + &dbar;
        let c_ref = &set.n_mat * &draw.sqrt_n_gamma + &p_vec;
        let ctx = context_from_parts(
            i1,
            i2,
            draw.sqrt_n_beta_hat_j / sqrt_n,
            set.sigma_j_sq,
            set.n,
            set.m.clone(),
            c_fast,
            c_ref,
            q_vec,
            set.t_mat.clone(),
            set.psi.clone(),
            set.lambda_vec.clone(),
            set.omega_cov.clone(),
        )
        .unwrap();
        let pv = pivot_value(set.beta_star[set.jq], &ctx).unwrap();
        pivots.push(pv);
    }
    let n_acc = pivots.len();
    (n_acc, ks_distance_uniform(&mut pivots))
}

/// In the exact least-squares setting, the pivot evaluated at the true
/// parameter over accepted rejection-sampling draws is Unif(0,1).
#[test]
fn ls_rejection_sampling_pivot_is_uniform() {
    let set = LsSetting::new(
        42,
        100,
        8,
        3,
        1, // inference on the second active coordinate
        1.0,
        &[0.35, 0.28, -0.30],
        3.0,
        1.0,
    );
    let (accepted, ks) = run_ls_uniformity(&set, 7, 2200);
    assert!(accepted >= 2000, "acceptance too low: {accepted}");
    assert!(ks < 0.05, "pivot not uniform: KS distance {ks:.4} on {accepted} draws");
}

/// Same exactness check with an unpenalized, sign-unconstrained
/// intercept-like row and a coercivity ridge in the selection program.
#[test]
fn ls_uniformity_with_intercept_row_and_ridge() {
    let constrained = vec![false, true, true, true];
    let set = LsSetting::with_options(
        91,
        100,
        9,
        4,
        2, // inference on a constrained coordinate
        1.0,
        &[-0.15, 0.35, 0.30, -0.28],
        3.0,
        1.0,
        0.8,
        &constrained,
    );
    let (accepted, ks) = run_ls_uniformity(&set, 13, 2200);
    assert!(accepted >= 2000, "acceptance too low: {accepted}");
    assert!(ks < 0.05, "pivot not uniform: KS distance {ks:.4} on {accepted} draws");
}
