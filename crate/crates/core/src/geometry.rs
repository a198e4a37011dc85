//! Linearized selection-event geometry and the one-dimensional truncation
//! interval characterizing the conditioning event.
//!
//! Coordinates are permuted to (active set, then inactive set) so the
//! stacked block matrices read top-down like their definitions. Rows of
//! the active block that carry no penalty (the intercept) are members of
//! the geometry but contribute no sign constraint and therefore never
//! produce a truncation endpoint.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::{AuxiliaryStatistic, BandwidthVariant, MomentEstimates};
use crate::solver::{PenalizedSolution, RefitSolution};

#[derive(Debug, Clone)]
pub struct EventGeometry {
    /// Permutation applied to coordinates: active ++ inactive, original indices.
    pub perm: Vec<usize>,
    /// Coefficient of sqrt(n) beta_hat_j in the KKT linearization (p x 1).
    pub m: DVector<f64>,
    /// Coefficient of sqrt(n) gamma_hat (p x (p-1), general path p x (p+q-1)).
    pub n_mat: DMatrix<f64>,
    /// Coefficient of sqrt(n)|beta_lasso| (p x q).
    pub t_mat: DMatrix<f64>,
    /// (T' Omega^-1 T)^-1.
    pub psi: DMatrix<f64>,
    /// T' Omega^-1 M.
    pub lambda_j: DVector<f64>,
    /// kappa^2 = Lambda' Psi Lambda.
    pub kappa_sq: f64,
    /// Scalar statistic truncated by the event.
    pub u: f64,
    /// Complementary statistic; sqrt(n)|beta_lasso| = Psi Lambda U/kappa^2 + V.
    pub v: DVector<f64>,
    pub i1: f64,
    pub i2: f64,
    /// T Psi Lambda / kappa^2.
    pub q_vec: DVector<f64>,
    /// T v + dbar.
    pub p_vec: DVector<f64>,
    /// Subgradient vector lambda (w s; Z) in permuted order.
    pub dbar: DVector<f64>,
    /// Covariance of sqrt(n) omega in permuted order.
    pub omega_perm: DMatrix<f64>,
    /// sqrt(n) times the auxiliary statistic.
    pub sqrt_n_gamma: DVector<f64>,
    /// Signs on the active block (+1 on unconstrained rows).
    pub signs: DVector<f64>,
    /// Whether each active row carries a sign constraint.
    pub constrained: Vec<bool>,
    pub variant: BandwidthVariant,
    /// Norm of the KKT linearization residual (asymptotically small; a
    /// diagnostic, not an invariant).
    pub linearization_residual: f64,
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Assemble the event geometry for active coordinate j.
pub fn build_geometry(
    j: usize,
    sol: &PenalizedSolution,
    refit: &RefitSolution,
    moments: &MomentEstimates,
    aux: &AuxiliaryStatistic,
    omega_cov: &DMatrix<f64>,
    n: usize,
) -> Result<EventGeometry> {
    let active = &moments.active;
    let q = active.len();
    if q == 0 {
        return Err(Error::RankDeficient("geometry with empty active set".into()));
    }
    let pos = moments.active_position(j)?;
    if aux.j != j {
        return Err(Error::InvalidConfig(
            "auxiliary statistic was computed for a different coordinate".into(),
        ));
    }
    let p = moments.j_infer.nrows();
    let inactive: Vec<usize> = (0..p).filter(|k| !active.contains(k)).collect();
    let mut perm = active.clone();
    perm.extend(inactive.iter().copied());
    let sqrt_n = (n as f64).sqrt();

    // Signs and constraint mask on the active block.
    let mut signs = DVector::from_element(q, 1.0);
    let mut constrained = vec![true; q];
    for (k, &col) in active.iter().enumerate() {
        if sol.penalty_weights[col] == 0.0 {
            constrained[k] = false;
        } else {
            signs[k] = sol.beta[col].signum();
        }
    }

    let j_ee = submatrix(&moments.j_infer, active, active);
    let h_ee = submatrix(&moments.h_infer, active, active);
    let j_ee_chol = Cholesky::new(j_ee.clone()).ok_or(Error::Singular {
        what: "J_EE",
        cond: f64::INFINITY,
    })?;
    let h_ee_chol = Cholesky::new(h_ee.clone()).ok_or(Error::Singular {
        what: "H_EE",
        cond: f64::INFINITY,
    })?;
    let sigma_j_sq = moments.sigma_ee[(pos, pos)];

    // Stacked matrices in permuted row order.
    let (m, n_mat, t_mat) = match moments.variant {
        BandwidthVariant::SameBandwidth => {
            let h_cols = submatrix(&moments.h_infer, &perm, active);
            let j_cols = submatrix(&moments.j_infer, &perm, active);
            // M = -(1/sigma_j^2) H_{.,E} J_EE^-1 e_pos.
            let jinv_e = j_ee_chol.solve(&DVector::from_fn(q, |r, _| {
                if r == pos {
                    1.0
                } else {
                    0.0
                }
            }));
            let m = -(&h_cols * jinv_e) / sigma_j_sq;
            // N = [ -J_EE S'; -H_E'E H_EE^-1 J_EE S' | 0; I ].
            let h_pe = submatrix(&moments.h_infer, &inactive, active);
            let j_drop = drop_column(&j_ee, pos);
            let top = -&j_drop;
            let bottom_left = -(&h_pe * h_ee_chol.solve(&j_drop));
            let mut n_mat = DMatrix::zeros(q + inactive.len(), q - 1 + inactive.len());
            n_mat.view_mut((0, 0), (q, q - 1)).copy_from(&top);
            n_mat
                .view_mut((q, 0), (inactive.len(), q - 1))
                .copy_from(&bottom_left);
            n_mat
                .view_mut((q, q - 1), (inactive.len(), inactive.len()))
                .fill_with_identity();
            let mut t_mat = &j_cols * DMatrix::from_diagonal(&signs);
            for k in 0..q {
                t_mat[(k, k)] += sol.ridge / sqrt_n * signs[k];
            }
            (m, n_mat, t_mat)
        }
        BandwidthVariant::General => {
            let k_cols = submatrix(&moments.k_cross, &perm, active);
            let jt_cols = submatrix(&moments.j_select, &perm, active);
            let jinv_e = j_ee_chol.solve(&DVector::from_fn(q, |r, _| {
                if r == pos {
                    1.0
                } else {
                    0.0
                }
            }));
            let m = -(&k_cols * jinv_e) / sigma_j_sq;
            // N' = [ -K_{.,E} H_EE^-1 J_EE S' | I_p ] with the identity block
            // in permuted order.
            let j_drop = drop_column(&j_ee, pos);
            let left = -(&k_cols * h_ee_chol.solve(&j_drop));
            let mut n_mat = DMatrix::zeros(p, q - 1 + p);
            n_mat.view_mut((0, 0), (p, q - 1)).copy_from(&left);
            // gamma's second block is indexed by original coordinate order.
            for (row, &orig) in perm.iter().enumerate() {
                n_mat[(row, q - 1 + orig)] = 1.0;
            }
            let mut t_mat = &jt_cols * DMatrix::from_diagonal(&signs);
            for k in 0..q {
                t_mat[(k, k)] += sol.ridge / sqrt_n * signs[k];
            }
            (m, n_mat, t_mat)
        }
    };

    // Permute Omega.
    let omega_perm = submatrix(omega_cov, &perm, &perm);
    let omega_chol = Cholesky::new(omega_perm.clone()).ok_or(Error::NotPositiveDefinite {
        what: "randomization covariance",
    })?;

    // Psi = (T' Om^-1 T)^-1, Lambda = T' Om^-1 M.
    let om_inv_t = omega_chol.solve(&t_mat);
    let tot = t_mat.transpose() * &om_inv_t;
    let tot_chol = Cholesky::new(tot.clone()).ok_or(Error::Singular {
        what: "T' Omega^-1 T",
        cond: f64::INFINITY,
    })?;
    let psi = tot_chol.inverse();
    let lambda_j = om_inv_t.transpose() * &m;
    let psi_lambda = &psi * &lambda_j;
    let kappa_sq = lambda_j.dot(&psi_lambda);
    if !(kappa_sq > 0.0) {
        return Err(Error::Singular {
            what: "Lambda' Psi Lambda",
            cond: f64::INFINITY,
        });
    }

    // Signed magnitudes of the penalized solution on the active block.
    let mags = DVector::from_fn(q, |k, _| sqrt_n * signs[k] * sol.beta[active[k]]);
    let u = lambda_j.dot(&mags);
    let v = &mags - &psi_lambda * (u / kappa_sq);
    let (i1, i2) = truncation_interval_masked(&psi_lambda, kappa_sq, &v, &constrained);

    let q_vec = &t_mat * &psi_lambda / kappa_sq;

    // Subgradient vector in permuted order; unpenalized rows carry 0.
    let mut dbar = DVector::zeros(p);
    for (k, &col) in active.iter().enumerate() {
        if sol.penalty_weights[col] > 0.0 {
            dbar[k] = sol.lambda * sol.penalty_weights[col] * signs[k];
        }
    }
    let inactive_sol = sol.inactive_set();
    debug_assert_eq!(inactive_sol, inactive);
    for (i, &col) in inactive.iter().enumerate() {
        dbar[q + i] = sol.lambda * sol.penalty_weights[col] * sol.z[i];
    }

    let sqrt_n_gamma = &aux.gamma * sqrt_n;

    // The exact KKT pins the reconstruction at the observed point; the
    // Taylor form T v + dbar misses it by the linearization error. Anchor
    // the offset to the observed randomization so the weight is centered
    // exactly at the data (the error then only perturbs the law's shape,
    // not its location). The gap to the Taylor form is kept as the
    // asymptotically-small diagnostic.
    let beta_hat_j = refit.beta_e[pos];
    let omega_perm_vec = DVector::from_fn(p, |r, _| sol.omega[perm[r]]) * sqrt_n;
    let p_taylor = &t_mat * &v + &dbar;
    let p_vec =
        &omega_perm_vec - &m * (sqrt_n * beta_hat_j) - &n_mat * &sqrt_n_gamma - &q_vec * u;
    let linearization_residual = (&p_vec - &p_taylor).norm();

    Ok(EventGeometry {
        perm,
        m,
        n_mat,
        t_mat,
        psi,
        lambda_j,
        kappa_sq,
        u,
        v,
        i1,
        i2,
        q_vec,
        p_vec,
        dbar,
        omega_perm,
        sqrt_n_gamma,
        signs,
        constrained,
        variant: moments.variant,
        linearization_residual,
    })
}

fn drop_column(m: &DMatrix<f64>, col: usize) -> DMatrix<f64> {
    let cols: Vec<usize> = (0..m.ncols()).filter(|&c| c != col).collect();
    m.select_columns(cols.iter())
}

/// Truncation endpoints for U from the sign constraints.
///
/// Rows with positive Psi Lambda bound U from below, negative rows from
/// above; rows within 1e-12 of zero (relative to the sup norm) bound
/// neither. Empty candidate sets yield infinite endpoints.
pub fn truncation_interval(
    psi: &DMatrix<f64>,
    lambda_j: &DVector<f64>,
    v: &DVector<f64>,
) -> (f64, f64) {
    let psi_lambda = psi * lambda_j;
    let kappa_sq = lambda_j.dot(&psi_lambda);
    let mask = vec![true; v.len()];
    truncation_interval_masked(&psi_lambda, kappa_sq, v, &mask)
}

fn truncation_interval_masked(
    psi_lambda: &DVector<f64>,
    kappa_sq: f64,
    v: &DVector<f64>,
    constrained: &[bool],
) -> (f64, f64) {
    let zero_tol = 1e-12 * psi_lambda.amax();
    let mut i1 = f64::NEG_INFINITY;
    let mut i2 = f64::INFINITY;
    for k in 0..v.len() {
        if !constrained[k] {
            continue;
        }
        let c = psi_lambda[k];
        if c > zero_tol {
            i1 = i1.max(-kappa_sq * v[k] / c);
        } else if c < -zero_tol {
            i2 = i2.min(-kappa_sq * v[k] / c);
        }
    }
    (i1, i2)
}
