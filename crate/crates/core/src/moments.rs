//! Plug-in estimates of the score/Hessian moment matrices and the
//! auxiliary statistic that, together with the refitted coordinate,
//! determines the conditional law.
//!
//! All expectations are replaced by empirical means at the refitted
//! coefficients. With residual r_i = x_{i,E}' beta_E - y_i and score
//! weight c_i = Kcdf(r_i/h) - tau:
//!
//! ```text
//!   J^(h) = (1/n) sum K_h(r_i) x_i x_i'         (Hessian moment)
//!   H^(h,h') = (1/n) sum psi_i^h psi_i^h'' - mean mean'   (score covariance)
//! ```
//!
//! where psi_i^h = c_i^h x_i. H-type matrices are centered even though the
//! population mean of the active block vanishes; the inactive block mean
//! does not.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::solver::RefitSolution;

pub const RIDGE_COND_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandwidthVariant {
    /// h_select == h_infer; the auxiliary statistic has length p-1.
    SameBandwidth,
    /// h_select != h_infer; the auxiliary statistic has length p+q-1.
    General,
}

/// Moment matrices over all p coordinates plus the active-block sandwich.
#[derive(Debug, Clone)]
pub struct MomentEstimates {
    /// Active index set of the refit (ascending, original column indices).
    pub active: Vec<usize>,
    /// Hessian moment at the inference bandwidth (the paper's J).
    pub j_infer: DMatrix<f64>,
    /// Hessian moment at the selection bandwidth (J tilde).
    pub j_select: DMatrix<f64>,
    /// Score covariance at the inference bandwidth (H).
    pub h_infer: DMatrix<f64>,
    /// Score covariance at the selection bandwidth (H tilde).
    pub h_select: DMatrix<f64>,
    /// Cross covariance of the selection-bandwidth and inference-bandwidth
    /// scores (K; rows index the selection-bandwidth score).
    pub k_cross: DMatrix<f64>,
    /// Sandwich J_EE^-1 H_EE J_EE^-1 on the active block.
    pub sigma_ee: DMatrix<f64>,
    /// Mean score (gradient of the smoothed loss) at each bandwidth.
    pub mean_score_select: DVector<f64>,
    pub mean_score_infer: DVector<f64>,
    pub variant: BandwidthVariant,
    /// Set when cond(J_EE) exceeded the limit and a ridge was added.
    pub ridge_applied: bool,
}

impl MomentEstimates {
    /// Position of column j inside the active set.
    pub fn active_position(&self, j: usize) -> Result<usize> {
        self.active
            .iter()
            .position(|&k| k == j)
            .ok_or(Error::NotInActiveSet { j })
    }

    /// Asymptotic variance of sqrt(n) beta_hat_j for j in the active set.
    pub fn sigma_j_sq(&self, j: usize) -> Result<f64> {
        let pos = self.active_position(j)?;
        Ok(self.sigma_ee[(pos, pos)])
    }
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Estimate the moment matrices at the refitted coefficients.
pub fn estimate_moments(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    refit: &RefitSolution,
    active: &[usize],
    tau: f64,
    family: KernelFamily,
    h_select: f64,
    h_infer: f64,
) -> Result<MomentEstimates> {
    let n = x.nrows();
    if refit.beta_e.len() != active.len() {
        return Err(Error::DimensionMismatch {
            context: "moments refit coefficients",
            expected: active.len(),
            got: refit.beta_e.len(),
        });
    }
    let q = active.len();
    let nf = n as f64;

    // Residuals of the refit.
    let x_e = x.select_columns(active.iter());
    let resid = &x_e * &refit.beta_e - y;

    let spec_infer = KernelSpec::new(family, h_infer)?;
    let spec_select = KernelSpec::new(family, h_select)?;

    let build = |spec: &KernelSpec| -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        // J: Gram of rows scaled by sqrt(K_h(r)/n); psi matrix for H/K.
        let mut xj = x.clone();
        let mut psi = x.clone();
        for i in 0..n {
            let wj = (spec.density_h(resid[i]) / nf).sqrt();
            let c = spec.cdf_h(resid[i]) - tau;
            xj.row_mut(i).scale_mut(wj);
            psi.row_mut(i).scale_mut(c);
        }
        let j_mat = xj.transpose() * xj;
        let mean = psi.row_sum().transpose() / nf;
        (j_mat, psi, mean)
    };

    let same = h_select == h_infer;
    // Scores are evaluated at the fitted coefficients, which shrinks their
    // spread like regression residuals; the usual q-parameter correction
    // restores first-order unbiasedness of the covariance.
    let df = nf / (nf - q as f64);
    let (j_infer, psi_infer, mean_infer) = build(&spec_infer);
    let h_infer_mat =
        (&psi_infer.transpose() * &psi_infer / nf - &mean_infer * mean_infer.transpose()) * df;

    let (j_select, h_select_mat, k_cross, mean_select) = if same {
        (
            j_infer.clone(),
            h_infer_mat.clone(),
            h_infer_mat.clone(),
            mean_infer.clone(),
        )
    } else {
        let (j_sel, psi_sel, mean_sel) = build(&spec_select);
        let h_sel =
            (&psi_sel.transpose() * &psi_sel / nf - &mean_sel * mean_sel.transpose()) * df;
        let k = (&psi_sel.transpose() * &psi_infer / nf - &mean_sel * mean_infer.transpose()) * df;
        (j_sel, h_sel, k, mean_sel)
    };

    // Active-block sandwich with ridge fallback on J_EE.
    let mut j_ee = submatrix(&j_infer, active, active);
    let eig = SymmetricEigen::new(j_ee.clone());
    let lam_max = eig.eigenvalues.max();
    let lam_min = eig.eigenvalues.min();
    let cond = if lam_min > 0.0 {
        lam_max / lam_min
    } else {
        f64::INFINITY
    };
    let mut ridge_applied = false;
    if cond > RIDGE_COND_LIMIT {
        let bump = 1e-8 * j_ee.trace() / q as f64;
        for k in 0..q {
            j_ee[(k, k)] += bump;
        }
        ridge_applied = true;
    }
    let chol = Cholesky::new(j_ee.clone()).ok_or(Error::Singular {
        what: "J_EE",
        cond,
    })?;
    let h_ee = submatrix(&h_infer_mat, active, active);
    let jinv_h = chol.solve(&h_ee);
    let sigma_raw = chol.solve(&jinv_h.transpose());
    let sigma_ee = (&sigma_raw + sigma_raw.transpose()) * 0.5;

    Ok(MomentEstimates {
        active: active.to_vec(),
        j_infer,
        j_select,
        h_infer: h_infer_mat,
        h_select: h_select_mat,
        k_cross,
        sigma_ee,
        mean_score_select: mean_select,
        mean_score_infer: mean_infer,
        variant: if same {
            BandwidthVariant::SameBandwidth
        } else {
            BandwidthVariant::General
        },
        ridge_applied,
    })
}

/// The statistic whose conditioning removes the nuisance parameters.
#[derive(Debug, Clone)]
pub struct AuxiliaryStatistic {
    /// Unscaled value; the geometry consumes sqrt(n) * gamma.
    pub gamma: DVector<f64>,
    pub variant: BandwidthVariant,
    /// Coordinate j this statistic excludes.
    pub j: usize,
}

/// Auxiliary statistic for coordinate j of the active set.
///
/// First block: the remaining active coordinates decorrelated from
/// beta_hat_j. Second block: the inactive-coordinate score correction
/// (all p coordinates in the general bandwidth path).
pub fn auxiliary_statistic(
    j: usize,
    refit: &RefitSolution,
    moments: &MomentEstimates,
) -> Result<AuxiliaryStatistic> {
    let active = &moments.active;
    let q = active.len();
    let pos = moments.active_position(j)?;
    let sigma_j_sq = moments.sigma_ee[(pos, pos)];
    if !(sigma_j_sq > 0.0) {
        return Err(Error::Singular {
            what: "sigma_j_sq",
            cond: f64::INFINITY,
        });
    }

    // S_{[E]\j} (beta - Sigma_col_j beta_j / sigma_j^2).
    let sigma_col = moments.sigma_ee.column(pos);
    let beta_j = refit.beta_e[pos];
    let mut first = Vec::with_capacity(q.saturating_sub(1));
    for k in 0..q {
        if k != pos {
            first.push(refit.beta_e[k] - sigma_col[k] * beta_j / sigma_j_sq);
        }
    }

    let j_ee = submatrix(&moments.j_infer, active, active);
    let h_ee = submatrix(&moments.h_infer, active, active);
    let h_ee_chol = Cholesky::new(h_ee).ok_or(Error::Singular {
        what: "H_EE",
        cond: f64::INFINITY,
    })?;

    let p = moments.j_infer.nrows();
    let inactive: Vec<usize> = (0..p).filter(|k| !active.contains(k)).collect();

    let gamma = match moments.variant {
        BandwidthVariant::SameBandwidth => {
            // X_E'' grad + (H_E'E H_EE^-1 J_EE - J_E'E) beta.
            let h_pe = submatrix(&moments.h_infer, &inactive, active);
            let j_pe = submatrix(&moments.j_infer, &inactive, active);
            let correction = &h_pe * h_ee_chol.solve(&(&j_ee * &refit.beta_e)) - &j_pe * &refit.beta_e;
            let mut out = DVector::zeros(first.len() + inactive.len());
            for (i, v) in first.iter().enumerate() {
                out[i] = *v;
            }
            for (i, &k) in inactive.iter().enumerate() {
                out[first.len() + i] = moments.mean_score_infer[k] + correction[i];
            }
            out
        }
        BandwidthVariant::General => {
            // Full-gradient version with the cross matrix K.
            let k_pe = moments.k_cross.select_columns(active.iter());
            let j_tilde_pe = moments.j_select.select_columns(active.iter());
            let correction =
                &k_pe * h_ee_chol.solve(&(&j_ee * &refit.beta_e)) - &j_tilde_pe * &refit.beta_e;
            let mut out = DVector::zeros(first.len() + p);
            for (i, v) in first.iter().enumerate() {
                out[i] = *v;
            }
            for k in 0..p {
                out[first.len() + k] = moments.mean_score_select[k] + correction[k];
            }
            out
        }
    };

    Ok(AuxiliaryStatistic {
        gamma,
        variant: moments.variant,
        j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::solver::solve_refit;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn instance(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            1.0 + 0.8 * x[(i, 0)] - 0.5 * x[(i, 1)] + e
        });
        (x, y)
    }

    fn fit(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        active: &[usize],
        tau: f64,
        h: f64,
    ) -> RefitSolution {
        let x_e = x.select_columns(active.iter());
        let spec = KernelSpec::new(KernelFamily::Gaussian, h).unwrap();
        solve_refit(&x_e, y, tau, &spec).unwrap()
    }

    #[test]
    fn same_bandwidth_shares_plugins_bitwise() {
        let (x, y) = instance(150, 6, 1);
        let active = vec![0, 1, 3];
        let refit = fit(&x, &y, &active, 0.7, 0.3);
        let m = estimate_moments(&x, &y, &refit, &active, 0.7, KernelFamily::Gaussian, 0.3, 0.3)
            .unwrap();
        assert_eq!(m.j_infer, m.j_select);
        assert_eq!(m.h_infer, m.h_select);
        assert_eq!(m.h_infer, m.k_cross);
        assert_eq!(m.variant, BandwidthVariant::SameBandwidth);
    }

    #[test]
    fn score_covariance_is_psd() {
        let (x, y) = instance(120, 8, 2);
        let active = vec![0, 1];
        let refit = fit(&x, &y, &active, 0.6, 0.35);
        let m = estimate_moments(&x, &y, &refit, &active, 0.6, KernelFamily::Gaussian, 0.35, 0.35)
            .unwrap();
        let eig = SymmetricEigen::new(m.h_infer.clone());
        assert!(eig.eigenvalues.min() >= -1e-10 * m.h_infer.trace());
        // sigma_j^2 positive on the active block.
        for &j in &active {
            assert!(m.sigma_j_sq(j).unwrap() > 0.0);
        }
    }

    #[test]
    fn scale_equivariance_of_refit_and_variance() {
        let (x, y) = instance(200, 5, 3);
        let active = vec![0, 1, 2];
        let tau = 0.7;
        let h = 0.3;
        let s = 3.0;
        let refit = fit(&x, &y, &active, tau, h);
        let m = estimate_moments(&x, &y, &refit, &active, tau, KernelFamily::Gaussian, h, h).unwrap();
        let y2 = &y * s;
        let refit2 = fit(&x, &y2, &active, tau, h * s);
        let m2 =
            estimate_moments(&x, &y2, &refit2, &active, tau, KernelFamily::Gaussian, h * s, h * s)
                .unwrap();
        for k in 0..active.len() {
            assert_relative_eq!(refit2.beta_e[k], s * refit.beta_e[k], max_relative = 1e-8);
            assert_relative_eq!(
                m2.sigma_ee[(k, k)],
                s * s * m.sigma_ee[(k, k)],
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn singleton_active_set_has_empty_first_block() {
        let (x, y) = instance(100, 5, 4);
        let active = vec![2];
        let refit = fit(&x, &y, &active, 0.5, 0.4);
        let m = estimate_moments(&x, &y, &refit, &active, 0.5, KernelFamily::Gaussian, 0.4, 0.4)
            .unwrap();
        let aux = auxiliary_statistic(2, &refit, &m).unwrap();
        // Only the inactive-coordinate block remains: p - q = 4 entries.
        assert_eq!(aux.gamma.len(), 4);
    }

    #[test]
    fn general_path_reduces_to_same_bandwidth() {
        let (x, y) = instance(150, 6, 5);
        let active = vec![0, 1, 4];
        let refit = fit(&x, &y, &active, 0.7, 0.3);
        let same = estimate_moments(&x, &y, &refit, &active, 0.7, KernelFamily::Gaussian, 0.3, 0.3)
            .unwrap();
        // Force the general code path with equal bandwidth values by a hair apart.
        let mut gen =
            estimate_moments(&x, &y, &refit, &active, 0.7, KernelFamily::Gaussian, 0.3, 0.3)
                .unwrap();
        gen.variant = BandwidthVariant::General;
        let a_same = auxiliary_statistic(0, &refit, &same).unwrap();
        let a_gen = auxiliary_statistic(0, &refit, &gen).unwrap();
        let q = active.len();
        let p = x.ncols();
        assert_eq!(a_same.gamma.len(), q - 1 + (p - q));
        assert_eq!(a_gen.gamma.len(), q - 1 + p);
        // First blocks agree.
        for i in 0..q - 1 {
            assert_relative_eq!(a_same.gamma[i], a_gen.gamma[i], epsilon = 1e-12);
        }
        // General second block restricted to inactive rows matches; active
        // rows are near zero by refit stationarity.
        let inactive: Vec<usize> = (0..p).filter(|k| !active.contains(k)).collect();
        for (i, &k) in inactive.iter().enumerate() {
            assert_relative_eq!(
                a_same.gamma[q - 1 + i],
                a_gen.gamma[q - 1 + k],
                epsilon = 1e-10
            );
        }
        for &k in &active {
            assert!(a_gen.gamma[q - 1 + k].abs() < 1e-7);
        }
    }

    #[test]
    fn missing_index_is_an_error() {
        let (x, y) = instance(80, 4, 6);
        let active = vec![0, 1];
        let refit = fit(&x, &y, &active, 0.5, 0.4);
        let m = estimate_moments(&x, &y, &refit, &active, 0.5, KernelFamily::Gaussian, 0.4, 0.4)
            .unwrap();
        assert!(matches!(
            auxiliary_statistic(3, &refit, &m),
            Err(Error::NotInActiveSet { j: 3 })
        ));
    }
}
