//! Kernel families and the convolution-smoothed quantile loss.
//!
//! For a residual r = x'b - y the smoothed check loss of one observation is
//!
//! ```text
//!   l_h(r) = integral rho_tau(u) K_h(u + r) du
//!          = h m1(r/h) + r (Kcdf(r/h) - tau)
//! ```
//!
//! where `Kcdf` is the kernel CDF and `m1(z) = integral_z^inf v K(v) dv` is
//! the upper partial first moment. All four supported kernels admit
//! elementary `Kcdf` and `m1`, so the loss, its gradient weights
//! `Kcdf(r/h) - tau` and its Hessian weights `K_h(r)` are exact.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Logistic,
    Uniform,
    Epanechnikov,
}

impl KernelFamily {
    /// Density K(z) of the standardized kernel.
    #[inline]
    pub fn density(self, z: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => norm_pdf(z),
            KernelFamily::Logistic => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            KernelFamily::Uniform => {
                if z.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelFamily::Epanechnikov => {
                if z.abs() <= 1.0 {
                    0.75 * (1.0 - z * z)
                } else {
                    0.0
                }
            }
        }
    }

    /// CDF of the standardized kernel.
    #[inline]
    pub fn cdf(self, z: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => norm_cdf(z),
            KernelFamily::Logistic => sigmoid(z),
            KernelFamily::Uniform => ((z + 1.0) / 2.0).clamp(0.0, 1.0),
            KernelFamily::Epanechnikov => {
                if z <= -1.0 {
                    0.0
                } else if z >= 1.0 {
                    1.0
                } else {
                    0.5 + 0.75 * z - 0.25 * z * z * z
                }
            }
        }
    }

    /// Upper partial first moment m1(z) = integral_z^inf v K(v) dv.
    #[inline]
    pub fn upper_first_moment(self, z: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => norm_pdf(z),
            KernelFamily::Logistic => z * sigmoid(-z) + softplus(-z),
            KernelFamily::Uniform => {
                let zc = z.clamp(-1.0, 1.0);
                (1.0 - zc * zc) / 4.0
            }
            KernelFamily::Epanechnikov => {
                let zc = z.clamp(-1.0, 1.0);
                let u = 1.0 - zc * zc;
                0.1875 * u * u
            }
        }
    }

    /// Supremum of the standardized density; bounds the loss curvature.
    #[inline]
    pub fn density_sup(self) -> f64 {
        match self {
            KernelFamily::Gaussian => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            KernelFamily::Logistic => 0.25,
            KernelFamily::Uniform => 0.5,
            KernelFamily::Epanechnikov => 0.75,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Logistic => "logistic",
            KernelFamily::Uniform => "uniform",
            KernelFamily::Epanechnikov => "epanechnikov",
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + libm::log1p((-t.abs()).exp())
}

/// A kernel family with its smoothing bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth })
    }

    /// Scaled density K_h(r) = K(r/h)/h.
    #[inline]
    pub fn density_h(&self, r: f64) -> f64 {
        self.family.density(r / self.bandwidth) / self.bandwidth
    }

    /// Scaled CDF evaluated at r.
    #[inline]
    pub fn cdf_h(&self, r: f64) -> f64 {
        self.family.cdf(r / self.bandwidth)
    }

    /// Smoothed check loss of a single residual.
    #[inline]
    pub fn loss_h(&self, r: f64, tau: f64) -> f64 {
        let z = r / self.bandwidth;
        self.bandwidth * self.family.upper_first_moment(z) + r * (self.family.cdf(z) - tau)
    }
}

/// Quantile level and the selection/inference bandwidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub tau: f64,
    pub h_select: f64,
    pub h_infer: f64,
}

impl QuantileSpec {
    pub fn new(tau: f64, h_select: f64, h_infer: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile level must lie in (0,1), got {tau}"
            )));
        }
        if !(h_select > 0.0 && h_infer > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidths must be positive, got h_select={h_select}, h_infer={h_infer}"
            )));
        }
        Ok(Self {
            tau,
            h_select,
            h_infer,
        })
    }
}

/// Kernel CDF evaluated at u with the spec's bandwidth.
pub fn kernel_cdf(u: f64, spec: &KernelSpec) -> f64 {
    spec.cdf_h(u)
}

fn check_dims(x: &DMatrix<f64>, beta: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            context: "smoothed loss beta",
            expected: x.ncols(),
            got: beta.len(),
        });
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "smoothed loss response",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Average smoothed quantile loss (1/n) sum_i l_h(x_i'b - y_i).
pub fn smoothed_loss(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    y: &DVector<f64>,
    tau: f64,
    spec: &KernelSpec,
) -> Result<f64> {
    check_dims(x, beta, y)?;
    let fitted = x * beta;
    let n = y.len() as f64;
    let total: f64 = fitted
        .iter()
        .zip(y.iter())
        .map(|(&f, &yi)| spec.loss_h(f - yi, tau))
        .sum();
    Ok(total / n)
}

/// Exact gradient (1/n) sum_i (Kcdf(r_i/h) - tau) x_i of `smoothed_loss`.
pub fn smoothed_gradient(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    y: &DVector<f64>,
    tau: f64,
    spec: &KernelSpec,
) -> Result<DVector<f64>> {
    check_dims(x, beta, y)?;
    let fitted = x * beta;
    let n = y.len() as f64;
    let mut weights = DVector::zeros(y.len());
    for i in 0..y.len() {
        weights[i] = (spec.cdf_h(fitted[i] - y[i]) - tau) / n;
    }
    Ok(x.transpose() * weights)
}

/// Exact Hessian (1/n) sum_i K_h(r_i) x_i x_i' of `smoothed_loss`.
pub fn smoothed_hessian(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    y: &DVector<f64>,
    spec: &KernelSpec,
) -> Result<DMatrix<f64>> {
    check_dims(x, beta, y)?;
    let fitted = x * beta;
    let n = y.len() as f64;
    // Scale rows by sqrt(K_h(r_i)/n) and take the Gram matrix; keeps the
    // result symmetric PSD by construction.
    let mut scaled = x.clone();
    for i in 0..y.len() {
        let w = (spec.density_h(fitted[i] - y[i]) / n).sqrt();
        scaled.row_mut(i).scale_mut(w);
    }
    Ok(scaled.transpose() * scaled)
}

/// Penalty level c sqrt(log(p)/n).
pub fn default_lambda(c: f64, n: usize, p: usize) -> f64 {
    assert!(c > 0.0 && n >= 1 && p >= 1);
    c * ((p as f64).ln() / n as f64).sqrt()
}

/// Selection bandwidth max{0.05, sqrt(tau(1-tau)) (log(p)/n)^(1/4)} and
/// inference bandwidth ((q + log n)/n)^(2/5).
pub fn default_bandwidths(n: usize, p: usize, tau: f64, q: usize) -> (f64, f64) {
    assert!(n >= 2 && p >= 1 && tau > 0.0 && tau < 1.0);
    let h_select = (0.05f64).max((tau * (1.0 - tau)).sqrt() * ((p as f64).ln() / n as f64).powf(0.25));
    let h_infer = ((q as f64 + (n as f64).ln()) / n as f64).powf(0.4);
    (h_select, h_infer)
}
