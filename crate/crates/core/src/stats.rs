//! Standard-normal routines, Gauss-Legendre rules, and seed derivation.
//!
//! The normal CDF and its logarithm are built on `erfc` so that tail
//! probabilities stay accurate far beyond the range where `1 - Phi(x)`
//! cancels. `norm_logcdf` switches to an asymptotic expansion once `erfc`
//! itself underflows.

use once_cell::sync::Lazy;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[inline]
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// log Phi(z), accurate for arbitrarily deep lower tails.
pub fn norm_logcdf(z: f64) -> f64 {
    if z > -1.0 {
        // erfc is well-conditioned here; ln of a value near 1 is fine.
        (0.5 * libm::erfc(-z / SQRT_2)).ln()
    } else if z > -36.0 {
        // erfc(|z|/sqrt2) still representable.
        (0.5 * libm::erfc(-z / SQRT_2)).ln()
    } else {
        // Asymptotic series: Phi(z) ~ phi(z)/|z| (1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8).
        let zi = 1.0 / (z * z);
        let series = 1.0 + zi * (-1.0 + zi * (3.0 + zi * (-15.0 + zi * 105.0)));
        log_norm_pdf(z) - (-z).ln() + series.ln()
    }
}

/// log(1 - Phi(z)) = log Phi(-z).
#[inline]
pub fn norm_logsf(z: f64) -> f64 {
    norm_logcdf(-z)
}

/// log of Phi(hi) - Phi(lo) for hi >= lo, stable when both lie in one tail.
pub fn norm_logcdf_diff(hi: f64, lo: f64) -> f64 {
    debug_assert!(hi >= lo);
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
        return 0.0;
    }
    if hi <= 0.0 {
        // Both in lower tail: Phi(hi) - Phi(lo) = Phi(hi) (1 - Phi(lo)/Phi(hi)).
        let la = norm_logcdf(hi);
        let lb = norm_logcdf(lo);
        la + ln_1m_exp(lb - la)
    } else if lo >= 0.0 {
        // Upper tail: use survival functions.
        let la = norm_logsf(lo);
        let lb = norm_logsf(hi);
        la + ln_1m_exp(lb - la)
    } else {
        // Straddles zero; the difference is not small.
        (norm_cdf(hi) - norm_cdf(lo)).max(f64::MIN_POSITIVE).ln()
    }
}

/// ln(1 - e^x) for x <= 0.
#[inline]
fn ln_1m_exp(x: f64) -> f64 {
    if x >= 0.0 {
        f64::NEG_INFINITY
    } else if x > -std::f64::consts::LN_2 {
        (-libm::expm1(x)).ln()
    } else {
        libm::log1p(-x.exp())
    }
}

/// Standard normal quantile (Acklam's rational approximation plus one
/// Halley refinement through `erfc`).
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement.
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e / norm_pdf(x);
        x -= u / (1.0 + x * u / 2.0);
    }
    x
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Initial guess (Abramowitz & Stegun 25.4.30 style).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

pub static GL64: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| gauss_legendre(64));
pub static GL32: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| gauss_legendre(32));

/// Derive the RNG seed for a numbered stream from a master seed.
///
/// SplitMix64 finalizer applied to master xor stream index; serial and
/// parallel execution therefore see identical per-stream sequences.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Kolmogorov-Smirnov distance of a sample against Unif(0,1).
pub fn ks_distance_uniform(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in samples.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - u;
        let lo = u - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}
