//! Shared oracles for the integration tests: adaptive quadrature, the
//! least-squares analytic setting, and random-geometry generators. These
//! stay independent of the library's closed-form evaluation paths.

#![allow(dead_code)]

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64, whole: f64, depth: u32) -> f64 {
        let c = 0.5 * (a + b);
        let left = simpson(f, a, c);
        let right = simpson(f, c, b);
        if depth > 60 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, c, eps / 2.0, left, depth + 1) + recurse(f, c, b, eps / 2.0, right, depth + 1)
        }
    }
    recurse(f, a, b, eps, simpson(f, a, b), 0)
}

/// Multivariate normal density phi(u; 0, Omega) from a prefactored Omega.
pub struct MvnDensity {
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl MvnDensity {
    pub fn new(omega: &DMatrix<f64>) -> Self {
        let p = omega.nrows() as f64;
        let chol = Cholesky::new(omega.clone()).expect("omega must be PD");
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (p * (2.0 * std::f64::consts::PI).ln() + log_det);
        Self { chol, log_norm }
    }

    pub fn log_density(&self, u: &DVector<f64>) -> f64 {
        let s = self.chol.solve(u);
        self.log_norm - 0.5 * u.dot(&s)
    }

    pub fn density(&self, u: &DVector<f64>) -> f64 {
        self.log_density(u).exp()
    }
}

pub fn random_pd_matrix(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.5
}

pub fn random_vector(p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(p, |_, _| StandardNormal.sample(rng))
}

pub fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// A complete random selection-event geometry in raw pieces.
pub struct RawGeometry {
    pub p: usize,
    pub q: usize,
    pub omega: DMatrix<f64>,
    pub t_mat: DMatrix<f64>,
    pub m: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub kappa_sq: f64,
    pub mags: DVector<f64>,
    pub u: f64,
    pub v: DVector<f64>,
    pub i1: f64,
    pub i2: f64,
    pub q_vec: DVector<f64>,
    pub dbar: DVector<f64>,
    pub p_vec: DVector<f64>,
    pub gamma: DVector<f64>,
    pub n_mat: DMatrix<f64>,
}

/// Generate a geometry from random (Omega, T, M) and positive magnitudes;
/// the observed U automatically lies inside [I1, I2].
pub fn random_geometry(p: usize, q: usize, seed: u64) -> RawGeometry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = random_pd_matrix(p, &mut rng);
    let t_mat = random_matrix(p, q, &mut rng);
    let m = random_vector(p, &mut rng);
    let omega_chol = Cholesky::new(omega.clone()).unwrap();
    let om_inv_t = omega_chol.solve(&t_mat);
    let psi = (t_mat.transpose() * &om_inv_t).try_inverse().unwrap();
    let lambda = om_inv_t.transpose() * &m;
    let psi_lambda = &psi * &lambda;
    let kappa_sq = lambda.dot(&psi_lambda);
    let mags = DVector::from_fn(q, |_, _| 0.1 + 1.9 * rand::Rng::gen::<f64>(&mut rng));
    let u = lambda.dot(&mags);
    let v = &mags - &psi_lambda * (u / kappa_sq);
    let (i1, i2) = brute_interval_exact(&psi_lambda, kappa_sq, &v);
    let q_vec = &t_mat * &psi_lambda / kappa_sq;
    let lambda_pen = 0.8;
    let zq = p - q;
    let mut dbar = DVector::zeros(p);
    for k in 0..q {
        dbar[k] = lambda_pen; // all signs +1 by construction (mags > 0)
    }
    for k in 0..zq {
        dbar[q + k] = lambda_pen * (2.0 * rand::Rng::gen::<f64>(&mut rng) - 1.0);
    }
    let p_vec = &t_mat * &v + &dbar;
    let n_cols = p - 1;
    let n_mat = random_matrix(p, n_cols, &mut rng);
    let gamma = random_vector(n_cols, &mut rng);
    RawGeometry {
        p,
        q,
        omega,
        t_mat,
        m,
        psi,
        lambda,
        kappa_sq,
        mags,
        u,
        v,
        i1,
        i2,
        q_vec,
        dbar,
        p_vec,
        gamma,
        n_mat,
    }
}

/// Exact truncation endpoints by direct inspection of the sign constraints
/// (used to mark the generated geometry; independent scans live in the
/// geometry oracle tests).
fn brute_interval_exact(psi_lambda: &DVector<f64>, kappa_sq: f64, v: &DVector<f64>) -> (f64, f64) {
    let mut i1 = f64::NEG_INFINITY;
    let mut i2 = f64::INFINITY;
    for k in 0..v.len() {
        let c = psi_lambda[k];
        if c > 1e-12 {
            i1 = i1.max(-kappa_sq * v[k] / c);
        } else if c < -1e-12 {
            i2 = i2.min(-kappa_sq * v[k] / c);
        }
    }
    (i1, i2)
}

/// Fixed-design least-squares setting where the selective machinery is
/// exact (quadratic loss, Gaussian errors, H = sigma^2 J).
pub struct LsSetting {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub jq: usize,
    pub x: DMatrix<f64>,
    pub sigma_sq: f64,
    pub beta_star: DVector<f64>,
    pub signs: DVector<f64>,
    pub lambda_pen: f64,
    /// Ridge coefficient of the selection program (0 disables).
    pub ridge: f64,
    /// Active rows that carry a sign constraint (false marks an
    /// unpenalized intercept-like coordinate).
    pub constrained: Vec<bool>,
    pub omega_cov: DMatrix<f64>,
    pub j_mat: DMatrix<f64>,
    pub h_mat: DMatrix<f64>,
    pub sigma_ee: DMatrix<f64>,
    pub sigma_j_sq: f64,
    pub m: DVector<f64>,
    pub n_mat: DMatrix<f64>,
    pub t_mat: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub lambda_vec: DVector<f64>,
    pub kappa_sq: f64,
    pub gamma_bar: DVector<f64>,
    pub gamma_cov: DMatrix<f64>,
    pub gamma_cov_sqrt: DMatrix<f64>,
}

impl LsSetting {
    /// Active set is the first q columns; inference coordinate jq within it.
    pub fn new(
        seed: u64,
        n: usize,
        p: usize,
        q: usize,
        jq: usize,
        sigma_sq: f64,
        beta_star_e: &[f64],
        lambda_pen: f64,
        omega_scale: f64,
    ) -> Self {
        Self::with_options(
            seed,
            n,
            p,
            q,
            jq,
            sigma_sq,
            beta_star_e,
            lambda_pen,
            omega_scale,
            0.0,
            &vec![true; q],
        )
    }

    /// Full-control constructor: ridge and per-row constraint mask.
    #[allow(clippy::too_many_arguments)]
    pub fn with_options(
        seed: u64,
        n: usize,
        p: usize,
        q: usize,
        jq: usize,
        sigma_sq: f64,
        beta_star_e: &[f64],
        lambda_pen: f64,
        omega_scale: f64,
        ridge: f64,
        constrained: &[bool],
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = random_matrix(n, p, &mut rng);
        // Standardize columns so J has unit diagonal scale.
        for c in 0..p {
            let col = x.column(c);
            let mean = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
            for r in 0..n {
                x[(r, c)] = (x[(r, c)] - mean) / sd;
            }
        }
        let j_mat = x.transpose() * &x / n as f64;
        let h_mat = &j_mat * sigma_sq;
        let e: Vec<usize> = (0..q).collect();
        let ep: Vec<usize> = (q..p).collect();
        let sub = |m: &DMatrix<f64>, rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
        };
        let j_ee = sub(&j_mat, &e, &e);
        let h_ee = sub(&h_mat, &e, &e);
        let j_ee_inv = j_ee.clone().try_inverse().unwrap();
        let sigma_ee = &j_ee_inv * &h_ee * &j_ee_inv;
        let sigma_j_sq = sigma_ee[(jq, jq)];

        let signs = DVector::from_fn(q, |k, _| {
            if constrained[k] {
                beta_star_e[k].signum()
            } else {
                1.0
            }
        });

        // M = -(1/sigma_j^2) [H_EE; H_E'E] J_EE^-1 e_jq.
        let h_cols = sub(&h_mat, &(0..p).collect::<Vec<_>>(), &e);
        let e_j = DVector::from_fn(q, |r, _| if r == jq { 1.0 } else { 0.0 });
        let m = -(&h_cols * (&j_ee_inv * &e_j)) / sigma_j_sq;

        // N = [[-J_EE S', 0]; [-H_E'E H_EE^-1 J_EE S', I]].
        let drop: Vec<usize> = (0..q).filter(|&k| k != jq).collect();
        let j_ee_drop = sub(&j_mat, &e, &drop);
        let h_pe = sub(&h_mat, &ep, &e);
        let h_ee_inv = h_ee.clone().try_inverse().unwrap();
        let mut n_mat = DMatrix::zeros(p, p - 1);
        n_mat.view_mut((0, 0), (q, q - 1)).copy_from(&(-&j_ee_drop));
        n_mat
            .view_mut((q, 0), (p - q, q - 1))
            .copy_from(&(-(&h_pe * &h_ee_inv * &j_ee_drop)));
        n_mat
            .view_mut((q, q - 1), (p - q, p - q))
            .fill_with_identity();

        // T = [J_EE; J_E'E] Diag(s), plus the ridge on the active diagonal.
        let j_cols = sub(&j_mat, &(0..p).collect::<Vec<_>>(), &e);
        let mut t_mat = &j_cols * DMatrix::from_diagonal(&signs);
        for k in 0..q {
            t_mat[(k, k)] += ridge / (n as f64).sqrt() * signs[k];
        }

        let omega_cov = DMatrix::identity(p, p) * omega_scale;
        let om_inv_t = &t_mat / omega_scale;
        let psi = (t_mat.transpose() * &om_inv_t).try_inverse().unwrap();
        let lambda_vec = om_inv_t.transpose() * &m;
        let kappa_sq = lambda_vec.dot(&(&psi * &lambda_vec));

        // gamma_bar: decorrelated active block, zero inactive block (H = sigma^2 J).
        let beta_star = DVector::from_column_slice(beta_star_e);
        let sigma_col = sigma_ee.column(jq).clone_owned();
        let mut gamma_bar = DVector::zeros(p - 1);
        let mut r = 0;
        for k in 0..q {
            if k != jq {
                gamma_bar[r] = beta_star[k] - sigma_col[k] * beta_star[jq] / sigma_j_sq;
                r += 1;
            }
        }

        // Lambda2 Lambda2' = A H A'.
        let mut a = DMatrix::zeros(p - 1, p);
        let mut r = 0;
        for k in 0..q {
            if k != jq {
                for c in 0..q {
                    let term = sigma_col[k] / sigma_j_sq * j_ee_inv[(jq, c)] - j_ee_inv[(k, c)];
                    a[(r, c)] = term;
                }
                r += 1;
            }
        }
        let hh = &h_pe * &h_ee_inv;
        for i in 0..p - q {
            for c in 0..q {
                a[(q - 1 + i, c)] = -hh[(i, c)];
            }
            a[(q - 1 + i, q + i)] = 1.0;
        }
        let gamma_cov = &a * &h_mat * a.transpose();
        let sym = (&gamma_cov + gamma_cov.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym.clone());
        let mut sqrt_vals = eig.eigenvalues.clone();
        for v in sqrt_vals.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        let gamma_cov_sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&sqrt_vals)
            * eig.eigenvectors.transpose();

        Self {
            n,
            p,
            q,
            jq,
            x,
            sigma_sq,
            beta_star,
            signs,
            lambda_pen,
            ridge,
            constrained: constrained.to_vec(),
            omega_cov,
            j_mat,
            h_mat,
            sigma_ee,
            sigma_j_sq,
            m,
            n_mat,
            t_mat,
            psi,
            lambda_vec,
            kappa_sq,
            gamma_bar,
            gamma_cov: sym,
            gamma_cov_sqrt,
        }
    }

    /// One draw of (sqrt(n) beta_hat_j, sqrt(n) gamma_hat, sqrt(n) omega)
    /// from the unconditional joint law, reduced through the exact KKT map
    /// to (magnitudes, Z). Accept when the signs and the subgradient are
    /// admissible.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Option<LsDraw> {
        let sqrt_n = (self.n as f64).sqrt();
        let bj: f64 = sqrt_n * self.beta_star[self.jq]
            + self.sigma_j_sq.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        let z0 = random_vector(self.p - 1, rng);
        let gamma = &self.gamma_bar * sqrt_n + &self.gamma_cov_sqrt * z0;
        let w = random_vector(self.p, rng) * self.omega_cov[(0, 0)].sqrt();

        let t_e = self.t_mat.rows(0, self.q).clone_owned();
        let t_p = self.t_mat.rows(self.q, self.p - self.q).clone_owned();
        let m_e = self.m.rows(0, self.q).clone_owned();
        let m_p = self.m.rows(self.q, self.p - self.q).clone_owned();
        let n_e = self.n_mat.rows(0, self.q).clone_owned();
        let n_p = self.n_mat.rows(self.q, self.p - self.q).clone_owned();
        let lam_s = DVector::from_fn(self.q, |k, _| {
            if self.constrained[k] {
                self.lambda_pen * self.signs[k]
            } else {
                0.0
            }
        });

        let rhs = w.rows(0, self.q) - &m_e * bj - &n_e * &gamma - &lam_s;
        let mags = t_e.lu().solve(&rhs)?;
        for k in 0..self.q {
            if self.constrained[k] && mags[k] <= 0.0 {
                return None;
            }
        }
        let z = (w.rows(self.q, self.p - self.q) - &t_p * &mags - &m_p * bj - &n_p * &gamma)
            / self.lambda_pen;
        if z.amax() > 1.0 {
            return None;
        }
        Some(LsDraw {
            sqrt_n_beta_hat_j: bj,
            sqrt_n_gamma: gamma,
            mags,
            z,
        })
    }
}

pub struct LsDraw {
    pub sqrt_n_beta_hat_j: f64,
    pub sqrt_n_gamma: DVector<f64>,
    pub mags: DVector<f64>,
    pub z: DVector<f64>,
}
