use nalgebra::{DMatrix, DVector};
use sqsel::kernel::{smoothed_loss, smoothed_gradient, KernelFamily, KernelSpec, default_lambda, default_bandwidths};
use sqsel::sim::{generate, ModelSpec};
use sqsel::solver::{draw_randomization, RandomizationSpec};
use sqsel::stats::derive_seed;

fn soft(v: f64, t: f64) -> f64 { if v > t { v - t } else if v < -t { v + t } else { 0.0 } }

fn main() {
    let spec = ModelSpec::new(1, 400, 50, 1.0, 0.7).unwrap();
    let cell_seed = derive_seed(42, 0);
    let data_seed = derive_seed(cell_seed, 0);
    let method_seed = derive_seed(cell_seed, 1);
    let data = generate(&spec, data_seed);
    // standardize
    let n = data.n(); let p = data.p();
    let mut x = data.x.clone();
    for j in 0..p {
        let col = x.column(j); let m = col.sum()/n as f64;
        let sd = (col.iter().map(|v| (v-m)*(v-m)).sum::<f64>()/n as f64).sqrt();
        for i in 0..n { x[(i,j)] = (x[(i,j)]-m)/sd; }
    }
    let mut xa = DMatrix::zeros(n, p+1);
    xa.column_mut(0).fill(1.0);
    xa.view_mut((0,1),(n,p)).copy_from(&x);
    let lambda = default_lambda(0.6, n, p);
    let (h, _) = default_bandwidths(n, p, 0.7, 0);
    let kern = KernelSpec::new(KernelFamily::Gaussian, h).unwrap();
    let rs = RandomizationSpec::isotropic(p+1, 1.0, derive_seed(method_seed, 1)).unwrap();
    let omega = draw_randomization(&rs, n).unwrap();
    let sqrt_n = (n as f64).sqrt();
    println!("lambda={lambda:.4} h={h:.4} ||sqrt_n omega||_inf={:.3} _2={:.3}", omega.amax()*sqrt_n, omega.norm()*sqrt_n);
    // manual ISTA trace
    let ridge: f64 = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(0.1);
    println!("ridge = {ridge}");
    let pa = p + 1;
    let mut beta = DVector::zeros(pa);
    let mut lip = 0.4 * 3.0 * (n as f64) / (sqrt_n * h); // rough
    let pen = DVector::from_fn(pa, |j,_| if j == 0 { 0.0 } else { lambda });
    for it in 0..4000 {
        let g = smoothed_gradient(&xa, &beta, &data.y, 0.7, &kern).unwrap() * sqrt_n - &omega * sqrt_n + &beta * ridge;
        let f = |b: &DVector<f64>| sqrt_n * (smoothed_loss(&xa, b, &data.y, 0.7, &kern).unwrap() - omega.dot(b)) + 0.5 * ridge * b.norm_squared();
        let f0 = f(&beta);
        loop {
            let cand = DVector::from_fn(pa, |j,_| soft(beta[j] - g[j]/lip, pen[j]/lip));
            let diff = &cand - &beta;
            if f(&cand) <= f0 + g.dot(&diff) + 0.5*lip*diff.norm_squared() + 1e-12 { beta = cand; break; }
            lip *= 2.0;
        }
        lip = (lip*0.97).max(1e-6);
        if it % 400 == 0 || it == 3999 {
            let mut viol: f64 = 0.0;
            let gg = smoothed_gradient(&xa, &beta, &data.y, 0.7, &kern).unwrap() * sqrt_n - &omega * sqrt_n + &beta * ridge;
            for j in 0..pa {
                let v = if pen[j] == 0.0 { gg[j].abs() } else if beta[j] != 0.0 { (gg[j] + pen[j]*beta[j].signum()).abs() } else { (gg[j].abs() - pen[j]).max(0.0) };
                viol = viol.max(v);
            }
            println!("it {it:>5}: |beta|_inf={:.3e} |beta|_0={} kkt={viol:.3e} lip={lip:.2}", beta.amax(), beta.iter().filter(|v| **v != 0.0).count());
        }
    }
}
