//! Closed forms checked against quadrature, textbook one-dimensional
//! densities and sample moments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, Gamma, InverseGamma};
use statrs::function::gamma::ln_gamma;

use mrm_tracker::correct::correct_rates;
use mrm_tracker::rng::stream_rng;
use mrm_tracker::sampling::{inverse_wishart, wishart};
use mrm_tracker::stats::{log_iwishart_density, log_multivariate_gamma, log_wishart_pdf};
use mrm_tracker::{GammaParams, SpdMatrix};

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn rate_likelihood_matches_quadrature() {
    for &(alpha, beta) in &[(2.0, 0.5), (22.5, 1.5), (150.0, 10.0), (0.7, 0.1)] {
        let prior = Gamma::new(alpha, beta).unwrap();
        for n in [0usize, 1, 4, 17, 60] {
            // n! Poisson(n; γ) = γ^n e^{-γ}, integrated over s = ln γ
            let integrand = |s: f64| {
                let g = s.exp();
                (n as f64 * s - g + prior.ln_pdf(g) + s).exp()
            };
            let upper = alpha / beta + 60.0 * alpha.sqrt() / beta + 4.0 * n as f64 + 50.0;
            let quad = simpson(integrand, -80.0, upper.ln(), 400_000);
            let (post, ll) = correct_rates(&GammaParams::new(alpha, beta).unwrap(), n).unwrap();
            assert_eq!(post.alpha, alpha + n as f64);
            assert_eq!(post.beta, beta + 1.0);
            let rel = (ll.exp() - quad).abs() / quad;
            assert!(rel < 1e-6, "alpha={alpha} beta={beta} n={n}: {} vs {quad}", ll.exp());
        }
    }
}

#[test]
fn multivariate_gamma_low_dimensions() {
    for a in [0.75, 1.0, 3.3, 41.0] {
        assert!((log_multivariate_gamma(1, a).unwrap() - ln_gamma(a)).abs() < 1e-12);
        let two = 0.5 * std::f64::consts::PI.ln() + ln_gamma(a) + ln_gamma(a - 0.5);
        assert!((log_multivariate_gamma(2, a).unwrap() - two).abs() < 1e-12);
    }
    assert!(log_multivariate_gamma(2, 0.5).is_err());
}

#[test]
fn one_dimensional_densities() {
    for &(v, s) in &[(5.0, 2.0), (9.5, 0.3), (40.0, 12.0)] {
        let ig = InverseGamma::new((v - 2.0) / 2.0, s / 2.0).unwrap();
        for x in [0.05, 0.4, 1.0, 3.7] {
            let ours = log_iwishart_density(&SpdMatrix::from_diagonal(&[x]).unwrap(), v, &SpdMatrix::from_diagonal(&[s]).unwrap()).unwrap();
            assert!((ours - ig.ln_pdf(x)).abs() < 1e-10, "IW v={v} V={s} x={x}");
        }
    }
    for &(w, s) in &[(1.0, 2.0), (4.5, 0.3), (30.0, 1.5)] {
        let g = Gamma::new(w / 2.0, 1.0 / (2.0 * s)).unwrap();
        for x in [0.05, 0.4, 1.0, 3.7] {
            let ours = log_wishart_pdf(&SpdMatrix::from_diagonal(&[x]).unwrap(), w, &SpdMatrix::from_diagonal(&[s]).unwrap()).unwrap();
            assert!((ours - g.ln_pdf(x)).abs() < 1e-10, "W w={w} W={s} x={x}");
        }
    }
}

#[test]
fn iw_density_normalizes_in_two_dimensions() {
    // midpoint grid over the Cholesky factor of X = L Lᵀ, |∂X/∂L| = 4 l11² l22
    let v = 14.0;
    let scale = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[6.0, 1.5, 1.5, 3.0])).unwrap();
    let n = 80;
    let (lo, hi) = (1e-3, 3.0);
    let h = (hi - lo) / n as f64;
    let (olo, ohi) = (-3.0, 3.0);
    let ho = (ohi - olo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let l11 = lo + (i as f64 + 0.5) * h;
        for j in 0..n {
            let l22 = lo + (j as f64 + 0.5) * h;
            for k in 0..n {
                let l21 = olo + (k as f64 + 0.5) * ho;
                let x = DMatrix::from_row_slice(2, 2, &[l11 * l11, l11 * l21, l11 * l21, l21 * l21 + l22 * l22]);
                let lp = log_iwishart_density(&SpdMatrix::new(x).unwrap(), v, &scale).unwrap();
                total += lp.exp() * 4.0 * l11 * l11 * l22 * h * h * ho;
            }
        }
    }
    assert!((total - 1.0).abs() < 2e-2, "mass {total}");
}

fn sample_mean_cov(samples: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].nrows();
    let mean = samples.iter().fold(DMatrix::zeros(d, d), |a, s| a + s) / n;
    let var = samples
        .iter()
        .fold(DMatrix::zeros(d, d), |a, s| a + (s - &mean).component_mul(&(s - &mean)))
        / (n - 1.0);
    (mean, var)
}

#[test]
fn wishart_sample_moments() {
    let mut rng = stream_rng(11, &[1]);
    let w = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0])).unwrap();
    let dof = 7.5;
    let samples: Vec<DMatrix<f64>> = (0..40_000)
        .map(|_| wishart(dof, &w, &mut rng).unwrap().into_inner())
        .collect();
    let (mean, var) = sample_mean_cov(&samples);
    let m = w.matrix();
    for i in 0..2 {
        for j in 0..2 {
            let expect_var = dof * (m[(i, j)] * m[(i, j)] + m[(i, i)] * m[(j, j)]);
            let se = (expect_var / samples.len() as f64).sqrt();
            assert!((mean[(i, j)] - dof * m[(i, j)]).abs() < 5.0 * se, "mean ({i},{j})");
            assert!((var[(i, j)] / expect_var - 1.0).abs() < 0.05, "var ({i},{j})");
        }
    }
}

#[test]
fn inverse_wishart_sample_mean() {
    let mut rng = stream_rng(12, &[1]);
    let scale = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[30.0, -4.0, -4.0, 12.0])).unwrap();
    let dof = 14.0;
    let samples: Vec<DMatrix<f64>> = (0..40_000)
        .map(|_| inverse_wishart(dof, &scale, &mut rng).unwrap().into_inner())
        .collect();
    let (mean, var) = sample_mean_cov(&samples);
    let expect = scale.matrix() / (dof - 6.0);
    for i in 0..2 {
        for j in 0..2 {
            let se = (var[(i, j)] / samples.len() as f64).sqrt();
            assert!((mean[(i, j)] - expect[(i, j)]).abs() < 5.0 * se, "({i},{j}): {} vs {}", mean[(i, j)], expect[(i, j)]);
        }
    }
}

#[test]
fn scatter_identity() {
    let mut rng = stream_rng(13, &[]);
    for _ in 0..50 {
        let n = rng.random_range(1..30);
        let zs: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(2, |_, _| 5.0 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let hx = DVector::from_vec(vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
        let ev = mrm_tracker::assoc::AssociationEvent::from_assignment(&zs, &vec![0; n], 1).unwrap();
        let s = &ev.subsets[0];
        let c = s.centroid.as_ref().unwrap();
        let direct = zs.iter().fold(DMatrix::zeros(2, 2), |a, z| a + (z - &hx) * (z - &hx).transpose());
        let split = &s.scatter + (c - &hx) * (c - &hx).transpose() * n as f64;
        assert!((direct - split).norm() < 1e-9);
    }
}
